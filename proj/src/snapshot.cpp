#include "diffava/snapshot.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace diffava {

static_assert(std::endian::native == std::endian::little, "snapshot I/O assumes a little-endian host");

namespace fs = std::filesystem;

fs::path snapshot_bin_path(const fs::path& base) { return fs::path(base.string() + ".bin"); }
fs::path snapshot_json_path(const fs::path& base) { return fs::path(base.string() + ".json"); }

void write_snapshot(const fs::path& base, const std::vector<NamedTensor>& tensors, nlohmann::json meta,
                    Dtype dtype) {
  const std::size_t width = dtype == Dtype::f32 ? 4 : 8;
  meta["dtype"] = dtype == Dtype::f32 ? "f32" : "f64";
  meta["tensors"] = nlohmann::json::array();

  std::string blob;
  for (const NamedTensor& t : tensors) {
    meta["tensors"].push_back({{"name", t.name},
                               {"shape", {t.value.rows(), t.value.cols()}},
                               {"offset", blob.size()}});
    for (Eigen::Index i = 0; i < t.value.size(); ++i) {
      const double v = t.value.data()[i];
      char buf[8];
      if (dtype == Dtype::f32) {
        const float f = static_cast<float>(v);
        std::memcpy(buf, &f, 4);
      } else {
        std::memcpy(buf, &v, 8);
      }
      blob.append(buf, width);
    }
  }
  meta["bytes"] = blob.size();

  std::ofstream bin(snapshot_bin_path(base), std::ios::binary | std::ios::trunc);
  if (!bin) throw IoError("cannot open " + snapshot_bin_path(base).string() + " for writing");
  bin.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  std::ofstream js(snapshot_json_path(base), std::ios::trunc);
  if (!js) throw IoError("cannot open " + snapshot_json_path(base).string() + " for writing");
  js << meta.dump(2) << "\n";
  if (!bin || !js) throw IoError("write failed for snapshot " + base.string());
}

Snapshot read_snapshot(const fs::path& base) {
  std::ifstream js(snapshot_json_path(base));
  if (!js) throw IoError("cannot open " + snapshot_json_path(base).string());
  Snapshot snap;
  try {
    snap.meta = nlohmann::json::parse(js);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("snapshot sidecar is not valid JSON: ") + e.what(), 0);
  }
  std::ifstream bin(snapshot_bin_path(base), std::ios::binary);
  if (!bin) throw IoError("cannot open " + snapshot_bin_path(base).string());
  const std::string blob((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());

  try {
    const std::string dtype = snap.meta.at("dtype");
    if (dtype != "f32" && dtype != "f64") throw FormatError("unknown dtype " + dtype, 0);
    const std::size_t width = dtype == "f32" ? 4 : 8;
    for (const auto& entry : snap.meta.at("tensors")) {
      const Eigen::Index rows = entry.at("shape").at(0);
      const Eigen::Index cols = entry.at("shape").at(1);
      const std::size_t offset = entry.at("offset");
      const std::size_t need = static_cast<std::size_t>(rows * cols) * width;
      if (offset + need > blob.size()) {
        throw FormatError("snapshot tensor " + entry.at("name").get<std::string>() + " is truncated", blob.size());
      }
      Matrix m(rows, cols);
      for (Eigen::Index i = 0; i < m.size(); ++i) {
        const char* p = blob.data() + offset + static_cast<std::size_t>(i) * width;
        if (width == 4) {
          float f;
          std::memcpy(&f, p, 4);
          m.data()[i] = f;
        } else {
          std::memcpy(&m.data()[i], p, 8);
        }
      }
      snap.tensors.push_back({entry.at("name"), std::move(m)});
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("snapshot sidecar is malformed: ") + e.what(), 0);
  }
  return snap;
}

}  // namespace diffava
