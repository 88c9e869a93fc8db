#pragma once

// Parameter snapshots: `<base>.bin` holds the tensors back to back as
// little-endian floats, `<base>.json` lists kind, dtype, seed, config hash,
// and every tensor's name, shape, and byte offset.

#include <filesystem>
#include <string>
#include <vector>

#include "diffava/errors.hpp"
#include "diffava/nn.hpp"
#include "diffava/numerics.hpp"
#include "json.hpp"

namespace diffava {

enum class Dtype { f32, f64 };

struct NamedTensor {
  std::string name;
  Matrix value;
};

struct Snapshot {
  nlohmann::json meta;  // kind, dtype, seed, config_hash, config, tensors[]
  std::vector<NamedTensor> tensors;
};

std::filesystem::path snapshot_bin_path(const std::filesystem::path& base);
std::filesystem::path snapshot_json_path(const std::filesystem::path& base);

// meta must carry at least "kind"; "dtype" and "tensors" are filled in here.
void write_snapshot(const std::filesystem::path& base, const std::vector<NamedTensor>& tensors,
                    nlohmann::json meta, Dtype dtype);
Snapshot read_snapshot(const std::filesystem::path& base);

template <class Model>
std::vector<NamedTensor> named_tensors(const Model& model) {
  std::vector<NamedTensor> out;
  nn::visit_params(model, [&](const std::string& name, const Matrix& m) { out.push_back({name, m}); });
  return out;
}

// Copies snapshot tensors into an already-shaped model. Names and shapes must
// match the model's visit order exactly.
template <class Model>
void assign_tensors(const Snapshot& snap, Model& model) {
  std::size_t i = 0;
  nn::visit_params(model, [&](const std::string& name, Matrix& m) {
    if (i >= snap.tensors.size()) throw FormatError("snapshot has too few tensors, missing " + name, 0);
    const NamedTensor& t = snap.tensors[i++];
    if (t.name != name || t.value.rows() != m.rows() || t.value.cols() != m.cols()) {
      throw FormatError("snapshot tensor " + t.name + " does not match model tensor " + name, 0);
    }
    m = t.value;
  });
  if (i != snap.tensors.size()) throw FormatError("snapshot has extra tensors", 0);
}

}  // namespace diffava
