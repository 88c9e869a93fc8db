#include <filesystem>
#include <fstream>

#include "diffava/errors.hpp"
#include "diffava/nn.hpp"
#include "diffava/snapshot.hpp"
#include "doctest.h"

using namespace diffava;

namespace {

struct Pair {
  nn::Linear a, b;
  template <class Self, class Fn>
  static void visit(Self& self, Fn&& fn) {
    nn::Linear::visit(self.a, nn::prefixed("a.", fn));
    nn::Linear::visit(self.b, nn::prefixed("b.", fn));
  }
};

std::filesystem::path temp_base(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "diffava_tests";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_SUITE("snapshot") {
  TEST_CASE("f64 round trip is exact and f32 rounds") {
    Rng rng(1);
    Pair p{nn::Linear(3, 5, rng), nn::Linear(5, 2, rng)};
    const auto base = temp_base("pair64");
    write_snapshot(base, named_tensors(p), {{"kind", "test"}, {"config_hash", "abc"}}, Dtype::f64);
    const Snapshot s = read_snapshot(base);
    CHECK(s.meta["kind"] == "test");
    CHECK(s.meta["dtype"] == "f64");
    Pair q = nn::zeros_like(p);
    assign_tensors(s, q);
    CHECK(q.a.w == p.a.w);
    CHECK(q.b.b == p.b.b);

    const auto base32 = temp_base("pair32");
    write_snapshot(base32, named_tensors(p), {{"kind", "test"}}, Dtype::f32);
    Pair r = nn::zeros_like(p);
    assign_tensors(read_snapshot(base32), r);
    CHECK(r.a.w == p.a.w.cast<float>().cast<double>());
    CHECK(std::filesystem::file_size(snapshot_bin_path(base32)) * 2 == std::filesystem::file_size(snapshot_bin_path(base)));
  }

  TEST_CASE("writing twice gives identical bytes") {
    Rng rng(2);
    Pair p{nn::Linear(4, 4, rng), nn::Linear(4, 4, rng)};
    const auto a = temp_base("same_a"), b = temp_base("same_b");
    write_snapshot(a, named_tensors(p), {{"kind", "test"}}, Dtype::f64);
    write_snapshot(b, named_tensors(p), {{"kind", "test"}}, Dtype::f64);
    auto slurp = [](const std::filesystem::path& f) {
      std::ifstream in(f, std::ios::binary);
      return std::string(std::istreambuf_iterator<char>(in), {});
    };
    CHECK(slurp(snapshot_bin_path(a)) == slurp(snapshot_bin_path(b)));
    CHECK(slurp(snapshot_json_path(a)) == slurp(snapshot_json_path(b)));
  }

  TEST_CASE("mismatched models and damaged files are format errors") {
    Rng rng(3);
    Pair p{nn::Linear(3, 5, rng), nn::Linear(5, 2, rng)};
    const auto base = temp_base("damaged");
    write_snapshot(base, named_tensors(p), {{"kind", "test"}}, Dtype::f64);

    Pair wrong{nn::Linear(3, 4, rng), nn::Linear(4, 2, rng)};
    CHECK_THROWS_AS(assign_tensors(read_snapshot(base), wrong), FormatError);

    std::filesystem::resize_file(snapshot_bin_path(base), 16);
    CHECK_THROWS_AS(read_snapshot(base), FormatError);

    { std::ofstream(snapshot_json_path(base)) << "{ not json"; }
    CHECK_THROWS_AS(read_snapshot(base), FormatError);

    CHECK_THROWS_AS(read_snapshot(temp_base("missing_snapshot")), IoError);
  }
}
