#include <filesystem>
#include <fstream>

#include "diffava/errors.hpp"
#include "diffava/synthdata.hpp"
#include "doctest.h"

using namespace diffava;
using namespace diffava::synth;

namespace {

std::filesystem::path temp_file(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "diffava_tests";
  std::filesystem::create_directories(dir);
  return dir / name;
}

std::vector<char> read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void write_bytes(const std::filesystem::path& p, const std::vector<char>& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_SUITE("synthdata") {
  TEST_CASE("single-event scripts") {
    Rng rng(0);
    const EventScript s = generate_script(rng, 10, 1);
    REQUIRE(s.events.size() == 1);
    CHECK(s.events[0].onset + s.events[0].duration <= 10.0f);
  }

  TEST_CASE("scripts are deterministic") {
    Rng a(5), b(5);
    CHECK(generate_script(a, 10, 2) == generate_script(b, 10, 2));
  }

  TEST_CASE("script invariants over 1000 seeds") {
    SynthConfig cfg;
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
      Rng rng(seed);
      const EventScript s = generate_script(rng, cfg.T, cfg.max_events, cfg.K, cfg.max_duration);
      REQUIRE_NOTHROW(validate_script(s, cfg));
      REQUIRE(!s.events.empty());
      REQUIRE(s.events.size() <= static_cast<std::size_t>(cfg.max_events));
      for (std::size_t i = 0; i < s.events.size(); ++i) {
        const Event& e = s.events[i];
        CHECK(e.onset >= 0.0f);
        CHECK(e.duration >= 1.0f);
        CHECK(e.onset + e.duration <= static_cast<float>(cfg.T));
        CHECK(e.class_id < static_cast<std::uint32_t>(cfg.K));
        if (i > 0) CHECK(e.onset >= s.events[i - 1].onset + s.events[i - 1].duration);
      }
    }
  }

  TEST_CASE("validate_script rejects broken scripts") {
    SynthConfig cfg;
    EventScript s;
    s.events = {{8.0f, 3.0f, 0}};
    CHECK_THROWS_AS(validate_script(s, cfg), InvalidArgument);
    s.events = {{4.0f, 2.0f, 1}, {2.0f, 1.0f, 1}};
    CHECK_THROWS_AS(validate_script(s, cfg), InvalidArgument);
    s.events = {{1.0f, 1.0f, 99}};
    CHECK_THROWS_AS(validate_script(s, cfg), InvalidArgument);
  }

  TEST_CASE("tokens encode the ordered classes between delimiters") {
    EventScript s;
    s.events = {{0.0f, 1.0f, 3}, {4.0f, 2.0f, 1}};
    const auto t = tokens_for(s, 8);
    CHECK(t == std::vector<std::uint32_t>{bos_token(8), 3, 1, eos_token(8)});
  }

  TEST_CASE("event rows carry band energy well above the floor") {
    SynthConfig cfg;
    EventScript s;
    s.events = {{3.0f, 2.0f, 5}};
    Rng rng(17);
    const TripletSample t = render_triplet(s, rng, cfg);
    double other = 0.0;
    for (int r = 0; r < cfg.T; ++r) {
      if (r == 3 || r == 4) continue;
      other += t.mel.row(r).mean() / (cfg.T - 2);
    }
    CHECK(t.mel.row(3).mean() > 5.0 * other);
    CHECK(t.mel.row(4).mean() > 5.0 * other);
    CHECK(other == doctest::Approx(cfg.noise_floor).epsilon(0.25));
    CHECK((t.mel.array() >= 0.0).all());
  }

  TEST_CASE("energy threshold recovers every event row exactly") {
    SynthConfig cfg;
    const Dataset d = generate_dataset(cfg, 300, 77);
    for (const auto& s : d.samples) {
      CHECK(energy_mask(s.mel, cfg.noise_floor) == activity_mask(s.script, cfg.T));
      CHECK(energy_onset(s.mel, cfg.noise_floor) == static_cast<int>(s.script.events.front().onset));
    }
  }

  TEST_CASE("audio and video activity agree") {
    // Frames carry the class code only during event rows: compare each row's
    // distance from the sample's silent-row mean.
    SynthConfig cfg;
    const Dataset d = generate_dataset(cfg, 100, 5);
    for (const auto& s : d.samples) {
      const auto mask = activity_mask(s.script, cfg.T);
      Matrix quiet = Matrix::Zero(1, cfg.D_v);
      int nq = 0;
      for (int r = 0; r < cfg.T; ++r) {
        if (!mask[r]) {
          quiet += s.frame_features.row(r);
          ++nq;
        }
      }
      if (nq == 0) continue;
      quiet /= nq;
      std::vector<bool> video(cfg.T);
      for (int r = 0; r < cfg.T; ++r) video[r] = (s.frame_features.row(r) - quiet).norm() > 1.5;
      CHECK(video == energy_mask(s.mel, cfg.noise_floor));
    }
  }

  TEST_CASE("generation is a pure function of seed") {
    SynthConfig cfg;
    CHECK(generate_dataset(cfg, 8, 3) == generate_dataset(cfg, 8, 3));
    CHECK(!(generate_dataset(cfg, 8, 3) == generate_dataset(cfg, 8, 4)));
  }

  TEST_CASE("dominant class") {
    EventScript s;
    s.events = {{0.0f, 1.0f, 2}, {2.0f, 3.0f, 6}, {6.0f, 3.0f, 1}};
    CHECK(dominant_class(s) == 6);
    CHECK_THROWS_AS(dominant_class(EventScript{}), InvalidArgument);
  }

  TEST_CASE("dataset file round trip") {
    SynthConfig cfg;
    const Dataset d = generate_dataset(cfg, 16, 9);
    const auto path = temp_file("roundtrip.dat");
    write_dataset(path, d);
    const Dataset back = read_dataset(path);
    CHECK(back == d);
  }

  TEST_CASE("dataset header layout") {
    SynthConfig cfg;
    const auto path = temp_file("header.dat");
    write_dataset(path, generate_dataset(cfg, 2, 1));
    const auto bytes = read_bytes(path);
    REQUIRE(bytes.size() > 32);
    CHECK(std::string(bytes.begin(), bytes.begin() + 8) == "DAVADATA");
    auto u32 = [&](std::size_t off) {
      std::uint32_t v = 0;
      std::memcpy(&v, bytes.data() + off, 4);
      return v;
    };
    CHECK(u32(8) == 1u);
    CHECK(u32(12) == 2u);
    CHECK(u32(16) == 10u);
    CHECK(u32(20) == 64u);
    CHECK(u32(24) == 32u);
    CHECK(u32(28) == 8u);
  }

  TEST_CASE("header-only file is an empty dataset") {
    SynthConfig cfg;
    const auto path = temp_file("empty.dat");
    write_dataset(path, generate_dataset(cfg, 0, 1));
    const Dataset d = read_dataset(path);
    CHECK(d.samples.empty());
    CHECK(d.T == 10);
  }

  TEST_CASE("corrupt files raise format errors with offsets") {
    SynthConfig cfg;
    const auto path = temp_file("good.dat");
    write_dataset(path, generate_dataset(cfg, 3, 2));
    const auto bytes = read_bytes(path);
    const auto bad = temp_file("bad.dat");

    for (std::size_t cut : {std::size_t{0}, std::size_t{5}, std::size_t{20}, std::size_t{40}, bytes.size() - 1}) {
      write_bytes(bad, std::vector<char>(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(cut)));
      CHECK_THROWS_AS(read_dataset(bad), FormatError);
    }

    auto magic = bytes;
    magic[0] = 'X';
    write_bytes(bad, magic);
    try {
      read_dataset(bad);
      FAIL("expected a format error");
    } catch (const FormatError& e) {
      CHECK(e.offset() == 0);
    }

    auto version = bytes;
    version[8] = 2;
    write_bytes(bad, version);
    try {
      read_dataset(bad);
      FAIL("expected a format error");
    } catch (const FormatError& e) {
      CHECK(e.offset() == 8);
    }

    auto trailing = bytes;
    trailing.push_back(0);
    write_bytes(bad, trailing);
    CHECK_THROWS_AS(read_dataset(bad), FormatError);

    CHECK_THROWS(read_dataset(temp_file("does_not_exist.dat")));
  }

  TEST_CASE("config validation") {
    SynthConfig cfg;
    cfg.F = 60;
    CHECK_THROWS(validate(cfg));
  }
}
