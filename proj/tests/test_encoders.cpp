#include <filesystem>

#include "diffava/encoders.hpp"
#include "diffava/errors.hpp"
#include "diffava/snapshot.hpp"
#include "diffava/synthdata.hpp"
#include "doctest.h"

using namespace diffava;

namespace {

double cosine(const RowVector& a, const RowVector& b) { return a.dot(b) / (a.norm() * b.norm()); }

}  // namespace

TEST_SUITE("encoders") {
  TEST_CASE("EmbeddingSequence requires unit rows") {
    CHECK_THROWS_AS(EmbeddingSequence(Matrix::Ones(2, 3)), InvalidArgument);
    Matrix m = Matrix::Zero(2, 3);
    m(0, 0) = 1.0;
    m(1, 2) = -1.0;
    CHECK_NOTHROW(EmbeddingSequence(m));
  }

  TEST_CASE("text encoder") {
    const EncoderWeights w(Modality::text, 10, 16, 3);
    const EncoderWeights w2(Modality::text, 10, 16, 3);
    const std::vector<std::uint32_t> toks{8, 2, 5, 9};
    const TextEncoding a = encode_text(w, toks);
    const TextEncoding b = encode_text(w2, toks);
    CHECK(a.tokens.rows() == b.tokens.rows());
    CHECK(a.pooled == b.pooled);
    CHECK(std::abs(a.pooled.norm() - 1.0) < 1e-12);

    const std::vector<std::uint32_t> one{4};
    const TextEncoding s = encode_text(w, one);
    CHECK((s.pooled - s.tokens.rows().row(0)).norm() < 1e-12);

    const std::vector<std::uint32_t> swapped{8, 5, 2, 9};
    const TextEncoding c = encode_text(w, swapped);
    CHECK(c.tokens.rows().row(1) == a.tokens.rows().row(2));
    CHECK(c.tokens.rows().row(2) == a.tokens.rows().row(1));

    const std::vector<std::uint32_t> bad{8, 10};
    CHECK_THROWS_AS(encode_text(w, bad), InvalidArgument);
    CHECK_THROWS_AS(encode_text(w, std::vector<std::uint32_t>{}), InvalidArgument);
  }

  TEST_CASE("audio encoder rows") {
    const EncoderWeights w(Modality::audio, 64, 32, 4);
    Matrix mel = Matrix::Zero(10, 64);
    mel.row(3).setConstant(0.5);
    mel.row(7).setConstant(0.5);
    const Matrix e = encode_audio(w, mel).rows();
    for (int i = 0; i < 10; ++i) CHECK(std::abs(e.row(i).norm() - 1.0) < 1e-12);
    CHECK(e.row(3) == e.row(7));
    CHECK(e.row(0) == e.row(1));
    CHECK_THROWS_AS(encode_audio(w, Matrix::Zero(10, 63)), ShapeError);
    CHECK_THROWS_AS(encode_video(w, Matrix::Zero(10, 64)), InvalidArgument);
  }

  TEST_CASE("active and silent rows are separated for audio and video") {
    synth::SynthConfig cfg;
    const synth::Dataset d = synth::generate_dataset(cfg, 100, 21);
    const EncoderBank bank(synth::vocab_size(cfg.K), cfg.F, cfg.D_v, 64, 7);
    int pairs = 0;
    for (const auto& s : d.samples) {
      const auto mask = synth::activity_mask(s.script, cfg.T);
      const Matrix a = encode_audio(bank.audio, s.mel).rows();
      const Matrix v = encode_video(bank.video, s.frame_features).rows();
      for (int i = 0; i < cfg.T; ++i) {
        for (int j = 0; j < cfg.T; ++j) {
          if (mask[i] && !mask[j]) {
            CHECK(cosine(a.row(i), a.row(j)) < 0.99);
            CHECK(cosine(v.row(i), v.row(j)) < 0.99);
            ++pairs;
          }
        }
      }
    }
    CHECK(pairs > 100);
  }

  TEST_CASE("video class separability") {
    // Rows of the same event class are closer to each other than to rows of
    // other classes, on average.
    synth::SynthConfig cfg;
    const synth::Dataset d = synth::generate_dataset(cfg, 100, 22);
    const EncoderBank bank(synth::vocab_size(cfg.K), cfg.F, cfg.D_v, 64, 7);
    double same = 0.0, diff = 0.0;
    int ns = 0, nd = 0;
    std::vector<std::pair<int, RowVector>> rows;
    for (const auto& s : d.samples) {
      const Matrix v = encode_video(bank.video, s.frame_features).rows();
      for (const auto& e : s.script.events) rows.push_back({static_cast<int>(e.class_id), v.row(static_cast<int>(e.onset))});
    }
    for (std::size_t i = 0; i < rows.size(); ++i) {
      for (std::size_t j = i + 1; j < rows.size(); ++j) {
        const double c = rows[i].second.dot(rows[j].second);
        if (rows[i].first == rows[j].first) {
          same += c;
          ++ns;
        } else {
          diff += c;
          ++nd;
        }
      }
    }
    CHECK(same / ns > diff / nd + 0.05);
  }

  TEST_CASE("snapshot is f32 with seed and hash") {
    const EncoderWeights w(Modality::video, 32, 16, 99);
    const auto base = std::filesystem::temp_directory_path() / "diffava_tests" / "video_encoder";
    std::filesystem::create_directories(base.parent_path());
    save_encoder_snapshot(base, w, "deadbeef");
    const Snapshot s = read_snapshot(base);
    CHECK(s.meta["dtype"] == "f32");
    CHECK(s.meta["seed"] == 99);
    CHECK(s.meta["config_hash"] == "deadbeef");
    CHECK(s.tensors.size() == 4);
  }
}
