#include <cmath>

#include "diffava/codec.hpp"
#include "diffava/errors.hpp"
#include "diffava/synthdata.hpp"
#include "doctest.h"

using namespace diffava;
using namespace diffava::codec;

namespace {

std::vector<Matrix> mels(std::size_t n, std::uint64_t seed) {
  const synth::Dataset d = synth::generate_dataset(synth::SynthConfig{}, n, seed);
  std::vector<Matrix> out;
  for (const auto& s : d.samples) out.push_back(s.mel);
  return out;
}

}  // namespace

TEST_SUITE("codec") {
  TEST_CASE("latent shape") {
    const CodecParams p{CodecConfig{}};
    CHECK(p.latent_h() == 5);
    CHECK(p.latent_w() == 32);
    CHECK(p.latent_size() == 8 * 5 * 32);
    const LatentTensor z = encode_mel(p, Matrix::Zero(10, 64));
    CHECK(z.C == 8);
    CHECK(z.H == 5);
    CHECK(z.W == 32);
    CHECK(z.data.allFinite());
    const Matrix m = decode_latent(p, LatentTensor(8, 5, 32));
    CHECK(m.rows() == 10);
    CHECK(m.cols() == 64);
    CHECK(m.allFinite());
    CHECK(m.minCoeff() >= 0.0);
  }

  TEST_CASE("patches round trip and flatten order") {
    Matrix mel(4, 6);
    for (int i = 0; i < 24; ++i) mel(i / 6, i % 6) = i;
    const Matrix p = to_patches(mel, 2);
    CHECK(p.rows() == 6);
    CHECK(p(0, 0) == 0);
    CHECK(p(0, 1) == 1);
    CHECK(p(0, 2) == 6);
    CHECK(p(0, 3) == 7);
    CHECK(p(1, 0) == 2);
    CHECK(from_patches(p, 4, 6, 2) == mel);

    LatentTensor z(2, 3, 4);
    for (int c = 0; c < 2; ++c)
      for (int h = 0; h < 3; ++h)
        for (int w = 0; w < 4; ++w) z.at(c, h, w) = c * 100 + h * 10 + w;
    const RowVector f = z.flat();
    CHECK(f(0) == 0);
    CHECK(f(4) == 10);
    CHECK(f(12) == 100);
    CHECK(LatentTensor::from_flat(f, 2, 3, 4).data == z.data);
  }

  TEST_CASE("config validation") {
    CodecConfig c;
    c.r = 3;
    CHECK_THROWS_AS(validate(c), ConfigError);
    c.r = 2;
    c.C = 0;
    CHECK_THROWS_AS(validate(c), ConfigError);
    const CodecParams p{CodecConfig{}};
    CHECK_THROWS_AS(encode_mel(p, Matrix::Zero(10, 62)), ShapeError);
  }

  TEST_CASE("training reduces reconstruction error and calibrates latents") {
    const auto train = mels(256, 71), val = mels(64, 72);
    CodecParams p{CodecConfig{}};
    CodecTrainConfig t;
    t.epochs = 4;
    const auto log = train_codec(p, train, val, t);
    REQUIRE(log.size() == 5);
    CHECK(log.back().val_mse < 0.5 * log[0].val_mse);

    // Calibrated latents: per-channel mean 0, variance 1 on the training set.
    Vector sum = Vector::Zero(8), sq = Vector::Zero(8);
    double n = 0.0;
    for (const Matrix& m : train) {
      const LatentTensor z = encode_mel(p, m);
      sum += z.data.rowwise().sum();
      sq += z.data.array().square().matrix().rowwise().sum();
      n += static_cast<double>(z.data.cols());
    }
    for (int c = 0; c < 8; ++c) {
      const double mean = sum(c) / n;
      CHECK(std::abs(mean) < 1e-8);
      CHECK(std::abs(sq(c) / n - mean * mean - 1.0) < 1e-2);
    }

    CodecParams q{CodecConfig{}};
    train_codec(q, train, val, t);
    CHECK(nn::flatten(p) == nn::flatten(q));
  }

  TEST_CASE("zero epochs and empty input") {
    const auto train = mels(32, 73);
    CodecParams p{CodecConfig{}};
    const Vector before = nn::flatten(p.net);
    CodecTrainConfig t;
    t.epochs = 0;
    const auto log = train_codec(p, train, train, t);
    CHECK(log.size() == 1);
    CHECK(nn::flatten(p.net) == before);
    CHECK_THROWS_AS(train_codec(p, {}, train, t), InvalidArgument);
  }
}
