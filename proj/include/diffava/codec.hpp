#pragma once

// Patch autoencoder between T x F mels and C x (T/r) x (F/r) latents.
// Every r x r mel patch is encoded independently with shared weights:
//
//   encode: patch -> tanh(W1 p + b1) -> W2 . + b2 -> (z - shift) / scale
//   decode: z * scale + shift -> tanh(W3 . + b3) -> relu(W4 . + b4) -> patch
//
// shift / scale are per-channel statistics of the training latents, set once
// after training so the diffusion model sees roughly unit-variance data.

#include <cstdint>
#include <functional>
#include <vector>

#include "diffava/nn.hpp"
#include "diffava/numerics.hpp"
#include "diffava/rng.hpp"

namespace diffava::codec {

struct CodecConfig {
  int C = 8;
  int r = 2;
  int T = 10;
  int F = 64;
  int hidden = 32;
  std::uint64_t seed = 31;
};

void validate(const CodecConfig& cfg);

// C x (H * W) storage of a C x H x W latent (H = T / r, W = F / r).
struct LatentTensor {
  int C = 0;
  int H = 0;
  int W = 0;
  Matrix data;

  LatentTensor() = default;
  LatentTensor(int c, int h, int w) : C(c), H(h), W(w), data(Matrix::Zero(c, h * w)) {}

  double& at(int c, int h, int w) { return data(c, h * W + w); }
  double at(int c, int h, int w) const { return data(c, h * W + w); }
  Eigen::Index size() const { return data.size(); }

  // Flattened in (c, h, w) row-major order.
  RowVector flat() const;
  static LatentTensor from_flat(const RowVector& flat, int c, int h, int w);
};

struct CodecNet {
  nn::Linear enc1, enc2, dec1, dec2;

  template <class Self, class Fn>
  static void visit(Self& self, Fn&& fn) {
    nn::Linear::visit(self.enc1, nn::prefixed("enc1.", fn));
    nn::Linear::visit(self.enc2, nn::prefixed("enc2.", fn));
    nn::Linear::visit(self.dec1, nn::prefixed("dec1.", fn));
    nn::Linear::visit(self.dec2, nn::prefixed("dec2.", fn));
  }
};

struct CodecParams {
  CodecConfig config;
  CodecNet net;
  Matrix latent_shift;  // 1 x C
  Matrix latent_scale;  // 1 x C

  CodecParams() = default;
  explicit CodecParams(const CodecConfig& cfg);

  int latent_h() const { return config.T / config.r; }
  int latent_w() const { return config.F / config.r; }
  int latent_size() const { return config.C * latent_h() * latent_w(); }

  template <class Self, class Fn>
  static void visit(Self& self, Fn&& fn) {
    CodecNet::visit(self.net, nn::prefixed("net.", fn));
    fn("latent_shift", self.latent_shift);
    fn("latent_scale", self.latent_scale);
  }
};

// (H*W) x r^2 patch rows, patches in (h, w) order, pixels row-major within a
// patch.
Matrix to_patches(const Matrix& mel, int r);
Matrix from_patches(const Matrix& patches, int T, int F, int r);

LatentTensor encode_mel(const CodecParams& p, const Matrix& mel);
Matrix decode_latent(const CodecParams& p, const LatentTensor& z);

// Mean reconstruction MSE over a set of mels.
double reconstruction_mse(const CodecParams& p, const std::vector<Matrix>& mels);

// Loss (MSE of the raw autoencoder on patches) and gradient for a batch of
// patch rows; the latent statistics are not involved.
double patch_loss_and_grad(const CodecNet& net, const Matrix& patches, CodecNet* grad);

struct CodecTrainConfig {
  int epochs = 10;
  int batch = 64;  // mels per step
  double lr = 2e-3;
  std::uint64_t seed = 37;
};

struct CodecEpochLog {
  int epoch = 0;
  double train_mse = 0.0;
  double val_mse = 0.0;
};

using CodecEpochCallback = std::function<void(const CodecEpochLog&)>;

// Trains the autoencoder with Adam, then calibrates the latent statistics on
// the training set. Epoch 0 in the log is the untrained model. Throws
// InvalidArgument on an empty training set.
std::vector<CodecEpochLog> train_codec(CodecParams& p, const std::vector<Matrix>& train,
                                       const std::vector<Matrix>& val, const CodecTrainConfig& cfg,
                                       const CodecEpochCallback& on_epoch = {});

// Sets shift / scale to the per-channel mean and standard deviation of the
// raw latents of `mels`.
void calibrate_latent_stats(CodecParams& p, const std::vector<Matrix>& mels);

}  // namespace diffava::codec
