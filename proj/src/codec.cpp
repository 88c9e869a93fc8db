#include "diffava/codec.hpp"

#include <cmath>
#include <numeric>

#include "diffava/errors.hpp"

namespace diffava::codec {

void validate(const CodecConfig& cfg) {
  if (cfg.C < 1 || cfg.r < 1 || cfg.T < 1 || cfg.F < 1 || cfg.hidden < 1) {
    throw ConfigError("codec: dimensions must be positive");
  }
  if (cfg.T % cfg.r != 0 || cfg.F % cfg.r != 0) {
    throw ConfigError("codec: compression r = " + std::to_string(cfg.r) + " must divide T and F");
  }
}

RowVector LatentTensor::flat() const { return data.reshaped<Eigen::RowMajor>().transpose(); }

LatentTensor LatentTensor::from_flat(const RowVector& flat, int c, int h, int w) {
  if (flat.size() != static_cast<Eigen::Index>(c) * h * w) throw ShapeError("latent: flat size does not match shape");
  LatentTensor z(c, h, w);
  z.data.reshaped<Eigen::RowMajor>() = flat.transpose();
  return z;
}

CodecParams::CodecParams(const CodecConfig& cfg)
    : config(cfg), latent_shift(Matrix::Zero(1, cfg.C)), latent_scale(Matrix::Ones(1, cfg.C)) {
  validate(cfg);
  Rng rng(cfg.seed);
  const int patch = cfg.r * cfg.r;
  net.enc1 = nn::Linear(patch, cfg.hidden, rng);
  net.enc2 = nn::Linear(cfg.hidden, cfg.C, rng);
  net.dec1 = nn::Linear(cfg.C, cfg.hidden, rng);
  net.dec2 = nn::Linear(cfg.hidden, patch, rng);
}

Matrix to_patches(const Matrix& mel, int r) {
  const int H = static_cast<int>(mel.rows()) / r;
  const int W = static_cast<int>(mel.cols()) / r;
  Matrix patches(H * W, r * r);
  for (int h = 0; h < H; ++h) {
    for (int w = 0; w < W; ++w) {
      for (int a = 0; a < r; ++a) {
        for (int b = 0; b < r; ++b) patches(h * W + w, a * r + b) = mel(h * r + a, w * r + b);
      }
    }
  }
  return patches;
}

Matrix from_patches(const Matrix& patches, int T, int F, int r) {
  const int W = F / r;
  Matrix mel(T, F);
  for (int h = 0; h < T / r; ++h) {
    for (int w = 0; w < W; ++w) {
      for (int a = 0; a < r; ++a) {
        for (int b = 0; b < r; ++b) mel(h * r + a, w * r + b) = patches(h * W + w, a * r + b);
      }
    }
  }
  return mel;
}

namespace {

Matrix encode_raw(const CodecNet& net, const Matrix& patches) {
  return net.enc2.forward(net.enc1.forward(patches).array().tanh().matrix());
}

Matrix decode_raw(const CodecNet& net, const Matrix& codes) {
  return net.dec2.forward(net.dec1.forward(codes).array().tanh().matrix()).cwiseMax(0.0);
}

void check_mel(const CodecParams& p, const Matrix& mel) {
  if (mel.rows() != p.config.T || mel.cols() != p.config.F) {
    throw ShapeError("codec: mel is " + std::to_string(mel.rows()) + "x" + std::to_string(mel.cols()) +
                     ", expected " + std::to_string(p.config.T) + "x" + std::to_string(p.config.F));
  }
}

}  // namespace

LatentTensor encode_mel(const CodecParams& p, const Matrix& mel) {
  check_mel(p, mel);
  Matrix codes = encode_raw(p.net, to_patches(mel, p.config.r));  // (H*W) x C
  codes.rowwise() -= p.latent_shift.row(0);
  codes.array().rowwise() /= p.latent_scale.row(0).array();
  LatentTensor z(p.config.C, p.latent_h(), p.latent_w());
  z.data = codes.transpose();
  return z;
}

Matrix decode_latent(const CodecParams& p, const LatentTensor& z) {
  if (z.C != p.config.C || z.H != p.latent_h() || z.W != p.latent_w() || z.data.rows() != z.C ||
      z.data.cols() != z.H * z.W) {
    throw ShapeError("codec: latent shape does not match the codec configuration");
  }
  Matrix codes = z.data.transpose();
  codes.array().rowwise() *= p.latent_scale.row(0).array();
  codes.rowwise() += p.latent_shift.row(0);
  return from_patches(decode_raw(p.net, codes), p.config.T, p.config.F, p.config.r);
}

double reconstruction_mse(const CodecParams& p, const std::vector<Matrix>& mels) {
  if (mels.empty()) return 0.0;
  double total = 0.0;
  for (const Matrix& m : mels) total += nn::mse(decode_latent(p, encode_mel(p, m)), m);
  return total / static_cast<double>(mels.size());
}

double patch_loss_and_grad(const CodecNet& net, const Matrix& patches, CodecNet* grad) {
  const Matrix pre1 = net.enc1.forward(patches);
  const Matrix h1 = pre1.array().tanh().matrix();
  const Matrix codes = net.enc2.forward(h1);
  const Matrix pre3 = net.dec1.forward(codes);
  const Matrix h3 = pre3.array().tanh().matrix();
  const Matrix pre4 = net.dec2.forward(h3);
  const Matrix out = pre4.cwiseMax(0.0);
  Matrix dout;
  const double loss = nn::mse(out, patches, grad ? &dout : nullptr);
  if (grad) {
    const Matrix dpre4 = (pre4.array() > 0.0).select(dout, 0.0);
    const Matrix dh3 = net.dec2.backward(h3, dpre4, grad->dec2);
    const Matrix dpre3 = dh3.array() * (1.0 - h3.array().square());
    const Matrix dcodes = net.dec1.backward(codes, dpre3, grad->dec1);
    const Matrix dh1 = net.enc2.backward(h1, dcodes, grad->enc2);
    const Matrix dpre1 = dh1.array() * (1.0 - h1.array().square());
    net.enc1.backward(patches, dpre1, grad->enc1);
  }
  return loss;
}

void calibrate_latent_stats(CodecParams& p, const std::vector<Matrix>& mels) {
  if (mels.empty()) throw InvalidArgument("calibrate_latent_stats: no mels");
  const int C = p.config.C;
  Vector sum = Vector::Zero(C);
  Vector sq = Vector::Zero(C);
  double n = 0.0;
  for (const Matrix& m : mels) {
    check_mel(p, m);
    const Matrix codes = encode_raw(p.net, to_patches(m, p.config.r));
    sum += codes.colwise().sum().transpose();
    sq += codes.array().square().matrix().colwise().sum().transpose();
    n += static_cast<double>(codes.rows());
  }
  const Vector mean = sum / n;
  const Vector var = (sq / n - mean.cwiseProduct(mean)).cwiseMax(0.0);
  for (int c = 0; c < C; ++c) {
    p.latent_shift(0, c) = mean(c);
    p.latent_scale(0, c) = std::max(std::sqrt(var(c)), 1e-6);
  }
}

std::vector<CodecEpochLog> train_codec(CodecParams& p, const std::vector<Matrix>& train,
                                       const std::vector<Matrix>& val, const CodecTrainConfig& cfg,
                                       const CodecEpochCallback& on_epoch) {
  if (train.empty()) throw InvalidArgument("train_codec: empty training set");
  if (cfg.batch < 1) throw ConfigError("train_codec: batch must be positive");
  for (const Matrix& m : train) check_mel(p, m);

  // Training runs on the raw autoencoder; identity statistics until the end.
  p.latent_shift.setZero();
  p.latent_scale.setOnes();

  std::vector<Matrix> train_patches;
  for (const Matrix& m : train) train_patches.push_back(to_patches(m, p.config.r));
  const Eigen::Index rows_per_mel = train_patches.front().rows();

  std::vector<CodecEpochLog> log;
  auto record = [&](int epoch, double train_mse) {
    CodecEpochLog e{epoch, train_mse, reconstruction_mse(p, val.empty() ? train : val)};
    log.push_back(e);
    if (on_epoch) on_epoch(e);
  };
  record(0, reconstruction_mse(p, train));

  nn::Adam adam(nn::AdamConfig{.lr = cfg.lr});
  Rng rng(cfg.seed);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t B = static_cast<std::size_t>(cfg.batch);
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    double total = 0.0;
    std::size_t steps = 0;
    for (std::size_t start = 0; start < order.size(); start += B) {
      const std::size_t end = std::min(order.size(), start + B);
      Matrix batch(static_cast<Eigen::Index>(end - start) * rows_per_mel, train_patches.front().cols());
      for (std::size_t j = start; j < end; ++j) {
        batch.middleRows(static_cast<Eigen::Index>(j - start) * rows_per_mel, rows_per_mel) = train_patches[order[j]];
      }
      CodecNet grad = nn::zeros_like(p.net);
      const double l = patch_loss_and_grad(p.net, batch, &grad);
      if (!std::isfinite(l)) throw NumericalDivergence("train_codec: loss diverged in epoch " + std::to_string(epoch));
      adam.step(p.net, grad);
      total += l;
      ++steps;
    }
    record(epoch, total / static_cast<double>(steps));
  }
  calibrate_latent_stats(p, train);
  return log;
}

}  // namespace diffava::codec
