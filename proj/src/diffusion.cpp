#include "diffava/diffusion.hpp"

#include <cmath>
#include <numeric>

#include "diffava/errors.hpp"

namespace diffava::diffusion {

NoiseSchedule::NoiseSchedule(std::vector<double> betas) : beta_(std::move(betas)) {
  if (beta_.empty()) throw ConfigError("noise schedule: no steps");
  double prod = 1.0;
  for (std::size_t i = 0; i < beta_.size(); ++i) {
    if (!(beta_[i] > 0.0 && beta_[i] < 1.0)) throw ConfigError("noise schedule: beta must lie in (0, 1)");
    if (i > 0 && beta_[i] < beta_[i - 1]) throw ConfigError("noise schedule: betas must be nondecreasing");
    prod *= 1.0 - beta_[i];
    alpha_bar_.push_back(prod);
  }
}

NoiseSchedule build_linear_schedule(int N, double beta_min, double beta_max) {
  if (N < 1) throw ConfigError("noise schedule: N must be >= 1");
  if (!(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0)) {
    throw ConfigError("noise schedule: need 0 < beta_min <= beta_max < 1");
  }
  std::vector<double> betas(static_cast<std::size_t>(N));
  for (int n = 0; n < N; ++n) {
    const double frac = N == 1 ? 0.0 : static_cast<double>(n) / static_cast<double>(N - 1);
    betas[static_cast<std::size_t>(n)] = beta_min + frac * (beta_max - beta_min);
  }
  return NoiseSchedule(std::move(betas));
}

namespace {

void check_step(const NoiseSchedule& s, int n) {
  if (n < 1 || n > s.steps()) {
    throw InvalidArgument("diffusion step " + std::to_string(n) + " is outside 1.." + std::to_string(s.steps()));
  }
}

}  // namespace

Matrix forward_diffuse(const NoiseSchedule& s, const Matrix& z0, int n, const Matrix& eps) {
  return forward_diffuse(s, z0, std::vector<int>(static_cast<std::size_t>(z0.rows()), n), eps);
}

Matrix forward_diffuse(const NoiseSchedule& s, const Matrix& z0, const std::vector<int>& steps, const Matrix& eps) {
  if (eps.rows() != z0.rows() || eps.cols() != z0.cols()) throw ShapeError("forward_diffuse: eps shape differs from z0");
  if (steps.size() != static_cast<std::size_t>(z0.rows())) throw ShapeError("forward_diffuse: one step per row");
  Matrix zn(z0.rows(), z0.cols());
  for (Eigen::Index b = 0; b < z0.rows(); ++b) {
    const int n = steps[static_cast<std::size_t>(b)];
    check_step(s, n);
    const double ab = s.alpha_bar(n);
    zn.row(b) = std::sqrt(ab) * z0.row(b) + std::sqrt(1.0 - ab) * eps.row(b);
  }
  return zn;
}

Matrix forward_step(const NoiseSchedule& s, const Matrix& z_prev, int n, const Matrix& noise) {
  check_step(s, n);
  if (noise.rows() != z_prev.rows() || noise.cols() != z_prev.cols()) throw ShapeError("forward_step: shape mismatch");
  return std::sqrt(s.alpha(n)) * z_prev + std::sqrt(s.beta(n)) * noise;
}

// ---------------------------------------------------------------------------
// Denoiser

void validate(const DenoiserConfig& cfg) {
  if (cfg.latent_size < 1 || cfg.cond_dim < 1 || cfg.hidden < 1 || cfg.time_dim < 2 || cfg.cond_hidden < 1 ||
      cfg.blocks < 0) {
    throw ConfigError("denoiser: dimensions must be positive");
  }
}

DenoiserParams::DenoiserParams(const DenoiserConfig& cfg) : config(cfg) {
  validate(cfg);
  Rng rng(cfg.seed);
  const Eigen::Index in = cfg.latent_size + cfg.time_dim + cfg.cond_dim;
  input = nn::Linear(in, cfg.hidden, rng);
  cond_proj = nn::Linear(cfg.cond_dim, cfg.cond_hidden, rng);
  const double branch_gain = 1.0 / std::sqrt(static_cast<double>(std::max(1, cfg.blocks)));
  for (int l = 0; l < cfg.blocks; ++l) {
    DenoiserBlock b;
    b.fc1 = nn::Linear(cfg.hidden, cfg.hidden, rng);
    b.fc2 = nn::Linear(cfg.hidden, cfg.hidden, rng, branch_gain);
    b.film_scale = nn::Linear(cfg.cond_hidden, cfg.hidden, rng, 0.1);
    b.film_shift = nn::Linear(cfg.cond_hidden, cfg.hidden, rng, 0.1);
    blocks.push_back(std::move(b));
  }
  output = nn::Linear(cfg.hidden, cfg.latent_size, rng, 0.5);
}

Matrix timestep_embedding(const std::vector<int>& steps, int dim) {
  Matrix e(static_cast<Eigen::Index>(steps.size()), dim);
  for (std::size_t b = 0; b < steps.size(); ++b) {
    e.row(static_cast<Eigen::Index>(b)) = nn::sinusoidal_embedding(static_cast<double>(steps[b]), dim);
  }
  return e;
}

Matrix DenoiserParams::predict(const NoiseSchedule& s, const Matrix& z, const std::vector<int>& steps,
                               const Matrix& cond, Cache* cache) const {
  const Eigen::Index B = z.rows();
  if (z.cols() != config.latent_size) {
    throw ShapeError("denoiser: latent has " + std::to_string(z.cols()) + " entries, expected " +
                     std::to_string(config.latent_size));
  }
  if (cond.rows() != B || cond.cols() != config.cond_dim) throw ShapeError("denoiser: condition shape mismatch");
  if (steps.size() != static_cast<std::size_t>(B)) throw ShapeError("denoiser: one step per row");

  Matrix in(B, input.in_dim());
  in << z, timestep_embedding(steps, config.time_dim), cond;
  Matrix h = input.forward(in);
  Matrix cond_pre = cond_proj.forward(cond);
  Matrix cond_emb = nn::gelu(cond_pre);
  if (cache) {
    cache->in = in;
    cache->h0 = h;
    cache->cond = cond;
    cache->cond_pre = cond_pre;
    cache->cond_emb = cond_emb;
    cache->blocks.clear();
  }
  for (const DenoiserBlock& blk : blocks) {
    Cache::Block bc;
    Matrix pre = blk.fc1.forward(h);
    Matrix a = nn::gelu(pre);
    Matrix scale = blk.film_scale.forward(cond_emb);
    Matrix shift = blk.film_shift.forward(cond_emb);
    Matrix m = a.array() * (1.0 + scale.array()) + shift.array();
    Matrix next = h + blk.fc2.forward(m);
    if (cache) {
      bc.h = std::move(h);
      bc.pre = std::move(pre);
      bc.a = std::move(a);
      bc.scale = std::move(scale);
      bc.shift = std::move(shift);
      bc.m = std::move(m);
      cache->blocks.push_back(std::move(bc));
    }
    h = std::move(next);
  }
  Matrix out = output.forward(h);
  for (Eigen::Index b = 0; b < B; ++b) {
    const int n = steps[static_cast<std::size_t>(b)];
    check_step(s, n);
    out.row(b) += std::sqrt(1.0 - s.alpha_bar(n)) * z.row(b);
  }
  if (cache) cache->h_last = std::move(h);
  return out;
}

void DenoiserParams::backward(const Cache& cache, const Matrix& dout, DenoiserParams& grad) const {
  Matrix dh = output.backward(cache.h_last, dout, grad.output);
  Matrix dcond_emb = Matrix::Zero(cache.cond_emb.rows(), cache.cond_emb.cols());
  for (std::size_t l = blocks.size(); l-- > 0;) {
    const DenoiserBlock& blk = blocks[l];
    DenoiserBlock& g = grad.blocks[l];
    const Cache::Block& bc = cache.blocks[l];
    const Matrix dm = blk.fc2.backward(bc.m, dh, g.fc2);
    const Matrix da = dm.array() * (1.0 + bc.scale.array());
    const Matrix dscale = dm.array() * bc.a.array();
    dcond_emb += blk.film_scale.backward(cache.cond_emb, dscale, g.film_scale);
    dcond_emb += blk.film_shift.backward(cache.cond_emb, dm, g.film_shift);
    dh += blk.fc1.backward(bc.h, nn::gelu_backward(bc.pre, da), g.fc1);
  }
  cond_proj.backward(cache.cond, nn::gelu_backward(cache.cond_pre, dcond_emb), grad.cond_proj);
  input.backward(cache.in, dh, grad.input);
}

double loss_and_grad(const DenoiserParams& p, const NoiseSchedule& s, const Matrix& z0, const Matrix& cond,
                     const std::vector<int>& steps, const Matrix& eps, LossKind kind, DenoiserParams* grad) {
  const Matrix zn = forward_diffuse(s, z0, steps, eps);
  DenoiserParams::Cache cache;
  const Matrix pred = p.predict(s, zn, steps, cond, grad ? &cache : nullptr);
  const Matrix diff = pred - eps;
  double loss = 0.0;
  Matrix dpred;
  if (kind == LossKind::mse) {
    loss = nn::mse(pred, eps, grad ? &dpred : nullptr);
  } else {
    const double B = static_cast<double>(diff.rows());
    dpred.resize(diff.rows(), diff.cols());
    for (Eigen::Index b = 0; b < diff.rows(); ++b) {
      const double n = diff.row(b).norm();
      loss += n / B;
      dpred.row(b) = n > 0.0 ? RowVector(diff.row(b) / (n * B)) : RowVector::Zero(diff.cols());
    }
  }
  if (grad) p.backward(cache, dpred, *grad);
  return loss;
}

LossStep loss_step(const DenoiserParams& p, const NoiseSchedule& s, const Matrix& z0, const Matrix& cond, Rng& rng,
                   LossKind kind) {
  std::vector<int> steps(static_cast<std::size_t>(z0.rows()));
  for (int& n : steps) n = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(s.steps())));
  Matrix eps(z0.rows(), z0.cols());
  for (Eigen::Index i = 0; i < eps.size(); ++i) eps.data()[i] = rng.normal();
  LossStep out;
  out.grad = nn::zeros_like(p);
  out.loss = loss_and_grad(p, s, z0, cond, steps, eps, kind, &out.grad);
  return out;
}

Matrix ddpm_sample(const DenoiserParams& p, const NoiseSchedule& s, const Matrix& cond, Rng& rng,
                   const SamplerConfig& sampler) {
  const Eigen::Index B = cond.rows();
  Matrix z(B, p.config.latent_size);
  for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = rng.normal();
  const Matrix uncond = Matrix::Zero(B, cond.cols());
  for (int n = s.steps(); n >= 1; --n) {
    const std::vector<int> steps(static_cast<std::size_t>(B), n);
    Matrix eps_hat = p.predict(s, z, steps, cond);
    if (sampler.guidance) {
      const Matrix eps_u = p.predict(s, z, steps, uncond);
      eps_hat = eps_u + sampler.guidance_scale * (eps_hat - eps_u);
    }
    const double coef = s.beta(n) / std::sqrt(1.0 - s.alpha_bar(n));
    z = (z - coef * eps_hat) / std::sqrt(s.alpha(n));
    if (n > 1) {
      const double sigma = std::sqrt(s.beta(n));
      for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] += sigma * rng.normal();
    }
    if (!z.allFinite()) throw NumericalDivergence("ddpm_sample: non-finite latent at step " + std::to_string(n));
  }
  return z;
}

RowVector pool_condition(const Matrix& rows) {
  if (rows.rows() < 1) throw InvalidArgument("pool_condition: no rows");
  const RowVector mean = rows.colwise().mean();
  const double n = mean.norm();
  if (!(n > 1e-12)) throw DegenerateInput("pool_condition: rows average to zero");
  return mean / n;
}

std::vector<DiffusionEpochLog> train_denoiser(DenoiserParams& p, const NoiseSchedule& s, const Matrix& latents,
                                              const Matrix& conds, const DiffusionTrainConfig& cfg,
                                              const DiffusionEpochCallback& on_epoch) {
  if (latents.rows() == 0) throw InvalidArgument("train_denoiser: no training latents");
  if (conds.rows() != latents.rows()) throw ShapeError("train_denoiser: one condition row per latent");
  if (cfg.batch < 1) throw ConfigError("train_denoiser: batch must be positive");
  nn::Adam adam(nn::AdamConfig{.lr = cfg.lr});
  Rng rng(cfg.seed);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(latents.rows()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  const std::size_t B = static_cast<std::size_t>(cfg.batch);

  std::vector<DiffusionEpochLog> log;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    double total = 0.0;
    std::size_t steps = 0;
    for (std::size_t start = 0; start < order.size(); start += B) {
      const std::size_t end = std::min(order.size(), start + B);
      const Eigen::Index rows = static_cast<Eigen::Index>(end - start);
      Matrix z0(rows, latents.cols());
      Matrix c(rows, conds.cols());
      for (std::size_t j = start; j < end; ++j) {
        const Eigen::Index r = static_cast<Eigen::Index>(j - start);
        z0.row(r) = latents.row(order[j]);
        if (cfg.cond_dropout > 0.0 && rng.uniform() < cfg.cond_dropout) {
          c.row(r).setZero();
        } else {
          c.row(r) = conds.row(order[j]);
        }
      }
      LossStep st = loss_step(p, s, z0, c, rng, cfg.loss);
      if (!std::isfinite(st.loss)) {
        throw NumericalDivergence("train_denoiser: loss diverged in epoch " + std::to_string(epoch));
      }
      adam.step(p, st.grad);
      total += st.loss;
      ++steps;
    }
    DiffusionEpochLog e{epoch, total / static_cast<double>(steps)};
    log.push_back(e);
    if (on_epoch) on_epoch(e);
  }
  return log;
}

}  // namespace diffava::diffusion
