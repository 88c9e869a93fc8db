#pragma once

// Conditional latent diffusion (DDPM). Latents are handled flattened: a batch
// is a matrix whose rows are latents, and the condition for each row is the
// matching row of a condition matrix.

#include <cstdint>
#include <functional>
#include <vector>

#include "diffava/nn.hpp"
#include "diffava/numerics.hpp"
#include "diffava/rng.hpp"

namespace diffava::diffusion {

// Steps are 1-based: beta(n) for n = 1..N.
class NoiseSchedule {
 public:
  NoiseSchedule() = default;
  NoiseSchedule(std::vector<double> betas);

  int steps() const { return static_cast<int>(beta_.size()); }
  double beta(int n) const { return beta_.at(static_cast<std::size_t>(n - 1)); }
  double alpha(int n) const { return 1.0 - beta(n); }
  double alpha_bar(int n) const { return alpha_bar_.at(static_cast<std::size_t>(n - 1)); }
  // alpha_bar(N) < 0.01: the terminal marginal is close to N(0, I).
  bool terminal_near_isotropic() const { return alpha_bar(steps()) < 0.01; }

 private:
  std::vector<double> beta_;
  std::vector<double> alpha_bar_;
};

// Linear betas from beta_min to beta_max. Throws ConfigError unless
// 0 < beta_min <= beta_max < 1 and N >= 1.
NoiseSchedule build_linear_schedule(int N, double beta_min, double beta_max);

// z_n = sqrt(abar_n) z0 + sqrt(1 - abar_n) eps, row by row.
Matrix forward_diffuse(const NoiseSchedule& s, const Matrix& z0, int n, const Matrix& eps);
// Per-row steps.
Matrix forward_diffuse(const NoiseSchedule& s, const Matrix& z0, const std::vector<int>& steps, const Matrix& eps);
// One transition q(z_n | z_{n-1}) = N(sqrt(alpha_n) z_{n-1}, beta_n I).
Matrix forward_step(const NoiseSchedule& s, const Matrix& z_prev, int n, const Matrix& noise);

struct DenoiserConfig {
  int latent_size = 1280;
  int cond_dim = 64;
  int hidden = 256;
  int time_dim = 32;
  int cond_hidden = 64;
  int blocks = 3;
  std::uint64_t seed = 41;
};

void validate(const DenoiserConfig& cfg);

struct DenoiserBlock {
  nn::Linear fc1, fc2;
  nn::Linear film_scale, film_shift;

  template <class Self, class Fn>
  static void visit(Self& self, Fn&& fn) {
    nn::Linear::visit(self.fc1, nn::prefixed("fc1.", fn));
    nn::Linear::visit(self.fc2, nn::prefixed("fc2.", fn));
    nn::Linear::visit(self.film_scale, nn::prefixed("film_scale.", fn));
    nn::Linear::visit(self.film_shift, nn::prefixed("film_shift.", fn));
  }
};

// eps_theta(z_n, n, c):
//   h = W_in [z_n, temb(n), c] + b_in,  e = gelu(W_c c + b_c)
//   per block:  a = gelu(fc1 h);  h += fc2(a * (1 + film_scale e) + film_shift e)
//   eps = sqrt(1 - abar_n) z_n + W_out h + b_out
// The fixed skip term is the posterior-mean noise estimate for unit-variance
// latents; the network only has to learn the structured remainder.
struct DenoiserParams {
  DenoiserConfig config;
  nn::Linear input, cond_proj, output;
  std::vector<DenoiserBlock> blocks;

  DenoiserParams() = default;
  explicit DenoiserParams(const DenoiserConfig& cfg);

  struct Cache {
    Matrix in, h0, cond, cond_pre, cond_emb;
    struct Block {
      Matrix h, pre, a, scale, shift, m;
    };
    std::vector<Block> blocks;
    Matrix h_last;
  };

  // z: B x latent_size, steps: B values in 1..N, cond: B x cond_dim.
  Matrix predict(const NoiseSchedule& s, const Matrix& z, const std::vector<int>& steps, const Matrix& cond,
                 Cache* cache = nullptr) const;
  void backward(const Cache& cache, const Matrix& dout, DenoiserParams& grad) const;

  template <class Self, class Fn>
  static void visit(Self& self, Fn&& fn) {
    nn::Linear::visit(self.input, nn::prefixed("input.", fn));
    nn::Linear::visit(self.cond_proj, nn::prefixed("cond_proj.", fn));
    for (std::size_t i = 0; i < self.blocks.size(); ++i) {
      DenoiserBlock::visit(self.blocks[i], nn::prefixed("block" + std::to_string(i) + ".", fn));
    }
    nn::Linear::visit(self.output, nn::prefixed("output.", fn));
  }
};

Matrix timestep_embedding(const std::vector<int>& steps, int dim);

enum class LossKind {
  mse,      // mean over elements of (eps - eps_hat)^2
  l2_norm,  // mean over rows of |eps - eps_hat|
};

// Loss for fixed (steps, eps) draws; gradient into grad if given.
double loss_and_grad(const DenoiserParams& p, const NoiseSchedule& s, const Matrix& z0, const Matrix& cond,
                     const std::vector<int>& steps, const Matrix& eps, LossKind kind, DenoiserParams* grad);

struct LossStep {
  double loss = 0.0;
  DenoiserParams grad;
};

// Draws n ~ U{1..N} and eps ~ N(0, I) per row, then evaluates the objective.
LossStep loss_step(const DenoiserParams& p, const NoiseSchedule& s, const Matrix& z0, const Matrix& cond, Rng& rng,
                   LossKind kind = LossKind::mse);

struct SamplerConfig {
  double guidance_scale = 1.0;  // 1 = plain conditional sampling
  bool guidance = false;
};

// Ancestral sampling from z_N ~ N(0, I); one output row per condition row.
// Throws NumericalDivergence naming the step if anything becomes non-finite.
Matrix ddpm_sample(const DenoiserParams& p, const NoiseSchedule& s, const Matrix& cond, Rng& rng,
                   const SamplerConfig& sampler = {});

// Renormalized mean of the rows. Throws DegenerateInput if the mean is zero.
RowVector pool_condition(const Matrix& rows);

struct DiffusionTrainConfig {
  int epochs = 60;
  int batch = 64;
  double lr = 1e-3;
  LossKind loss = LossKind::mse;
  double cond_dropout = 0.0;  // > 0 trains the unconditional branch for guidance
  std::uint64_t seed = 43;
};

struct DiffusionEpochLog {
  int epoch = 0;
  double train_loss = 0.0;
};

using DiffusionEpochCallback = std::function<void(const DiffusionEpochLog&)>;

// latents: M x latent_size, conds: M x cond_dim.
std::vector<DiffusionEpochLog> train_denoiser(DenoiserParams& p, const NoiseSchedule& s, const Matrix& latents,
                                              const Matrix& conds, const DiffusionTrainConfig& cfg,
                                              const DiffusionEpochCallback& on_epoch = {});

}  // namespace diffava::diffusion
