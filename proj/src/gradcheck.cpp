#include "diffava/gradcheck.hpp"

#include <chrono>

#include "diffava/alignment.hpp"
#include "diffava/contrastive.hpp"
#include "diffava/diffusion.hpp"
#include "diffava/nn.hpp"
#include "diffava/numerics.hpp"
#include "diffava/rng.hpp"

namespace diffava::gradcheck {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed(Clock::time_point start) { return std::chrono::duration<double>(Clock::now() - start).count(); }

Matrix unit_rows(int rows, int cols, Rng& rng) { return l2_normalize_rows(nn::random_matrix(rows, cols, 1.0, rng)); }

}  // namespace

SuiteResult contrastive_suite(int seeds, std::uint64_t base_seed) {
  const auto start = Clock::now();
  SuiteResult r{"contrastive", seeds, 0.0, 0.0};
  for (int s = 0; s < seeds; ++s) {
    Rng rng(base_seed + static_cast<std::uint64_t>(s));
    const int B = 2 + static_cast<int>(rng.below(4));
    const int T = 1 + static_cast<int>(rng.below(4));
    const int D = 3 + static_cast<int>(rng.below(6));
    contrastive::ContrastiveConfig cfg;
    cfg.tau = rng.uniform(0.05, 1.0);
    cfg.symmetric = s % 2 == 1;
    contrastive::Batch audio, text;
    for (int b = 0; b < B; ++b) {
      audio.push_back(unit_rows(T, D, rng));
      text.push_back(unit_rows(T, D, rng));
    }
    const contrastive::LossResult res = contrastive::temporal_infonce(audio, text, cfg);
    Vector analytic(static_cast<Eigen::Index>(B) * T * D);
    for (int b = 0; b < B; ++b) analytic.segment(static_cast<Eigen::Index>(b) * T * D, T * D) = res.grad_text[b].reshaped<Eigen::RowMajor>();

    auto loss_at = [&](const Vector& x) {
      contrastive::Batch t(static_cast<std::size_t>(B));
      for (int b = 0; b < B; ++b) {
        t[static_cast<std::size_t>(b)] = x.segment(static_cast<Eigen::Index>(b) * T * D, T * D).reshaped<Eigen::RowMajor>(T, D);
      }
      return contrastive::detail::temporal_infonce_unchecked(audio, t, cfg).loss;
    };
    Vector x(analytic.size());
    for (int b = 0; b < B; ++b) x.segment(static_cast<Eigen::Index>(b) * T * D, T * D) = text[b].reshaped<Eigen::RowMajor>();
    r.max_relative_error = std::max(r.max_relative_error, relative_error(analytic, finite_diff_grad(loss_at, x)));
  }
  r.seconds = elapsed(start);
  return r;
}

SuiteResult alignment_suite(int seeds, std::uint64_t base_seed) {
  const auto start = Clock::now();
  SuiteResult r{"alignment", seeds, 0.0, 0.0};
  for (int s = 0; s < seeds; ++s) {
    Rng rng(base_seed + static_cast<std::uint64_t>(s));
    alignment::AlignmentConfig cfg;
    cfg.dim = 8;
    cfg.depth = 1 + static_cast<int>(rng.below(2));
    cfg.heads = s % 2 == 0 ? 2 : 4;
    cfg.ffn_mult = 2;
    cfg.fusion_hidden = 6;
    cfg.positional_encoding = s % 3 != 2;
    cfg.seed = rng.next_u64();
    alignment::AlignmentModel model(cfg);
    // Open the gates and perturb the norms so every path carries gradient.
    model.fusion.gate_cross(0, 0) = rng.uniform(0.3, 1.0);
    model.fusion.gate_visual(0, 0) = rng.uniform(0.3, 1.0);
    nn::visit_params(model, [&](const std::string& name, Matrix& m) {
      if (name.find("gamma") != std::string::npos || name.find("beta") != std::string::npos) {
        m += nn::random_matrix(m.rows(), m.cols(), 0.1, rng);
      }
    });

    const int B = 3;
    const int T = 3;
    std::vector<alignment::EncodedSample> data(B);
    std::vector<const alignment::EncodedSample*> batch;
    for (auto& e : data) {
      e.text_pooled = unit_rows(1, cfg.dim, rng);
      e.video = unit_rows(T, cfg.dim, rng);
      e.audio = unit_rows(T, cfg.dim, rng);
      batch.push_back(&e);
    }
    contrastive::ContrastiveConfig loss;
    loss.tau = 0.5;
    loss.symmetric = s % 2 == 1;

    alignment::AlignmentModel grad = nn::zeros_like(model);
    alignment::batch_loss_and_grad(model, batch, loss, &grad);
    const Vector analytic = nn::flatten(grad);
    auto loss_at = [&](const Vector& x) {
      alignment::AlignmentModel probe = model;
      nn::unflatten(x, probe);
      return alignment::batch_loss_and_grad(probe, batch, loss, nullptr);
    };
    r.max_relative_error =
        std::max(r.max_relative_error, relative_error(analytic, finite_diff_grad(loss_at, nn::flatten(model))));
  }
  r.seconds = elapsed(start);
  return r;
}

SuiteResult diffusion_suite(int seeds, std::uint64_t base_seed) {
  const auto start = Clock::now();
  SuiteResult r{"diffusion", seeds, 0.0, 0.0};
  for (int s = 0; s < seeds; ++s) {
    Rng rng(base_seed + static_cast<std::uint64_t>(s));
    diffusion::DenoiserConfig cfg;
    cfg.latent_size = 6;
    cfg.cond_dim = 4;
    cfg.hidden = 8;
    cfg.time_dim = 4;
    cfg.cond_hidden = 5;
    cfg.blocks = 1 + static_cast<int>(rng.below(3));
    cfg.seed = rng.next_u64();
    diffusion::DenoiserParams p(cfg);
    // Larger FiLM weights than at init so the modulation path is exercised.
    for (auto& b : p.blocks) {
      b.film_scale.w *= 5.0;
      b.film_shift.w *= 5.0;
    }
    const diffusion::NoiseSchedule sched = diffusion::build_linear_schedule(20, 1e-3, 0.2);
    const int B = 4;
    const Matrix z0 = nn::random_matrix(B, cfg.latent_size, 1.0, rng);
    const Matrix cond = nn::random_matrix(B, cfg.cond_dim, 1.0, rng);
    const Matrix eps = nn::random_matrix(B, cfg.latent_size, 1.0, rng);
    std::vector<int> steps;
    for (int b = 0; b < B; ++b) steps.push_back(1 + static_cast<int>(rng.below(20)));
    const diffusion::LossKind kind = s % 2 == 0 ? diffusion::LossKind::mse : diffusion::LossKind::l2_norm;

    diffusion::DenoiserParams grad = nn::zeros_like(p);
    diffusion::loss_and_grad(p, sched, z0, cond, steps, eps, kind, &grad);
    const Vector analytic = nn::flatten(grad);
    auto loss_at = [&](const Vector& x) {
      diffusion::DenoiserParams probe = p;
      nn::unflatten(x, probe);
      return diffusion::loss_and_grad(probe, sched, z0, cond, steps, eps, kind, nullptr);
    };
    r.max_relative_error =
        std::max(r.max_relative_error, relative_error(analytic, finite_diff_grad(loss_at, nn::flatten(p))));
  }
  r.seconds = elapsed(start);
  return r;
}

std::vector<SuiteResult> run_all(int seeds) {
  return {contrastive_suite(seeds), alignment_suite(seeds), diffusion_suite(seeds)};
}

}  // namespace diffava::gradcheck
