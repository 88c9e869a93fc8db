// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
// exits nonzero if any fails. Artifacts go under ./acceptance_run.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "diffava/config.hpp"
#include "diffava/contrastive.hpp"
#include "diffava/diffusion.hpp"
#include "diffava/gradcheck.hpp"
#include "diffava/metrics.hpp"
#include "diffava/pipeline.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace diffava;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& title, const Outcome& o) {
  std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << ": " << title << " | " << o.detail << std::endl;
  if (!o.pass) ++failures;
}

template <class F>
void run_criterion(int id, const std::string& title, F&& body) {
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  report(id, title, o);
}

std::string fmt(double v) {
  std::ostringstream s;
  s << std::setprecision(6) << v;
  return s.str();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

// Relative path -> contents for every regular file under dir.
std::map<std::string, std::string> tree(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) out[fs::relative(e.path(), dir).string()] = slurp(e.path());
  return out;
}

// ---------------------------------------------------------------------------

Outcome gradient_suites() {
  const auto t0 = Clock::now();
  const auto results = gradcheck::run_all(10);
  const double secs = since(t0);
  bool ok = secs < 120.0;
  std::string d;
  for (const auto& r : results) {
    ok = ok && r.seeds >= 10 && r.max_relative_error < 1e-4;
    d += r.name + " " + fmt(r.max_relative_error) + " (" + std::to_string(r.seeds) + " seeds); ";
  }
  return {ok, d + "total " + fmt(secs) + " s"};
}

Outcome contrastive_values() {
  contrastive::ContrastiveConfig cfg;
  double worst_equal = 0.0;
  for (int B : {2, 4, 32})
    for (int T : {1, 10}) {
      std::vector<Matrix> sims(static_cast<std::size_t>(T), Matrix::Constant(B, B, 0.42));
      const double l = contrastive::infonce_from_similarities(sims, cfg).loss;
      worst_equal = std::max(worst_equal, std::abs(l - T * std::log(static_cast<double>(B))));
    }
  contrastive::ContrastiveConfig unit;
  unit.tau = 1.0;
  contrastive::Batch two{Matrix::Zero(1, 2), Matrix::Zero(1, 2)};
  two[0](0, 0) = 1.0;
  two[1](0, 1) = 1.0;
  const double b2 = std::abs(contrastive::temporal_infonce(two, two, unit).loss - std::log1p(std::exp(-1.0)));
  return {worst_equal < 1e-10 && b2 < 1e-10, "equal-similarity error " + fmt(worst_equal) + ", B=2 error " + fmt(b2)};
}

Outcome frechet_oracle() {
  double worst = 0.0, self = 0.0;
  auto as_oracle = [](const Matrix& m) {
    oracle::Mat o(m.rows(), std::vector<long double>(m.cols()));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) o[i][j] = m(i, j);
    return o;
  };
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed + 4000);
    metrics::GaussianStats a{Vector(8), SpdMatrix(testing::random_spd(8, rng)), 8};
    metrics::GaussianStats b{Vector(8), SpdMatrix(testing::random_spd(8, rng)), 8};
    for (int i = 0; i < 8; ++i) {
      a.mean(i) = rng.normal();
      b.mean(i) = rng.normal();
    }
    const std::vector<long double> ma(a.mean.data(), a.mean.data() + 8), mb(b.mean.data(), b.mean.data() + 8);
    const double ref = static_cast<double>(oracle::frechet(ma, as_oracle(a.cov.matrix()), mb, as_oracle(b.cov.matrix())));
    worst = std::max(worst, std::abs(metrics::frechet_distance(a, b) - ref));
    self = std::max(self, std::abs(metrics::frechet_distance(a, a)));
  }
  return {worst < 1e-8 && self < 1e-8, "max |FD - oracle| " + fmt(worst) + " over 100 pairs, max FD(g, g) " + fmt(self)};
}

Outcome forward_statistics() {
  const RunConfig cfg = preset("desk");
  const diffusion::NoiseSchedule s = cfg.schedule();
  const int N = s.steps(), M = 100000;
  Matrix z0(1, 4);
  z0 << 1.5, -0.7, 0.0, 2.2;
  Matrix z = z0.replicate(M, 1);
  Rng rng(5000);
  for (int n = 1; n <= N; ++n) {
    Matrix noise(M, 4);
    for (Eigen::Index i = 0; i < noise.size(); ++i) noise(i) = rng.normal();
    z = diffusion::forward_step(s, z, n, noise);
  }
  const double abar = s.alpha_bar(N), var_true = 1.0 - abar;
  double worst = 0.0;  // in units of the standard error
  for (int d = 0; d < 4; ++d) {
    const double mean = z.col(d).mean();
    const double var = (z.col(d).array() - mean).square().sum() / (M - 1);
    worst = std::max(worst, std::abs(mean - std::sqrt(abar) * z0(0, d)) / std::sqrt(var_true / M));
    worst = std::max(worst, std::abs(var - var_true) / (var_true * std::sqrt(2.0 / (M - 1))));
  }
  return {worst < 3.0 && abar < 0.01,
          "worst moment deviation " + fmt(worst) + " sigma at 1e5 draws, alpha_bar_N " + fmt(abar)};
}

Outcome two_mode_recovery() {
  // Two clusters at +/- c with weights 0.3 / 0.7 in a 4-dim latent.
  const int M = 4000, L = 4;
  const double w_pos = 0.3;
  RowVector c(L);
  c << 0.9, 0.9, -0.9, 0.9;
  Rng rng(6000);
  Matrix data(M, L);
  for (int i = 0; i < M; ++i) {
    const double sign = rng.uniform() < w_pos ? 1.0 : -1.0;
    for (int d = 0; d < L; ++d) data(i, d) = sign * c(d) + 0.3 * rng.normal();
  }
  const RunConfig cfg = preset("desk");
  const diffusion::NoiseSchedule s = cfg.schedule();
  diffusion::DenoiserConfig dc;
  dc.latent_size = L;
  dc.cond_dim = 1;
  dc.hidden = 64;
  dc.time_dim = 16;
  dc.cond_hidden = 8;
  dc.blocks = 2;
  dc.seed = 6001;
  diffusion::DenoiserParams p(dc);
  diffusion::DiffusionTrainConfig tc;
  tc.epochs = 40;
  tc.batch = 64;
  tc.lr = 2e-3;
  tc.seed = 6002;
  const Matrix cond = Matrix::Ones(M, 1);
  diffusion::train_denoiser(p, s, data, cond, tc);

  Rng srng(6003);
  const Matrix samples = diffusion::ddpm_sample(p, s, Matrix::Ones(2000, 1), srng);
  int pos = 0, near = 0;
  for (int i = 0; i < 2000; ++i) {
    const double proj = samples.row(i).dot(c) / c.squaredNorm();
    if (proj > 0) ++pos;
    if (std::abs(std::abs(proj) - 1.0) < 0.5) ++near;
  }
  const double w = pos / 2000.0, near_frac = near / 2000.0;
  return {std::abs(w - w_pos) <= 0.1 && std::abs((1.0 - w) - (1.0 - w_pos)) <= 0.1 && near_frac > 0.9,
          "sampled weights " + fmt(w) + " / " + fmt(1.0 - w) + " vs 0.3 / 0.7, " + fmt(100.0 * near_frac) +
              "% of samples within half a radius of a mode"};
}

// ---------------------------------------------------------------------------

struct FullRun {
  double align_seconds = 0.0;
  double total_seconds = 0.0;
  std::vector<alignment::EpochLog> align_log;
  nlohmann::json report;
  bool frozen_ok = false;
  std::string frozen_detail;
};

const std::vector<std::string> kFrozen = {
    "encoders/text.bin", "encoders/text.json", "encoders/audio.bin", "encoders/audio.json",
    "encoders/video.bin", "encoders/video.json", "codec/model.bin", "codec/model.json",
    "diffusion/text.bin", "diffusion/text.json"};

// gen-data, codec and the raw-text denoiser first, so that alignment training
// runs with every frozen snapshot already on disk.
FullRun full_pipeline(const RunConfig& cfg, const fs::path& run) {
  FullRun r;
  fs::remove_all(run);
  pipeline::Options opt;
  const auto t0 = Clock::now();
  pipeline::gen_data(cfg, run, opt);
  pipeline::train_codec(cfg, run, opt);
  pipeline::train_diffusion(cfg, run, "text", opt);

  std::map<std::string, std::string> before;
  for (const auto& f : kFrozen) before[f] = slurp(run / f);
  const auto ta = Clock::now();
  r.align_log = pipeline::train_align(cfg, run, opt);
  r.align_seconds = since(ta);
  int changed = 0;
  for (const auto& f : kFrozen)
    if (slurp(run / f) != before[f]) ++changed;
  r.frozen_ok = changed == 0;
  r.frozen_detail = std::to_string(kFrozen.size() - changed) + " of " + std::to_string(kFrozen.size()) +
                    " encoder/codec/denoiser files unchanged by train-align";

  pipeline::train_diffusion(cfg, run, "visual", opt);
  r.report = pipeline::evaluate(cfg, run, opt);
  r.total_seconds = since(t0);
  return r;
}

RunConfig reduced_config() {
  return load_config(std::nullopt, std::string("desk"),
                     {"data.train_count=128", "data.val_count=64", "data.test_count=32", "encoders.dim=16",
                      "align.depth=1", "align.heads=2", "align.fusion_hidden=16", "align.epochs=2", "align.batch=16",
                      "codec.epochs=2", "diffusion.hidden=32", "diffusion.blocks=1", "diffusion.epochs=2",
                      "diffusion.batch=32", "eval.classifier_epochs=5"});
}

}  // namespace

int main() {
  std::cout << std::unitbuf;
  const fs::path base = fs::current_path() / "acceptance_run";
  fs::create_directories(base);

  run_criterion(1, "gradient oracle suites", gradient_suites);
  run_criterion(2, "contrastive loss value oracles", contrastive_values);
  run_criterion(4, "Frechet distance vs eigendecomposition oracle", frechet_oracle);
  run_criterion(5, "forward-process Monte Carlo moments", forward_statistics);
  run_criterion(6, "two-mode latent recovery", two_mode_recovery);

  FullRun full;
  std::string full_error;
  const RunConfig desk = preset("desk");
  try {
    full = full_pipeline(desk, base / "full");
  } catch (const std::exception& e) {
    full_error = e.what();
  }
  auto need_full = [&]() {
    if (!full_error.empty()) throw std::runtime_error("full pipeline failed: " + full_error);
  };

  run_criterion(3, "alignment retrieval top-1 after training", [&]() -> Outcome {
    need_full();
    const double init = full.align_log.front().val_top1, trained = full.align_log.back().val_top1;
    return {trained >= 0.90 && init <= 0.06 && full.align_seconds < 600.0,
            "val top-1 " + fmt(trained) + " after " + std::to_string(full.align_log.back().epoch) + " epochs vs " +
                fmt(init) + " at init (B=" + std::to_string(desk.align.train.batch) + "), " +
                fmt(full.align_seconds) + " s"};
  });

  run_criterion(7, "visual-aligned onset error below raw text by >= 1 row", [&]() -> Outcome {
    need_full();
    const auto& on = full.report["onset"];
    const double v = on["visual_mean_error"], t = on["text_mean_error"], gap = on["gap"];
    std::string why;
    const bool ok = pipeline::report_passes(desk, full.report, &why) && v < t && gap >= 1.0 && full.total_seconds < 1800.0;
    return {ok, "visual " + fmt(v) + " vs text " + fmt(t) + " rows, gap " + fmt(gap) + ", pipeline " +
                    fmt(full.total_seconds) + " s" + (why.empty() ? "" : " (" + why + ")")};
  });

  run_criterion(8, "bit-identical reruns", [&]() -> Outcome {
    const RunConfig cfg = reduced_config();
    fs::remove_all(base / "det_a");
    fs::remove_all(base / "det_b");
    pipeline::run_all(cfg, base / "det_a");
    pipeline::run_all(cfg, base / "det_b");
    const auto a = tree(base / "det_a"), b = tree(base / "det_b");
    int differing = 0;
    std::string first;
    for (const auto& [name, bytes] : a) {
      const auto it = b.find(name);
      if (it == b.end() || it->second != bytes) {
        if (differing++ == 0) first = name;
      }
    }
    const bool ok = differing == 0 && a.size() == b.size() && a.count("eval/report.json") && a.count("diffusion/visual.bin");
    return {ok, std::to_string(a.size()) + " files compared, " + std::to_string(differing) + " differ" +
                    (first.empty() ? "" : " (first: " + first + ")")};
  });

  run_criterion(9, "frozen encoders, codec and denoiser across train-align", [&]() -> Outcome {
    need_full();
    return {full.frozen_ok, full.frozen_detail};
  });

  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
