#include "diffava/metrics.hpp"

#include <cmath>
#include <numeric>

#include "diffava/errors.hpp"
#include "diffava/rng.hpp"

namespace diffava::metrics {

namespace {

constexpr double kProbFloor = 1e-12;

void check_probabilities(const Matrix& p, const char* who) {
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    if ((p.row(i).array() < 0.0).any() || !p.row(i).allFinite() || std::abs(p.row(i).sum() - 1.0) > 1e-6) {
      throw InvalidArgument(std::string(who) + ": row " + std::to_string(i) + " is not a probability vector");
    }
  }
}

}  // namespace

GaussianStats fit_gaussian(const Matrix& embeddings) {
  const Eigen::Index M = embeddings.rows();
  const Eigen::Index D = embeddings.cols();
  if (M < 2) throw InvalidArgument("fit_gaussian: need at least 2 samples");
  GaussianStats g;
  g.count = static_cast<std::size_t>(M);
  g.mean = embeddings.colwise().mean().transpose();
  const Matrix centered = embeddings.rowwise() - g.mean.transpose();
  Matrix cov = (centered.transpose() * centered) / static_cast<double>(M - 1);
  cov = 0.5 * (cov + cov.transpose()).eval();
  const double lambda = 1e-6 * cov.trace() / static_cast<double>(D);
  cov.diagonal().array() += lambda;
  g.cov = SpdMatrix(std::move(cov));
  return g;
}

double frechet_distance(const GaussianStats& a, const GaussianStats& b) {
  if (a.mean.size() != b.mean.size() || a.cov.dim() != b.cov.dim()) {
    throw InvalidArgument("frechet_distance: dimensions differ");
  }
  const SpdMatrix root_a = spd_sqrt(a.cov);
  Matrix inner = root_a.matrix() * b.cov.matrix() * root_a.matrix();
  inner = 0.5 * (inner + inner.transpose()).eval();
  const SpdMatrix cross = spd_sqrt(SpdMatrix(std::move(inner)));
  const double d = (a.mean - b.mean).squaredNorm() + a.cov.matrix().trace() + b.cov.matrix().trace() -
                   2.0 * cross.matrix().trace();
  return std::max(d, 0.0);
}

double inception_score(const Matrix& probs) {
  if (probs.rows() == 0) throw InvalidArgument("inception_score: no rows");
  check_probabilities(probs, "inception_score");
  const RowVector marginal = probs.colwise().mean();
  double kl_sum = 0.0;
  for (Eigen::Index m = 0; m < probs.rows(); ++m) {
    for (Eigen::Index k = 0; k < probs.cols(); ++k) {
      const double p = probs(m, k);
      if (p > 0.0) kl_sum += p * (std::log(p) - std::log(marginal(k)));
    }
  }
  return std::exp(kl_sum / static_cast<double>(probs.rows()));
}

double paired_kl(const Matrix& gen_probs, const Matrix& ref_probs) {
  if (gen_probs.rows() != ref_probs.rows() || gen_probs.cols() != ref_probs.cols()) {
    throw InvalidArgument("paired_kl: generated and reference posteriors must have the same shape");
  }
  if (gen_probs.rows() == 0) throw InvalidArgument("paired_kl: no rows");
  check_probabilities(gen_probs, "paired_kl");
  check_probabilities(ref_probs, "paired_kl");
  double total = 0.0;
  for (Eigen::Index m = 0; m < ref_probs.rows(); ++m) {
    for (Eigen::Index k = 0; k < ref_probs.cols(); ++k) {
      const double p = std::max(ref_probs(m, k), kProbFloor);
      const double q = std::max(gen_probs(m, k), kProbFloor);
      total += ref_probs(m, k) * (std::log(p) - std::log(q));
    }
  }
  return std::max(total / static_cast<double>(ref_probs.rows()), 0.0);
}

Matrix ClassifierParams::predict_proba(const Matrix& features) const {
  Matrix logits = linear.forward(features);
  for (Eigen::Index i = 0; i < logits.rows(); ++i) logits.row(i) = softmax(logits.row(i).transpose()).transpose();
  return logits;
}

std::vector<int> ClassifierParams::predict(const Matrix& features) const {
  const Matrix p = predict_proba(features);
  std::vector<int> out(static_cast<std::size_t>(p.rows()));
  for (Eigen::Index i = 0; i < p.rows(); ++i) p.row(i).maxCoeff(&out[static_cast<std::size_t>(i)]);
  return out;
}

ClassifierParams train_classifier(const Matrix& features, const std::vector<int>& labels, int K,
                                  const ClassifierTrainConfig& cfg) {
  if (features.rows() == 0) throw InvalidArgument("train_classifier: empty dataset");
  if (labels.size() != static_cast<std::size_t>(features.rows())) throw ShapeError("train_classifier: one label per row");
  for (int y : labels) {
    if (y < 0 || y >= K) throw InvalidArgument("train_classifier: label out of range");
  }
  Rng rng(cfg.seed);
  ClassifierParams clf;
  clf.linear = nn::Linear(features.cols(), K, rng);
  nn::Adam adam(nn::AdamConfig{.lr = cfg.lr});
  std::vector<Eigen::Index> order(static_cast<std::size_t>(features.rows()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  const std::size_t B = static_cast<std::size_t>(std::max(1, cfg.batch));
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    for (std::size_t start = 0; start < order.size(); start += B) {
      const std::size_t end = std::min(order.size(), start + B);
      const Eigen::Index n = static_cast<Eigen::Index>(end - start);
      Matrix x(n, features.cols());
      for (std::size_t j = start; j < end; ++j) x.row(static_cast<Eigen::Index>(j - start)) = features.row(order[j]);
      Matrix dlogits = clf.predict_proba(x);
      for (std::size_t j = start; j < end; ++j) {
        dlogits(static_cast<Eigen::Index>(j - start), labels[static_cast<std::size_t>(order[j])]) -= 1.0;
      }
      dlogits /= static_cast<double>(n);
      ClassifierParams grad = nn::zeros_like(clf);
      clf.linear.backward(x, dlogits, grad.linear);
      adam.step(clf, grad);
    }
  }
  return clf;
}

double accuracy(const ClassifierParams& clf, const Matrix& features, const std::vector<int>& labels) {
  if (labels.empty()) return 0.0;
  const std::vector<int> pred = clf.predict(features);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += pred[i] == labels[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

}  // namespace diffava::metrics
