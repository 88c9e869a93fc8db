#pragma once

// Generation metrics over embedding sets and class posteriors: Frechet
// distance between fitted Gaussians, Inception Score, and paired KL.

#include <cstdint>
#include <vector>

#include "diffava/nn.hpp"
#include "diffava/numerics.hpp"

namespace diffava::metrics {

struct GaussianStats {
  Vector mean;
  SpdMatrix cov;
  std::size_t count = 0;
};

// Sample mean, unbiased covariance, plus lambda * I with
// lambda = 1e-6 * trace / D. Rows of `embeddings` are samples; needs >= 2.
GaussianStats fit_gaussian(const Matrix& embeddings);

// |mu1 - mu2|^2 + tr(S1 + S2 - 2 sqrt(sqrt(S1) S2 sqrt(S1))), clamped at 0.
double frechet_distance(const GaussianStats& a, const GaussianStats& b);

// exp(mean_m KL(p_m || p_bar)). Rows must be probability vectors.
double inception_score(const Matrix& probs);

// mean_m KL(ref_m || gen_m), entries floored at 1e-12.
double paired_kl(const Matrix& gen_probs, const Matrix& ref_probs);

// Linear softmax classifier over pooled audio embeddings.
struct ClassifierParams {
  nn::Linear linear;

  Matrix predict_proba(const Matrix& features) const;
  std::vector<int> predict(const Matrix& features) const;

  template <class Self, class Fn>
  static void visit(Self& self, Fn&& fn) {
    nn::Linear::visit(self.linear, nn::prefixed("linear.", fn));
  }
};

struct ClassifierTrainConfig {
  int epochs = 60;
  int batch = 64;
  double lr = 1e-2;
  std::uint64_t seed = 53;
};

// Throws InvalidArgument on an empty set or label outside [0, K).
ClassifierParams train_classifier(const Matrix& features, const std::vector<int>& labels, int K,
                                  const ClassifierTrainConfig& cfg);

double accuracy(const ClassifierParams& clf, const Matrix& features, const std::vector<int>& labels);

}  // namespace diffava::metrics
