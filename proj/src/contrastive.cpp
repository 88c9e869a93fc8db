#include "diffava/contrastive.hpp"

#include <cmath>
#include <string>

#include "diffava/errors.hpp"

namespace diffava::contrastive {

namespace {

void check_shapes(const Batch& audio, const Batch& text) {
  if (audio.size() != text.size()) throw ShapeError("temporal_infonce: audio and text batch sizes differ");
  if (audio.size() < 2) throw InvalidArgument("temporal_infonce: batch size must be at least 2");
  const Eigen::Index T = audio[0].rows();
  const Eigen::Index D = audio[0].cols();
  for (std::size_t b = 0; b < audio.size(); ++b) {
    if (audio[b].rows() != T || audio[b].cols() != D || text[b].rows() != T || text[b].cols() != D) {
      throw ShapeError("temporal_infonce: sample " + std::to_string(b) + " has inconsistent shape");
    }
  }
}

void check_unit(const Batch& batch, const char* which) {
  for (std::size_t b = 0; b < batch.size(); ++b) {
    for (Eigen::Index i = 0; i < batch[b].rows(); ++i) {
      if (std::abs(batch[b].row(i).norm() - 1.0) > 1e-9) {
        throw InvalidArgument(std::string("temporal_infonce: ") + which + " row (" + std::to_string(b) + ", " +
                              std::to_string(i) + ") is not unit norm");
      }
    }
  }
}

// -(1/B) sum_b log softmax(row b of s / tau)[b] and its gradient in s.
double row_term(const Matrix& s, double tau, Matrix& grad, double weight) {
  const Eigen::Index B = s.rows();
  double loss = 0.0;
  for (Eigen::Index b = 0; b < B; ++b) {
    const Vector logits = s.row(b).transpose() / tau;
    const double lse = log_sum_exp(logits);
    loss -= logits(b) - lse;
    const Vector p = (logits.array() - lse).exp().matrix();
    grad.row(b) += weight * p.transpose() / (static_cast<double>(B) * tau);
    grad(b, b) -= weight / (static_cast<double>(B) * tau);
  }
  return weight * loss / static_cast<double>(B);
}

}  // namespace

void validate(const ContrastiveConfig& cfg) {
  if (!(cfg.tau > 0.0) || !std::isfinite(cfg.tau)) throw InvalidArgument("contrastive: tau must be positive");
}

std::vector<Matrix> timestep_similarities(const Batch& audio, const Batch& text) {
  const Eigen::Index B = static_cast<Eigen::Index>(audio.size());
  const Eigen::Index T = audio.empty() ? 0 : audio[0].rows();
  std::vector<Matrix> sims(static_cast<std::size_t>(T), Matrix(B, B));
  for (Eigen::Index i = 0; i < T; ++i) {
    for (Eigen::Index b = 0; b < B; ++b) {
      for (Eigen::Index m = 0; m < B; ++m) {
        sims[static_cast<std::size_t>(i)](b, m) = audio[static_cast<std::size_t>(b)].row(i).dot(text[static_cast<std::size_t>(m)].row(i));
      }
    }
  }
  return sims;
}

SimilarityLoss infonce_from_similarities(const std::vector<Matrix>& sims, const ContrastiveConfig& cfg) {
  validate(cfg);
  SimilarityLoss out;
  for (const Matrix& s : sims) {
    if (s.rows() != s.cols() || s.rows() < 2) throw InvalidArgument("similarity matrices must be B x B with B >= 2");
    Matrix g = Matrix::Zero(s.rows(), s.cols());
    double term;
    if (cfg.symmetric) {
      term = row_term(s, cfg.tau, g, 0.5);
      Matrix gt = Matrix::Zero(s.rows(), s.cols());
      term += row_term(s.transpose(), cfg.tau, gt, 0.5);
      g += gt.transpose();
    } else {
      term = row_term(s, cfg.tau, g, 1.0);
    }
    out.per_timestep.push_back(term);
    out.loss += term;
    out.grad.push_back(std::move(g));
  }
  return out;
}

namespace detail {

LossResult temporal_infonce_unchecked(const Batch& audio, const Batch& text, const ContrastiveConfig& cfg) {
  check_shapes(audio, text);
  const std::vector<Matrix> sims = timestep_similarities(audio, text);
  SimilarityLoss sl = infonce_from_similarities(sims, cfg);

  const std::size_t B = audio.size();
  LossResult out;
  out.loss = sl.loss;
  out.per_timestep = std::move(sl.per_timestep);
  out.grad_text.assign(B, Matrix::Zero(text[0].rows(), text[0].cols()));
  // dL/dt_{m,i} = sum_b dL/ds_i(b, m) a_{b,i}
  for (std::size_t i = 0; i < sims.size(); ++i) {
    const Matrix& g = sl.grad[i];
    const auto row = static_cast<Eigen::Index>(i);
    for (std::size_t m = 0; m < B; ++m) {
      for (std::size_t b = 0; b < B; ++b) {
        out.grad_text[m].row(row) += g(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(m)) * audio[b].row(row);
      }
    }
  }
  return out;
}

}  // namespace detail

LossResult temporal_infonce(const Batch& audio, const Batch& text, const ContrastiveConfig& cfg) {
  validate(cfg);
  check_shapes(audio, text);
  check_unit(audio, "audio");
  check_unit(text, "text");
  return detail::temporal_infonce_unchecked(audio, text, cfg);
}

double retrieval_top1(const Batch& audio, const Batch& text) {
  check_shapes(audio, text);
  const std::vector<Matrix> sims = timestep_similarities(audio, text);
  std::size_t hits = 0;
  std::size_t total = 0;
  for (const Matrix& s : sims) {
    for (Eigen::Index b = 0; b < s.rows(); ++b) {
      double best_other = -std::numeric_limits<double>::infinity();
      for (Eigen::Index m = 0; m < s.cols(); ++m) {
        if (m != b) best_other = std::max(best_other, s(b, m));
      }
      hits += s(b, b) > best_other ? 1 : 0;
      ++total;
    }
  }
  return static_cast<double>(hits) / static_cast<double>(total);
}

}  // namespace diffava::contrastive
