#pragma once

// Per-timestep InfoNCE between audio rows and aligned-text rows of a
// mini-batch. For timestep i the logits of audio row a_{b,i} are its dot
// products with t_{m,i} for every batch item m, scaled by 1/tau; the positive
// is m = b. The loss sums over timesteps and averages over the batch:
//
//   L = -(1/B) sum_b sum_i log softmax_m(<a_{b,i}, t_{m,i}> / tau)[b]
//
// Batches are B-element vectors of T x D matrices. Embedding width D is
// whatever the encoders produce; nothing here depends on it.

#include <vector>

#include "diffava/numerics.hpp"

namespace diffava::contrastive {

enum class ContrastTarget { aligned_text, raw_visual };

struct ContrastiveConfig {
  double tau = 0.07;
  bool symmetric = false;  // average audio->text and text->audio terms
  ContrastTarget target = ContrastTarget::aligned_text;
};

void validate(const ContrastiveConfig& cfg);

using Batch = std::vector<Matrix>;  // B entries, each T x D

struct LossResult {
  double loss = 0.0;
  std::vector<double> per_timestep;  // sums to loss
  Batch grad_text;                   // dL/dt, same shape as the text batch
};

// Throws InvalidArgument for B < 2, non-unit rows, or tau <= 0, and
// ShapeError when the two batches disagree.
LossResult temporal_infonce(const Batch& audio, const Batch& text, const ContrastiveConfig& cfg);

// T matrices, entry (b, m) of matrix i is <audio[b].row(i), text[m].row(i)>.
std::vector<Matrix> timestep_similarities(const Batch& audio, const Batch& text);

struct SimilarityLoss {
  double loss = 0.0;
  std::vector<double> per_timestep;
  std::vector<Matrix> grad;  // dL/d similarity
};

// The loss as a function of the similarity matrices alone.
SimilarityLoss infonce_from_similarities(const std::vector<Matrix>& sims, const ContrastiveConfig& cfg);

// Fraction of (b, i) where audio row i of sample b is strictly more similar
// to its own text row i than to every other sample's row i.
double retrieval_top1(const Batch& audio, const Batch& text);

namespace detail {
// Same as temporal_infonce without the unit-row check, so the loss can be
// probed off the unit sphere by finite differences.
LossResult temporal_infonce_unchecked(const Batch& audio, const Batch& text, const ContrastiveConfig& cfg);
}  // namespace detail

}  // namespace diffava::contrastive
