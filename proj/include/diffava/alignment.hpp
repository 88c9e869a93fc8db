#pragma once

// Trainable visual-text alignment: a pre-norm transformer encoder runs over
// the per-second video embeddings, and a dual gated residual network fuses the
// result with the pooled text embedding into one unit row per second.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "diffava/contrastive.hpp"
#include "diffava/nn.hpp"
#include "diffava/numerics.hpp"

namespace diffava::alignment {

struct AlignmentConfig {
  int dim = 64;
  int depth = 4;
  int heads = 8;
  int ffn_mult = 4;
  int fusion_hidden = 128;
  bool positional_encoding = true;
  std::uint64_t seed = 11;
};

void validate(const AlignmentConfig& cfg);

struct AttentionLayer {
  nn::LayerNorm ln1;
  nn::Linear q, k, v, o;
  nn::LayerNorm ln2;
  nn::Linear ff1, ff2;

  template <class Self, class Fn>
  static void visit(Self& self, Fn&& fn) {
    nn::LayerNorm::visit(self.ln1, nn::prefixed("ln1.", fn));
    nn::Linear::visit(self.q, nn::prefixed("q.", fn));
    nn::Linear::visit(self.k, nn::prefixed("k.", fn));
    nn::Linear::visit(self.v, nn::prefixed("v.", fn));
    nn::Linear::visit(self.o, nn::prefixed("o.", fn));
    nn::LayerNorm::visit(self.ln2, nn::prefixed("ln2.", fn));
    nn::Linear::visit(self.ff1, nn::prefixed("ff1.", fn));
    nn::Linear::visit(self.ff2, nn::prefixed("ff2.", fn));
  }
};

// Pre-norm encoder:  x += MHA(LN1(x));  x += FFN(LN2(x));  out = LN(x).
// Inputs are stacked: B samples of T rows each form a (B*T) x D matrix, and
// attention runs within each T-row block only.
struct AttentionStack {
  int heads = 1;
  bool positional_encoding = true;
  std::vector<AttentionLayer> layers;
  nn::LayerNorm final_ln;

  AttentionStack() = default;
  AttentionStack(const AlignmentConfig& cfg, Rng& rng);

  int dim() const { return static_cast<int>(final_ln.gamma.cols()); }
  int depth() const { return static_cast<int>(layers.size()); }

  struct LayerCache {
    Matrix x;  // layer input
    nn::LayerNorm::Cache ln1;
    Matrix h, q, k, v;
    std::vector<Matrix> attn;  // per (sample, head): T x T weights
    Matrix concat;             // per-row head outputs, before o
    Matrix x1;
    nn::LayerNorm::Cache ln2;
    Matrix h2, f, g;
  };
  struct Cache {
    int T = 0;
    std::vector<LayerCache> layers;
    Matrix x_last;
    nn::LayerNorm::Cache final_ln;
  };

  Matrix forward(const Matrix& stacked, int T, Cache* cache = nullptr) const;
  // Accumulates parameter gradients into grad; returns dL/d(input rows).
  Matrix backward(const Cache& cache, const Matrix& dout, AttentionStack& grad) const;

  template <class Self, class Fn>
  static void visit(Self& self, Fn&& fn) {
    for (std::size_t i = 0; i < self.layers.size(); ++i) {
      AttentionLayer::visit(self.layers[i], nn::prefixed("layer" + std::to_string(i) + ".", fn));
    }
    nn::LayerNorm::visit(self.final_ln, nn::prefixed("final_ln.", fn));
  }
};

// depth * (12 D^2 + 13 D) + 2 D for ffn_mult = 4; in general
// depth * (4 D^2 + 4 D + 2 m D^2 + m D + D + 4 D) + 2 D with m = ffn_mult.
std::size_t attention_param_count(int depth, int dim, int ffn_mult = 4);

// Scaled sinusoidal rows (unit norm each) added to the attention input.
Matrix positional_table(int T, int dim);

// row_i = normalize(t + g_cross * MLP_cross([t, v_i]) + g_vis * MLP_vis(v_i))
struct DualResidualFusion {
  nn::Linear cross1, cross2;
  nn::Linear vis1, vis2;
  Matrix gate_cross;   // 1 x 1, starts at 0
  Matrix gate_visual;  // 1 x 1, starts at 0

  DualResidualFusion() = default;
  DualResidualFusion(const AlignmentConfig& cfg, Rng& rng);

  struct Cache {
    int T = 0;
    Matrix text_rows;  // pooled text broadcast to every row
    Matrix cross_in, cross_pre, cross_h, cross_out;
    Matrix vis_in, vis_pre, vis_h, vis_out;
    Matrix u, y;
  };

  // text: B x D pooled text rows; visual: (B*T) x D aggregated video.
  // Returns (B*T) x D unit rows.
  Matrix forward(const Matrix& text, const Matrix& visual, int T, Cache* cache = nullptr) const;
  struct InputGrads {
    Matrix text;    // B x D
    Matrix visual;  // (B*T) x D
  };
  InputGrads backward(const Cache& cache, const Matrix& dy, DualResidualFusion& grad) const;

  template <class Self, class Fn>
  static void visit(Self& self, Fn&& fn) {
    nn::Linear::visit(self.cross1, nn::prefixed("cross1.", fn));
    nn::Linear::visit(self.cross2, nn::prefixed("cross2.", fn));
    nn::Linear::visit(self.vis1, nn::prefixed("vis1.", fn));
    nn::Linear::visit(self.vis2, nn::prefixed("vis2.", fn));
    fn("gate_cross", self.gate_cross);
    fn("gate_visual", self.gate_visual);
  }
};

// The complete trainable alignment module.
struct AlignmentModel {
  AlignmentConfig config;
  AttentionStack stack;
  DualResidualFusion fusion;

  AlignmentModel() = default;
  explicit AlignmentModel(const AlignmentConfig& cfg);

  struct Cache {
    AttentionStack::Cache stack;
    DualResidualFusion::Cache fusion;
  };

  // text: B x D pooled text embeddings; video: (B*T) x D unit rows.
  // Returns the visual-aligned text rows, (B*T) x D, unit norm.
  Matrix forward(const Matrix& text, const Matrix& video, int T, Cache* cache = nullptr) const;
  void backward(const Cache& cache, const Matrix& dy, AlignmentModel& grad) const;

  template <class Self, class Fn>
  static void visit(Self& self, Fn&& fn) {
    AttentionStack::visit(self.stack, nn::prefixed("stack.", fn));
    DualResidualFusion::visit(self.fusion, nn::prefixed("fusion.", fn));
  }
};

// Per-sample encodings the alignment module consumes. Encoders are frozen, so
// these are computed once.
struct EncodedSample {
  RowVector text_pooled;  // 1 x D
  Matrix text_tokens;     // per-token rows (not used by fusion, kept for inspection)
  Matrix video;           // T x D
  Matrix audio;           // T x D
};

struct TrainConfig {
  int epochs = 12;
  int batch = 32;
  double lr = 1e-3;
  contrastive::ContrastiveConfig loss;
  std::uint64_t seed = 23;
};

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_top1 = 0.0;
};

// Applies the model to samples [first, first + count).
Matrix aligned_rows(const AlignmentModel& model, const std::vector<EncodedSample>& data, std::size_t first,
                    std::size_t count);

struct BatchEval {
  double loss = 0.0;  // mean per batch
  double top1 = 0.0;
};
// Consecutive batches of `batch` samples (trailing remainder dropped).
BatchEval evaluate_batches(const AlignmentModel& model, const std::vector<EncodedSample>& data, int batch,
                           const contrastive::ContrastiveConfig& loss);

// Loss of one batch and its gradient with respect to every alignment
// parameter.
double batch_loss_and_grad(const AlignmentModel& model, const std::vector<const EncodedSample*>& batch,
                           const contrastive::ContrastiveConfig& loss, AlignmentModel* grad);

using EpochCallback = std::function<void(const EpochLog&)>;

// Adam on the alignment parameters only. Epoch 0 in the log is the state
// before any update. Deterministic given (model, data, cfg).
std::vector<EpochLog> train_alignment(AlignmentModel& model, const std::vector<EncodedSample>& train,
                                      const std::vector<EncodedSample>& val, const TrainConfig& cfg,
                                      const EpochCallback& on_epoch = {});

}  // namespace diffava::alignment
