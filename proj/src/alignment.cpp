#include "diffava/alignment.hpp"

#include <cmath>
#include <numeric>

#include "diffava/errors.hpp"

namespace diffava::alignment {

void validate(const AlignmentConfig& cfg) {
  if (cfg.dim < 1 || cfg.depth < 0 || cfg.heads < 1 || cfg.ffn_mult < 1 || cfg.fusion_hidden < 1) {
    throw ConfigError("alignment: dimensions must be positive");
  }
  if (cfg.dim % cfg.heads != 0) {
    throw ConfigError("alignment: dim " + std::to_string(cfg.dim) + " is not divisible by heads " +
                      std::to_string(cfg.heads));
  }
}

std::size_t attention_param_count(int depth, int dim, int ffn_mult) {
  const std::size_t d = static_cast<std::size_t>(dim);
  const std::size_t m = static_cast<std::size_t>(ffn_mult);
  const std::size_t per_layer = 4 * d * d + 4 * d + 2 * m * d * d + m * d + d + 4 * d;
  return static_cast<std::size_t>(depth) * per_layer + 2 * d;
}

Matrix positional_table(int T, int dim) {
  Matrix pe(T, dim);
  const double scale = std::sqrt(2.0 / static_cast<double>(dim));
  for (int i = 0; i < T; ++i) pe.row(i) = scale * nn::sinusoidal_embedding(static_cast<double>(i), dim);
  return pe;
}

// ---------------------------------------------------------------------------
// AttentionStack

AttentionStack::AttentionStack(const AlignmentConfig& cfg, Rng& rng)
    : heads(cfg.heads), positional_encoding(cfg.positional_encoding), final_ln(cfg.dim) {
  validate(cfg);
  const Eigen::Index d = cfg.dim;
  const Eigen::Index hidden = static_cast<Eigen::Index>(cfg.ffn_mult) * d;
  // Residual branches start small so the stack begins near the identity.
  const double branch_gain = 1.0 / std::sqrt(2.0 * std::max(1, cfg.depth));
  for (int l = 0; l < cfg.depth; ++l) {
    AttentionLayer layer;
    layer.ln1 = nn::LayerNorm(d);
    layer.q = nn::Linear(d, d, rng);
    layer.k = nn::Linear(d, d, rng);
    layer.v = nn::Linear(d, d, rng);
    layer.o = nn::Linear(d, d, rng, branch_gain);
    layer.ln2 = nn::LayerNorm(d);
    layer.ff1 = nn::Linear(d, hidden, rng);
    layer.ff2 = nn::Linear(hidden, d, rng, branch_gain);
    layers.push_back(std::move(layer));
  }
}

Matrix AttentionStack::forward(const Matrix& stacked, int T, Cache* cache) const {
  if (T < 1 || stacked.rows() % T != 0) throw ShapeError("attend_temporal: row count is not a multiple of T");
  if (stacked.cols() != dim()) {
    throw ShapeError("attend_temporal: input has " + std::to_string(stacked.cols()) + " columns, expected " +
                     std::to_string(dim()));
  }
  const Eigen::Index B = stacked.rows() / T;
  const Eigen::Index dh = dim() / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Matrix x = stacked;
  if (positional_encoding) {
    const Matrix pe = positional_table(T, dim());
    for (Eigen::Index b = 0; b < B; ++b) x.middleRows(b * T, T) += pe;
  }
  if (cache) {
    cache->T = T;
    cache->layers.clear();
  }

  for (const AttentionLayer& layer : layers) {
    LayerCache lc;
    nn::LayerNorm::Cache ln1c;
    const Matrix h = layer.ln1.forward(x, &ln1c);
    const Matrix q = layer.q.forward(h);
    const Matrix k = layer.k.forward(h);
    const Matrix v = layer.v.forward(h);
    Matrix concat(x.rows(), x.cols());
    std::vector<Matrix> attn;
    for (Eigen::Index b = 0; b < B; ++b) {
      for (Eigen::Index hd = 0; hd < heads; ++hd) {
        const auto qb = q.block(b * T, hd * dh, T, dh);
        const auto kb = k.block(b * T, hd * dh, T, dh);
        const auto vb = v.block(b * T, hd * dh, T, dh);
        Matrix s = scale * (qb * kb.transpose());
        for (Eigen::Index r = 0; r < T; ++r) {
          const double m = s.row(r).maxCoeff();
          s.row(r) = (s.row(r).array() - m).exp();
          s.row(r) /= s.row(r).sum();
        }
        concat.block(b * T, hd * dh, T, dh) = s * vb;
        if (cache) attn.push_back(std::move(s));
      }
    }
    const Matrix x1 = x + layer.o.forward(concat);
    nn::LayerNorm::Cache ln2c;
    const Matrix h2 = layer.ln2.forward(x1, &ln2c);
    const Matrix f = layer.ff1.forward(h2);
    const Matrix g = nn::gelu(f);
    Matrix x2 = x1 + layer.ff2.forward(g);
    if (cache) {
      lc.x = std::move(x);
      lc.ln1 = std::move(ln1c);
      lc.h = h;
      lc.q = q;
      lc.k = k;
      lc.v = v;
      lc.attn = std::move(attn);
      lc.concat = std::move(concat);
      lc.x1 = x1;
      lc.ln2 = std::move(ln2c);
      lc.h2 = h2;
      lc.f = f;
      lc.g = g;
      cache->layers.push_back(std::move(lc));
    }
    x = std::move(x2);
  }
  nn::LayerNorm::Cache flc;
  Matrix out = final_ln.forward(x, cache ? &flc : nullptr);
  if (cache) {
    cache->x_last = std::move(x);
    cache->final_ln = std::move(flc);
  }
  return out;
}

Matrix AttentionStack::backward(const Cache& cache, const Matrix& dout, AttentionStack& grad) const {
  const int T = cache.T;
  const Eigen::Index B = dout.rows() / T;
  const Eigen::Index dh = dim() / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Matrix dx = final_ln.backward(cache.final_ln, dout, grad.final_ln);
  for (std::size_t li = layers.size(); li-- > 0;) {
    const AttentionLayer& layer = layers[li];
    AttentionLayer& glayer = grad.layers[li];
    const LayerCache& lc = cache.layers[li];

    // x2 = x1 + ff2(gelu(ff1(ln2(x1))))
    const Matrix dg = layer.ff2.backward(lc.g, dx, glayer.ff2);
    const Matrix df = nn::gelu_backward(lc.f, dg);
    const Matrix dh2 = layer.ff1.backward(lc.h2, df, glayer.ff1);
    Matrix dx1 = dx + layer.ln2.backward(lc.ln2, dh2, glayer.ln2);

    // x1 = x + o(attention(q, k, v))
    const Matrix dconcat = layer.o.backward(lc.concat, dx1, glayer.o);
    Matrix dq(dconcat.rows(), dconcat.cols());
    Matrix dk(dconcat.rows(), dconcat.cols());
    Matrix dv(dconcat.rows(), dconcat.cols());
    std::size_t a = 0;
    for (Eigen::Index b = 0; b < B; ++b) {
      for (Eigen::Index hd = 0; hd < heads; ++hd, ++a) {
        const Matrix& p = lc.attn[a];
        const auto qb = lc.q.block(b * T, hd * dh, T, dh);
        const auto kb = lc.k.block(b * T, hd * dh, T, dh);
        const auto vb = lc.v.block(b * T, hd * dh, T, dh);
        const auto dob = dconcat.block(b * T, hd * dh, T, dh);
        const Matrix dp = dob * vb.transpose();
        dv.block(b * T, hd * dh, T, dh) = p.transpose() * dob;
        // softmax backward, row by row
        const Vector row_dot = (dp.array() * p.array()).rowwise().sum();
        Matrix ds = p.array() * (dp.array().colwise() - row_dot.array());
        ds *= scale;
        dq.block(b * T, hd * dh, T, dh) = ds * kb;
        dk.block(b * T, hd * dh, T, dh) = ds.transpose() * qb;
      }
    }
    Matrix dhn = layer.q.backward(lc.h, dq, glayer.q);
    dhn += layer.k.backward(lc.h, dk, glayer.k);
    dhn += layer.v.backward(lc.h, dv, glayer.v);
    dx = dx1 + layer.ln1.backward(lc.ln1, dhn, glayer.ln1);
  }
  return dx;  // positional encoding is an additive constant
}

// ---------------------------------------------------------------------------
// DualResidualFusion

DualResidualFusion::DualResidualFusion(const AlignmentConfig& cfg, Rng& rng)
    : cross1(2 * cfg.dim, cfg.fusion_hidden, rng),
      cross2(cfg.fusion_hidden, cfg.dim, rng),
      vis1(cfg.dim, cfg.fusion_hidden, rng),
      vis2(cfg.fusion_hidden, cfg.dim, rng),
      gate_cross(Matrix::Zero(1, 1)),
      gate_visual(Matrix::Zero(1, 1)) {}

Matrix DualResidualFusion::forward(const Matrix& text, const Matrix& visual, int T, Cache* cache) const {
  const Eigen::Index D = vis1.in_dim();
  if (text.cols() != D || visual.cols() != D) throw ShapeError("fuse: embedding widths disagree");
  if (T < 1 || visual.rows() != text.rows() * T) throw ShapeError("fuse: visual rows must equal B * T");
  const Eigen::Index B = text.rows();

  Matrix text_rows(B * T, D);
  for (Eigen::Index b = 0; b < B; ++b) text_rows.middleRows(b * T, T).rowwise() = text.row(b);

  Matrix cross_in(B * T, 2 * D);
  cross_in << text_rows, visual;
  const Matrix cross_pre = cross1.forward(cross_in);
  const Matrix cross_h = nn::gelu(cross_pre);
  const Matrix cross_out = cross2.forward(cross_h);

  const Matrix vis_pre = vis1.forward(visual);
  const Matrix vis_h = nn::gelu(vis_pre);
  const Matrix vis_out = vis2.forward(vis_h);

  const Matrix u = text_rows + gate_cross(0, 0) * cross_out + gate_visual(0, 0) * vis_out;
  Matrix y = l2_normalize_rows(u);
  if (cache) {
    cache->T = T;
    cache->text_rows = std::move(text_rows);
    cache->cross_in = std::move(cross_in);
    cache->cross_pre = cross_pre;
    cache->cross_h = cross_h;
    cache->cross_out = cross_out;
    cache->vis_in = visual;
    cache->vis_pre = vis_pre;
    cache->vis_h = vis_h;
    cache->vis_out = vis_out;
    cache->u = u;
    cache->y = y;
  }
  return y;
}

DualResidualFusion::InputGrads DualResidualFusion::backward(const Cache& cache, const Matrix& dy,
                                                            DualResidualFusion& grad) const {
  const Eigen::Index D = vis1.in_dim();
  const int T = cache.T;
  const Eigen::Index B = cache.u.rows() / T;

  const Matrix du = nn::normalize_rows_backward(cache.u, cache.y, dy);
  grad.gate_cross(0, 0) += du.cwiseProduct(cache.cross_out).sum();
  grad.gate_visual(0, 0) += du.cwiseProduct(cache.vis_out).sum();

  const Matrix dvis_h = vis2.backward(cache.vis_h, gate_visual(0, 0) * du, grad.vis2);
  Matrix dvisual = vis1.backward(cache.vis_in, nn::gelu_backward(cache.vis_pre, dvis_h), grad.vis1);

  const Matrix dcross_h = cross2.backward(cache.cross_h, gate_cross(0, 0) * du, grad.cross2);
  const Matrix dcross_in = cross1.backward(cache.cross_in, nn::gelu_backward(cache.cross_pre, dcross_h), grad.cross1);
  dvisual += dcross_in.rightCols(D);

  const Matrix dtext_rows = du + dcross_in.leftCols(D);
  Matrix dtext(B, D);
  for (Eigen::Index b = 0; b < B; ++b) dtext.row(b) = dtext_rows.middleRows(b * T, T).colwise().sum();
  return {std::move(dtext), std::move(dvisual)};
}

// ---------------------------------------------------------------------------
// AlignmentModel

AlignmentModel::AlignmentModel(const AlignmentConfig& cfg) : config(cfg) {
  validate(cfg);
  Rng rng(cfg.seed);
  Rng stack_rng = rng.fork(1);
  Rng fusion_rng = rng.fork(2);
  stack = AttentionStack(cfg, stack_rng);
  fusion = DualResidualFusion(cfg, fusion_rng);
}

Matrix AlignmentModel::forward(const Matrix& text, const Matrix& video, int T, Cache* cache) const {
  const Matrix agg = stack.forward(video, T, cache ? &cache->stack : nullptr);
  return fusion.forward(text, agg, T, cache ? &cache->fusion : nullptr);
}

void AlignmentModel::backward(const Cache& cache, const Matrix& dy, AlignmentModel& grad) const {
  const auto dfuse = fusion.backward(cache.fusion, dy, grad.fusion);
  stack.backward(cache.stack, dfuse.visual, grad.stack);
}

// ---------------------------------------------------------------------------
// Training

namespace {

struct StackedBatch {
  Matrix text;   // B x D
  Matrix video;  // (B*T) x D
  int T = 0;
};

StackedBatch stack_batch(const std::vector<const EncodedSample*>& batch) {
  StackedBatch s;
  const Eigen::Index B = static_cast<Eigen::Index>(batch.size());
  s.T = static_cast<int>(batch.front()->video.rows());
  const Eigen::Index D = batch.front()->video.cols();
  s.text.resize(B, D);
  s.video.resize(B * s.T, D);
  for (Eigen::Index b = 0; b < B; ++b) {
    s.text.row(b) = batch[static_cast<std::size_t>(b)]->text_pooled;
    s.video.middleRows(b * s.T, s.T) = batch[static_cast<std::size_t>(b)]->video;
  }
  return s;
}

contrastive::Batch split_rows(const Matrix& stacked, int T) {
  contrastive::Batch out;
  for (Eigen::Index b = 0; b < stacked.rows() / T; ++b) out.push_back(stacked.middleRows(b * T, T));
  return out;
}

}  // namespace

Matrix aligned_rows(const AlignmentModel& model, const std::vector<EncodedSample>& data, std::size_t first,
                    std::size_t count) {
  std::vector<const EncodedSample*> ptrs;
  for (std::size_t i = first; i < first + count; ++i) ptrs.push_back(&data.at(i));
  const StackedBatch s = stack_batch(ptrs);
  return model.forward(s.text, s.video, s.T);
}

double batch_loss_and_grad(const AlignmentModel& model, const std::vector<const EncodedSample*>& batch,
                           const contrastive::ContrastiveConfig& loss, AlignmentModel* grad) {
  const StackedBatch s = stack_batch(batch);
  contrastive::Batch audio;
  for (const EncodedSample* e : batch) audio.push_back(e->audio);

  if (loss.target == contrastive::ContrastTarget::raw_visual) {
    // The literal pairing of audio with raw video rows has no trainable path.
    return contrastive::temporal_infonce(audio, split_rows(s.video, s.T), loss).loss;
  }
  AlignmentModel::Cache cache;
  const Matrix rows = model.forward(s.text, s.video, s.T, grad ? &cache : nullptr);
  const contrastive::LossResult r = contrastive::temporal_infonce(audio, split_rows(rows, s.T), loss);
  if (grad) {
    Matrix dy(rows.rows(), rows.cols());
    for (std::size_t b = 0; b < r.grad_text.size(); ++b) {
      dy.middleRows(static_cast<Eigen::Index>(b) * s.T, s.T) = r.grad_text[b];
    }
    model.backward(cache, dy, *grad);
  }
  return r.loss;
}

BatchEval evaluate_batches(const AlignmentModel& model, const std::vector<EncodedSample>& data, int batch,
                           const contrastive::ContrastiveConfig& loss) {
  BatchEval ev;
  const std::size_t B = static_cast<std::size_t>(batch);
  const std::size_t n_batches = data.size() / B;
  if (n_batches == 0) return ev;
  for (std::size_t k = 0; k < n_batches; ++k) {
    std::vector<const EncodedSample*> ptrs;
    contrastive::Batch audio;
    for (std::size_t i = k * B; i < (k + 1) * B; ++i) {
      ptrs.push_back(&data[i]);
      audio.push_back(data[i].audio);
    }
    const StackedBatch s = stack_batch(ptrs);
    const Matrix other = loss.target == contrastive::ContrastTarget::raw_visual ? s.video
                                                                                : model.forward(s.text, s.video, s.T);
    const contrastive::Batch text = split_rows(other, s.T);
    ev.loss += contrastive::temporal_infonce(audio, text, loss).loss;
    ev.top1 += contrastive::retrieval_top1(audio, text);
  }
  ev.loss /= static_cast<double>(n_batches);
  ev.top1 /= static_cast<double>(n_batches);
  return ev;
}

std::vector<EpochLog> train_alignment(AlignmentModel& model, const std::vector<EncodedSample>& train,
                                      const std::vector<EncodedSample>& val, const TrainConfig& cfg,
                                      const EpochCallback& on_epoch) {
  contrastive::validate(cfg.loss);
  if (cfg.batch < 2) throw ConfigError("train_alignment: batch must be at least 2");
  if (train.size() < static_cast<std::size_t>(cfg.batch)) {
    throw InvalidArgument("train_alignment: training set is smaller than one batch");
  }
  nn::Adam adam(nn::AdamConfig{.lr = cfg.lr});
  Rng rng(cfg.seed);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  std::vector<EpochLog> log;
  auto record = [&](int epoch, double train_loss) {
    EpochLog e;
    e.epoch = epoch;
    e.train_loss = train_loss;
    const BatchEval ev = evaluate_batches(model, val, cfg.batch, cfg.loss);
    e.val_loss = ev.loss;
    e.val_top1 = ev.top1;
    log.push_back(e);
    if (on_epoch) on_epoch(e);
  };
  record(0, evaluate_batches(model, train, cfg.batch, cfg.loss).loss);

  const std::size_t B = static_cast<std::size_t>(cfg.batch);
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    double total = 0.0;
    std::size_t n_batches = 0;
    for (std::size_t start = 0; start + B <= order.size(); start += B) {
      std::vector<const EncodedSample*> batch;
      for (std::size_t j = start; j < start + B; ++j) batch.push_back(&train[order[j]]);
      AlignmentModel grad = nn::zeros_like(model);
      const double l = batch_loss_and_grad(model, batch, cfg.loss, &grad);
      if (!std::isfinite(l)) throw NumericalDivergence("train_alignment: loss diverged in epoch " + std::to_string(epoch));
      if (cfg.loss.target == contrastive::ContrastTarget::aligned_text) adam.step(model, grad);
      total += l;
      ++n_batches;
    }
    record(epoch, total / static_cast<double>(n_batches));
  }
  return log;
}

}  // namespace diffava::alignment
