#include "diffava/encoders.hpp"

#include <cmath>

#include "diffava/errors.hpp"
#include "diffava/nn.hpp"
#include "diffava/rng.hpp"
#include "diffava/snapshot.hpp"

namespace diffava {

namespace {

constexpr int kTokenDim = 32;
constexpr int kHidden = 128;

void check_unit_rows(const Matrix& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    if (std::abs(m.row(i).norm() - 1.0) > 1e-10) {
      throw InvalidArgument("embedding row " + std::to_string(i) + " is not unit norm");
    }
  }
}

void require(const EncoderWeights& w, Modality m) {
  if (w.modality() != m) {
    throw InvalidArgument("encoder weights are for " + to_string(w.modality()) + ", not " + to_string(m));
  }
}

}  // namespace

EmbeddingSequence::EmbeddingSequence(Matrix rows) : rows_(std::move(rows)) { check_unit_rows(rows_); }

std::string to_string(Modality m) {
  switch (m) {
    case Modality::text:
      return "text";
    case Modality::audio:
      return "audio";
    case Modality::video:
      return "video";
  }
  return "unknown";
}

EncoderWeights::EncoderWeights(Modality modality, int in_dim, int embed_dim, std::uint64_t seed)
    : modality_(modality), in_dim_(in_dim), embed_dim_(embed_dim), seed_(seed) {
  if (in_dim < 1 || embed_dim < 1) throw InvalidArgument("encoder dimensions must be positive");
  Rng rng(seed);
  int proj_in = in_dim;
  if (modality == Modality::text) {
    table_ = nn::random_matrix(in_dim, kTokenDim, 1.0, rng);
    proj_in = kTokenDim;
  }
  w1_ = nn::random_matrix(proj_in, kHidden, 1.0 / std::sqrt(static_cast<double>(proj_in)), rng);
  b1_ = nn::random_matrix(1, kHidden, 0.5, rng);
  w2_ = nn::random_matrix(kHidden, embed_dim, 1.0 / std::sqrt(static_cast<double>(kHidden)), rng);
  b2_ = nn::random_matrix(1, embed_dim, 0.5, rng);
}

Matrix EncoderWeights::project(const Matrix& x) const {
  Matrix h = x * w1_;
  h.rowwise() += b1_.row(0);
  h = h.array().tanh().matrix();
  Matrix y = h * w2_;
  y.rowwise() += b2_.row(0);
  return l2_normalize_rows(y);
}

TextEncoding encode_text(const EncoderWeights& w, std::span<const std::uint32_t> tokens) {
  require(w, Modality::text);
  if (tokens.empty()) throw InvalidArgument("encode_text: empty token sequence");
  Matrix x(static_cast<Eigen::Index>(tokens.size()), w.table().cols());
  for (std::size_t k = 0; k < tokens.size(); ++k) {
    if (tokens[k] >= static_cast<std::uint32_t>(w.in_dim())) {
      throw InvalidArgument("encode_text: token id " + std::to_string(tokens[k]) + " is outside the vocabulary of " +
                            std::to_string(w.in_dim()));
    }
    x.row(static_cast<Eigen::Index>(k)) = w.table().row(tokens[k]);
  }
  Matrix rows = w.project(x);
  RowVector pooled = l2_normalize(rows.colwise().mean().transpose()).transpose();
  return {EmbeddingSequence(std::move(rows)), std::move(pooled)};
}

EmbeddingSequence encode_audio(const EncoderWeights& w, const Matrix& mel) {
  require(w, Modality::audio);
  if (mel.cols() != w.in_dim()) {
    throw ShapeError("encode_audio: mel has " + std::to_string(mel.cols()) + " bins, encoder expects " +
                     std::to_string(w.in_dim()));
  }
  const Matrix x = (mel.array().max(0.0) / kAudioReference).log1p().matrix();
  return EmbeddingSequence(w.project(x));
}

EmbeddingSequence encode_video(const EncoderWeights& w, const Matrix& frame_features) {
  require(w, Modality::video);
  if (frame_features.cols() != w.in_dim()) {
    throw ShapeError("encode_video: frames have " + std::to_string(frame_features.cols()) +
                     " features, encoder expects " + std::to_string(w.in_dim()));
  }
  return EmbeddingSequence(w.project(frame_features));
}

EncoderBank::EncoderBank(int vocab, int F, int D_v, int D, std::uint64_t seed)
    : text(Modality::text, vocab, D, Rng(seed).fork(1).next_u64()),
      audio(Modality::audio, F, D, Rng(seed).fork(2).next_u64()),
      video(Modality::video, D_v, D, Rng(seed).fork(3).next_u64()) {}

void save_encoder_snapshot(const std::filesystem::path& base, const EncoderWeights& w, const std::string& config_hash) {
  std::vector<NamedTensor> tensors;
  if (w.modality() == Modality::text) tensors.push_back({"table", w.table()});
  tensors.push_back({"w1", w.w1()});
  tensors.push_back({"b1", w.b1()});
  tensors.push_back({"w2", w.w2()});
  tensors.push_back({"b2", w.b2()});
  nlohmann::json meta = {{"kind", "encoder"},
                         {"modality", to_string(w.modality())},
                         {"in_dim", w.in_dim()},
                         {"embed_dim", w.embed_dim()},
                         {"seed", w.seed()},
                         {"config_hash", config_hash}};
  write_snapshot(base, tensors, std::move(meta), Dtype::f32);
}

}  // namespace diffava
