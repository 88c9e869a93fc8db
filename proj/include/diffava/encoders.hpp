#pragma once

// Frozen stand-ins for the pretrained modality encoders. Each is a seeded
// random two-layer map  x -> tanh(x W1 + b1) W2 + b2 -> unit row, built once
// and never updated.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "diffava/numerics.hpp"

namespace diffava {

// T x D matrix whose rows all have unit norm (within 1e-10).
class EmbeddingSequence {
 public:
  EmbeddingSequence() = default;
  // Throws InvalidArgument if any row is not unit norm.
  explicit EmbeddingSequence(Matrix rows);

  const Matrix& rows() const { return rows_; }
  Eigen::Index T() const { return rows_.rows(); }
  Eigen::Index D() const { return rows_.cols(); }

 private:
  Matrix rows_;
};

enum class Modality { text, audio, video };
std::string to_string(Modality m);

// Mel rows are compressed as log1p(mel / kAudioReference) before projection,
// so a zero mel row maps onto the bias path.
inline constexpr double kAudioReference = 0.01;

class EncoderWeights {
 public:
  // in_dim is the vocabulary size for text, F for audio, D_v for video.
  EncoderWeights(Modality modality, int in_dim, int embed_dim, std::uint64_t seed);

  Modality modality() const { return modality_; }
  int in_dim() const { return in_dim_; }
  int embed_dim() const { return embed_dim_; }
  std::uint64_t seed() const { return seed_; }

  // Rows of x are inputs (token one-hots are never materialized; text goes
  // through the embedding table).
  Matrix project(const Matrix& x) const;

  const Matrix& table() const { return table_; }
  const Matrix& w1() const { return w1_; }
  const Matrix& b1() const { return b1_; }
  const Matrix& w2() const { return w2_; }
  const Matrix& b2() const { return b2_; }

 private:
  Modality modality_;
  int in_dim_;
  int embed_dim_;
  std::uint64_t seed_;
  Matrix table_;  // text only: vocab x token_dim
  Matrix w1_, b1_, w2_, b2_;
};

struct TextEncoding {
  EmbeddingSequence tokens;  // one row per token
  RowVector pooled;          // normalized mean of the token rows
};

TextEncoding encode_text(const EncoderWeights& w, std::span<const std::uint32_t> tokens);
EmbeddingSequence encode_audio(const EncoderWeights& w, const Matrix& mel);
EmbeddingSequence encode_video(const EncoderWeights& w, const Matrix& frame_features);

// The three frozen encoders of one configuration.
struct EncoderBank {
  EncoderWeights text;
  EncoderWeights audio;
  EncoderWeights video;

  EncoderBank(int vocab, int F, int D_v, int D, std::uint64_t seed);
};

// Writes `<base>.bin` (f32) and `<base>.json`.
void save_encoder_snapshot(const std::filesystem::path& base, const EncoderWeights& w, const std::string& config_hash);

}  // namespace diffava
