#pragma once

// Run configuration shared by every subcommand. The on-disk form is JSON with
// one object per section; see README.md for the schema.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "diffava/alignment.hpp"
#include "diffava/codec.hpp"
#include "diffava/contrastive.hpp"
#include "diffava/diffusion.hpp"
#include "diffava/metrics.hpp"
#include "diffava/synthdata.hpp"
#include "json.hpp"

namespace diffava {

enum class TrainCond { aligned_text, audio_embedding };
enum class CondMode { sequence, pooled };

struct DataSection {
  synth::SynthConfig synth;
  int train_count = 4096;
  int val_count = 512;
  int test_count = 256;
  std::uint64_t seed = 1;  // train; val and test use seed + 1, seed + 2
};

struct EncoderSection {
  int dim = 64;
  std::uint64_t seed = 7;
};

struct AlignSection {
  alignment::AlignmentConfig model;
  alignment::TrainConfig train;
};

struct CodecSection {
  int C = 8;
  int r = 2;
  int hidden = 32;
  std::uint64_t seed = 31;
  codec::CodecTrainConfig train;
};

struct DiffusionSection {
  int steps = 100;
  double beta_min = 1e-3;
  double beta_max = 0.2;
  int hidden = 256;
  int time_dim = 32;
  int cond_hidden = 64;
  int blocks = 3;
  std::uint64_t seed = 41;
  diffusion::DiffusionTrainConfig train;
  TrainCond train_cond = TrainCond::aligned_text;
  CondMode cond_mode = CondMode::sequence;
  bool cfg_guidance = false;
  double guidance_scale = 2.0;
  double guidance_dropout = 0.1;
  std::uint64_t sample_seed = 99;
};

struct EvalSection {
  metrics::ClassifierTrainConfig classifier;
  double min_onset_gap = 1.0;  // rows; used by evaluate --assert
};

struct RunConfig {
  std::string preset = "desk";
  DataSection data;
  EncoderSection encoders;
  AlignSection align;
  CodecSection codec;
  DiffusionSection diffusion;
  EvalSection eval;

  codec::CodecConfig codec_config() const;
  diffusion::DenoiserConfig denoiser_config() const;
  diffusion::NoiseSchedule schedule() const;
  int cond_dim() const;
};

// "desk" (default) or "paper-scale". Throws ConfigError for anything else.
RunConfig preset(const std::string& name);
std::vector<std::string> preset_names();

// Throws ConfigError naming the first offending field.
void validate(const RunConfig& cfg);

nlohmann::json to_json(const RunConfig& cfg);
// Strict: unknown keys and wrong value types are ConfigErrors. Missing keys
// keep the values of the preset named by "preset" (desk if absent).
RunConfig from_json(const nlohmann::json& j);

// Parses "section.key=value"; value is read as JSON, falling back to a plain
// string.
void apply_override(nlohmann::json& j, const std::string& assignment);

// File (optional) -> preset -> overrides -> validate.
RunConfig load_config(const std::optional<std::filesystem::path>& file, const std::optional<std::string>& preset_name,
                      const std::vector<std::string>& overrides);

// 16 hex digits of FNV-1a over the canonical JSON dump.
std::string config_hash(const RunConfig& cfg);

}  // namespace diffava
