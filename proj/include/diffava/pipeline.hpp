#pragma once

// The subcommands as library calls. Every artifact lives under one run
// directory and every JSON sidecar carries the config hash:
//
//   data/{train,val,test}.dat  data/manifest.json
//   encoders/{text,audio,video}.{bin,json}
//   codec/model.{bin,json}     codec/log.csv
//   align/model.{bin,json}     align/log.csv
//   diffusion/<variant>.{bin,json}  diffusion/<variant>_log.csv
//   eval/report.json
//
// Diffusion variants: with train_cond = aligned_text, "visual" is trained on
// visual-aligned text and "text" on raw text (the baseline). With
// train_cond = audio_embedding a single "audio" model serves both.

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "diffava/alignment.hpp"
#include "diffava/config.hpp"
#include "diffava/errors.hpp"
#include "diffava/synthdata.hpp"
#include "json.hpp"

namespace diffava::pipeline {

namespace fs = std::filesystem;

// Refusing an artifact stamped with another config; a ConfigError.
class HashMismatch : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

struct Options {
  bool force = false;        // accept artifacts with a different config hash
  std::ostream* log = nullptr;  // progress lines, none if null
};

void gen_data(const RunConfig& cfg, const fs::path& run, const Options& opt = {});

std::vector<alignment::EpochLog> train_align(const RunConfig& cfg, const fs::path& run, const Options& opt = {});

std::vector<codec::CodecEpochLog> train_codec(const RunConfig& cfg, const fs::path& run, const Options& opt = {});

// variant: "visual", "text", "audio", or "all" (every variant the config
// uses). Returns the variants trained.
std::vector<std::string> train_diffusion(const RunConfig& cfg, const fs::path& run, const std::string& variant,
                                         const Options& opt = {});

struct SampleRequest {
  // Either explicit tokens (raw-text condition) or samples of a dataset file.
  std::vector<std::uint32_t> tokens;
  std::optional<fs::path> data;
  std::size_t first = 0;
  std::size_t count = 1;
  bool use_frames = true;  // with a dataset: visual-aligned condition
};

// Writes the generated mels in the dataset format to `out` plus a JSON
// sidecar; returns them.
synth::Dataset sample(const RunConfig& cfg, const fs::path& run, const SampleRequest& req, const fs::path& out,
                      const Options& opt = {});

// Report: {is, kl, fad, fd, sample_counts, config_hash, onset, baseline, ...};
// also written to run/eval/report.json.
nlohmann::json evaluate(const RunConfig& cfg, const fs::path& run, const Options& opt = {});

// Whether a report meets the acceptance thresholds of the config.
bool report_passes(const RunConfig& cfg, const nlohmann::json& report, std::string* why = nullptr);

// Runs every subcommand in order.
nlohmann::json run_all(const RunConfig& cfg, const fs::path& run, const Options& opt = {});

// Path helpers.
fs::path dataset_path(const fs::path& run, const std::string& split);
fs::path encoder_base(const fs::path& run, const std::string& modality);
fs::path codec_base(const fs::path& run);
fs::path align_base(const fs::path& run);
fs::path diffusion_base(const fs::path& run, const std::string& variant);
fs::path report_path(const fs::path& run);

}  // namespace diffava::pipeline
