#pragma once

// Synthetic audio / video / text triplets with a known event timeline.
//
// A clip is T one-second rows. Each sample draws a "scene" (a background
// spectral shape) and a short script of non-overlapping events. The scene and
// every event show up in both modalities:
//
//   mel row i   = floor(scene) * iid jitter  +  band(class, instance) if active
//   frame row i = scene code + class code + instance code if active + noise
//
// so audio and video share activity masks and per-sample identity, while the
// token sequence only carries the ordered class list.

#include <cstdint>
#include <filesystem>
#include <vector>

#include "diffava/numerics.hpp"
#include "diffava/rng.hpp"

namespace diffava::synth {

struct Event {
  float onset = 0.0f;     // seconds
  float duration = 0.0f;  // seconds
  std::uint32_t class_id = 0;

  bool operator==(const Event&) const = default;
};

struct EventScript {
  std::vector<Event> events;

  bool operator==(const EventScript&) const = default;
};

struct SynthConfig {
  int T = 10;         // rows (seconds)
  int F = 64;         // mel bins
  int D_v = 32;       // frame feature width
  int K = 8;          // event classes
  int max_events = 2;
  int max_duration = 3;      // seconds
  double noise_floor = 0.02;  // mean silent-bin energy
  std::uint64_t prototype_seed = 0x5EED;  // class / scene codes, shared by all samples
};

void validate(const SynthConfig& cfg);

// Token ids: classes are 0..K-1, then BOS = K and EOS = K + 1.
inline std::uint32_t bos_token(int K) { return static_cast<std::uint32_t>(K); }
inline std::uint32_t eos_token(int K) { return static_cast<std::uint32_t>(K + 1); }
inline int vocab_size(int K) { return K + 2; }

struct TripletSample {
  Matrix mel;             // T x F, >= 0
  Matrix frame_features;  // T x D_v
  std::vector<std::uint32_t> token_ids;
  EventScript script;

  bool operator==(const TripletSample& o) const {
    return mel == o.mel && frame_features == o.frame_features && token_ids == o.token_ids && script == o.script;
  }
};

// 1..max_events non-overlapping events with integer onsets and durations in
// [1, max_duration], sorted by onset, all inside [0, clip_len].
EventScript generate_script(Rng& rng, int clip_len, int max_events, int num_classes = 8, int max_duration = 3);

// Throws InvalidArgument if the script violates its invariants for cfg.
void validate_script(const EventScript& script, const SynthConfig& cfg);

std::vector<std::uint32_t> tokens_for(const EventScript& script, int K);

// Mel and frame values are rounded to float precision so that the dataset
// file round trip is exact.
TripletSample render_triplet(const EventScript& script, Rng& rng, const SynthConfig& cfg);

// Per-row activity: true where any event covers row i.
std::vector<bool> activity_mask(const EventScript& script, int T);
// Per-row activity recovered from the mel by thresholding the row mean at
// 3 * noise_floor.
std::vector<bool> energy_mask(const Matrix& mel, double noise_floor);
double energy_threshold(double noise_floor);
// First row whose mean energy exceeds the threshold, or T if none does.
int energy_onset(const Matrix& mel, double noise_floor);

// Class of the longest event (earliest on ties).
std::uint32_t dominant_class(const EventScript& script);

struct Dataset {
  int T = 0;
  int F = 0;
  int D_v = 0;
  int K = 0;
  std::vector<TripletSample> samples;

  bool operator==(const Dataset&) const = default;
};

// Sample i is rendered from Rng(seed).fork(i), so any subset can be
// regenerated independently.
Dataset generate_dataset(const SynthConfig& cfg, std::size_t count, std::uint64_t seed);

// Little-endian: "DAVADATA", u32 version = 1, u32 count, u32 T, u32 F,
// u32 D_v, u32 K, then per sample: u32 n_events, n_events x (f32 onset,
// f32 duration, u32 class), T*F f32 mel, T*D_v f32 frames, u32 n_tokens,
// n_tokens x u32.
inline constexpr std::uint32_t kDatasetVersion = 1;
void write_dataset(const std::filesystem::path& path, const Dataset& data);
// Throws FormatError (with byte offset) on bad magic, version, or truncation.
Dataset read_dataset(const std::filesystem::path& path);

}  // namespace diffava::synth
