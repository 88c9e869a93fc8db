#include "diffava/synthdata.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numbers>
#include <numeric>
#include <string>

#include "diffava/errors.hpp"

namespace diffava::synth {

static_assert(std::endian::native == std::endian::little, "dataset I/O assumes a little-endian host");

namespace {

constexpr double kFloorJitter = 0.05;
constexpr double kFrameNoise = 0.05;
constexpr int kSceneHarmonics = 3;

// Class and scene codes shared by every sample of a configuration.
struct Prototypes {
  std::vector<RowVector> class_code;     // norm 3
  std::vector<RowVector> instance_code;  // norm 1
  RowVector scene_cos, scene_sin, scene_tilt;
  std::vector<RowVector> scene_harmonic;

  explicit Prototypes(const SynthConfig& cfg) {
    Rng rng(cfg.prototype_seed);
    auto draw = [&](double norm) {
      RowVector v(cfg.D_v);
      for (int j = 0; j < cfg.D_v; ++j) v(j) = rng.normal();
      return RowVector(v * (norm / v.norm()));
    };
    for (int c = 0; c < cfg.K; ++c) class_code.push_back(draw(3.0));
    for (int c = 0; c < cfg.K; ++c) instance_code.push_back(draw(1.0));
    scene_cos = draw(1.0);
    scene_sin = draw(1.0);
    scene_tilt = draw(1.0);
    for (int k = 0; k < kSceneHarmonics; ++k) scene_harmonic.push_back(draw(1.0));
  }
};

struct Scene {
  int harmonic;  // 1..kSceneHarmonics
  double phase;
  double tilt;   // [-1, 1]
};

double floor_shape(const Scene& s, int f, int F) {
  const double x = static_cast<double>(f) / static_cast<double>(F);
  const double lin = 2.0 * static_cast<double>(f) / static_cast<double>(F - 1) - 1.0;
  return 1.0 + 0.45 * std::sin(2.0 * std::numbers::pi * s.harmonic * x + s.phase) + 0.3 * s.tilt * lin;
}

double round_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

}  // namespace

void validate(const SynthConfig& cfg) {
  if (cfg.T < 1 || cfg.F < 1 || cfg.D_v < 1 || cfg.K < 1) throw ConfigError("synth: dimensions must be positive");
  if (cfg.F % cfg.K != 0) throw ConfigError("synth: F must be divisible by K (one band per class)");
  if (cfg.max_events < 1 || cfg.max_duration < 1) throw ConfigError("synth: max_events and max_duration must be >= 1");
  if (!(cfg.noise_floor > 0.0)) throw ConfigError("synth: noise_floor must be positive");
}

EventScript generate_script(Rng& rng, int clip_len, int max_events, int num_classes, int max_duration) {
  if (clip_len < 1 || max_events < 1 || num_classes < 1 || max_duration < 1) {
    throw InvalidArgument("generate_script: clip_len, max_events, num_classes, max_duration must be >= 1");
  }
  int n = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_events)));
  std::vector<int> dur;
  for (int k = 0; k < n; ++k) dur.push_back(1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_duration))));
  while (n > 1 && std::accumulate(dur.begin(), dur.end(), 0) > clip_len) {
    dur.pop_back();
    --n;
  }
  dur[0] = std::min(dur[0], clip_len);
  const int slack = clip_len - std::accumulate(dur.begin(), dur.end(), 0);

  // n cut points in [0, slack] split the slack into n + 1 gaps.
  std::vector<int> cuts;
  for (int k = 0; k < n; ++k) cuts.push_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(slack + 1))));
  std::sort(cuts.begin(), cuts.end());

  EventScript script;
  int t = 0;
  int prev_cut = 0;
  for (int k = 0; k < n; ++k) {
    t += cuts[k] - prev_cut;
    prev_cut = cuts[k];
    Event e;
    e.onset = static_cast<float>(t);
    e.duration = static_cast<float>(dur[k]);
    e.class_id = static_cast<std::uint32_t>(rng.below(static_cast<std::uint64_t>(num_classes)));
    script.events.push_back(e);
    t += dur[k];
  }
  return script;
}

void validate_script(const EventScript& script, const SynthConfig& cfg) {
  double prev_end = 0.0;
  for (std::size_t k = 0; k < script.events.size(); ++k) {
    const Event& e = script.events[k];
    if (!(e.onset >= 0.0f) || !(e.duration > 0.0f) || e.onset + e.duration > static_cast<float>(cfg.T)) {
      throw InvalidArgument("event " + std::to_string(k) + " lies outside the clip or has no duration");
    }
    if (e.class_id >= static_cast<std::uint32_t>(cfg.K)) {
      throw InvalidArgument("event " + std::to_string(k) + " has class id out of range");
    }
    if (k > 0 && e.onset < prev_end) throw InvalidArgument("events overlap or are not sorted by onset");
    prev_end = e.onset + e.duration;
  }
}

std::vector<std::uint32_t> tokens_for(const EventScript& script, int K) {
  std::vector<std::uint32_t> tokens{bos_token(K)};
  for (const Event& e : script.events) tokens.push_back(e.class_id);
  tokens.push_back(eos_token(K));
  return tokens;
}

TripletSample render_triplet(const EventScript& script, Rng& rng, const SynthConfig& cfg) {
  validate(cfg);
  validate_script(script, cfg);
  const Prototypes proto(cfg);

  Scene scene;
  scene.harmonic = 1 + static_cast<int>(rng.below(kSceneHarmonics));
  scene.phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  scene.tilt = rng.uniform(-1.0, 1.0);

  TripletSample s;
  s.script = script;
  s.token_ids = tokens_for(script, cfg.K);
  s.mel.resize(cfg.T, cfg.F);
  s.frame_features.resize(cfg.T, cfg.D_v);

  const RowVector scene_code = std::cos(scene.phase) * proto.scene_cos + std::sin(scene.phase) * proto.scene_sin +
                               scene.tilt * proto.scene_tilt + proto.scene_harmonic[scene.harmonic - 1];
  for (int i = 0; i < cfg.T; ++i) {
    for (int f = 0; f < cfg.F; ++f) {
      s.mel(i, f) = cfg.noise_floor * floor_shape(scene, f, cfg.F) * (1.0 + kFloorJitter * rng.uniform(-1.0, 1.0));
    }
    s.frame_features.row(i) = scene_code;
  }

  const int band = cfg.F / cfg.K;
  for (const Event& e : script.events) {
    const double instance = rng.uniform();  // peak position inside the band
    const double amplitude = rng.uniform(0.9, 1.1);
    const double center = instance * (band - 1);
    const int first = static_cast<int>(e.onset);
    const int last = static_cast<int>(e.onset + e.duration);
    const RowVector code = proto.class_code[e.class_id] + (2.0 * instance - 1.0) * proto.instance_code[e.class_id];
    for (int i = first; i < last; ++i) {
      for (int j = 0; j < band; ++j) {
        const double z = (j - center) / 1.5;
        s.mel(i, static_cast<int>(e.class_id) * band + j) += amplitude * (1.0 + 0.8 * std::exp(-z * z));
      }
      s.frame_features.row(i) += code;
    }
  }
  for (int i = 0; i < cfg.T; ++i) {
    for (int j = 0; j < cfg.D_v; ++j) s.frame_features(i, j) += kFrameNoise * rng.normal();
  }
  s.mel = s.mel.unaryExpr(&round_f32);
  s.frame_features = s.frame_features.unaryExpr(&round_f32);
  return s;
}

std::vector<bool> activity_mask(const EventScript& script, int T) {
  std::vector<bool> mask(static_cast<std::size_t>(T), false);
  for (const Event& e : script.events) {
    for (int i = static_cast<int>(e.onset); i < static_cast<int>(e.onset + e.duration) && i < T; ++i) {
      mask[static_cast<std::size_t>(i)] = true;
    }
  }
  return mask;
}

double energy_threshold(double noise_floor) { return 3.0 * noise_floor; }

std::vector<bool> energy_mask(const Matrix& mel, double noise_floor) {
  std::vector<bool> mask(static_cast<std::size_t>(mel.rows()));
  const double thr = energy_threshold(noise_floor);
  for (Eigen::Index i = 0; i < mel.rows(); ++i) mask[static_cast<std::size_t>(i)] = mel.row(i).mean() > thr;
  return mask;
}

int energy_onset(const Matrix& mel, double noise_floor) {
  const auto mask = energy_mask(mel, noise_floor);
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) return static_cast<int>(i);
  }
  return static_cast<int>(mel.rows());
}

std::uint32_t dominant_class(const EventScript& script) {
  if (script.events.empty()) throw InvalidArgument("dominant_class: empty script");
  const Event* best = &script.events.front();
  for (const Event& e : script.events) {
    if (e.duration > best->duration) best = &e;
  }
  return best->class_id;
}

Dataset generate_dataset(const SynthConfig& cfg, std::size_t count, std::uint64_t seed) {
  validate(cfg);
  Dataset data{cfg.T, cfg.F, cfg.D_v, cfg.K, {}};
  data.samples.reserve(count);
  const Rng root(seed);
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng = root.fork(i);
    const EventScript script = generate_script(rng, cfg.T, cfg.max_events, cfg.K, cfg.max_duration);
    data.samples.push_back(render_triplet(script, rng, cfg));
  }
  return data;
}

// ---------------------------------------------------------------------------
// File format

namespace {

constexpr char kMagic[8] = {'D', 'A', 'V', 'A', 'D', 'A', 'T', 'A'};

class Writer {
 public:
  void u32(std::uint32_t v) { raw(&v, 4); }
  void f32(double v) {
    const float f = static_cast<float>(v);
    raw(&f, 4);
  }
  void raw(const void* p, std::size_t n) { buf_.append(static_cast<const char*>(p), n); }
  const std::string& bytes() const { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(std::string bytes) : buf_(std::move(bytes)) {}

  std::uint32_t u32(const char* what) {
    std::uint32_t v;
    take(&v, 4, what);
    return v;
  }
  double f32(const char* what) {
    float f;
    take(&f, 4, what);
    return static_cast<double>(f);
  }
  void take(void* out, std::size_t n, const char* what) {
    if (pos_ + n > buf_.size()) throw FormatError(std::string("dataset truncated while reading ") + what, pos_);
    std::memcpy(out, buf_.data() + pos_, n);
    pos_ += n;
  }
  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return buf_.size() - pos_; }

 private:
  std::string buf_;
  std::size_t pos_ = 0;
};

}  // namespace

void write_dataset(const std::filesystem::path& path, const Dataset& data) {
  Writer w;
  w.raw(kMagic, 8);
  w.u32(kDatasetVersion);
  w.u32(static_cast<std::uint32_t>(data.samples.size()));
  w.u32(static_cast<std::uint32_t>(data.T));
  w.u32(static_cast<std::uint32_t>(data.F));
  w.u32(static_cast<std::uint32_t>(data.D_v));
  w.u32(static_cast<std::uint32_t>(data.K));
  for (const TripletSample& s : data.samples) {
    if (s.mel.rows() != data.T || s.mel.cols() != data.F || s.frame_features.rows() != data.T ||
        s.frame_features.cols() != data.D_v) {
      throw ShapeError("write_dataset: sample shape does not match the dataset header");
    }
    w.u32(static_cast<std::uint32_t>(s.script.events.size()));
    for (const Event& e : s.script.events) {
      w.f32(e.onset);
      w.f32(e.duration);
      w.u32(e.class_id);
    }
    for (Eigen::Index k = 0; k < s.mel.size(); ++k) w.f32(s.mel.data()[k]);
    for (Eigen::Index k = 0; k < s.frame_features.size(); ++k) w.f32(s.frame_features.data()[k]);
    w.u32(static_cast<std::uint32_t>(s.token_ids.size()));
    for (std::uint32_t t : s.token_ids) w.u32(t);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
  if (!out) throw IoError("write failed: " + path.string());
}

Dataset read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  Reader r(std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>()));

  char magic[8];
  r.take(magic, 8, "magic");
  if (std::memcmp(magic, kMagic, 8) != 0) throw FormatError("bad magic, not a DAVADATA file", 0);
  const std::uint32_t version = r.u32("version");
  if (version != kDatasetVersion) throw FormatError("unsupported dataset version " + std::to_string(version), 8);
  const std::uint32_t count = r.u32("sample count");
  Dataset data;
  data.T = static_cast<int>(r.u32("T"));
  data.F = static_cast<int>(r.u32("F"));
  data.D_v = static_cast<int>(r.u32("D_v"));
  data.K = static_cast<int>(r.u32("K"));
  // Each sample needs at least its two counts plus the dense payload.
  const std::size_t min_sample = 8 + 4 * static_cast<std::size_t>(data.T) * (data.F + data.D_v);
  if (static_cast<std::size_t>(count) * min_sample > r.remaining()) {
    throw FormatError("dataset truncated: header promises " + std::to_string(count) + " samples", r.pos());
  }
  data.samples.reserve(count);
  for (std::uint32_t n = 0; n < count; ++n) {
    TripletSample s;
    const std::uint32_t n_events = r.u32("event count");
    if (static_cast<std::size_t>(n_events) * 12 > r.remaining()) {
      throw FormatError("dataset truncated in event list", r.pos());
    }
    for (std::uint32_t k = 0; k < n_events; ++k) {
      Event e;
      e.onset = static_cast<float>(r.f32("event onset"));
      e.duration = static_cast<float>(r.f32("event duration"));
      e.class_id = r.u32("event class");
      s.script.events.push_back(e);
    }
    s.mel.resize(data.T, data.F);
    for (Eigen::Index k = 0; k < s.mel.size(); ++k) s.mel.data()[k] = r.f32("mel");
    s.frame_features.resize(data.T, data.D_v);
    for (Eigen::Index k = 0; k < s.frame_features.size(); ++k) s.frame_features.data()[k] = r.f32("frame features");
    const std::uint32_t n_tokens = r.u32("token count");
    if (static_cast<std::size_t>(n_tokens) * 4 > r.remaining()) throw FormatError("dataset truncated in tokens", r.pos());
    for (std::uint32_t k = 0; k < n_tokens; ++k) s.token_ids.push_back(r.u32("token"));
    data.samples.push_back(std::move(s));
  }
  if (r.remaining() != 0) throw FormatError("trailing bytes after the last sample", r.pos());
  return data;
}

}  // namespace diffava::synth
