#include "diffava/config.hpp"

#include <fstream>
#include <sstream>

#include "diffava/errors.hpp"

namespace diffava {

using nlohmann::json;

namespace {

// Enum fields travel as strings.
template <class E>
struct EnumNames;

template <>
struct EnumNames<TrainCond> {
  static constexpr std::pair<TrainCond, const char*> values[] = {{TrainCond::aligned_text, "aligned_text"},
                                                                 {TrainCond::audio_embedding, "audio_embedding"}};
};
template <>
struct EnumNames<CondMode> {
  static constexpr std::pair<CondMode, const char*> values[] = {{CondMode::sequence, "sequence"},
                                                                {CondMode::pooled, "pooled"}};
};
template <>
struct EnumNames<contrastive::ContrastTarget> {
  static constexpr std::pair<contrastive::ContrastTarget, const char*> values[] = {
      {contrastive::ContrastTarget::aligned_text, "aligned_text"},
      {contrastive::ContrastTarget::raw_visual, "raw_visual"}};
};
template <>
struct EnumNames<diffusion::LossKind> {
  static constexpr std::pair<diffusion::LossKind, const char*> values[] = {{diffusion::LossKind::mse, "mse"},
                                                                           {diffusion::LossKind::l2_norm, "l2_norm"}};
};

template <class E>
std::string enum_to_string(E e) {
  for (const auto& [v, name] : EnumNames<E>::values) {
    if (v == e) return name;
  }
  return "?";
}

template <class E>
E enum_from_string(const std::string& key, const std::string& s) {
  std::string options;
  for (const auto& [v, name] : EnumNames<E>::values) {
    if (s == name) return v;
    options += options.empty() ? name : std::string(", ") + name;
  }
  throw ConfigError(key + ": '" + s + "' is not one of " + options);
}

// Every tunable as (section, key, reference).
template <class Cfg, class Fn>
void visit_fields(Cfg& c, Fn&& fn) {
  fn("data", "T", c.data.synth.T);
  fn("data", "F", c.data.synth.F);
  fn("data", "D_v", c.data.synth.D_v);
  fn("data", "K", c.data.synth.K);
  fn("data", "max_events", c.data.synth.max_events);
  fn("data", "max_duration", c.data.synth.max_duration);
  fn("data", "noise_floor", c.data.synth.noise_floor);
  fn("data", "prototype_seed", c.data.synth.prototype_seed);
  fn("data", "train_count", c.data.train_count);
  fn("data", "val_count", c.data.val_count);
  fn("data", "test_count", c.data.test_count);
  fn("data", "seed", c.data.seed);

  fn("encoders", "dim", c.encoders.dim);
  fn("encoders", "seed", c.encoders.seed);

  fn("align", "depth", c.align.model.depth);
  fn("align", "heads", c.align.model.heads);
  fn("align", "ffn_mult", c.align.model.ffn_mult);
  fn("align", "fusion_hidden", c.align.model.fusion_hidden);
  fn("align", "positional_encoding", c.align.model.positional_encoding);
  fn("align", "seed", c.align.model.seed);
  fn("align", "tau", c.align.train.loss.tau);
  fn("align", "symmetric", c.align.train.loss.symmetric);
  fn("align", "contrast_target", c.align.train.loss.target);
  fn("align", "epochs", c.align.train.epochs);
  fn("align", "batch", c.align.train.batch);
  fn("align", "lr", c.align.train.lr);
  fn("align", "train_seed", c.align.train.seed);

  fn("codec", "C", c.codec.C);
  fn("codec", "r", c.codec.r);
  fn("codec", "hidden", c.codec.hidden);
  fn("codec", "seed", c.codec.seed);
  fn("codec", "epochs", c.codec.train.epochs);
  fn("codec", "batch", c.codec.train.batch);
  fn("codec", "lr", c.codec.train.lr);
  fn("codec", "train_seed", c.codec.train.seed);

  fn("diffusion", "N", c.diffusion.steps);
  fn("diffusion", "beta_min", c.diffusion.beta_min);
  fn("diffusion", "beta_max", c.diffusion.beta_max);
  fn("diffusion", "hidden", c.diffusion.hidden);
  fn("diffusion", "time_dim", c.diffusion.time_dim);
  fn("diffusion", "cond_hidden", c.diffusion.cond_hidden);
  fn("diffusion", "blocks", c.diffusion.blocks);
  fn("diffusion", "seed", c.diffusion.seed);
  fn("diffusion", "epochs", c.diffusion.train.epochs);
  fn("diffusion", "batch", c.diffusion.train.batch);
  fn("diffusion", "lr", c.diffusion.train.lr);
  fn("diffusion", "loss", c.diffusion.train.loss);
  fn("diffusion", "train_seed", c.diffusion.train.seed);
  fn("diffusion", "train_cond", c.diffusion.train_cond);
  fn("diffusion", "cond_mode", c.diffusion.cond_mode);
  fn("diffusion", "cfg_guidance", c.diffusion.cfg_guidance);
  fn("diffusion", "guidance_scale", c.diffusion.guidance_scale);
  fn("diffusion", "guidance_dropout", c.diffusion.guidance_dropout);
  fn("diffusion", "sample_seed", c.diffusion.sample_seed);

  fn("eval", "classifier_epochs", c.eval.classifier.epochs);
  fn("eval", "classifier_batch", c.eval.classifier.batch);
  fn("eval", "classifier_lr", c.eval.classifier.lr);
  fn("eval", "classifier_seed", c.eval.classifier.seed);
  fn("eval", "min_onset_gap", c.eval.min_onset_gap);
}

template <class T>
void read_value(const json& v, const std::string& key, T& out) {
  if constexpr (std::is_same_v<T, bool>) {
    if (!v.is_boolean()) throw ConfigError(key + ": expected true or false");
    out = v.get<bool>();
  } else if constexpr (std::is_integral_v<T>) {
    if (!v.is_number_integer()) throw ConfigError(key + ": expected an integer");
    if (std::is_unsigned_v<T> && v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0) {
      throw ConfigError(key + ": expected a nonnegative integer");
    }
    out = v.get<T>();
  } else if constexpr (std::is_floating_point_v<T>) {
    if (!v.is_number()) throw ConfigError(key + ": expected a number");
    out = v.get<T>();
  } else {
    if (!v.is_string()) throw ConfigError(key + ": expected a string");
    out = enum_from_string<T>(key, v.get<std::string>());
  }
}

template <class T>
json write_value(const T& v) {
  if constexpr (std::is_arithmetic_v<T>) {
    return v;
  } else {
    return enum_to_string(v);
  }
}

void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

}  // namespace

codec::CodecConfig RunConfig::codec_config() const {
  return codec::CodecConfig{.C = codec.C,
                            .r = codec.r,
                            .T = data.synth.T,
                            .F = data.synth.F,
                            .hidden = codec.hidden,
                            .seed = codec.seed};
}

int RunConfig::cond_dim() const {
  return diffusion.cond_mode == CondMode::sequence ? data.synth.T * encoders.dim : encoders.dim;
}

diffusion::DenoiserConfig RunConfig::denoiser_config() const {
  const codec::CodecConfig cc = codec_config();
  return diffusion::DenoiserConfig{.latent_size = cc.C * (cc.T / cc.r) * (cc.F / cc.r),
                                   .cond_dim = cond_dim(),
                                   .hidden = diffusion.hidden,
                                   .time_dim = diffusion.time_dim,
                                   .cond_hidden = diffusion.cond_hidden,
                                   .blocks = diffusion.blocks,
                                   .seed = diffusion.seed};
}

diffusion::NoiseSchedule RunConfig::schedule() const {
  return diffusion::build_linear_schedule(diffusion.steps, diffusion.beta_min, diffusion.beta_max);
}

std::vector<std::string> preset_names() { return {"desk", "paper-scale"}; }

RunConfig preset(const std::string& name) {
  RunConfig c;
  c.align.train.epochs = 10;
  c.align.train.batch = 32;
  c.align.train.lr = 1e-3;
  c.diffusion.train.epochs = 20;
  if (name == "desk") return c;
  if (name == "paper-scale") {
    c.preset = name;
    c.encoders.dim = 768;
    c.align.model.depth = 4;
    c.align.model.heads = 8;
    c.align.model.fusion_hidden = 768;
    c.align.train.epochs = 30;
    c.align.train.batch = 128;
    c.align.train.lr = 1.5e-4;
    return c;
  }
  throw ConfigError("unknown preset '" + name + "' (expected desk or paper-scale)");
}

void validate(const RunConfig& c) {
  try {
    synth::validate(c.data.synth);
  } catch (const Error& e) {
    throw ConfigError(std::string("data: ") + e.what());
  }
  require(c.data.train_count >= 2 && c.data.val_count >= 2 && c.data.test_count >= 2,
          "data: train/val/test counts must be at least 2");
  require(c.encoders.dim >= 1, "encoders.dim must be positive");
  require(c.align.model.depth >= 0 && c.align.model.heads >= 1 && c.align.model.ffn_mult >= 1 &&
              c.align.model.fusion_hidden >= 1,
          "align: depth, heads, ffn_mult, fusion_hidden must be positive");
  require(c.encoders.dim % c.align.model.heads == 0,
          "align.heads = " + std::to_string(c.align.model.heads) + " must divide encoders.dim = " +
              std::to_string(c.encoders.dim));
  require(c.align.train.loss.tau > 0.0, "align.tau must be positive");
  require(c.align.train.epochs >= 0, "align.epochs must be nonnegative");
  require(c.align.train.batch >= 2, "align.batch must be at least 2 (in-batch negatives)");
  require(c.align.train.lr > 0.0, "align.lr must be positive");
  require(c.data.val_count >= c.align.train.batch, "data.val_count must be at least align.batch");
  try {
    codec::validate(c.codec_config());
  } catch (const Error& e) {
    throw ConfigError(std::string("codec: ") + e.what());
  }
  require(c.codec.train.epochs >= 0 && c.codec.train.batch >= 1 && c.codec.train.lr > 0.0,
          "codec: epochs >= 0, batch >= 1, lr > 0 required");
  require(c.diffusion.steps >= 1, "diffusion.N must be at least 1");
  require(c.diffusion.beta_min > 0.0 && c.diffusion.beta_min <= c.diffusion.beta_max && c.diffusion.beta_max < 1.0,
          "diffusion: need 0 < beta_min <= beta_max < 1");
  require(c.diffusion.hidden >= 1 && c.diffusion.time_dim >= 2 && c.diffusion.cond_hidden >= 1 &&
              c.diffusion.blocks >= 0,
          "diffusion: hidden, time_dim, cond_hidden must be positive");
  require(c.diffusion.train.epochs >= 0 && c.diffusion.train.batch >= 1 && c.diffusion.train.lr > 0.0,
          "diffusion: epochs >= 0, batch >= 1, lr > 0 required");
  require(c.diffusion.guidance_dropout >= 0.0 && c.diffusion.guidance_dropout < 1.0,
          "diffusion.guidance_dropout must lie in [0, 1)");
  require(std::isfinite(c.diffusion.guidance_scale), "diffusion.guidance_scale must be finite");
  require(c.eval.classifier.epochs >= 1 && c.eval.classifier.batch >= 1 && c.eval.classifier.lr > 0.0,
          "eval: classifier epochs, batch, lr must be positive");
  require(c.eval.min_onset_gap >= 0.0, "eval.min_onset_gap must be nonnegative");
}

json to_json(const RunConfig& cfg) {
  json j;
  j["preset"] = cfg.preset;
  visit_fields(cfg, [&](const char* section, const char* key, const auto& v) { j[section][key] = write_value(v); });
  return j;
}

namespace {

void strict_merge(json& base, const json& patch, const std::string& where) {
  if (!patch.is_object()) throw ConfigError((where.empty() ? std::string("config") : where) + ": expected an object");
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    const std::string key = where.empty() ? it.key() : where + "." + it.key();
    if (!base.contains(it.key())) throw ConfigError("unknown config key '" + key + "'");
    json& target = base[it.key()];
    if (target.is_object()) {
      strict_merge(target, it.value(), key);
    } else {
      target = it.value();
    }
  }
}

}  // namespace

RunConfig from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config: expected a JSON object");
  std::string name = "desk";
  if (j.contains("preset")) {
    if (!j["preset"].is_string()) throw ConfigError("preset: expected a string");
    name = j["preset"].get<std::string>();
  }
  RunConfig c = preset(name);
  json merged = to_json(c);
  strict_merge(merged, j, "");
  visit_fields(c, [&](const char* section, const char* key, auto& v) {
    read_value(merged[section][key], std::string(section) + "." + key, v);
  });
  return c;
}

void apply_override(json& j, const std::string& assignment) {
  const std::size_t eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "': expected key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;

  json* node = &j;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("override '" + assignment + "': empty key component");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    if (!node->contains(part)) (*node)[part] = json::object();
    node = &(*node)[part];
    if (!node->is_object()) throw ConfigError("override '" + assignment + "': '" + part + "' is not a section");
    start = dot + 1;
  }
}

RunConfig load_config(const std::optional<std::filesystem::path>& file, const std::optional<std::string>& preset_name,
                      const std::vector<std::string>& overrides) {
  json j = json::object();
  if (file) {
    std::ifstream in(*file);
    if (!in) throw ConfigError("cannot open config file " + file->string());
    j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw ConfigError("config file " + file->string() + " is not valid JSON");
    if (!j.is_object()) throw ConfigError("config file " + file->string() + " must hold a JSON object");
  }
  if (preset_name) j["preset"] = *preset_name;
  for (const std::string& o : overrides) apply_override(j, o);
  RunConfig c = from_json(j);
  validate(c);
  return c;
}

std::string config_hash(const RunConfig& cfg) {
  const std::string text = to_json(cfg).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << h;
  return os.str();
}

}  // namespace diffava
