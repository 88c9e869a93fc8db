#include "diffava/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "diffava/codec.hpp"
#include "diffava/diffusion.hpp"
#include "diffava/encoders.hpp"
#include "diffava/metrics.hpp"
#include "diffava/snapshot.hpp"

namespace diffava::pipeline {

using nlohmann::json;

fs::path dataset_path(const fs::path& run, const std::string& split) { return run / "data" / (split + ".dat"); }
fs::path encoder_base(const fs::path& run, const std::string& modality) { return run / "encoders" / modality; }
fs::path codec_base(const fs::path& run) { return run / "codec" / "model"; }
fs::path align_base(const fs::path& run) { return run / "align" / "model"; }
fs::path diffusion_base(const fs::path& run, const std::string& variant) { return run / "diffusion" / variant; }
fs::path report_path(const fs::path& run) { return run / "eval" / "report.json"; }

namespace {

fs::path manifest_path(const fs::path& run) { return run / "data" / "manifest.json"; }

void say(const Options& opt, const std::string& line) {
  if (opt.log) *opt.log << line << std::endl;
}

std::string fmt(double v, int precision = 6) {
  std::ostringstream os;
  os << std::setprecision(precision) << v;
  return os.str();
}

void write_json(const fs::path& path, const json& j) {
  if (!path.parent_path().empty()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("missing file " + path.string());
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw FormatError(path.string() + " is not valid JSON", 0);
  return j;
}

// Rows of (epoch, split, value).
class CsvLog {
 public:
  explicit CsvLog(const fs::path& path) : out_(path, std::ios::binary) {
    if (!out_) throw IoError("cannot write " + path.string());
    out_ << "epoch,split,value\n" << std::setprecision(17);
  }
  void row(int epoch, const char* split, double value) { out_ << epoch << "," << split << "," << value << "\n"; }

 private:
  std::ofstream out_;
};

json stamp(const RunConfig& cfg, const std::string& kind) {
  return json{{"kind", kind}, {"config_hash", config_hash(cfg)}, {"preset", cfg.preset}};
}

void check_hash(const RunConfig& cfg, const json& meta, const std::string& what, const Options& opt) {
  const std::string want = config_hash(cfg);
  const std::string got = meta.value("config_hash", std::string("<none>"));
  if (got == want) return;
  if (opt.force) {
    say(opt, "warning: " + what + " has config hash " + got + ", current config is " + want + " (forced)");
    return;
  }
  throw HashMismatch(what + " was produced with config hash " + got + " but the current config hashes to " + want +
                     "; rerun that stage or pass --force");
}

alignment::AlignmentConfig alignment_config(const RunConfig& cfg) {
  alignment::AlignmentConfig a = cfg.align.model;
  a.dim = cfg.encoders.dim;
  return a;
}

EncoderBank make_bank(const RunConfig& cfg) {
  const auto& s = cfg.data.synth;
  return EncoderBank(synth::vocab_size(s.K), s.F, s.D_v, cfg.encoders.dim, cfg.encoders.seed);
}

// The frozen encoders are regenerated from their seed; the snapshot files
// only have to exist and carry the right hash.
EncoderBank load_bank(const RunConfig& cfg, const fs::path& run, const Options& opt) {
  for (const char* m : {"text", "audio", "video"}) {
    check_hash(cfg, read_json(snapshot_json_path(encoder_base(run, m))), std::string(m) + " encoder", opt);
  }
  return make_bank(cfg);
}

synth::Dataset load_split(const RunConfig& cfg, const fs::path& run, const std::string& split, const Options& opt) {
  check_hash(cfg, read_json(manifest_path(run)), "dataset", opt);
  synth::Dataset d = synth::read_dataset(dataset_path(run, split));
  const auto& s = cfg.data.synth;
  if (d.T != s.T || d.F != s.F || d.D_v != s.D_v || d.K != s.K) {
    throw ConfigError(split + " dataset has T=" + std::to_string(d.T) + " F=" + std::to_string(d.F) + " D_v=" +
                      std::to_string(d.D_v) + " K=" + std::to_string(d.K) + ", config expects T=" +
                      std::to_string(s.T) + " F=" + std::to_string(s.F) + " D_v=" + std::to_string(s.D_v) +
                      " K=" + std::to_string(s.K));
  }
  if (d.samples.empty()) throw FormatError(split + " dataset is empty", 0);
  return d;
}

alignment::EncodedSample encode_one(const EncoderBank& bank, const std::vector<std::uint32_t>& tokens,
                                    const Matrix* frames, const Matrix* mel) {
  alignment::EncodedSample e;
  TextEncoding t = encode_text(bank.text, tokens);
  e.text_pooled = t.pooled;
  e.text_tokens = t.tokens.rows();
  if (frames) e.video = encode_video(bank.video, *frames).rows();
  if (mel) e.audio = encode_audio(bank.audio, *mel).rows();
  return e;
}

std::vector<alignment::EncodedSample> encode_all(const EncoderBank& bank, const synth::Dataset& d) {
  std::vector<alignment::EncodedSample> out;
  out.reserve(d.samples.size());
  for (const auto& s : d.samples) out.push_back(encode_one(bank, s.token_ids, &s.frame_features, &s.mel));
  return out;
}

template <class Model>
void load_model(const RunConfig& cfg, const fs::path& base, const std::string& what, const Options& opt,
                Model& model) {
  const Snapshot snap = read_snapshot(base);
  check_hash(cfg, snap.meta, what, opt);
  assign_tensors(snap, model);
}

codec::CodecParams load_codec(const RunConfig& cfg, const fs::path& run, const Options& opt) {
  codec::CodecParams p(cfg.codec_config());
  load_model(cfg, codec_base(run), "codec", opt, p);
  return p;
}

alignment::AlignmentModel load_align(const RunConfig& cfg, const fs::path& run, const Options& opt) {
  alignment::AlignmentModel m(alignment_config(cfg));
  load_model(cfg, align_base(run), "alignment model", opt, m);
  return m;
}

diffusion::DenoiserParams load_denoiser(const RunConfig& cfg, const fs::path& run, const std::string& variant,
                                        const Options& opt) {
  diffusion::DenoiserParams p(cfg.denoiser_config());
  load_model(cfg, diffusion_base(run, variant), variant + " denoiser", opt, p);
  return p;
}

std::vector<std::string> variants_for(const RunConfig& cfg) {
  if (cfg.diffusion.train_cond == TrainCond::audio_embedding) return {"audio"};
  return {"visual", "text"};
}

// Which denoiser generates from which condition.
std::string generator_for(const RunConfig& cfg, bool visual_condition) {
  if (cfg.diffusion.train_cond == TrainCond::audio_embedding) return "audio";
  return visual_condition ? "visual" : "text";
}

// T x D rows -> one condition row. Sequence mode keeps every second (scaled
// to unit total norm); pooled mode is the renormalized mean.
RowVector condition_row(const Matrix& rows, CondMode mode) {
  if (mode == CondMode::pooled) return diffusion::pool_condition(rows);
  return rows.reshaped<Eigen::RowMajor>().transpose() / std::sqrt(static_cast<double>(rows.rows()));
}

enum class CondSource { aligned, text, audio };

Matrix conditions(const RunConfig& cfg, const std::vector<alignment::EncodedSample>& data, CondSource source,
                  const alignment::AlignmentModel* align) {
  const int T = cfg.data.synth.T;
  const int D = cfg.encoders.dim;
  Matrix out(static_cast<Eigen::Index>(data.size()), cfg.cond_dim());
  constexpr std::size_t kChunk = 256;
  for (std::size_t first = 0; first < data.size(); first += kChunk) {
    const std::size_t count = std::min(kChunk, data.size() - first);
    Matrix aligned;
    if (source == CondSource::aligned) aligned = alignment::aligned_rows(*align, data, first, count);
    for (std::size_t j = 0; j < count; ++j) {
      const alignment::EncodedSample& e = data[first + j];
      Matrix rows;
      switch (source) {
        case CondSource::aligned:
          rows = aligned.middleRows(static_cast<Eigen::Index>(j) * T, T);
          break;
        case CondSource::text:
          rows = e.text_pooled.replicate(T, 1);
          break;
        case CondSource::audio:
          rows = e.audio;
          break;
      }
      if (rows.rows() != T || rows.cols() != D) throw ShapeError("condition rows have the wrong shape");
      out.row(static_cast<Eigen::Index>(first + j)) = condition_row(rows, cfg.diffusion.cond_mode);
    }
  }
  return out;
}

diffusion::SamplerConfig sampler_config(const RunConfig& cfg) {
  return diffusion::SamplerConfig{.guidance_scale = cfg.diffusion.guidance_scale,
                                  .guidance = cfg.diffusion.cfg_guidance};
}

std::vector<Matrix> generate(const RunConfig& cfg, const codec::CodecParams& cp,
                             const diffusion::DenoiserParams& dp, const Matrix& conds) {
  Rng rng(cfg.diffusion.sample_seed);
  const Matrix z = diffusion::ddpm_sample(dp, cfg.schedule(), conds, rng, sampler_config(cfg));
  std::vector<Matrix> mels;
  mels.reserve(static_cast<std::size_t>(z.rows()));
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    mels.push_back(codec::decode_latent(cp, codec::LatentTensor::from_flat(z.row(i), cp.config.C, cp.latent_h(),
                                                                           cp.latent_w())));
  }
  return mels;
}

struct OnsetStats {
  double mean_error = 0.0;
  int missing = 0;  // no row above threshold; counted as onset T
};

OnsetStats onset_stats(const synth::Dataset& ref, const std::vector<Matrix>& gen, double noise_floor) {
  OnsetStats s;
  for (std::size_t i = 0; i < gen.size(); ++i) {
    const int onset = synth::energy_onset(gen[i], noise_floor);
    if (onset == static_cast<int>(gen[i].rows())) ++s.missing;
    s.mean_error += std::abs(static_cast<double>(onset) - ref.samples[i].script.events.front().onset);
  }
  s.mean_error /= static_cast<double>(gen.size());
  return s;
}

// Row embeddings (for FAD) and clip means (for FD and the classifier).
struct AudioFeatures {
  Matrix rows;
  Matrix clips;
};

AudioFeatures audio_features(const EncoderBank& bank, const std::vector<Matrix>& mels) {
  AudioFeatures f;
  const int D = bank.audio.embed_dim();
  const Eigen::Index T = mels.front().rows();
  f.rows.resize(static_cast<Eigen::Index>(mels.size()) * T, D);
  f.clips.resize(static_cast<Eigen::Index>(mels.size()), D);
  for (std::size_t i = 0; i < mels.size(); ++i) {
    const Matrix e = encode_audio(bank.audio, mels[i]).rows();
    f.rows.middleRows(static_cast<Eigen::Index>(i) * T, T) = e;
    f.clips.row(static_cast<Eigen::Index>(i)) = e.colwise().mean();
  }
  return f;
}

std::vector<Matrix> mels_of(const synth::Dataset& d) {
  std::vector<Matrix> out;
  out.reserve(d.samples.size());
  for (const auto& s : d.samples) out.push_back(s.mel);
  return out;
}

std::vector<int> labels_of(const synth::Dataset& d) {
  std::vector<int> out;
  out.reserve(d.samples.size());
  for (const auto& s : d.samples) out.push_back(static_cast<int>(synth::dominant_class(s.script)));
  return out;
}

json metric_block(const metrics::ClassifierParams& clf, const AudioFeatures& gen, const AudioFeatures& ref) {
  const Matrix gen_p = clf.predict_proba(gen.clips);
  const Matrix ref_p = clf.predict_proba(ref.clips);
  return json{{"is", metrics::inception_score(gen_p)},
              {"kl", metrics::paired_kl(gen_p, ref_p)},
              {"fad", metrics::frechet_distance(metrics::fit_gaussian(gen.rows), metrics::fit_gaussian(ref.rows))},
              {"fd", metrics::frechet_distance(metrics::fit_gaussian(gen.clips), metrics::fit_gaussian(ref.clips))}};
}

}  // namespace

void gen_data(const RunConfig& cfg, const fs::path& run, const Options& opt) {
  validate(cfg);
  fs::create_directories(run / "data");
  const std::string hash = config_hash(cfg);
  const struct {
    const char* split;
    int count;
    std::uint64_t seed;
  } splits[] = {{"train", cfg.data.train_count, cfg.data.seed},
                {"val", cfg.data.val_count, cfg.data.seed + 1},
                {"test", cfg.data.test_count, cfg.data.seed + 2}};
  json manifest = stamp(cfg, "dataset");
  for (const auto& s : splits) {
    const synth::Dataset d = synth::generate_dataset(cfg.data.synth, static_cast<std::size_t>(s.count), s.seed);
    synth::write_dataset(dataset_path(run, s.split), d);
    manifest["splits"][s.split] = {{"file", std::string(s.split) + ".dat"}, {"count", s.count}, {"seed", s.seed}};
    say(opt, std::string("gen-data: ") + s.split + " " + std::to_string(s.count) + " samples");
  }
  write_json(manifest_path(run), manifest);

  fs::create_directories(run / "encoders");
  const EncoderBank bank = make_bank(cfg);
  save_encoder_snapshot(encoder_base(run, "text"), bank.text, hash);
  save_encoder_snapshot(encoder_base(run, "audio"), bank.audio, hash);
  save_encoder_snapshot(encoder_base(run, "video"), bank.video, hash);
  say(opt, "gen-data: frozen encoders written");
}

std::vector<alignment::EpochLog> train_align(const RunConfig& cfg, const fs::path& run, const Options& opt) {
  validate(cfg);
  const EncoderBank bank = load_bank(cfg, run, opt);
  const auto train = encode_all(bank, load_split(cfg, run, "train", opt));
  const auto val = encode_all(bank, load_split(cfg, run, "val", opt));
  alignment::AlignmentModel model(alignment_config(cfg));

  fs::create_directories(run / "align");
  CsvLog csv(run / "align" / "log.csv");
  auto log = alignment::train_alignment(model, train, val, cfg.align.train, [&](const alignment::EpochLog& e) {
    csv.row(e.epoch, "train_loss", e.train_loss);
    csv.row(e.epoch, "val_loss", e.val_loss);
    csv.row(e.epoch, "val_top1", e.val_top1);
    say(opt, "train-align: epoch " + std::to_string(e.epoch) + " train_loss " + fmt(e.train_loss) + " val_loss " +
                 fmt(e.val_loss) + " val_top1 " + fmt(e.val_top1));
  });
  json meta = stamp(cfg, "alignment");
  meta["seed"] = cfg.align.model.seed;
  write_snapshot(align_base(run), named_tensors(model), meta, Dtype::f64);
  return log;
}

std::vector<codec::CodecEpochLog> train_codec(const RunConfig& cfg, const fs::path& run, const Options& opt) {
  validate(cfg);
  const auto train = mels_of(load_split(cfg, run, "train", opt));
  const auto val = mels_of(load_split(cfg, run, "val", opt));
  codec::CodecParams p(cfg.codec_config());

  fs::create_directories(run / "codec");
  CsvLog csv(run / "codec" / "log.csv");
  auto log = codec::train_codec(p, train, val, cfg.codec.train, [&](const codec::CodecEpochLog& e) {
    csv.row(e.epoch, "train_mse", e.train_mse);
    csv.row(e.epoch, "val_mse", e.val_mse);
    say(opt, "train-codec: epoch " + std::to_string(e.epoch) + " train_mse " + fmt(e.train_mse) + " val_mse " +
                 fmt(e.val_mse));
  });
  json meta = stamp(cfg, "codec");
  meta["seed"] = cfg.codec.seed;
  write_snapshot(codec_base(run), named_tensors(p), meta, Dtype::f64);
  return log;
}

std::vector<std::string> train_diffusion(const RunConfig& cfg, const fs::path& run, const std::string& variant,
                                         const Options& opt) {
  validate(cfg);
  const std::vector<std::string> available = variants_for(cfg);
  std::vector<std::string> todo;
  if (variant == "all") {
    todo = available;
  } else if (std::find(available.begin(), available.end(), variant) != available.end()) {
    todo = {variant};
  } else {
    std::string names;
    for (const auto& v : available) names += (names.empty() ? "" : ", ") + v;
    throw ConfigError("diffusion variant '" + variant + "' is not used by this config (available: " + names +
                      ", all)");
  }

  const EncoderBank bank = load_bank(cfg, run, opt);
  const synth::Dataset train = load_split(cfg, run, "train", opt);
  const auto encoded = encode_all(bank, train);
  const codec::CodecParams cp = load_codec(cfg, run, opt);
  Matrix latents(static_cast<Eigen::Index>(train.samples.size()), cp.latent_size());
  for (std::size_t i = 0; i < train.samples.size(); ++i) {
    latents.row(static_cast<Eigen::Index>(i)) = codec::encode_mel(cp, train.samples[i].mel).flat();
  }

  const diffusion::NoiseSchedule sched = cfg.schedule();
  diffusion::DiffusionTrainConfig tc = cfg.diffusion.train;
  tc.cond_dropout = cfg.diffusion.cfg_guidance ? cfg.diffusion.guidance_dropout : 0.0;
  fs::create_directories(run / "diffusion");

  for (const std::string& v : todo) {
    Matrix conds;
    if (v == "visual") {
      const alignment::AlignmentModel align = load_align(cfg, run, opt);
      conds = conditions(cfg, encoded, CondSource::aligned, &align);
    } else if (v == "text") {
      conds = conditions(cfg, encoded, CondSource::text, nullptr);
    } else {
      conds = conditions(cfg, encoded, CondSource::audio, nullptr);
    }
    diffusion::DenoiserParams p(cfg.denoiser_config());
    CsvLog csv(run / "diffusion" / (v + "_log.csv"));
    diffusion::train_denoiser(p, sched, latents, conds, tc, [&](const diffusion::DiffusionEpochLog& e) {
      csv.row(e.epoch, "train_loss", e.train_loss);
      say(opt, "train-diffusion[" + v + "]: epoch " + std::to_string(e.epoch) + " loss " + fmt(e.train_loss));
    });
    json meta = stamp(cfg, "denoiser");
    meta["variant"] = v;
    meta["seed"] = cfg.diffusion.seed;
    write_snapshot(diffusion_base(run, v), named_tensors(p), meta, Dtype::f64);
  }
  return todo;
}

synth::Dataset sample(const RunConfig& cfg, const fs::path& run, const SampleRequest& req, const fs::path& out,
                      const Options& opt) {
  validate(cfg);
  const EncoderBank bank = load_bank(cfg, run, opt);
  const auto& sc = cfg.data.synth;

  synth::Dataset result{sc.T, sc.F, sc.D_v, sc.K, {}};
  std::vector<alignment::EncodedSample> encoded;
  if (req.data) {
    const synth::Dataset src = synth::read_dataset(*req.data);
    if (src.T != sc.T || src.F != sc.F || src.D_v != sc.D_v || src.K != sc.K) {
      throw ConfigError("dataset " + req.data->string() + " does not match the configured dimensions");
    }
    if (req.count == 0 || req.first + req.count > src.samples.size()) {
      throw ConfigError("requested samples [" + std::to_string(req.first) + ", " +
                        std::to_string(req.first + req.count) + ") but the dataset has " +
                        std::to_string(src.samples.size()));
    }
    for (std::size_t i = req.first; i < req.first + req.count; ++i) {
      const synth::TripletSample& s = src.samples[i];
      encoded.push_back(encode_one(bank, s.token_ids, &s.frame_features, nullptr));
      result.samples.push_back(s);
    }
  } else {
    if (req.tokens.empty()) throw ConfigError("sample: give either tokens or a dataset");
    for (std::uint32_t t : req.tokens) {
      if (t >= static_cast<std::uint32_t>(synth::vocab_size(sc.K))) {
        throw ConfigError("token " + std::to_string(t) + " is outside the vocabulary of size " +
                          std::to_string(synth::vocab_size(sc.K)));
      }
    }
    encoded.push_back(encode_one(bank, req.tokens, nullptr, nullptr));
    synth::TripletSample s;
    s.frame_features = Matrix::Zero(sc.T, sc.D_v);
    s.token_ids = req.tokens;
    result.samples.push_back(std::move(s));
  }

  const bool visual = req.data && req.use_frames;
  Matrix conds;
  if (visual) {
    const alignment::AlignmentModel align = load_align(cfg, run, opt);
    conds = conditions(cfg, encoded, CondSource::aligned, &align);
  } else {
    conds = conditions(cfg, encoded, CondSource::text, nullptr);
  }
  const codec::CodecParams cp = load_codec(cfg, run, opt);
  const std::string gen = generator_for(cfg, visual);
  const diffusion::DenoiserParams dp = load_denoiser(cfg, run, gen, opt);
  const std::vector<Matrix> mels = generate(cfg, cp, dp, conds);
  for (std::size_t i = 0; i < mels.size(); ++i) result.samples[i].mel = mels[i].cast<float>().cast<double>();

  if (!out.parent_path().empty()) fs::create_directories(out.parent_path());
  synth::write_dataset(out, result);
  json meta = stamp(cfg, "samples");
  meta["condition"] = visual ? "visual_aligned" : "raw_text";
  meta["denoiser"] = gen;
  meta["count"] = mels.size();
  write_json(fs::path(out.string() + ".json"), meta);
  say(opt, "sample: wrote " + std::to_string(mels.size()) + " mels to " + out.string());
  return result;
}

json evaluate(const RunConfig& cfg, const fs::path& run, const Options& opt) {
  validate(cfg);
  const EncoderBank bank = load_bank(cfg, run, opt);
  const synth::Dataset test = load_split(cfg, run, "test", opt);
  const synth::Dataset train = load_split(cfg, run, "train", opt);
  const synth::Dataset val = load_split(cfg, run, "val", opt);
  const auto encoded = encode_all(bank, test);
  const codec::CodecParams cp = load_codec(cfg, run, opt);
  const alignment::AlignmentModel align = load_align(cfg, run, opt);

  const Matrix visual_conds = conditions(cfg, encoded, CondSource::aligned, &align);
  const Matrix text_conds = conditions(cfg, encoded, CondSource::text, nullptr);
  const auto gen_visual = generate(cfg, cp, load_denoiser(cfg, run, generator_for(cfg, true), opt), visual_conds);
  say(opt, "evaluate: generated " + std::to_string(gen_visual.size()) + " visual-aligned samples");
  const auto gen_text = generate(cfg, cp, load_denoiser(cfg, run, generator_for(cfg, false), opt), text_conds);
  say(opt, "evaluate: generated " + std::to_string(gen_text.size()) + " raw-text samples");

  const double nf = cfg.data.synth.noise_floor;
  const OnsetStats on_visual = onset_stats(test, gen_visual, nf);
  const OnsetStats on_text = onset_stats(test, gen_text, nf);

  const AudioFeatures ref_f = audio_features(bank, mels_of(test));
  const AudioFeatures train_f = audio_features(bank, mels_of(train));
  const AudioFeatures val_f = audio_features(bank, mels_of(val));
  const metrics::ClassifierParams clf =
      metrics::train_classifier(train_f.clips, labels_of(train), cfg.data.synth.K, cfg.eval.classifier);
  const double clf_acc = metrics::accuracy(clf, val_f.clips, labels_of(val));

  json report = metric_block(clf, audio_features(bank, gen_visual), ref_f);
  report["config_hash"] = config_hash(cfg);
  report["preset"] = cfg.preset;
  report["sample_counts"] = {{"generated", gen_visual.size()}, {"reference", test.samples.size()}};
  report["onset"] = {{"visual_mean_error", on_visual.mean_error},
                     {"text_mean_error", on_text.mean_error},
                     {"gap", on_text.mean_error - on_visual.mean_error},
                     {"visual_missing", on_visual.missing},
                     {"text_missing", on_text.missing}};
  report["baseline"] = metric_block(clf, audio_features(bank, gen_text), ref_f);
  report["reference_is"] = metrics::inception_score(clf.predict_proba(ref_f.clips));
  report["classifier_val_accuracy"] = clf_acc;
  write_json(report_path(run), report);
  say(opt, "evaluate: onset error visual " + fmt(on_visual.mean_error) + " text " + fmt(on_text.mean_error) +
               "; IS " + fmt(report["is"].get<double>()) + " KL " + fmt(report["kl"].get<double>()) + " FAD " +
               fmt(report["fad"].get<double>()) + " FD " + fmt(report["fd"].get<double>()));
  return report;
}

bool report_passes(const RunConfig& cfg, const json& report, std::string* why) {
  const double v = report.at("onset").at("visual_mean_error").get<double>();
  const double t = report.at("onset").at("text_mean_error").get<double>();
  std::string reason;
  if (!(v < t)) {
    reason = "visual-aligned onset error " + fmt(v) + " is not below raw-text " + fmt(t);
  } else if (t - v < cfg.eval.min_onset_gap) {
    reason = "onset gap " + fmt(t - v) + " is below the required " + fmt(cfg.eval.min_onset_gap) + " rows";
  }
  if (why) *why = reason;
  return reason.empty();
}

json run_all(const RunConfig& cfg, const fs::path& run, const Options& opt) {
  gen_data(cfg, run, opt);
  train_codec(cfg, run, opt);
  train_align(cfg, run, opt);
  train_diffusion(cfg, run, "all", opt);
  return evaluate(cfg, run, opt);
}

}  // namespace diffava::pipeline
