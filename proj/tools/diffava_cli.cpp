// diffava: command-line front end for the desk-scale pipeline.
//
// Exit codes: 0 ok, 1 other failure, 2 config error, 3 data-format error,
// 4 numerical divergence, 5 acceptance-threshold failure (evaluate --assert).

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "diffava/config.hpp"
#include "diffava/errors.hpp"
#include "diffava/gradcheck.hpp"
#include "diffava/pipeline.hpp"
#include "json.hpp"

namespace {

using namespace diffava;

enum Exit { kOk = 0, kFailure = 1, kConfig = 2, kFormat = 3, kDiverged = 4, kAcceptance = 5 };

constexpr double kGradTolerance = 1e-4;

struct Common {
  std::string config_file;
  std::string preset;
  std::vector<std::string> overrides;
  std::string run = "run";
  bool force = false;
  bool quiet = false;

  RunConfig load() const {
    return load_config(config_file.empty() ? std::nullopt : std::optional<std::filesystem::path>(config_file),
                       preset.empty() ? std::nullopt : std::optional<std::string>(preset), overrides);
  }
  pipeline::Options options() const { return pipeline::Options{.force = force, .log = quiet ? nullptr : &std::cerr}; }
};

void add_common(CLI::App* app, Common& c, bool with_run = true) {
  app->add_option("-c,--config", c.config_file, "JSON config file");
  app->add_option("-p,--preset", c.preset, "desk (default) or paper-scale");
  app->add_option("-s,--set", c.overrides, "override a config value, e.g. --set align.epochs=3")->take_all();
  if (with_run) {
    app->add_option("-r,--run", c.run, "run directory holding all artifacts")->capture_default_str();
    app->add_flag("-f,--force", c.force, "accept artifacts stamped with a different config hash");
  }
  app->add_flag("-q,--quiet", c.quiet, "no progress output");
}

void print_error(const char* kind, const std::string& message) {
  std::cerr << nlohmann::json{{"error", kind}, {"message", message}}.dump() << std::endl;
}

std::vector<std::uint32_t> parse_tokens(const std::string& text) {
  std::vector<std::uint32_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const unsigned long v = std::stoul(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      out.push_back(static_cast<std::uint32_t>(v));
    } catch (const std::exception&) {
      throw ConfigError("--tokens: '" + item + "' is not a token id");
    }
  }
  if (out.empty()) throw ConfigError("--tokens: no token ids given");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Desk-scale visual-aligned text-to-audio diffusion pipeline"};
  app.require_subcommand(1);

  Common common;

  auto* gen = app.add_subcommand("gen-data", "write train/val/test datasets and the frozen encoders");
  add_common(gen, common);

  auto* align = app.add_subcommand("train-align", "train the visual-text alignment module");
  add_common(align, common);

  auto* codec = app.add_subcommand("train-codec", "train the mel <-> latent codec");
  add_common(codec, common);

  std::string variant = "all";
  auto* diff = app.add_subcommand("train-diffusion", "train the conditional denoiser(s)");
  add_common(diff, common);
  diff->add_option("--variant", variant, "visual, text, audio, or all")->capture_default_str();

  std::string tokens, data_file, sample_out = "samples.dat";
  std::size_t first = 0, count = 1;
  bool no_frames = false;
  auto* samp = app.add_subcommand("sample", "generate mels from tokens or from dataset samples");
  add_common(samp, common);
  samp->add_option("--tokens", tokens, "comma-separated token ids (raw-text condition)");
  samp->add_option("--data", data_file, "dataset file to take tokens and frame features from");
  samp->add_option("--first", first, "first dataset sample")->capture_default_str();
  samp->add_option("--count", count, "number of dataset samples")->capture_default_str();
  samp->add_flag("--no-frames", no_frames, "ignore frame features (raw-text condition)");
  samp->add_option("-o,--output", sample_out, "output dataset file")->capture_default_str();

  bool assert_thresholds = false;
  std::string report_out;
  auto* eval = app.add_subcommand("evaluate", "IS / KL / FAD / FD and onset error on the test split");
  add_common(eval, common);
  eval->add_flag("--assert", assert_thresholds, "exit 5 unless the onset criterion holds");
  eval->add_option("-o,--output", report_out, "also write the report here");

  int seeds = 10;
  auto* grad = app.add_subcommand("grad-check", "finite-difference checks of every backward pass");
  add_common(grad, common, false);
  grad->add_option("--seeds", seeds, "random instances per suite")->capture_default_str();

  auto* all = app.add_subcommand("run-all", "gen-data, train-codec, train-align, train-diffusion, evaluate");
  add_common(all, common);
  all->add_flag("--assert", assert_thresholds, "exit 5 unless the onset criterion holds");

  auto* show = app.add_subcommand("show-config", "print the resolved config and its hash");
  add_common(show, common, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfig;
  }

  try {
    const RunConfig cfg = common.load();
    const pipeline::Options opt = common.options();
    const std::filesystem::path run = common.run;

    if (*gen) {
      pipeline::gen_data(cfg, run, opt);
    } else if (*align) {
      pipeline::train_align(cfg, run, opt);
    } else if (*codec) {
      pipeline::train_codec(cfg, run, opt);
    } else if (*diff) {
      pipeline::train_diffusion(cfg, run, variant, opt);
    } else if (*samp) {
      pipeline::SampleRequest req;
      if (!tokens.empty() && !data_file.empty()) throw ConfigError("sample: give --tokens or --data, not both");
      if (!tokens.empty()) req.tokens = parse_tokens(tokens);
      if (!data_file.empty()) req.data = data_file;
      req.first = first;
      req.count = count;
      req.use_frames = !no_frames;
      pipeline::sample(cfg, run, req, sample_out, opt);
    } else if (*eval || *all) {
      const nlohmann::json report = *all ? pipeline::run_all(cfg, run, opt) : pipeline::evaluate(cfg, run, opt);
      if (!report_out.empty()) {
        std::ofstream out(report_out, std::ios::binary);
        if (!out) throw IoError("cannot write " + report_out);
        out << report.dump(2) << "\n";
      }
      std::cout << report.dump(2) << std::endl;
      std::string why;
      if (assert_thresholds && !pipeline::report_passes(cfg, report, &why)) {
        print_error("acceptance", why);
        return kAcceptance;
      }
    } else if (*grad) {
      if (seeds < 1) throw ConfigError("--seeds must be at least 1");
      bool ok = true;
      for (const auto& r : gradcheck::run_all(seeds)) {
        std::cout << r.name << ": max relative error " << r.max_relative_error << " over " << r.seeds << " seeds ("
                  << r.seconds << " s)\n";
        ok = ok && r.max_relative_error < kGradTolerance;
      }
      if (!ok) {
        print_error("gradient", "a suite exceeded relative error " + std::to_string(kGradTolerance));
        return kFailure;
      }
    } else if (*show) {
      std::cout << to_json(cfg).dump(2) << "\nconfig_hash " << config_hash(cfg) << std::endl;
    }
    return kOk;
  } catch (const ConfigError& e) {
    print_error("config", e.what());
    return kConfig;
  } catch (const FormatError& e) {
    print_error("data-format", e.what());
    return kFormat;
  } catch (const IoError& e) {
    print_error("data-format", e.what());
    return kFormat;
  } catch (const nlohmann::json::exception& e) {
    print_error("data-format", e.what());
    return kFormat;
  } catch (const NumericalDivergence& e) {
    print_error("numerical-divergence", e.what());
    return kDiverged;
  } catch (const std::exception& e) {
    print_error("failure", e.what());
    return kFailure;
  }
}
