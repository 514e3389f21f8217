#include <CLI11.hpp>
#include <json.hpp>

#include <iostream>
#include <optional>
#include <string>

#include "loopgraph/pipeline.hpp"

namespace {

struct GlobalOpts {
  std::string config_path;
  std::string out_dir = ".";
  std::optional<uint64_t> seed;
  std::optional<int> workers;
};

lg::PipelineConfig load_config(const GlobalOpts& opts) {
  if (opts.config_path.empty()) {
    throw lg::ConfigError("--config is required for this command");
  }
  lg::PipelineConfig config = lg::PipelineConfig::from_file(opts.config_path);
  if (opts.seed) {
    config.seed = *opts.seed;
    config.training.seed = *opts.seed;
    config.synth.seed = *opts.seed;
    config.ransac.seed = *opts.seed;
  }
  if (opts.workers) config.workers = *opts.workers;
  return config;
}

int fail_json(const std::string& code, const std::string& message) {
  nlohmann::json j;
  j["error"] = code;
  j["message"] = message;
  std::cerr << j.dump() << "\n";
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Graph-consensus visual loop closure detection pipeline"};
  app.require_subcommand(1);

  GlobalOpts opts;
  app.add_option("--config", opts.config_path, "Pipeline configuration file");
  app.add_option("--out", opts.out_dir, "Working/output directory");
  uint64_t seed_value = 0;
  auto* seed_opt = app.add_option("--seed", seed_value, "Override the configured seed");
  int workers_value = 0;
  auto* workers_opt =
      app.add_option("--workers", workers_value, "Worker thread count (0 = default)");

  auto* cmd_synth = app.add_subcommand("synth", "Generate a synthetic keyframe world");
  auto* cmd_fit = app.add_subcommand("fit-vocab", "Fit the VLAD vocabulary");
  auto* cmd_extract = app.add_subcommand("extract-vlad", "Compute global descriptors");
  auto* cmd_index = app.add_subcommand("index", "Build the training descriptor index");
  auto* cmd_retrieve = app.add_subcommand("retrieve", "Build maximum-similarity cliques");
  auto* cmd_train = app.add_subcommand("train", "Train the edge scorer");
  auto* cmd_infer = app.add_subcommand("infer", "Score query edges of the eval cliques");
  auto* cmd_verify = app.add_subcommand("verify", "Geometrically verify top candidates");
  auto* cmd_eval = app.add_subcommand("eval", "Evaluate scores against ground truth");
  bool do_sweep = false;
  cmd_eval->add_flag("--sweep", do_sweep,
                     "Also run the candidate-fraction sweep from the config");
  auto* cmd_plot = app.add_subcommand("plot", "Render SVG plots from CSV artifacts");
  std::string plot_curve, plot_sweep_csv;
  cmd_plot->add_option("--curve", plot_curve, "PR-curve CSV to plot");
  cmd_plot->add_option("--sweep-file", plot_sweep_csv, "Sweep CSV to plot");

  CLI11_PARSE(app, argc, argv);
  if (*seed_opt) opts.seed = seed_value;
  if (*workers_opt) opts.workers = workers_value;

  try {
    if (cmd_plot->parsed()) {
      if (plot_curve.empty() && plot_sweep_csv.empty()) {
        throw lg::ConfigError("plot requires --curve and/or --sweep-file");
      }
      if (!plot_curve.empty()) lg::plot_pr_curve(plot_curve, opts.out_dir);
      if (!plot_sweep_csv.empty()) lg::plot_sweep(plot_sweep_csv, opts.out_dir);
      return 0;
    }

    lg::Pipeline pipeline(load_config(opts), opts.out_dir);
    if (cmd_synth->parsed()) {
      pipeline.synth();
    } else if (cmd_fit->parsed()) {
      pipeline.fit_vocab();
    } else if (cmd_extract->parsed()) {
      pipeline.extract_vlad();
    } else if (cmd_index->parsed()) {
      pipeline.build_index_stage();
    } else if (cmd_retrieve->parsed()) {
      pipeline.retrieve();
    } else if (cmd_train->parsed()) {
      pipeline.train_stage();
    } else if (cmd_infer->parsed()) {
      pipeline.infer();
    } else if (cmd_verify->parsed()) {
      pipeline.verify();
    } else if (cmd_eval->parsed()) {
      pipeline.eval();
      if (do_sweep) {
        if (pipeline.config().sweep_fractions.empty()) {
          throw lg::ConfigError("--sweep requires [evaluation].sweep_fractions");
        }
        pipeline.sweep(pipeline.config().sweep_fractions);
      }
    }
    return 0;
  } catch (const lg::Error& e) {
    return fail_json(e.code(), e.what());
  } catch (const std::exception& e) {
    return fail_json("internal", e.what());
  }
}
