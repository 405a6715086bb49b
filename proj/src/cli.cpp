// SPDX-License-Identifier: Apache-2.0

#include <exception>
#include <ostream>

#include <CLI11.hpp>

#include "pcseg/experiment.hpp"

namespace pcseg {

namespace fs = std::filesystem;

namespace {

struct Options {
  std::string config;
  std::string mode;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<unsigned> threads;
  std::optional<double> z_min;
  bool no_frontal_filter = false;
  std::string checkpoint;
  std::string spec;
  std::string data;
  std::vector<std::string> runs;
};

void add_common(CLI::App* cmd, Options& o) {
  cmd->add_option("--config", o.config, "experiment config (JSON)");
  cmd->add_option("--mode", o.mode,
                  "baseline | weighted | incremental | weighted-incremental");
  cmd->add_option("--seed", o.seed, "training seed");
  cmd->add_option("--threads", o.threads, "worker threads");
  cmd->add_option("--z-min", o.z_min, "ground filter height (sensor frame, metres)");
  cmd->add_flag("--no-frontal-filter", o.no_frontal_filter, "keep points behind the sensor");
}

ExperimentConfig resolve(const Options& o) {
  ExperimentConfig c = o.config.empty() ? default_config() : load_config(o.config);
  CliOverrides ov;
  if (!o.mode.empty()) ov.mode = parse_mode(o.mode);
  ov.seed = o.seed;
  if (!o.out.empty()) ov.out = o.out;
  ov.threads = o.threads;
  ov.z_min = o.z_min;
  ov.no_frontal_filter = o.no_frontal_filter;
  apply_overrides(c, ov);
  return c;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Point-cloud segmentation with class weighting and class curricula", "pcseg"};
  app.require_subcommand(1);
  Options o;

  auto* stats = app.add_subcommand("stats", "class frequencies and loss weights of a dataset");
  add_common(stats, o);

  auto* synth = app.add_subcommand("synth", "write a synthetic dataset in KITTI layout");
  synth->add_option("--spec", o.spec, "dataset block (JSON)")->required();
  synth->add_option("--seed", o.seed, "generator seed (overrides the file)");
  synth->add_option("--out", o.out, "output directory")->required();

  auto* train = app.add_subcommand("train", "train and evaluate one run");
  add_common(train, o);
  train->add_option("--out", o.out, "run directory");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common(eval, o);
  eval->add_option("--checkpoint", o.checkpoint, "checkpoint file")->required();
  eval->add_option("--out", o.out, "directory for the IoU tables");
  eval->add_option("--data", o.data, "KITTI-layout directory to evaluate on");

  auto* compare = app.add_subcommand("compare", "side-by-side IoU report of several runs");
  compare->add_option("runs", o.runs, "run directories")->required()->expected(2, -1);
  compare->add_option("--out", o.out, "directory for compare.csv and compare.txt");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (stats->parsed()) {
      cmd_stats(resolve(o), out);
    } else if (synth->parsed()) {
      cmd_synth(o.spec, o.seed, o.out, out);
    } else if (train->parsed()) {
      const TrainSummary s = cmd_train(resolve(o), out);
      if (s.error) {
        err << "error: " << *s.error << "\n";
        return exit_code_for(s.error_kind);
      }
    } else if (eval->parsed()) {
      std::optional<fs::path> dir;
      if (!o.out.empty()) dir = o.out;
      Options no_out = o;
      no_out.out.clear();
      ExperimentConfig config = resolve(no_out);
      if (!o.data.empty()) {
        DatasetSource source;
        source.kind = DatasetSource::Kind::kKitti;
        source.dir = o.data;
        config.eval_dataset = source;
      }
      cmd_eval(o.checkpoint, config, dir, out);
    } else if (compare->parsed()) {
      std::vector<fs::path> runs(o.runs.begin(), o.runs.end());
      std::optional<fs::path> dir;
      if (!o.out.empty()) dir = o.out;
      cmd_compare(runs, dir, out);
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kExitUnexpected;
  }
  return kExitOk;
}

}  // namespace pcseg
