#include <iostream>

#include "CLI11.hpp"
#include "nxnflow/cli.hpp"
#include "nxnflow/error.hpp"

namespace nxnflow::cli {

namespace {

RunConfig merged_config(const std::string& path, const std::vector<std::string>& sets) {
  KeyValues overrides;
  for (const std::string& s : sets) overrides.push_back(parse_override(s));
  return load_run_config(path, overrides);
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"nxnflow: normalizing flows with invertible n x n convolutions"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every command");

  std::string config_path;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("-c,--config", config_path, "Config file of key = value lines");
    cmd->add_option("--set", sets, "Override a config key (key=value), applied after the file")
        ->allow_extra_args(false);
    cmd->add_option("--seed", seed, "Root seed; overrides the 'seed' key");
  };

  CLI::App* train = app.add_subcommand("train", "Train a model and write a checkpoint plus metrics CSV");
  add_common(train);
  std::string resume;
  std::optional<std::string> train_checkpoint;
  std::optional<std::string> train_metrics;
  train->add_option("--resume", resume, "Continue from this checkpoint");
  train->add_option("-o,--checkpoint", train_checkpoint, "Checkpoint path; overrides train.checkpoint");
  train->add_option("--metrics", train_metrics, "Metrics CSV path; overrides train.metrics");

  CLI::App* eval = app.add_subcommand("eval", "Report mean NLL and bits/dim of a checkpoint on a dataset");
  add_common(eval);
  std::string eval_checkpoint;
  std::optional<std::string> eval_out;
  eval->add_option("checkpoint", eval_checkpoint, "Checkpoint to evaluate")->required();
  eval->add_option("-o,--out", eval_out, "CSV output path; overrides eval.out");

  CLI::App* sample = app.add_subcommand("sample", "Draw samples from a checkpoint");
  std::string sample_checkpoint;
  std::size_t sample_count = 64;
  double temperature = 1.0;
  std::uint64_t sample_seed = 0;
  std::string sample_out;
  sample->add_option("checkpoint", sample_checkpoint, "Checkpoint to sample from")->required();
  sample->add_option("-n,--count", sample_count, "Number of samples")->capture_default_str();
  sample->add_option("-t,--temperature", temperature, "Prior standard deviation")->capture_default_str();
  sample->add_option("--seed", sample_seed, "Seed")->capture_default_str();
  sample->add_option("-o,--out", sample_out, "Output: NXNI for images (plus a .ppm montage), CSV for points")
      ->required();

  CLI::App* verify = app.add_subcommand("verify", "Run the numerical oracle suites");
  std::string suite = "all";
  std::uint64_t verify_seed = 0;
  std::string verify_out;
  verify->add_option("suite", suite, "layers, gradients, conv_equiv, normalization or all")->capture_default_str();
  verify->add_option("--seed", verify_seed, "Seed")->capture_default_str();
  verify->add_option("-o,--out", verify_out, "Also write the report here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*train) {
      RunConfig cfg = merged_config(config_path, sets);
      if (seed) cfg.seed = *seed;
      if (train_checkpoint) cfg.checkpoint = *train_checkpoint;
      if (train_metrics) cfg.metrics = *train_metrics;
      return cmd_train(cfg, TrainPaths{resume}, out, err);
    }
    if (*eval) {
      RunConfig cfg = merged_config(config_path, sets);
      if (seed) cfg.seed = *seed;
      if (eval_out) cfg.eval_out = *eval_out;
      return cmd_eval(cfg, eval_checkpoint, out, err);
    }
    if (*sample) return cmd_sample(sample_checkpoint, sample_count, temperature, sample_seed, sample_out, out, err);
    if (*verify) return cmd_verify(suite, verify_seed, verify_out, out, err);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << "\n";
    return kExitFailure;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitConfig;
}

}  // namespace nxnflow::cli
