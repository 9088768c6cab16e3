#include "scorelab/commands.hpp"
#include "scorelab/config.hpp"
#include "scorelab/errors.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <map>
#include <optional>
#include <string>

namespace {

using namespace scorelab;

struct Overrides {
  std::map<std::string, std::string> values;
  std::string config_file;
  std::string checkpoint;

  void add_to(CLI::App& app) {
    auto flag = [&](const char* name, const char* key, const char* help) {
      app.add_option_function<std::string>(
          name, [this, key](const std::string& v) { values[key] = v; }, help);
    };
    flag("--method", "method", "sm|ssm|fdssm|dsm|lcs|lcss");
    flag("--sde", "sde", "ve|subvp|none");
    flag("--dataset", "dataset", "checkerboard|gmm");
    flag("--seed", "seed", "run seed");
    flag("--iters", "iters", "training steps");
    flag("--batch", "batch", "minibatch size");
    flag("--lr", "lr", "learning rate");
    flag("--sigma", "sigma", "noise std for DSM / LCSS");
    flag("--epsilon", "epsilon", "projection scale for SSM / FD-SSM");
    flag("--gamma", "gamma", "LCSS balancing coefficient");
    flag("--steps", "steps", "sampler steps");
    flag("--out", "out", "output directory");
    app.add_option("--config", config_file, "config file (flags override it)");
  }

  RunConfig resolve() const {
    RunConfig config = config_file.empty() ? RunConfig{} : load_config(config_file);
    for (const auto& [key, value] : values) set_config_value(config, key, value);
    config.validate();
    return config;
  }

  std::filesystem::path checkpoint_for(const RunConfig& config) const {
    return checkpoint.empty() ? checkpoint_path(config) : std::filesystem::path(checkpoint);
  }
};

}  // namespace

int main(int argc, char** argv) {
  scorelab::tune_allocator();
  CLI::App app{"Score-matching laboratory"};
  app.require_subcommand(1);

  Overrides train_args, sample_args, eval_args, bench_args;
  CLI::App* train = app.add_subcommand("train", "train a model and write a checkpoint");
  CLI::App* sample = app.add_subcommand("sample", "draw samples from a checkpoint");
  CLI::App* eval = app.add_subcommand("eval", "measure a checkpoint against the dataset");
  CLI::App* bench = app.add_subcommand("bench", "time optimisation steps per method");
  CLI::App* validate = app.add_subcommand("validate", "run the invariant suite");
  train_args.add_to(*train);
  sample_args.add_to(*sample);
  eval_args.add_to(*eval);
  bench_args.add_to(*bench);
  sample->add_option("--checkpoint", sample_args.checkpoint, "checkpoint (default <out>/checkpoint.smlb)");
  eval->add_option("--checkpoint", eval_args.checkpoint, "checkpoint (default <out>/checkpoint.smlb)");
  std::optional<long> samples;
  sample->add_option("--samples", samples, "number of samples");
  std::uint64_t validate_seed = 0;
  validate->add_option("--seed", validate_seed, "seed for the Monte Carlo checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*train) return cmd_train(train_args.resolve(), std::cout);
    if (*sample) {
      RunConfig config = sample_args.resolve();
      if (samples) config.samples = *samples;
      return cmd_sample(config, sample_args.checkpoint_for(config), std::cout);
    }
    if (*eval) {
      const RunConfig config = eval_args.resolve();
      return cmd_eval(config, eval_args.checkpoint_for(config), std::cout);
    }
    if (*bench) return cmd_bench(bench_args.resolve(), std::cout);
    if (*validate) return cmd_validate({validate_seed, {}}, std::cout);
  } catch (const ParameterError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}
