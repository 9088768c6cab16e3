#pragma once

#include "scorelab/objectives.hpp"
#include "scorelab/score_net.hpp"
#include "scorelab/training.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace scorelab {

enum class SdeChoice { None, VE, SubVP };
enum class ModelChoice { Auto, Energy, Score };

/// Every parameter of a run. Text form: one "key = value" per line, "#"
/// starts a comment; print() emits every key in a fixed order.
struct RunConfig {
  ObjectiveKind method = ObjectiveKind::LCSS;
  SdeChoice sde = SdeChoice::None;
  DatasetKind dataset = DatasetKind::Checkerboard;
  ModelChoice model = ModelChoice::Auto;
  std::vector<Index> hidden{300, 300};
  Activation activation = Activation::Tanh;
  std::uint64_t seed = 0;
  long iters = 20000;
  Index batch = 10000;
  double lr = 1e-3;
  double momentum = 0.0;
  double sigma = 0.1;
  double epsilon = 0.1;
  double gamma = 1.0;
  int mc_samples = 1;
  int steps = 1000;
  double langevin_eps = 0.1;
  long samples = 10000;
  Index bins = 200;
  long checkpoint_every = 1000;
  long bench_steps = 500;
  std::vector<ObjectiveKind> bench_methods{ObjectiveKind::SSM, ObjectiveKind::FDSSM, ObjectiveKind::DSM,
                                           ObjectiveKind::LCSS};
  std::filesystem::path out = "out";

  bool operator==(const RunConfig&) const = default;

  void validate() const;

  /// Energy nets without an SDE, score nets with one, unless set explicitly.
  NetMode net_mode() const;
  MlpConfig net_config() const;
  ObjectiveSpec objective() const;
  std::optional<SdeSchedule> schedule() const;
  TrainerOptions trainer_options() const;
};

/// Throws ParameterError naming the line on malformed input or unknown keys.
RunConfig parse_config(const std::string& text, RunConfig base = {});
RunConfig load_config(const std::filesystem::path& path, RunConfig base = {});
std::string print_config(const RunConfig& config);

/// Applies one key/value pair (the same keys as the text form).
void set_config_value(RunConfig& config, const std::string& key, const std::string& value);

std::string_view to_string(SdeChoice choice);
SdeChoice parse_sde(std::string_view name);

}  // namespace scorelab
