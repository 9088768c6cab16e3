#include "scorelab/config.hpp"

#include "scorelab/errors.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace scorelab {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::stringstream in(value);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename T>
T parse_integer(const std::string& key, const std::string& value) {
  T out{};
  const auto [end, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || end != value.data() + value.size()) {
    throw ParameterError("config: '" + key + "' expects an integer, got '" + value + "'");
  }
  return out;
}

double parse_real(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double out = std::stod(value, &used);
    if (used == value.size()) return out;
  } catch (const std::exception&) {
  }
  throw ParameterError("config: '" + key + "' expects a number, got '" + value + "'");
}

std::string real(double v) {
  char buffer[32];
  std::snprintf(buffer, sizeof buffer, "%.17g", v);
  return buffer;
}

std::string_view to_string(ModelChoice m) {
  switch (m) {
    case ModelChoice::Auto: return "auto";
    case ModelChoice::Energy: return "energy";
    case ModelChoice::Score: return "score";
  }
  return "auto";
}

}  // namespace

std::string_view to_string(SdeChoice choice) {
  switch (choice) {
    case SdeChoice::None: return "none";
    case SdeChoice::VE: return "ve";
    case SdeChoice::SubVP: return "subvp";
  }
  return "none";
}

SdeChoice parse_sde(std::string_view name) {
  if (name == "none") return SdeChoice::None;
  if (name == "ve") return SdeChoice::VE;
  if (name == "subvp") return SdeChoice::SubVP;
  throw ParameterError("unknown sde '" + std::string(name) + "'");
}

void set_config_value(RunConfig& c, const std::string& key, const std::string& value) {
  if (key == "method") {
    c.method = parse_objective(value);
  } else if (key == "sde") {
    c.sde = parse_sde(value);
  } else if (key == "dataset") {
    c.dataset = parse_dataset(value);
  } else if (key == "model") {
    if (value == "auto") c.model = ModelChoice::Auto;
    else if (value == "energy") c.model = ModelChoice::Energy;
    else if (value == "score") c.model = ModelChoice::Score;
    else throw ParameterError("config: unknown model '" + value + "'");
  } else if (key == "hidden") {
    c.hidden.clear();
    for (const std::string& w : split_list(value)) c.hidden.push_back(parse_integer<Index>(key, w));
  } else if (key == "activation") {
    if (value == "tanh") c.activation = Activation::Tanh;
    else if (value == "softplus") c.activation = Activation::Softplus;
    else throw ParameterError("config: unknown activation '" + value + "'");
  } else if (key == "seed") {
    c.seed = parse_integer<std::uint64_t>(key, value);
  } else if (key == "iters") {
    c.iters = parse_integer<long>(key, value);
  } else if (key == "batch") {
    c.batch = parse_integer<Index>(key, value);
  } else if (key == "lr") {
    c.lr = parse_real(key, value);
  } else if (key == "momentum") {
    c.momentum = parse_real(key, value);
  } else if (key == "sigma") {
    c.sigma = parse_real(key, value);
  } else if (key == "epsilon") {
    c.epsilon = parse_real(key, value);
  } else if (key == "gamma") {
    c.gamma = parse_real(key, value);
  } else if (key == "mc_samples") {
    c.mc_samples = parse_integer<int>(key, value);
  } else if (key == "steps") {
    c.steps = parse_integer<int>(key, value);
  } else if (key == "langevin_eps") {
    c.langevin_eps = parse_real(key, value);
  } else if (key == "samples") {
    c.samples = parse_integer<long>(key, value);
  } else if (key == "bins") {
    c.bins = parse_integer<Index>(key, value);
  } else if (key == "checkpoint_every") {
    c.checkpoint_every = parse_integer<long>(key, value);
  } else if (key == "bench_steps") {
    c.bench_steps = parse_integer<long>(key, value);
  } else if (key == "bench_methods") {
    c.bench_methods.clear();
    for (const std::string& m : split_list(value)) c.bench_methods.push_back(parse_objective(m));
  } else if (key == "out") {
    c.out = value;
  } else {
    throw ParameterError("config: unknown key '" + key + "'");
  }
}

RunConfig parse_config(const std::string& text, RunConfig base) {
  std::stringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string content = trim(line);
    if (content.empty()) continue;
    const auto eq = content.find('=');
    if (eq == std::string::npos) {
      throw ParameterError("config line " + std::to_string(number) + ": expected 'key = value'");
    }
    const std::string key = trim(std::string_view(content).substr(0, eq));
    const std::string value = trim(std::string_view(content).substr(eq + 1));
    if (key.empty()) throw ParameterError("config line " + std::to_string(number) + ": missing key");
    try {
      set_config_value(base, key, value);
    } catch (const ParameterError& e) {
      throw ParameterError("config line " + std::to_string(number) + ": " + e.what());
    }
  }
  return base;
}

RunConfig load_config(const std::filesystem::path& path, RunConfig base) {
  std::ifstream file(path);
  if (!file) throw IoError("cannot read config " + path.string());
  std::stringstream text;
  text << file.rdbuf();
  return parse_config(text.str(), std::move(base));
}

std::string print_config(const RunConfig& c) {
  std::string out;
  auto line = [&](const char* key, const std::string& value) { out += std::string(key) + " = " + value + "\n"; };
  std::string hidden;
  for (std::size_t i = 0; i < c.hidden.size(); ++i) hidden += (i ? "," : "") + std::to_string(c.hidden[i]);
  std::string methods;
  for (std::size_t i = 0; i < c.bench_methods.size(); ++i) {
    methods += (i ? "," : "") + std::string(to_string(c.bench_methods[i]));
  }
  line("method", std::string(to_string(c.method)));
  line("sde", std::string(to_string(c.sde)));
  line("dataset", std::string(to_string(c.dataset)));
  line("model", std::string(to_string(c.model)));
  line("hidden", hidden);
  line("activation", c.activation == Activation::Tanh ? "tanh" : "softplus");
  line("seed", std::to_string(c.seed));
  line("iters", std::to_string(c.iters));
  line("batch", std::to_string(c.batch));
  line("lr", real(c.lr));
  line("momentum", real(c.momentum));
  line("sigma", real(c.sigma));
  line("epsilon", real(c.epsilon));
  line("gamma", real(c.gamma));
  line("mc_samples", std::to_string(c.mc_samples));
  line("steps", std::to_string(c.steps));
  line("langevin_eps", real(c.langevin_eps));
  line("samples", std::to_string(c.samples));
  line("bins", std::to_string(c.bins));
  line("checkpoint_every", std::to_string(c.checkpoint_every));
  line("bench_steps", std::to_string(c.bench_steps));
  line("bench_methods", methods);
  line("out", c.out.string());
  return out;
}

void RunConfig::validate() const {
  objective().validate();
  net_config().validate();
  if (iters < 0) throw ParameterError("iters must be >= 0");
  if (batch < 1) throw ParameterError("batch must be >= 1");
  if (!(lr >= 0.0)) throw ParameterError("lr must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ParameterError("momentum must be in [0, 1)");
  if (steps < 1) throw ParameterError("steps must be >= 1");
  if (!(langevin_eps > 0.0)) throw ParameterError("langevin_eps must be > 0");
  if (samples < 0) throw ParameterError("samples must be >= 0");
  if (bins < 2) throw ParameterError("bins must be >= 2");
  if (checkpoint_every < 1) throw ParameterError("checkpoint_every must be >= 1");
  if (sde != SdeChoice::None && method != ObjectiveKind::DSM && method != ObjectiveKind::LCSS &&
      method != ObjectiveKind::LCSS_GAMMA && method != ObjectiveKind::SSM && method != ObjectiveKind::FDSSM) {
    throw ParameterError("method '" + std::string(to_string(method)) + "' has no time-integrated form");
  }
}

NetMode RunConfig::net_mode() const {
  if (model == ModelChoice::Energy) return NetMode::Energy;
  if (model == ModelChoice::Score) return NetMode::Score;
  return sde == SdeChoice::None ? NetMode::Energy : NetMode::Score;
}

MlpConfig RunConfig::net_config() const {
  const bool conditional = sde != SdeChoice::None;
  MlpConfig net = net_mode() == NetMode::Energy ? MlpConfig::energy(2, hidden, conditional)
                                                : MlpConfig::score(2, hidden, conditional);
  net.activation = activation;
  return net;
}

ObjectiveSpec RunConfig::objective() const {
  ObjectiveSpec spec;
  spec.kind = method;
  spec.sigma = sigma;
  spec.epsilon = epsilon;
  spec.gamma = gamma;
  spec.mc_samples = mc_samples;
  return spec;
}

std::optional<SdeSchedule> RunConfig::schedule() const {
  switch (sde) {
    case SdeChoice::VE: return SdeSchedule::ve();
    case SdeChoice::SubVP: return SdeSchedule::subvp();
    case SdeChoice::None: break;
  }
  return std::nullopt;
}

TrainerOptions RunConfig::trainer_options() const {
  TrainerOptions options;
  options.objective = objective();
  options.sde = schedule();
  options.net = net_config();
  options.mode = net_mode();
  options.data = make_sampler(dataset);
  options.batch = batch;
  options.lr = lr;
  options.momentum = momentum;
  options.seed = seed;
  return options;
}

}  // namespace scorelab
