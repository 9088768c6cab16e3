#include "scorelab/score_net.hpp"

#include "scorelab/errors.hpp"
#include "scorelab/random.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

namespace scorelab {

namespace {

constexpr std::uint32_t kCheckpointVersion = 1;
constexpr char kMagic[4] = {'S', 'M', 'L', 'B'};
constexpr std::size_t kHeaderBytes = 20;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return v;
}

void put_f64(std::vector<std::uint8_t>& out, double value) {
  std::uint64_t bits;
  std::memcpy(&bits, &value, sizeof bits);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

double get_f64(const std::uint8_t* p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  double value;
  std::memcpy(&value, &bits, sizeof value);
  return value;
}

}  // namespace

// ---------------------------------------------------------------------------
// MlpConfig

Index MlpConfig::param_count() const {
  Index count = 0;
  Index fan_in = first_layer_inputs();
  for (Index width : hidden) {
    count += (fan_in + 1) * width;
    fan_in = width;
  }
  return count + (fan_in + 1) * output_dim;
}

void MlpConfig::validate() const {
  if (input_dim <= 0) throw ParameterError("input_dim must be positive");
  if (output_dim <= 0) throw ParameterError("output_dim must be positive");
  for (Index width : hidden) {
    if (width <= 0) throw ParameterError("hidden widths must be positive");
  }
}

MlpConfig MlpConfig::score(Index dim, std::vector<Index> hidden, bool time_conditional) {
  return MlpConfig{dim, std::move(hidden), Activation::Tanh, dim, time_conditional};
}

MlpConfig MlpConfig::energy(Index dim, std::vector<Index> hidden, bool time_conditional) {
  return MlpConfig{dim, std::move(hidden), Activation::Tanh, 1, time_conditional};
}

// ---------------------------------------------------------------------------
// ScoreNet

ScoreNet::ScoreNet(MlpConfig config, NetMode mode) : config_(std::move(config)), mode_(mode) {
  config_.validate();
  if (mode_ == NetMode::Score && config_.output_dim != config_.input_dim) {
    throw ParameterError("score mode requires output_dim == input_dim");
  }
  if (mode_ == NetMode::Energy && config_.output_dim != 1) {
    throw ParameterError("energy mode requires output_dim == 1");
  }
  Index fan_in = config_.first_layer_inputs();
  auto add_layer = [&](Index fan_out) {
    layers_.push_back(DenseLayer{Matrix::Zero(fan_out, fan_in), Matrix::Zero(1, fan_out)});
    fan_in = fan_out;
  };
  for (Index width : config_.hidden) add_layer(width);
  add_layer(config_.output_dim);
}

Vector ScoreNet::params() const {
  Vector theta(param_count());
  Index offset = 0;
  for (const DenseLayer& layer : layers_) {
    theta.segment(offset, layer.weight.size()) = layer.weight.reshaped<Eigen::RowMajor>();
    offset += layer.weight.size();
    theta.segment(offset, layer.bias.size()) = layer.bias.reshaped<Eigen::RowMajor>();
    offset += layer.bias.size();
  }
  return theta;
}

void ScoreNet::set_params(const Vector& theta) {
  if (theta.size() != param_count()) {
    throw DimensionError("parameter vector has " + std::to_string(theta.size()) + " entries, net expects " +
                         std::to_string(param_count()));
  }
  Index offset = 0;
  for (DenseLayer& layer : layers_) {
    layer.weight.reshaped<Eigen::RowMajor>() = theta.segment(offset, layer.weight.size());
    offset += layer.weight.size();
    layer.bias.reshaped<Eigen::RowMajor>() = theta.segment(offset, layer.bias.size());
    offset += layer.bias.size();
  }
}

ScoreNet init(const MlpConfig& config, NetMode mode, std::uint64_t seed) {
  ScoreNet net(config, mode);
  Rng rng(seed, 0);
  for (DenseLayer& layer : net.layers()) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(layer.weight.cols()));
    for (Index i = 0; i < layer.weight.size(); ++i) layer.weight.data()[i] = rng.uniform(-bound, bound);
  }
  return net;
}

// ---------------------------------------------------------------------------
// BoundNet

BoundNet::BoundNet(const ScoreNet& net, Tape& tape, bool trainable) : net_(&net), tape_(&tape) {
  for (const DenseLayer& layer : net.layers()) {
    if (trainable) {
      params_.push_back(tape.leaf(layer.weight));
      params_.push_back(tape.leaf(layer.bias));
    } else {
      params_.emplace_back(layer.weight);
      params_.emplace_back(layer.bias);
    }
  }
}

Tensor BoundNet::output(const Tensor& x, const std::optional<Tensor>& t) const {
  const MlpConfig& cfg = net_->config();
  if (x.cols() != cfg.input_dim) {
    throw DimensionError("input has " + std::to_string(x.cols()) + " columns, net expects " +
                         std::to_string(cfg.input_dim));
  }
  if (cfg.time_conditional != t.has_value()) {
    throw ContractViolation(cfg.time_conditional ? "time-conditional net called without t"
                                                 : "t given to a net without time conditioning");
  }
  Tensor h = x;
  if (t) {
    if (t->rows() != x.rows() || t->cols() != 1) throw DimensionError("t must be a (batch x 1) column");
    h = concat({x, *t}, 1);
  }
  const std::size_t layers = params_.size() / 2;
  for (std::size_t l = 0; l < layers; ++l) {
    h = add_bias(matmul(h, params_[2 * l], false, true), params_[2 * l + 1]);
    if (l + 1 < layers) h = cfg.activation == Activation::Tanh ? tanh(h) : softplus(h);
  }
  return h;
}

Tensor BoundNet::score(const Tensor& x, const std::optional<Tensor>& t) const {
  if (net_->mode() == NetMode::Score) return output(x, t);
  const Tensor input = x.on_tape() ? x : tape_->leaf(x.value());
  const Tensor energy = output(input, t);
  const Tensor wrt[] = {input};
  return tape_->backward(sum(energy), wrt, tape_->recording())[0];
}

Vector BoundNet::gradient(const Tensor& loss) const {
  const auto grads = tape_->backward(loss, params_, false);
  Vector flat(net_->param_count());
  Index offset = 0;
  for (const Tensor& g : grads) {
    flat.segment(offset, g.value().size()) = g.value().reshaped<Eigen::RowMajor>();
    offset += g.value().size();
  }
  return flat;
}

Matrix evaluate_score(const ScoreNet& net, const Matrix& x, const std::optional<Vector>& t) {
  Tape tape;
  const BoundNet bound(net, tape, false);
  std::optional<Tensor> time;
  if (t) time = Tensor(Matrix(*t));
  if (net.mode() == NetMode::Score) return bound.output(Tensor(x), time).value();
  const Tensor input = tape.leaf(x);
  const Tensor wrt[] = {input};
  return tape.backward(sum(bound.output(input, time)), wrt, false)[0].value();
}

Matrix evaluate_output(const ScoreNet& net, const Matrix& x, const std::optional<Vector>& t) {
  Tape tape;
  const BoundNet bound(net, tape, false);
  std::optional<Tensor> time;
  if (t) time = Tensor(Matrix(*t));
  return bound.output(Tensor(x), time).value();
}

// ---------------------------------------------------------------------------
// Optimisation

void sgd_step(ScoreNet& net, const Vector& grads, double lr) {
  Sgd(lr).step(net, grads);
}

Sgd::Sgd(double lr, double momentum) : lr_(lr), momentum_(momentum) {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ParameterError("learning rate must be finite and >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ParameterError("momentum must lie in [0, 1)");
}

void Sgd::step(ScoreNet& net, const Vector& grads) {
  if (grads.size() != net.param_count()) {
    throw DimensionError("gradient has " + std::to_string(grads.size()) + " entries, net has " +
                         std::to_string(net.param_count()));
  }
  if (!grads.allFinite()) throw NonFiniteError("non-finite gradient");
  Vector theta = net.params();
  if (momentum_ > 0.0) {
    if (velocity_.size() != grads.size()) velocity_ = Vector::Zero(grads.size());
    velocity_ = momentum_ * velocity_ + grads;
    theta -= lr_ * velocity_;
  } else {
    theta -= lr_ * grads;
  }
  net.set_params(theta);
}

// ---------------------------------------------------------------------------
// Checkpoints

std::vector<std::uint8_t> encode_checkpoint(const ScoreNet& net) {
  const Vector theta = net.params();
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  out.reserve(kHeaderBytes + 8 * static_cast<std::size_t>(theta.size()));
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(theta.size()));
  put_u32(out, static_cast<std::uint32_t>(net.config().input_dim));
  put_u32(out, net.config().time_conditional ? 1U : 0U);
  for (Index i = 0; i < theta.size(); ++i) put_f64(out, theta[i]);
  return out;
}

ScoreNet decode_checkpoint(const std::vector<std::uint8_t>& bytes, const MlpConfig& config, NetMode mode) {
  if (bytes.size() < kHeaderBytes || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw CheckpointError("not a checkpoint (bad magic)");
  }
  const std::uint32_t version = get_u32(bytes.data() + 4);
  const std::uint32_t count = get_u32(bytes.data() + 8);
  const std::uint32_t input_dim = get_u32(bytes.data() + 12);
  const std::uint32_t time_flag = get_u32(bytes.data() + 16);
  if (version != kCheckpointVersion) throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  if (bytes.size() != kHeaderBytes + 8 * static_cast<std::size_t>(count)) {
    throw CheckpointError("checkpoint size does not match its parameter count");
  }
  ScoreNet net(config, mode);
  if (static_cast<Index>(count) != net.param_count() || static_cast<Index>(input_dim) != config.input_dim ||
      (time_flag != 0) != config.time_conditional) {
    throw CheckpointError("checkpoint-incompatible: file has " + std::to_string(count) + " parameters, input dim " +
                          std::to_string(input_dim) + ", time flag " + std::to_string(time_flag) +
                          "; configuration expects " + std::to_string(net.param_count()) + ", " +
                          std::to_string(config.input_dim) + ", " + (config.time_conditional ? "1" : "0"));
  }
  Vector theta(count);
  for (std::uint32_t i = 0; i < count; ++i) theta[i] = get_f64(bytes.data() + kHeaderBytes + 8 * i);
  net.set_params(theta);
  return net;
}

void save_checkpoint(const ScoreNet& net, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(net);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

ScoreNet load_checkpoint(const std::filesystem::path& path, const MlpConfig& config, NetMode mode) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes, config, mode);
}

}  // namespace scorelab
