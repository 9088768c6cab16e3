#pragma once

#include "scorelab/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

namespace scorelab {

enum class Activation { Tanh, Softplus };
/// Score: the network output is s(x). Energy: the network output is a scalar
/// f(x) and the score is its input gradient.
enum class NetMode { Score, Energy };

struct MlpConfig {
  Index input_dim = 2;
  std::vector<Index> hidden{300, 300};
  Activation activation = Activation::Tanh;
  Index output_dim = 1;
  /// Appends one conditioning feature (the time embedding) to the input.
  bool time_conditional = false;

  Index first_layer_inputs() const { return input_dim + (time_conditional ? 1 : 0); }
  /// Σ (fan_in + 1) * fan_out over layers.
  Index param_count() const;
  void validate() const;

  static MlpConfig score(Index dim, std::vector<Index> hidden, bool time_conditional = false);
  static MlpConfig energy(Index dim, std::vector<Index> hidden, bool time_conditional = false);
};

struct DenseLayer {
  Matrix weight;  // fan_out x fan_in
  Matrix bias;    // 1 x fan_out
};

class ScoreNet {
 public:
  /// All parameters zero.
  ScoreNet(MlpConfig config, NetMode mode);

  const MlpConfig& config() const { return config_; }
  NetMode mode() const { return mode_; }
  Index data_dim() const { return config_.input_dim; }
  Index param_count() const { return config_.param_count(); }

  /// Flat parameter vector: per layer, the weight in row-major order then the bias.
  Vector params() const;
  void set_params(const Vector& theta);

  std::vector<DenseLayer>& layers() { return layers_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }

 private:
  MlpConfig config_;
  NetMode mode_;
  std::vector<DenseLayer> layers_;
};

/// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero; deterministic in `seed`.
ScoreNet init(const MlpConfig& config, NetMode mode, std::uint64_t seed);

/// A ScoreNet whose parameters are registered on a tape. With `trainable`
/// false the parameters enter as constants (cheaper for pure evaluation).
class BoundNet {
 public:
  BoundNet(const ScoreNet& net, Tape& tape, bool trainable = true);

  /// Raw network output for a batch x (B x d); `t` is the B x 1 conditioning
  /// feature and must be given exactly when the net is time-conditional.
  Tensor output(const Tensor& x, const std::optional<Tensor>& t = std::nullopt) const;

  /// Score s(x) (B x d). In energy mode this is the recorded input gradient
  /// of sum_b f(x_b), so it stays differentiable in both x and theta.
  Tensor score(const Tensor& x, const std::optional<Tensor>& t = std::nullopt) const;

  const std::vector<Tensor>& parameters() const { return params_; }
  /// d loss / d theta in the flat parameter layout.
  Vector gradient(const Tensor& loss) const;

  const ScoreNet& net() const { return *net_; }
  Tape& tape() const { return *tape_; }

 private:
  const ScoreNet* net_;
  Tape* tape_;
  std::vector<Tensor> params_;  // w0, b0, w1, b1, ...
};

/// Score values for a batch, without keeping any graph.
Matrix evaluate_score(const ScoreNet& net, const Matrix& x, const std::optional<Vector>& t = std::nullopt);
/// Network outputs for a batch (energies in energy mode).
Matrix evaluate_output(const ScoreNet& net, const Matrix& x, const std::optional<Vector>& t = std::nullopt);

/// theta <- theta - lr * grads. Rejects non-finite gradients.
void sgd_step(ScoreNet& net, const Vector& grads, double lr);

/// SGD with optional heavy-ball momentum (off by default).
class Sgd {
 public:
  explicit Sgd(double lr, double momentum = 0.0);
  void step(ScoreNet& net, const Vector& grads);
  double lr() const { return lr_; }
  double momentum() const { return momentum_; }

 private:
  double lr_;
  double momentum_;
  Vector velocity_;
};

/// Binary checkpoint: "SMLB", u32 version (1), u32 parameter count, u32 input
/// dim, u32 time-conditional flag, then little-endian float64 parameters.
std::vector<std::uint8_t> encode_checkpoint(const ScoreNet& net);
/// Loads parameters into a net built from `config`; throws CheckpointError
/// when the header does not match the configuration.
ScoreNet decode_checkpoint(const std::vector<std::uint8_t>& bytes, const MlpConfig& config, NetMode mode);
void save_checkpoint(const ScoreNet& net, const std::filesystem::path& path);
ScoreNet load_checkpoint(const std::filesystem::path& path, const MlpConfig& config, NetMode mode);

}  // namespace scorelab
