#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <limits>
#include <random>
#include <string_view>

namespace scorelab {

/// Philox4x32-10 counter-based generator (Salmon et al., "Parallel random
/// numbers: as easy as 1, 2, 3"). The 64-bit key is the run seed and the
/// upper half of the counter is the stream id, so every (seed, stream) pair
/// is an independent, reproducible sequence.
class Philox4x32 {
 public:
  using result_type = std::uint32_t;
  using Block = std::array<std::uint32_t, 4>;

  static constexpr std::string_view kName = "philox4x32-10";

  Philox4x32(std::uint64_t seed = 0, std::uint64_t stream = 0);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()();
  void discard(std::uint64_t n);

  /// Raw bijection, exposed for known-answer tests.
  static Block encrypt(Block counter, std::array<std::uint32_t, 2> key);

 private:
  void refill();

  std::array<std::uint32_t, 2> key_{};
  Block counter_{};
  Block buffer_{};
  int position_ = 4;
};

/// Random stream used across the library: Philox bits shaped by the standard
/// distributions.
class Rng {
 public:
  using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  explicit Rng(std::uint64_t seed = 0, std::uint64_t stream = 0) : engine_(seed, stream) {}

  double normal() { return normal_(engine_); }
  /// Uniform on [0, 1).
  double uniform() { return uniform_(engine_); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// +1 or -1 with equal probability.
  double sign() { return (engine_() & 1U) ? 1.0 : -1.0; }
  std::uint32_t bits() { return engine_(); }

  Matrix normal_matrix(Eigen::Index rows, Eigen::Index cols);
  Matrix uniform_matrix(Eigen::Index rows, Eigen::Index cols, double lo, double hi);
  Matrix sign_matrix(Eigen::Index rows, Eigen::Index cols);

  Philox4x32& engine() { return engine_; }

 private:
  Philox4x32 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace scorelab
