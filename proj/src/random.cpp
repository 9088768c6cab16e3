#include "scorelab/random.hpp"

namespace scorelab {

namespace {

constexpr std::uint32_t kMul0 = 0xD2511F53U;
constexpr std::uint32_t kMul1 = 0xCD9E8D57U;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9U;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85U;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
  const std::uint64_t product = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(product >> 32);
  lo = static_cast<std::uint32_t>(product);
}

}  // namespace

Philox4x32::Philox4x32(std::uint64_t seed, std::uint64_t stream) {
  key_ = {static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
  counter_ = {0U, 0U, static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
}

Philox4x32::Block Philox4x32::encrypt(Block c, std::array<std::uint32_t, 2> k) {
  for (int round = 0; round < 10; ++round) {
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo(kMul0, c[0], hi0, lo0);
    mulhilo(kMul1, c[2], hi1, lo1);
    c = {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
    k[0] += kWeyl0;
    k[1] += kWeyl1;
  }
  return c;
}

void Philox4x32::refill() {
  buffer_ = encrypt(counter_, key_);
  // 64-bit block index in the low two words; the stream id is never touched.
  if (++counter_[0] == 0) ++counter_[1];
  position_ = 0;
}

Philox4x32::result_type Philox4x32::operator()() {
  if (position_ == 4) refill();
  return buffer_[position_++];
}

void Philox4x32::discard(std::uint64_t n) {
  while (n > 0 && position_ < 4) {
    ++position_;
    --n;
  }
  const std::uint64_t blocks = n / 4;
  std::uint64_t index = (static_cast<std::uint64_t>(counter_[1]) << 32) | counter_[0];
  index += blocks;
  counter_[0] = static_cast<std::uint32_t>(index);
  counter_[1] = static_cast<std::uint32_t>(index >> 32);
  for (std::uint64_t i = 0; i < n % 4; ++i) (*this)();
}

Rng::Matrix Rng::normal_matrix(Eigen::Index rows, Eigen::Index cols) {
  Matrix out(rows, cols);
  for (Eigen::Index i = 0; i < out.size(); ++i) out.data()[i] = normal();
  return out;
}

Rng::Matrix Rng::uniform_matrix(Eigen::Index rows, Eigen::Index cols, double lo, double hi) {
  Matrix out(rows, cols);
  for (Eigen::Index i = 0; i < out.size(); ++i) out.data()[i] = uniform(lo, hi);
  return out;
}

Rng::Matrix Rng::sign_matrix(Eigen::Index rows, Eigen::Index cols) {
  Matrix out(rows, cols);
  for (Eigen::Index i = 0; i < out.size(); ++i) out.data()[i] = sign();
  return out;
}

}  // namespace scorelab
