#include "scorelab/random.hpp"

#include <doctest.h>

#include <cmath>
#include <set>

using namespace scorelab;

TEST_CASE("philox matches the published known-answer vectors") {
  using Block = Philox4x32::Block;
  CHECK(Philox4x32::encrypt(Block{0, 0, 0, 0}, {0, 0}) == Block{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
  CHECK(Philox4x32::encrypt(Block{0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, {0xffffffff, 0xffffffff}) ==
        Block{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
  CHECK(Philox4x32::encrypt(Block{0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, {0xa4093822, 0x299f31d0}) ==
        Block{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
}

TEST_CASE("engine output is the block stream under key = seed") {
  Philox4x32 engine(0, 0);
  const auto first = Philox4x32::encrypt({0, 0, 0, 0}, {0, 0});
  for (std::uint32_t word : first) CHECK(engine() == word);
  const auto second = Philox4x32::encrypt({1, 0, 0, 0}, {0, 0});
  CHECK(engine() == second[0]);
}

TEST_CASE("equal seed and stream give equal sequences, others differ") {
  Rng a(42, 3), b(42, 3), c(42, 4), d(43, 3);
  const Rng::Matrix ma = a.normal_matrix(4, 4);
  CHECK(ma == b.normal_matrix(4, 4));
  CHECK(ma != c.normal_matrix(4, 4));
  CHECK(ma != d.normal_matrix(4, 4));
}

TEST_CASE("discard skips exactly n words") {
  for (std::uint64_t n : {0ULL, 1ULL, 3ULL, 4ULL, 5ULL, 17ULL, 1000ULL}) {
    Philox4x32 a(9, 1), b(9, 1);
    a();  // start mid-block
    b();
    for (std::uint64_t i = 0; i < n; ++i) a();
    b.discard(n);
    CHECK(a() == b());
    CHECK(a() == b());
  }
}

TEST_CASE("distribution moments") {
  Rng rng(1, 0);
  const int n = 200000;
  double sum = 0, sq = 0, usum = 0, ssum = 0;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    sum += z;
    sq += z * z;
    const double u = rng.uniform();
    CHECK_UNARY(u >= 0.0);
    CHECK_UNARY(u < 1.0);
    usum += u;
    ssum += rng.sign();
  }
  CHECK(std::abs(sum / n) < 4.0 / std::sqrt(n));
  CHECK(std::abs(sq / n - 1.0) < 4.0 * std::sqrt(2.0 / n));
  CHECK(std::abs(usum / n - 0.5) < 4.0 * std::sqrt(1.0 / 12.0 / n));
  CHECK(std::abs(ssum / n) < 4.0 / std::sqrt(n));
}

TEST_CASE("matrix helpers have the requested shape and range") {
  Rng rng(2);
  const auto u = rng.uniform_matrix(3, 5, -2.0, 1.0);
  CHECK(u.rows() == 3);
  CHECK(u.cols() == 5);
  CHECK(u.minCoeff() >= -2.0);
  CHECK(u.maxCoeff() < 1.0);
  const auto s = rng.sign_matrix(10, 10);
  CHECK((s.array().abs() == 1.0).all());
  std::set<double> values(s.data(), s.data() + s.size());
  CHECK(values.size() == 2);
}
