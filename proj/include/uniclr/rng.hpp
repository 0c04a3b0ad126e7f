#ifndef UNICLR_RNG_HPP
#define UNICLR_RNG_HPP

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "uniclr/errors.hpp"
#include "uniclr/matrix.hpp"

namespace uniclr {

// splitmix64 finalizer; used to derive independent stream seeds from
// (seed, epoch, batch) style tuples.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t seed_combine(std::uint64_t a, std::uint64_t b) {
  return mix64(a ^ mix64(b + 0x9e3779b97f4a7c15ULL));
}

inline std::uint64_t seed_combine(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  return seed_combine(seed_combine(a, b), c);
}

// Deterministic stream built on std::mt19937_64 (the engine's output sequence
// is fixed by the standard). The uniform/normal mappings are hand-rolled
// because std::*_distribution output is implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller transform; one draw consumes two uniforms, the second output
  // is discarded to keep the stream position independent of call pairing.
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    return r * std::cos(2.0 * std::numbers::pi * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Uniform integer in [0, n) by rejection, so the result is exact.
  std::uint64_t below(std::uint64_t n) {
    require(n > 0, ErrorKind::Contract, "rng: below(0)");
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t v = next_u64();
    while (v >= limit) v = next_u64();
    return v % n;
  }

  // Fisher-Yates permutation of 0..n-1.
  std::vector<Index> permutation(Index n) {
    std::vector<Index> p(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) p[static_cast<std::size_t>(i)] = i;
    for (Index i = n - 1; i > 0; --i) {
      const Index j = static_cast<Index>(below(static_cast<std::uint64_t>(i) + 1));
      std::swap(p[static_cast<std::size_t>(i)], p[static_cast<std::size_t>(j)]);
    }
    return p;
  }

  Matrix uniform_matrix(Index rows, Index cols, double lo, double hi) {
    Matrix m(rows, cols);
    for (Index r = 0; r < rows; ++r)
      for (Index c = 0; c < cols; ++c) m(r, c) = uniform(lo, hi);
    return m;
  }

  Matrix normal_matrix(Index rows, Index cols, double mean = 0.0, double stddev = 1.0) {
    Matrix m(rows, cols);
    for (Index r = 0; r < rows; ++r)
      for (Index c = 0; c < cols; ++c) m(r, c) = normal(mean, stddev);
    return m;
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace uniclr

#endif
