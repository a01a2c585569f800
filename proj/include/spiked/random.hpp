#pragma once

#include <cstdint>
#include <random>

#include "spiked/numkernel.hpp"

namespace spiked {

using Rng = std::mt19937_64;

/// Standard complex Gaussian entries: real and imaginary parts independent,
/// each of variance 1/2.
inline CMat complex_gaussian(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  std::normal_distribution<double> nd(0.0, std::sqrt(0.5));
  CMat out(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) {
      const double re = nd(rng);
      const double im = nd(rng);
      out(i, j) = cd(re, im);
    }
  return out;
}

/// Random Hermitian matrix with complex Gaussian off-diagonal entries.
inline CMat random_hermitian(Eigen::Index k, Rng& rng) { return herm(complex_gaussian(k, k, rng)); }

/// Haar-distributed unitary (QR of a complex Gaussian with phase fix).
inline CMat random_unitary(Eigen::Index k, Rng& rng) { return thin_qr(complex_gaussian(k, k, rng)).Q; }

/// SplitMix64 finalizer, used to derive independent stream seeds.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t v) { return mix64(seed ^ mix64(v)); }

}  // namespace spiked
