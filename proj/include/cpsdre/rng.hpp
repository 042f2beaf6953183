#pragma once

/// \file rng.hpp
/// Seeded PCG32 generator (64-bit state, XSH-RR output). Implemented here
/// rather than through <random> distributions because their output is
/// implementation-defined, and seeded artifacts must be identical across
/// standard libraries.

#include "cpsdre/tensor.hpp"

#include <cstdint>

namespace cpsdre {

class Pcg32 {
public:
  explicit Pcg32(std::uint64_t seed, std::uint64_t stream = 0xda3e39cb94b95bdbULL);

  /// Next 32 random bits.
  std::uint32_t next_u32();
  /// Uniform double in [0, 1) with 53 random bits.
  double uniform01();
  /// Uniform double in [lo, hi).
  double uniform(double lo, double hi);

private:
  std::uint64_t state_ = 0;
  std::uint64_t inc_ = 0;
};

/// rows x cols matrix with i.i.d. uniform(lo, hi) entries drawn column by column.
Matrix random_uniform_matrix(Pcg32& rng, Eigen::Index rows, Eigen::Index cols, double lo = -1.0,
                             double hi = 1.0);

/// Random CP factors for a tensor of the given dims: entries uniform(-1, 1),
/// drawn X then Y then Z, with all-ones weights.
CpFactors random_factors(Pcg32& rng, const std::array<std::size_t, 3>& dims, std::size_t rank);

}  // namespace cpsdre
