#include "cpsdre/rng.hpp"

namespace cpsdre {

Pcg32::Pcg32(std::uint64_t seed, std::uint64_t stream) : inc_((stream << 1u) | 1u) {
  next_u32();
  state_ += seed;
  next_u32();
}

std::uint32_t Pcg32::next_u32() {
  const std::uint64_t old = state_;
  state_ = old * 6364136223846793005ULL + inc_;
  const auto xorshifted = static_cast<std::uint32_t>(((old >> 18u) ^ old) >> 27u);
  const auto rot = static_cast<std::uint32_t>(old >> 59u);
  return (xorshifted >> rot) | (xorshifted << ((-rot) & 31u));
}

double Pcg32::uniform01() {
  const std::uint64_t hi = next_u32() >> 5u;  // 27 bits
  const std::uint64_t lo = next_u32() >> 6u;  // 26 bits
  return static_cast<double>((hi << 26u) | lo) * 0x1.0p-53;
}

double Pcg32::uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

Matrix random_uniform_matrix(Pcg32& rng, Eigen::Index rows, Eigen::Index cols, double lo,
                             double hi) {
  Matrix m(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c) {
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = rng.uniform(lo, hi);
  }
  return m;
}

CpFactors random_factors(Pcg32& rng, const std::array<std::size_t, 3>& dims, std::size_t rank) {
  const auto R = static_cast<Eigen::Index>(rank);
  Matrix X = random_uniform_matrix(rng, static_cast<Eigen::Index>(dims[0]), R);
  Matrix Y = random_uniform_matrix(rng, static_cast<Eigen::Index>(dims[1]), R);
  Matrix Z = random_uniform_matrix(rng, static_cast<Eigen::Index>(dims[2]), R);
  return CpFactors::with_unit_weights(std::move(X), std::move(Y), std::move(Z));
}

}  // namespace cpsdre
