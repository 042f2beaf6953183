#pragma once

/// \file tensor_io.hpp
/// Binary "T3B" tensor files and raw little-endian double blocks.
///
/// T3B layout: 8-byte magic `T3BINARY`, three unsigned 64-bit little-endian
/// dims I, J, K, then I*J*K little-endian IEEE-754 doubles in the Tensor3
/// linearization order.

#include "cpsdre/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

namespace cpsdre {

void write_t3b(std::ostream& os, const Tensor3& t);
void write_t3b(const std::filesystem::path& path, const Tensor3& t);

/// Reads a T3B stream. The stream must contain exactly the declared payload.
Tensor3 read_t3b(std::istream& is);
Tensor3 read_t3b(const std::filesystem::path& path);

/// Appends doubles as little-endian IEEE-754 bytes.
void write_le_doubles(std::ostream& os, const double* values, std::size_t n);
/// Reads exactly n little-endian doubles; throws on a short read.
std::vector<double> read_le_doubles(std::istream& is, std::size_t n);

void write_le_u64(std::ostream& os, std::uint64_t v);
std::uint64_t read_le_u64(std::istream& is);

}  // namespace cpsdre
