#include "cpsdre/tensor_io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

namespace cpsdre {

namespace {

constexpr std::array<char, 8> kMagic{'T', '3', 'B', 'I', 'N', 'A', 'R', 'Y'};

std::array<unsigned char, 8> to_le_bytes(std::uint64_t v) {
  std::array<unsigned char, 8> b{};
  for (std::size_t n = 0; n < 8; ++n) b[n] = static_cast<unsigned char>((v >> (8 * n)) & 0xffu);
  return b;
}

std::uint64_t from_le_bytes(const unsigned char* b) {
  std::uint64_t v = 0;
  for (std::size_t n = 0; n < 8; ++n) v |= static_cast<std::uint64_t>(b[n]) << (8 * n);
  return v;
}

}  // namespace

void write_le_u64(std::ostream& os, std::uint64_t v) {
  const auto b = to_le_bytes(v);
  os.write(reinterpret_cast<const char*>(b.data()), 8);
}

std::uint64_t read_le_u64(std::istream& is) {
  std::array<unsigned char, 8> b{};
  if (!is.read(reinterpret_cast<char*>(b.data()), 8)) {
    throw std::runtime_error("unexpected end of binary stream");
  }
  return from_le_bytes(b.data());
}

void write_le_doubles(std::ostream& os, const double* values, std::size_t n) {
  if constexpr (std::endian::native == std::endian::little) {
    os.write(reinterpret_cast<const char*>(values), static_cast<std::streamsize>(n * 8));
  } else {
    for (std::size_t p = 0; p < n; ++p) write_le_u64(os, std::bit_cast<std::uint64_t>(values[p]));
  }
  if (!os) throw std::runtime_error("failed to write binary doubles");
}

std::vector<double> read_le_doubles(std::istream& is, std::size_t n) {
  std::vector<double> out(n);
  if constexpr (std::endian::native == std::endian::little) {
    if (!is.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(n * 8))) {
      throw std::runtime_error("binary payload shorter than declared");
    }
  } else {
    for (std::size_t p = 0; p < n; ++p) out[p] = std::bit_cast<double>(read_le_u64(is));
  }
  return out;
}

void write_t3b(std::ostream& os, const Tensor3& t) {
  os.write(kMagic.data(), kMagic.size());
  for (auto d : t.dims()) write_le_u64(os, d);
  write_le_doubles(os, t.data(), t.size());
}

void write_t3b(const std::filesystem::path& path, const Tensor3& t) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_t3b(os, t);
  if (!os) throw std::runtime_error("failed writing " + path.string());
}

Tensor3 read_t3b(std::istream& is) {
  std::array<char, 8> magic{};
  if (!is.read(magic.data(), magic.size()) || magic != kMagic) {
    throw std::runtime_error("not a T3B stream (bad magic)");
  }
  const std::uint64_t I = read_le_u64(is), J = read_le_u64(is), K = read_le_u64(is);
  if (I == 0 || J == 0 || K == 0) throw std::runtime_error("T3B dims must be positive");
  if (I > (1ull << 40) / J / K) throw std::runtime_error("T3B dims are implausibly large");
  auto data = read_le_doubles(is, I * J * K);
  if (is.peek() != std::char_traits<char>::eof()) {
    throw std::runtime_error("T3B stream has trailing bytes after the declared payload");
  }
  return Tensor3(I, J, K, std::move(data));
}

Tensor3 read_t3b(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  try {
    return read_t3b(is);
  } catch (const std::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

}  // namespace cpsdre
