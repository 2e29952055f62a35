#pragma once

// Binary cache for a SpectralBasis.
//
// Layout, all little-endian:
//   8 bytes   magic "PGSPBAS1"
//   u64       m, n, k, seed, training-data fingerprint
//   f64       tolerance
//   f64[(m+n)*k]  basis vectors, column-major
//   f64[k]        eigenvalues of A, descending

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <string>

#include "pgsp/error.hpp"
#include "pgsp/spectral.hpp"

namespace pgsp {

namespace detail {

constexpr std::array<char, 8> kBasisMagic{'P', 'G', 'S', 'P', 'B', 'A', 'S', '1'};

inline void put_u64(std::ostream& os, std::uint64_t v) {
  std::array<unsigned char, 8> b{};
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xffu);
  os.write(reinterpret_cast<const char*>(b.data()), 8);
}

inline void put_f64(std::ostream& os, double v) { put_u64(os, std::bit_cast<std::uint64_t>(v)); }

inline std::uint64_t get_u64(std::istream& is) {
  std::array<unsigned char, 8> b{};
  if (!is.read(reinterpret_cast<char*>(b.data()), 8)) throw Error("basis cache truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

inline double get_f64(std::istream& is) { return std::bit_cast<double>(get_u64(is)); }

}  // namespace detail

/// FNV-1a over the shape and the sorted (user, item) pairs.
inline std::uint64_t interaction_fingerprint(const InteractionMatrix& r) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  auto mix = [&h](std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      h ^= (v >> (8 * i)) & 0xffu;
      h *= 0x100000001b3ull;
    }
  };
  mix(static_cast<std::uint64_t>(r.rows()));
  mix(static_cast<std::uint64_t>(r.cols()));
  for (Index u = 0; u < r.rows(); ++u)
    for (Index j : r.row(u)) {
      mix(static_cast<std::uint64_t>(u));
      mix(static_cast<std::uint64_t>(j));
    }
  return h;
}

inline void save_basis(const SpectralBasis& basis, std::uint64_t fingerprint, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot open basis cache for writing: " + path);
  os.write(detail::kBasisMagic.data(), detail::kBasisMagic.size());
  detail::put_u64(os, static_cast<std::uint64_t>(basis.users));
  detail::put_u64(os, static_cast<std::uint64_t>(basis.items));
  detail::put_u64(os, static_cast<std::uint64_t>(basis.k));
  detail::put_u64(os, basis.seed);
  detail::put_u64(os, fingerprint);
  detail::put_f64(os, basis.tolerance);
  for (Index c = 0; c < basis.k; ++c)
    for (Index r = 0; r < basis.dim(); ++r) detail::put_f64(os, basis.vectors(r, c));
  for (double v : basis.eigenvalues_a) detail::put_f64(os, v);
  if (!os) throw Error("failed writing basis cache: " + path);
}

struct BasisKey {
  Index users = 0;
  Index items = 0;
  Index k = 0;
  std::uint64_t seed = 0;
  std::uint64_t fingerprint = 0;
  double tolerance = 0.0;
};

/// Loads a cached basis. Returns nullopt when the file is missing or its
/// header does not match `expected`; throws on a corrupt file.
inline std::optional<SpectralBasis> load_basis(const std::string& path, const BasisKey& expected) {
  std::ifstream is(path, std::ios::binary);
  if (!is) return std::nullopt;
  std::array<char, 8> magic{};
  if (!is.read(magic.data(), magic.size()) || magic != detail::kBasisMagic) throw Error("not a basis cache: " + path);
  SpectralBasis b;
  b.users = static_cast<Index>(detail::get_u64(is));
  b.items = static_cast<Index>(detail::get_u64(is));
  b.k = static_cast<Index>(detail::get_u64(is));
  b.seed = detail::get_u64(is);
  const std::uint64_t fingerprint = detail::get_u64(is);
  b.tolerance = detail::get_f64(is);
  if (b.users != expected.users || b.items != expected.items || b.k != expected.k || b.seed != expected.seed ||
      fingerprint != expected.fingerprint ||
      b.tolerance != expected.tolerance)
    return std::nullopt;
  b.vectors.resize(b.dim(), b.k);
  for (Index c = 0; c < b.k; ++c)
    for (Index r = 0; r < b.dim(); ++r) b.vectors(r, c) = detail::get_f64(is);
  b.eigenvalues_a.resize(static_cast<std::size_t>(b.k));
  for (auto& v : b.eigenvalues_a) v = detail::get_f64(is);
  return b;
}

}  // namespace pgsp
