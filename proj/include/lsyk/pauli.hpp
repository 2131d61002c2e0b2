#pragma once

#include <bit>
#include <cstdint>
#include <numbers>
#include <vector>

#include "lsyk/types.hpp"

namespace lsyk {

// A scalar multiple of a Pauli string in X/Z mask form over up to 64 sites:
//   coeff * prod_s X_s^{x_s} * prod_s Z_s^{z_s}
// Matrix elements: M[c ^ x, c] = coeff * (-1)^{popcount(z & c)}.
struct PauliString {
  std::uint64_t x = 0;
  std::uint64_t z = 0;
  cplx coeff = {1.0, 0.0};

  friend PauliString operator*(const PauliString& a, const PauliString& b) {
    PauliString r;
    r.x = a.x ^ b.x;
    r.z = a.z ^ b.z;
    const bool flip = std::popcount(a.z & b.x) & 1;
    r.coeff = a.coeff * b.coeff * (flip ? -1.0 : 1.0);
    return r;
  }
};

// The k-th Majorana (0-based) of an n-Majorana chain on n/2 sites, with
// psi^2 = I/2: site s = k/2 carries X (k even) or XZ (k odd), preceded by
// a Z string on sites < s.
inline PauliString majorana_string(int k) {
  const int s = k / 2;
  PauliString p;
  p.x = std::uint64_t{1} << s;
  p.z = (std::uint64_t{1} << s) - 1;
  p.coeff = cplx{1.0 / std::numbers::sqrt2, 0.0};
  if (k & 1) {
    p.z |= std::uint64_t{1} << s;
    p.coeff *= cplx{0.0, 1.0};
  }
  return p;
}

inline std::vector<PauliString> majorana_strings(int n) {
  std::vector<PauliString> out;
  out.reserve(static_cast<size_t>(n));
  for (int k = 0; k < n; ++k) out.push_back(majorana_string(k));
  return out;
}

}  // namespace lsyk
