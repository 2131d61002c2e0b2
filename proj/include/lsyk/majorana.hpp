#pragma once

#include <vector>

#include "lsyk/operators.hpp"

namespace lsyk {

// n Majorana operators on a 2^{n/2}-dimensional space, {psi_i, psi_j} =
// delta_ij (so psi^2 = I/2), each Hermitian with one entry per row.
struct MajoranaSet {
  int n = 0;
  std::vector<SparseOperator> ops;
  std::vector<PauliString> strings;  // same operators in string form
};

// Deterministic construction; throws std::invalid_argument for odd or
// non-positive n, resource_limit_error when n/2 exceeds kMaxQubits.
MajoranaSet build_majoranas(int n);

// True iff max_{i,j} ||{psi_i,psi_j} - delta_ij I||_max < tol.
bool anticommutator_check(const MajoranaSet& set, double tol);

}  // namespace lsyk
