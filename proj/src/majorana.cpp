#include "lsyk/majorana.hpp"

namespace lsyk {

MajoranaSet build_majoranas(int n) {
  if (n <= 0 || (n & 1)) throw std::invalid_argument("n must be even, > 0");
  if (n / 2 > kMaxQubits)
    throw resource_limit_error("Majorana count exceeds memory budget");
  MajoranaSet set;
  set.n = n;
  set.strings = majorana_strings(n);
  set.ops.reserve(static_cast<size_t>(n));
  for (int k = 0; k < n; ++k)
    set.ops.push_back(build_from_strings(n / 2, {{cplx{1.0, 0.0},
                                                  set.strings[k]}}));
  return set;
}

bool anticommutator_check(const MajoranaSet& set, double tol) {
  const auto dim = set.ops.empty() ? 0 : set.ops.front().dim();
  const SparseOperator id = SparseOperator::identity(dim);
  for (size_t i = 0; i < set.ops.size(); ++i) {
    for (size_t j = i; j < set.ops.size(); ++j) {
      SparseOperator anti = op_add_scaled(op_mul(set.ops[i], set.ops[j]),
                                          cplx{1.0, 0.0},
                                          op_mul(set.ops[j], set.ops[i]));
      const cplx delta = (i == j) ? cplx{1.0, 0.0} : cplx{0.0, 0.0};
      if (max_abs(op_add_scaled(anti, -delta, id)) >= tol) return false;
    }
  }
  return true;
}

}  // namespace lsyk
