#pragma once

#include <Eigen/Dense>

#include "lsyk/disorder.hpp"
#include "lsyk/majorana.hpp"

namespace lsyk {

enum class ParityLabel { plus, minus };

// The assembled generator on the doubled space (dim 2^N for N system
// Majoranas; the doubled set has 2N Majoranas), plus its parity split.
struct LiouvillianBundle {
  DisorderRealization realization;
  double mu = 0.0;
  int n = 0;  // system Majorana count N

  SparseOperator H;   // dim 2^{N/2}, Hermitian
  SparseOperator L;   // dim 2^N
  Eigen::VectorXcd steady_vector;  // unit-norm right null vector of L

  // Populated by parity_decompose:
  SparseOperator parity_op;  // diagonal, entries +-1
  SparseOperator block_plus, block_minus;  // each dim 2^{N-1}
  std::vector<SparseOperator::Index> indices_plus, indices_minus;
  ParityLabel steady_block_label = ParityLabel::plus;
  bool decomposed = false;
};

SparseOperator build_hamiltonian(const DisorderRealization& d,
                                 const MajoranaSet& m);

// Assembles H, L, and the steady vector; verifies the steady vector is
// annihilated and that vec(I) is a left null vector (trace preservation).
// A one-time process-wide self-test pins the sign conventions against the
// analytic N=4 two-mode block.
LiouvillianBundle build_liouvillian(const DisorderRealization& d, double mu);

// Fills parity fields; throws consistency_error if [L, P] exceeds 1e-10
// or the steady vector has mixed parity.
LiouvillianBundle parity_decompose(LiouvillianBundle b);

// Convenience: build + decompose.
LiouvillianBundle build_bundle(const DisorderRealization& d, double mu);

const SparseOperator& gap_block(const LiouvillianBundle& b);
const SparseOperator& steady_block(const LiouvillianBundle& b);

// The generator is affine in the loss rate: block(mu) = base + mu * slope.
// A mu sweep assembles each block with one sparse add instead of rebuilding
// the whole operator.
class BlockFamily {
 public:
  BlockFamily(SparseOperator base, SparseOperator slope);
  SparseOperator at(double mu) const;
  SparseOperator::Index dim() const { return base_.dim(); }

 private:
  SparseOperator base_, slope_;
};

// Affine family of the gap block; verified against a directly built block
// at an interior mu before returning.
BlockFamily gap_block_family(const DisorderRealization& d);

// N=4 only: the invariant 2x2 sub-block of the gap block spanned by the
// slowest pair, in the basis where the Hamiltonian part is diagonal.
// Analytically [[-iJ/2 - 2mu, -mu], [-mu, +iJ/2 - 2mu]] for coupling J.
Eigen::Matrix2cd two_mode_block(const LiouvillianBundle& b);

}  // namespace lsyk
