#include "lsyk/model.hpp"

#include <Eigen/Eigenvalues>
#include <bit>
#include <cmath>
#include <mutex>

namespace lsyk {

namespace {

// i^{q/2} as an exact complex unit.
cplx i_pow(int e) {
  switch (((e % 4) + 4) % 4) {
    case 0: return {1.0, 0.0};
    case 1: return {0.0, 1.0};
    case 2: return {-1.0, 0.0};
    default: return {0.0, -1.0};
  }
}

PauliString string_product(const std::vector<PauliString>& chain,
                           const std::vector<int>& idx) {
  PauliString p;  // identity
  for (int i : idx) p = p * chain[static_cast<size_t>(i)];
  return p;
}

// Hamiltonian terms of one copy, using Majoranas `offset..offset+N-1` of
// the doubled chain, with an overall scale.
void append_hamiltonian_terms(
    const DisorderRealization& d, const std::vector<PauliString>& chain,
    int offset, cplx scale,
    std::vector<std::pair<cplx, PauliString>>& out) {
  const cplx pref = scale * i_pow(d.q / 2);
  std::vector<int> shifted(static_cast<size_t>(d.q));
  for (const auto& [idx, J] : d.couplings) {
    for (size_t i = 0; i < idx.size(); ++i) shifted[i] = idx[i] + offset;
    out.emplace_back(pref * J, string_product(chain, shifted));
  }
}

std::vector<std::pair<cplx, PauliString>> liouvillian_terms(
    const DisorderRealization& d, double mu,
    const std::vector<PauliString>& chain) {
  const int n = d.n_majorana;
  std::vector<std::pair<cplx, PauliString>> terms;
  terms.reserve(2 * d.couplings.size() + static_cast<size_t>(n) + 1);
  // -i H^+  and  +i (-1)^{q/2} H^-
  append_hamiltonian_terms(d, chain, 0, cplx{0.0, -1.0}, terms);
  const double sgn = (d.q / 2) % 2 ? -1.0 : 1.0;
  append_hamiltonian_terms(d, chain, n, cplx{0.0, sgn}, terms);
  // +i mu sum_j psi^+_j psi^-_j  -  mu (N/2) I
  for (int j = 0; j < n; ++j) {
    PauliString p = chain[static_cast<size_t>(j)] *
                    chain[static_cast<size_t>(n + j)];
    terms.emplace_back(cplx{0.0, mu}, p);
  }
  terms.emplace_back(cplx{-mu * n / 2.0, 0.0}, PauliString{});
  return terms;
}

// The steady state is the vacuum of c_j = (psi^+_j - i psi^-_j)/sqrt(2):
// project a standard basis vector through all (1/2 + i psi^+_j psi^-_j)
// factors; retry start vectors until the image survives (a fixed start
// can be exactly orthogonal to the vacuum).
Eigen::VectorXcd steady_vector_from(const MajoranaSet& doubled, int n) {
  const auto dim = doubled.ops.front().dim();
  for (SparseOperator::Index k = 0; k < dim; ++k) {
    Eigen::VectorXcd v = Eigen::VectorXcd::Zero(dim);
    v(k) = 1.0;
    for (int j = 0; j < n; ++j) {
      const auto& plus = doubled.ops[static_cast<size_t>(j)];
      const auto& minus = doubled.ops[static_cast<size_t>(n + j)];
      v = 0.5 * v + cplx{0.0, 1.0} * plus.apply(minus.apply(v));
    }
    const double norm = v.norm();
    if (norm > 1e-6) return v / norm;
  }
  throw consistency_error("steady-state projector annihilated every start");
}

void self_test_convention();

std::once_flag self_test_flag;
thread_local bool in_self_test = false;

}  // namespace

SparseOperator build_hamiltonian(const DisorderRealization& d,
                                 const MajoranaSet& m) {
  if (m.n != d.n_majorana)
    throw std::invalid_argument("Majorana set size mismatch");
  std::vector<std::pair<cplx, PauliString>> terms;
  append_hamiltonian_terms(d, m.strings, 0, cplx{1.0, 0.0}, terms);
  if (terms.empty()) return SparseOperator::zero(m.ops.front().dim());
  auto H = build_from_strings(m.n / 2, terms);
  if (H.dim() != m.ops.front().dim()) throw consistency_error("bad H dim");
  return H;
}

LiouvillianBundle build_liouvillian(const DisorderRealization& d, double mu) {
  if (mu < 0.0) throw std::invalid_argument("mu must be non-negative");
  if (!in_self_test) std::call_once(self_test_flag, self_test_convention);

  const int n = d.n_majorana;
  LiouvillianBundle b;
  b.realization = d;
  b.mu = mu;
  b.n = n;

  const MajoranaSet doubled = build_majoranas(2 * n);
  const MajoranaSet single = build_majoranas(n);
  b.H = build_hamiltonian(d, single);
  b.L = build_from_strings(n, liouvillian_terms(d, mu, doubled.strings));
  b.steady_vector = steady_vector_from(doubled, n);

  // Build-time checks: the vectorized infinite-temperature state (the
  // c-fermion vacuum built above) must be a right null vector (steady
  // state) and, daggered, a left null vector (trace preservation).
  const double scale = std::max(max_abs(b.L), 1.0);
  if (b.L.apply(b.steady_vector).lpNorm<Eigen::Infinity>() > 1e-9 * scale)
    throw consistency_error("steady vector not annihilated");
  if (b.L.adjoint().apply(b.steady_vector).lpNorm<Eigen::Infinity>() >
      1e-9 * scale)
    throw consistency_error("trace preservation violated");
  return b;
}

LiouvillianBundle parity_decompose(LiouvillianBundle b) {
  const auto dim = b.L.dim();
  const int n = b.n;

  // P = product of all 2N Majoranas, phased to be Hermitian with P^2 = I;
  // in this representation that is the diagonal (-1)^{popcount} operator.
  const auto chain = majorana_strings(2 * n);
  PauliString prod;
  for (const auto& p : chain) prod = prod * p;
  if (prod.x != 0)
    throw consistency_error("parity string is not diagonal");
  const double mag = std::abs(prod.coeff);
  prod.coeff /= mag;
  if (std::abs(prod.coeff.imag()) > 0.5) prod.coeff *= cplx{0.0, 1.0};
  if (prod.coeff.real() < 0.0) prod.coeff *= -1.0;
  b.parity_op = build_from_strings(n, {{cplx{1.0, 0.0}, prod}});

  b.indices_plus.clear();
  b.indices_minus.clear();
  for (SparseOperator::Index i = 0; i < dim; ++i) {
    const bool odd = std::popcount(static_cast<std::uint64_t>(i)) & 1;
    (odd ? b.indices_minus : b.indices_plus).push_back(i);
  }

  if (max_abs(op_add_scaled(op_mul(b.L, b.parity_op), cplx{-1.0, 0.0},
                            op_mul(b.parity_op, b.L))) > 1e-10)
    throw consistency_error("Liouvillian does not commute with parity");

  const auto terms = liouvillian_terms(b.realization, b.mu,
                                       majorana_strings(2 * n));
  b.block_plus = build_from_strings(n, terms, b.indices_plus);
  b.block_minus = build_from_strings(n, terms, b.indices_minus);

  // Label the steady block by the parity of the constructed steady vector.
  double w_plus = 0.0, w_minus = 0.0;
  for (SparseOperator::Index i = 0; i < dim; ++i) {
    const double a = std::norm(b.steady_vector(i));
    if (std::popcount(static_cast<std::uint64_t>(i)) & 1)
      w_minus += a;
    else
      w_plus += a;
  }
  if (std::min(w_plus, w_minus) > 1e-18)
    throw consistency_error("steady vector has mixed parity");
  b.steady_block_label =
      w_plus > w_minus ? ParityLabel::plus : ParityLabel::minus;
  b.decomposed = true;
  return b;
}

LiouvillianBundle build_bundle(const DisorderRealization& d, double mu) {
  return parity_decompose(build_liouvillian(d, mu));
}

const SparseOperator& gap_block(const LiouvillianBundle& b) {
  if (!b.decomposed) throw std::invalid_argument("bundle not decomposed");
  return b.steady_block_label == ParityLabel::plus ? b.block_minus
                                                   : b.block_plus;
}

const SparseOperator& steady_block(const LiouvillianBundle& b) {
  if (!b.decomposed) throw std::invalid_argument("bundle not decomposed");
  return b.steady_block_label == ParityLabel::plus ? b.block_plus
                                                   : b.block_minus;
}

Eigen::Matrix2cd two_mode_block(const LiouvillianBundle& b) {
  if (b.n != 4 || b.realization.q != 4)
    throw std::invalid_argument("two-mode block requires N = q = 4");
  if (!b.decomposed) throw std::invalid_argument("bundle not decomposed");
  const double J = b.realization.couplings.front().second;
  if (J == 0.0) throw std::invalid_argument("coupling must be nonzero");

  // Basis: the Hamiltonian part of the gap block has eigenvalues -+ iJ/2
  // (signed J); the bath part maps between the two eigenspaces. The
  // slow pair is spanned by the top singular pair of that map.
  const Eigen::MatrixXcd Lg = gap_block(b).dense();
  const DisorderRealization d0 = b.realization;
  LiouvillianBundle herm = parity_decompose(build_liouvillian(d0, 0.0));
  const Eigen::MatrixXcd Lh = gap_block(herm).dense();

  Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(Lh);
  const auto& vals = es.eigenvalues();
  const auto& vecs = es.eigenvectors();
  std::vector<int> minus_idx, plus_idx;  // Im = -J/2 and +J/2 eigenspaces
  for (int i = 0; i < vals.size(); ++i) {
    if (std::abs(vals(i).imag() + J / 2) < 1e-9 * std::abs(J))
      minus_idx.push_back(i);
    else if (std::abs(vals(i).imag() - J / 2) < 1e-9 * std::abs(J))
      plus_idx.push_back(i);
  }
  if (minus_idx.size() != 4 || plus_idx.size() != 4)
    throw consistency_error("unexpected Hamiltonian eigenspace split");

  Eigen::MatrixXcd Um(8, 4), Up(8, 4);
  for (int c = 0; c < 4; ++c) {
    Um.col(c) = vecs.col(minus_idx[static_cast<size_t>(c)]);
    Up.col(c) = vecs.col(plus_idx[static_cast<size_t>(c)]);
  }
  // Orthonormalize each eigenspace basis.
  Um = Eigen::HouseholderQR<Eigen::MatrixXcd>(Um).householderQ() *
       Eigen::MatrixXcd::Identity(8, 4);
  Up = Eigen::HouseholderQR<Eigen::MatrixXcd>(Up).householderQ() *
       Eigen::MatrixXcd::Identity(8, 4);

  // Singular directions of the bath coupling between the eigenspaces are
  // scale invariant, so no division by mu is needed.
  const Eigen::MatrixXcd cross = Um.adjoint() * (Lg - Lh) * Up;
  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(
      cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::VectorXcd u = Um * svd.matrixU().col(0);
  const Eigen::VectorXcd w = -(Up * svd.matrixV().col(0));

  Eigen::MatrixXcd V(8, 2);
  V.col(0) = u;
  V.col(1) = w;
  return (V.adjoint() * Lg * V).eval();
}

BlockFamily::BlockFamily(SparseOperator base, SparseOperator slope)
    : base_(std::move(base)), slope_(std::move(slope)) {
  if (base_.dim() != slope_.dim())
    throw std::invalid_argument("BlockFamily: dimension mismatch");
}

SparseOperator BlockFamily::at(double mu) const {
  return op_add_scaled(base_, cplx{mu, 0.0}, slope_);
}

BlockFamily gap_block_family(const DisorderRealization& d) {
  const auto b1 = build_bundle(d, 0.5);
  const auto b2 = build_bundle(d, 1.5);
  if (b1.steady_block_label != b2.steady_block_label)
    throw consistency_error("gap_block_family: parity label not stable");
  const SparseOperator slope =
      op_add_scaled(gap_block(b2), cplx{-1.0, 0.0}, gap_block(b1));
  const SparseOperator base =
      op_add_scaled(gap_block(b1), cplx{-0.5, 0.0}, slope);
  BlockFamily fam(base, slope);
  // affinity cross-check at an interior point
  const auto probe = build_bundle(d, 0.9);
  const double scale = std::max(max_abs(gap_block(probe)), 1e-300);
  if (max_abs_diff(fam.at(0.9), gap_block(probe)) > 1e-12 * scale)
    throw consistency_error(
        "gap_block_family: generator is not affine in the loss rate");
  return fam;
}

namespace {

// Convention self-test, run once per process: at N = q = 4 the gap block
// must contain the analytic two-mode sub-block [[-iJ/2 - 2mu, -mu],
// [-mu, iJ/2 - 2mu]] entrywise, and the spectrum conjugation/eigenvalue
// structure follows from it.
void self_test_convention() {
  in_self_test = true;
  DisorderRealization d;
  d.n_majorana = 4;
  d.q = 4;
  d.seed = 0;
  d.couplings = {{{0, 1, 2, 3}, 0.31}};
  const double mu = 0.17;
  const LiouvillianBundle b = build_bundle(d, mu);
  const double J = 0.31;
  Eigen::Matrix2cd expect;
  expect << cplx{-2 * mu, -J / 2}, cplx{-mu, 0.0}, cplx{-mu, 0.0},
      cplx{-2 * mu, J / 2};
  const Eigen::Matrix2cd got = two_mode_block(b);
  if ((got - expect).cwiseAbs().maxCoeff() > 1e-12)
    throw consistency_error(
        "sign convention self-test failed: two-mode block mismatch");
  in_self_test = false;
}

}  // namespace

}  // namespace lsyk
