#include "lsyk/operators.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <iomanip>
#include <istream>
#include <ostream>
#include <unordered_map>

namespace lsyk {

namespace {

bool power_of_two(SparseOperator::Index d) {
  const auto u = static_cast<std::uint64_t>(d);
  return d > 0 && (u & (u - 1)) == 0;
}

void require_same_dim(const SparseOperator& a, const SparseOperator& b) {
  if (a.dim() != b.dim())
    throw std::invalid_argument("operator dimension mismatch");
}

}  // namespace

SparseOperator::SparseOperator(Matrix m, std::optional<bool> hermitian_hint)
    : mat_(std::move(m)), hermitian_hint_(hermitian_hint) {
  if (mat_.rows() != mat_.cols())
    throw std::invalid_argument("operator must be square");
  if (!power_of_two(mat_.rows()))
    throw std::invalid_argument("operator dimension must be a power of 2");
  mat_.prune(cplx{1.0, 0.0}, kDropTol);
  mat_.makeCompressed();
}

SparseOperator SparseOperator::identity(Index dim) {
  Matrix m(dim, dim);
  m.setIdentity();
  return SparseOperator(std::move(m), true);
}

SparseOperator SparseOperator::zero(Index dim) {
  return SparseOperator(Matrix(dim, dim), true);
}

SparseOperator SparseOperator::from_triplets(
    Index dim, const std::vector<Eigen::Triplet<cplx>>& entries) {
  Matrix m(dim, dim);
  m.setFromTriplets(entries.begin(), entries.end());
  return SparseOperator(std::move(m));
}

Eigen::VectorXcd SparseOperator::apply(const Eigen::VectorXcd& v) const {
  if (v.size() != dim())
    throw std::invalid_argument("vector dimension mismatch");
  return mat_ * v;
}

SparseOperator SparseOperator::adjoint() const {
  Matrix m = mat_.adjoint();
  return SparseOperator(std::move(m), hermitian_hint_);
}

Eigen::MatrixXcd SparseOperator::dense() const {
  if (dim() > kDenseLimit)
    throw resource_limit_error("dense conversion beyond configured limit");
  return Eigen::MatrixXcd(mat_);
}

SparseOperator op_mul(const SparseOperator& a, const SparseOperator& b) {
  require_same_dim(a, b);
  SparseOperator::Matrix m = a.matrix() * b.matrix();
  return SparseOperator(std::move(m));
}

SparseOperator op_add_scaled(const SparseOperator& a, cplx c,
                             const SparseOperator& b) {
  require_same_dim(a, b);
  SparseOperator::Matrix m = a.matrix() + c * b.matrix();
  return SparseOperator(std::move(m));
}

double max_abs(const SparseOperator& op) {
  double m = 0.0;
  const auto& mat = op.matrix();
  for (int k = 0; k < mat.outerSize(); ++k)
    for (SparseOperator::Matrix::InnerIterator it(mat, k); it; ++it)
      m = std::max(m, std::abs(it.value()));
  return m;
}

double max_abs_diff(const SparseOperator& a, const SparseOperator& b) {
  return max_abs(op_add_scaled(a, cplx{-1.0, 0.0}, b));
}

bool is_hermitian(const SparseOperator& op, double tol) {
  return max_abs_diff(op, op.adjoint()) < tol;
}

cplx trace(const SparseOperator& op) {
  return op.matrix().diagonal().sum();
}

SparseOperator build_from_strings(
    int nq, const std::vector<std::pair<cplx, PauliString>>& terms,
    const std::vector<SparseOperator::Index>& subset) {
  if (nq < 0 || nq > kMaxQubits)
    throw resource_limit_error("qubit count outside supported range");
  const std::uint64_t dim = std::uint64_t{1} << nq;

  // Terms sharing an X mask hit the same column per row; group them so a
  // row contributes one accumulated entry per distinct mask.
  struct Group {
    std::uint64_t x;
    std::vector<std::pair<cplx, std::uint64_t>> amps;  // (amplitude, z)
  };
  std::vector<Group> groups;
  {
    std::unordered_map<std::uint64_t, size_t> pos;
    for (const auto& [coeff, ps] : terms) {
      const cplx amp = coeff * ps.coeff;
      if (std::abs(amp) <= kDropTol) continue;
      auto [it, fresh] = pos.emplace(ps.x, groups.size());
      if (fresh) groups.push_back({ps.x, {}});
      groups[it->second].amps.emplace_back(amp, ps.z);
    }
    std::sort(groups.begin(), groups.end(),
              [](const Group& a, const Group& b) { return a.x < b.x; });
  }

  std::vector<std::int64_t> rank;
  if (!subset.empty()) {
    rank.assign(dim, -1);
    for (size_t i = 0; i < subset.size(); ++i)
      rank[static_cast<std::uint64_t>(subset[i])] =
          static_cast<std::int64_t>(i);
  }
  const std::uint64_t nrows = subset.empty() ? dim : subset.size();

  SparseOperator::Matrix m(static_cast<SparseOperator::Index>(nrows),
                           static_cast<SparseOperator::Index>(nrows));
  m.reserve(Eigen::VectorXi::Constant(static_cast<int>(nrows),
                                      static_cast<int>(groups.size())));
  std::vector<std::pair<std::uint64_t, cplx>> row_buf;
  row_buf.reserve(groups.size());
  for (std::uint64_t r = 0; r < nrows; ++r) {
    const std::uint64_t rg =
        subset.empty() ? r : static_cast<std::uint64_t>(subset[r]);
    row_buf.clear();
    for (const Group& g : groups) {
      const std::uint64_t cg = rg ^ g.x;
      cplx val = 0.0;
      for (const auto& [amp, z] : g.amps)
        val += (std::popcount(cg & z) & 1) ? -amp : amp;
      if (std::abs(val) <= kDropTol) continue;
      std::uint64_t c = cg;
      if (!subset.empty()) {
        const std::int64_t local = rank[cg];
        if (local < 0)
          throw consistency_error("string maps subset outside itself");
        c = static_cast<std::uint64_t>(local);
      }
      row_buf.emplace_back(c, val);
    }
    std::sort(row_buf.begin(), row_buf.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    for (const auto& [c, val] : row_buf)
      m.insert(static_cast<SparseOperator::Index>(r),
               static_cast<SparseOperator::Index>(c)) = val;
  }
  m.makeCompressed();
  return SparseOperator(std::move(m));
}

void export_coordinate_text(const SparseOperator& op, std::ostream& out) {
  const auto& mat = op.matrix();
  out << op.dim() << ' ' << op.nnz() << '\n';
  out << std::setprecision(17);
  for (int k = 0; k < mat.outerSize(); ++k)
    for (SparseOperator::Matrix::InnerIterator it(mat, k); it; ++it)
      out << it.row() << ' ' << it.col() << ' ' << it.value().real() << ' '
          << it.value().imag() << '\n';
}

SparseOperator import_coordinate_text(std::istream& in) {
  SparseOperator::Index dim = 0, nnz = 0;
  if (!(in >> dim >> nnz))
    throw std::invalid_argument("bad coordinate header");
  std::vector<Eigen::Triplet<cplx>> trips;
  trips.reserve(static_cast<size_t>(nnz));
  for (SparseOperator::Index k = 0; k < nnz; ++k) {
    SparseOperator::Index r = 0, c = 0;
    double re = 0.0, im = 0.0;
    if (!(in >> r >> c >> re >> im))
      throw std::invalid_argument("bad coordinate entry");
    trips.emplace_back(static_cast<int>(r), static_cast<int>(c),
                       cplx{re, im});
  }
  return SparseOperator::from_triplets(dim, trips);
}

}  // namespace lsyk
