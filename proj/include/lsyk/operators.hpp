#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>
#include <iosfwd>
#include <optional>
#include <utility>
#include <vector>

#include "lsyk/pauli.hpp"
#include "lsyk/types.hpp"

namespace lsyk {

// Complex sparse matrix over a power-of-2 dimension with deterministic
// (row-major, column-sorted) entry order and a fixed drop tolerance.
class SparseOperator {
 public:
  using Matrix = Eigen::SparseMatrix<cplx, Eigen::RowMajor>;
  using Index = Matrix::Index;

  SparseOperator() = default;
  explicit SparseOperator(Matrix m,
                          std::optional<bool> hermitian_hint = std::nullopt);

  static SparseOperator identity(Index dim);
  static SparseOperator zero(Index dim);
  static SparseOperator from_triplets(
      Index dim, const std::vector<Eigen::Triplet<cplx>>& entries);

  Index dim() const { return mat_.rows(); }
  Index nnz() const { return mat_.nonZeros(); }
  const Matrix& matrix() const { return mat_; }
  std::optional<bool> hermitian_hint() const { return hermitian_hint_; }

  Eigen::VectorXcd apply(const Eigen::VectorXcd& v) const;
  SparseOperator adjoint() const;
  Eigen::MatrixXcd dense() const;  // guarded by kDenseLimit

 private:
  Matrix mat_;
  std::optional<bool> hermitian_hint_;
};

SparseOperator op_mul(const SparseOperator& a, const SparseOperator& b);
SparseOperator op_add_scaled(const SparseOperator& a, cplx c,
                             const SparseOperator& b);

// Largest entry magnitude (max norm); 0 for an empty matrix.
double max_abs(const SparseOperator& op);
double max_abs_diff(const SparseOperator& a, const SparseOperator& b);
bool is_hermitian(const SparseOperator& op, double tol);
cplx trace(const SparseOperator& op);

// Assemble sum_t coeff_t * P_t over a 2^nq space, restricted to the rows
// and columns in `subset` (ascending global indices; empty = full space).
// Throws consistency_error if a term maps a subset column outside it.
SparseOperator build_from_strings(
    int nq, const std::vector<std::pair<cplx, PauliString>>& terms,
    const std::vector<SparseOperator::Index>& subset = {});

// Text round-trip: "dim nnz" header then one "row col re im" line per
// entry in deterministic order, full precision.
void export_coordinate_text(const SparseOperator& op, std::ostream& out);
SparseOperator import_coordinate_text(std::istream& in);

}  // namespace lsyk
