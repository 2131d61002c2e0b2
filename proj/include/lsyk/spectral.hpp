#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lsyk/operators.hpp"

namespace lsyk {

enum class Method { dense, krylov_shift_invert, krylov_rightmost };
enum class EigClass { real, complex_pair_member };

struct SpectrumResult {
  std::vector<cplx> eigenvalues;  // sorted by |Re| asc, ties by Im asc
  std::optional<Eigen::MatrixXcd> eigenvectors;  // unit columns, same order
  std::vector<double> residuals;                 // ||Av - lambda v||_2
  std::string block_label;
  Method method = Method::dense;
  double mu = 0.0;
  std::uint64_t realization_id = 0;
  std::vector<EigClass> classification;
  double eps_im_used = 0.0;
  std::vector<std::string> warnings;
};

struct GapValue {
  double gamma0 = 0.0;
  double mu = 0.0;
  int n_total = 0;  // total Majoranas 2N
  std::uint64_t realization_id = 0;
};

struct KrylovOptions {
  int k = 8;
  cplx shift = {0.0, 0.0};
  double tol = 1e-8;
  int min_subspace = 48;
  int max_subspace = 480;
  std::uint64_t start_seed = 0x517ecd1ca5e0ull;
  // Residual ceiling for accepting a stalled near-defective pair (recorded
  // as a warning instead of failing at an exceptional point).
  double defective_tol = 1e-6;
};

SpectrumResult dense_spectrum(const SparseOperator& block, bool want_vectors);

SpectrumResult krylov_near_zero(const SparseOperator& block, int k,
                                cplx shift = {0.0, 0.0});
SpectrumResult krylov_near_zero(const SparseOperator& block,
                                const KrylovOptions& opts);

// Factorization-free variant targeting the eigenvalues of largest real part
// (for Liouvillian blocks these are the smallest |Re|, i.e. the gap). Used
// for dims where a sparse LU of the shifted block would not fit in memory.
SpectrumResult krylov_rightmost(const SparseOperator& block,
                                const KrylovOptions& opts);

GapValue dissipative_gap(const SpectrumResult& s, bool steady_block);

double eigenvector_distance(const Eigen::VectorXcd& v1,
                            const Eigen::VectorXcd& v2);

// Populates classification; eps_im <= 0 selects 1e-8 x spectral scale.
SpectrumResult classify_real(SpectrumResult s, double eps_im);

void export_spectrum_csv(const SpectrumResult& s, std::ostream& out);

}  // namespace lsyk
