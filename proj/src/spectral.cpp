#include "lsyk/spectral.hpp"

#include <complex>
#define LAPACK_COMPLEX_CUSTOM
#define lapack_complex_float std::complex<float>
#define lapack_complex_double std::complex<double>
#include <lapacke.h>

#include <Eigen/Eigenvalues>
#include <Eigen/SparseLU>
#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "lsyk/io_util.hpp"

namespace lsyk {

namespace {

std::vector<size_t> spectral_order(const std::vector<cplx>& ev) {
  std::vector<size_t> idx(ev.size());
  std::iota(idx.begin(), idx.end(), size_t{0});
  std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) {
    const double ra = std::abs(ev[a].real());
    const double rb = std::abs(ev[b].real());
    if (ra != rb) return ra < rb;
    return ev[a].imag() < ev[b].imag();
  });
  return idx;
}

void apply_order(SpectrumResult& s, const std::vector<size_t>& idx) {
  SpectrumResult t = s;
  for (size_t i = 0; i < idx.size(); ++i) {
    s.eigenvalues[i] = t.eigenvalues[idx[i]];
    if (!t.residuals.empty()) s.residuals[i] = t.residuals[idx[i]];
    if (t.eigenvectors)
      s.eigenvectors->col(static_cast<Eigen::Index>(i)) =
          t.eigenvectors->col(static_cast<Eigen::Index>(idx[i]));
  }
}

// Ritz extraction bookkeeping for one accepted eigenpair.
struct RitzPair {
  cplx lambda;
  Eigen::VectorXcd vec;
  double residual = 0.0;
  bool near_defective = false;
};

enum class KrylovMode { shift_invert, rightmost };

// Incremental-growth Arnoldi (double modified Gram-Schmidt, no restarts or
// locking) on op(x). Ritz candidates are ranked in transformed coordinates,
// mapped back via a Rayleigh quotient on the original matrix, and accepted
// only on an explicit residual ||A v - lambda v|| check.
std::vector<RitzPair> arnoldi_engine(
    const SparseOperator& A,
    const std::function<Eigen::VectorXcd(const Eigen::VectorXcd&)>& op,
    KrylovMode mode, const KrylovOptions& opts,
    std::vector<std::string>& warnings) {
  const auto n = A.dim();
  const int m_max = static_cast<int>(
      std::min<SparseOperator::Index>(opts.max_subspace, n));
  const int m_min = static_cast<int>(std::min<SparseOperator::Index>(
      std::max(opts.min_subspace, 2 * opts.k), n));
  const int k = opts.k;

  Eigen::MatrixXcd V(n, m_max + 1);
  Eigen::MatrixXcd H = Eigen::MatrixXcd::Zero(m_max + 1, m_max);

  GaussianStream rng(opts.start_seed);
  for (Eigen::Index i = 0; i < n; ++i) V(i, 0) = cplx(rng.next(), rng.next());
  V.col(0).normalize();

  double best_worst_residual = 1e300;
  std::vector<RitzPair> best;

  // evaluate the current subspace; returns true when k pairs are accepted
  const auto analyze = [&](int m, bool final_call) {
    Eigen::ComplexEigenSolver<Eigen::MatrixXcd> ces(H.topLeftCorner(m, m),
                                                    true);
    if (ces.info() != Eigen::Success) return false;
    std::vector<int> rank(static_cast<size_t>(m));
    std::iota(rank.begin(), rank.end(), 0);
    const auto& th = ces.eigenvalues();
    if (mode == KrylovMode::shift_invert) {
      std::sort(rank.begin(), rank.end(),
                [&](int a, int b) { return std::abs(th(a)) > std::abs(th(b)); });
    } else {
      std::sort(rank.begin(), rank.end(),
                [&](int a, int b) { return th(a).real() > th(b).real(); });
    }
    const int kc = std::min(k, m);
    std::vector<RitzPair> pairs;
    double worst = 0.0;
    for (int c = 0; c < kc; ++c) {
      const int j = rank[static_cast<size_t>(c)];
      Eigen::VectorXcd u = V.leftCols(m) * ces.eigenvectors().col(j);
      const double un = u.norm();
      if (!(un > 0.0)) return false;
      u /= un;
      const cplx lambda = u.dot(A.apply(u));  // Rayleigh quotient
      const double res = (A.apply(u) - lambda * u).norm();
      worst = std::max(worst, res);
      pairs.push_back({lambda, std::move(u), res, false});
    }
    if (worst < best_worst_residual) {
      best_worst_residual = worst;
      best = pairs;
    }
    if (kc == k && worst < opts.tol) {
      best = std::move(pairs);
      best_worst_residual = worst;
      return true;
    }
    (void)final_call;
    return false;
  };

  int m = 0;
  bool done = false;
  while (m < m_max && !done) {
    Eigen::VectorXcd w = op(V.col(m));
    const double nrm0 = w.norm();
    for (int pass = 0; pass < 2; ++pass) {
      for (int i = 0; i <= m; ++i) {
        const cplx h = V.col(i).dot(w);
        w -= h * V.col(i);
        H(i, m) += h;
      }
    }
    const double nrm = w.norm();
    if (nrm <= 1e-12 * std::max(nrm0, 1e-300)) {
      // invariant subspace: keep the exact block, continue from a fresh
      // random direction (H stays block triangular, Ritz pairs stay valid)
      H(m + 1, m) = 0.0;
      if (m + 1 >= m_max) {
        ++m;
        break;
      }
      Eigen::VectorXcd f(n);
      for (Eigen::Index i = 0; i < n; ++i)
        f(i) = cplx(rng.next(), rng.next());
      for (int pass = 0; pass < 2; ++pass)
        for (int i = 0; i <= m; ++i) f -= V.col(i).dot(f) * V.col(i);
      if (f.norm() <= 1e-14) {
        ++m;
        break;  // whole space exhausted
      }
      V.col(m + 1) = f.normalized();
      warnings.push_back("arnoldi: invariant subspace at step " +
                         std::to_string(m + 1) + ", restarted basis");
    } else {
      H(m + 1, m) = nrm;
      V.col(m + 1) = w / nrm;
    }
    ++m;
    const bool checkpoint =
        (m >= m_min && (m - m_min) % 16 == 0) || m == m_max;
    if (checkpoint) done = analyze(m, m == m_max);
  }
  if (!done) done = analyze(m, true);

  if (!done) {
    // near-defective fallback: accept a residual-stalled set below the
    // looser ceiling (expected adjacent to exceptional points)
    if (static_cast<int>(best.size()) == std::min<int>(k, m) &&
        best_worst_residual < opts.defective_tol) {
      for (auto& p : best)
        if (p.residual >= opts.tol) p.near_defective = true;
      std::ostringstream msg;
      msg << "near-defective acceptance: worst residual "
          << best_worst_residual;
      warnings.push_back(msg.str());
    } else {
      throw convergence_error("krylov eigensolver did not reach tolerance",
                              best_worst_residual);
    }
  }
  return best;
}

SpectrumResult result_from_pairs(std::vector<RitzPair> pairs,
                                 SparseOperator::Index dim, Method method,
                                 std::vector<std::string> warnings) {
  SpectrumResult s;
  s.method = method;
  s.warnings = std::move(warnings);
  s.eigenvectors.emplace(dim, static_cast<Eigen::Index>(pairs.size()));
  for (size_t i = 0; i < pairs.size(); ++i) {
    s.eigenvalues.push_back(pairs[i].lambda);
    s.residuals.push_back(pairs[i].residual);
    s.eigenvectors->col(static_cast<Eigen::Index>(i)) = pairs[i].vec;
    if (pairs[i].near_defective) {
      std::ostringstream msg;
      msg << "near-defective pair at lambda=" << pairs[i].lambda
          << " residual=" << pairs[i].residual;
      s.warnings.push_back(msg.str());
    }
  }
  apply_order(s, spectral_order(s.eigenvalues));
  return classify_real(std::move(s), 0.0);
}

using ColSparse = Eigen::SparseMatrix<cplx, Eigen::ColMajor>;

}  // namespace

SpectrumResult dense_spectrum(const SparseOperator& block, bool want_vectors) {
  const auto n = block.dim();
  if (n > kDenseLimit)
    throw resource_limit_error("dense_spectrum: dim " + std::to_string(n) +
                               " exceeds limit " + std::to_string(kDenseLimit));
  Eigen::MatrixXcd a = block.dense();
  const auto ln = static_cast<lapack_int>(n);
  Eigen::VectorXcd w(n);
  Eigen::MatrixXcd vr(want_vectors ? n : 1, want_vectors ? n : 1);
  const lapack_int info = LAPACKE_zgeev(
      LAPACK_COL_MAJOR, 'N', want_vectors ? 'V' : 'N', ln, a.data(), ln,
      w.data(), nullptr, 1, vr.data(), want_vectors ? ln : 1);
  if (info != 0)
    throw numeric_error("dense_spectrum: zgeev failed with info " +
                        std::to_string(info));

  SpectrumResult s;
  s.method = Method::dense;
  s.eigenvalues.assign(w.data(), w.data() + n);
  if (want_vectors) {
    s.eigenvectors = vr;
    s.residuals.resize(static_cast<size_t>(n));
    for (Eigen::Index j = 0; j < n; ++j) {
      s.eigenvectors->col(j).normalize();
      s.residuals[static_cast<size_t>(j)] =
          (block.apply(s.eigenvectors->col(j)) -
           s.eigenvalues[static_cast<size_t>(j)] * s.eigenvectors->col(j))
              .norm();
    }
  }
  apply_order(s, spectral_order(s.eigenvalues));
  return classify_real(std::move(s), 0.0);
}

SpectrumResult krylov_near_zero(const SparseOperator& block, int k,
                                cplx shift) {
  KrylovOptions opts;
  opts.k = k;
  opts.shift = shift;
  return krylov_near_zero(block, opts);
}

SpectrumResult krylov_near_zero(const SparseOperator& block,
                                const KrylovOptions& opts) {
  if (opts.k < 1) throw std::invalid_argument("krylov_near_zero: k < 1");
  const auto n = block.dim();
  if (opts.k >= n) {
    // exhaustive case: the whole spectrum is requested
    return dense_spectrum(block, true);
  }
  KrylovOptions o = opts;
  o.max_subspace = static_cast<int>(std::min<SparseOperator::Index>(
      std::max(o.max_subspace, 4 * o.k), n));

  std::vector<std::string> warnings;
  ColSparse mat = block.matrix();
  ColSparse eye(n, n);
  eye.setIdentity();
  Eigen::SparseLU<ColSparse> lu;
  cplx sigma = o.shift;
  const double scale = std::max(1.0, max_abs(block));
  double nudge = 1e-5 * scale;
  for (int attempt = 0;; ++attempt) {
    ColSparse shifted = mat - sigma * eye;
    shifted.makeCompressed();
    lu.compute(shifted);
    bool good = lu.info() == Eigen::Success;
    if (good) {
      // a singular shift (e.g. the steady block at shift 0) factors without
      // an error flag and solves backward-stably, but the solution explodes
      // along the null direction and the Arnoldi basis fills with noise.
      // Detect via the growth of a random-rhs solve.
      GaussianStream prng(0x9e3779b97f4a7c15ull);
      Eigen::VectorXcd rhs(n);
      for (Eigen::Index i = 0; i < n; ++i)
        rhs(i) = cplx(prng.next(), prng.next());
      rhs.normalize();
      const Eigen::VectorXcd x = lu.solve(rhs);
      good = x.allFinite() && (shifted * x - rhs).norm() < 1e-8 &&
             x.norm() < 1e12;
    }
    if (good) break;
    if (attempt >= 3)
      throw numeric_error("krylov_near_zero: LU factorization failed");
    // nudge the shift off the spectrum along the imaginary axis
    sigma = o.shift + cplx(0.0, nudge);
    nudge *= 100.0;
    warnings.push_back("shift nudged to avoid singular factorization");
  }

  auto op = [&lu](const Eigen::VectorXcd& x) { return lu.solve(x).eval(); };
  auto pairs = arnoldi_engine(block, op, KrylovMode::shift_invert, o,
                              warnings);
  return result_from_pairs(std::move(pairs), n, Method::krylov_shift_invert,
                           std::move(warnings));
}

SpectrumResult krylov_rightmost(const SparseOperator& block,
                                const KrylovOptions& opts) {
  if (opts.k < 1) throw std::invalid_argument("krylov_rightmost: k < 1");
  const auto n = block.dim();
  if (opts.k >= n) return dense_spectrum(block, true);
  KrylovOptions o = opts;
  o.max_subspace = static_cast<int>(std::min<SparseOperator::Index>(
      std::max(o.max_subspace, 8 * o.k), n));

  std::vector<std::string> warnings;
  auto op = [&block](const Eigen::VectorXcd& x) { return block.apply(x); };
  auto pairs =
      arnoldi_engine(block, op, KrylovMode::rightmost, o, warnings);
  return result_from_pairs(std::move(pairs), n, Method::krylov_rightmost,
                           std::move(warnings));
}

GapValue dissipative_gap(const SpectrumResult& s, bool steady_block) {
  if (steady_block)
    throw std::invalid_argument(
        "dissipative_gap: spectrum is from the steady block (gap would be "
        "trivially zero)");
  if (s.eigenvalues.empty())
    throw std::invalid_argument("dissipative_gap: empty spectrum");
  GapValue g;
  g.mu = s.mu;
  g.realization_id = s.realization_id;
  double m = 1e300;
  for (const auto& l : s.eigenvalues) m = std::min(m, std::abs(l.real()));
  g.gamma0 = m;
  return g;
}

double eigenvector_distance(const Eigen::VectorXcd& v1,
                            const Eigen::VectorXcd& v2) {
  if (v1.size() != v2.size())
    throw std::invalid_argument("eigenvector_distance: dimension mismatch");
  return 1.0 - std::min(1.0, std::abs(v1.dot(v2)));
}

SpectrumResult classify_real(SpectrumResult s, double eps_im) {
  if (eps_im <= 0.0) {
    double scale = 0.0;
    for (const auto& l : s.eigenvalues) scale = std::max(scale, std::abs(l));
    eps_im = 1e-8 * std::max(scale, 1e-300);
  }
  s.eps_im_used = eps_im;
  s.classification.clear();
  for (const auto& l : s.eigenvalues)
    s.classification.push_back(std::abs(l.imag()) < eps_im
                                   ? EigClass::real
                                   : EigClass::complex_pair_member);

  // conjugation-closure audit on the complex entries
  const double pair_tol = 1e-8;
  std::vector<bool> used(s.eigenvalues.size(), false);
  for (size_t i = 0; i < s.eigenvalues.size(); ++i) {
    if (s.classification[i] == EigClass::real || used[i]) continue;
    const cplx target = std::conj(s.eigenvalues[i]);
    bool found = false;
    for (size_t j = 0; j < s.eigenvalues.size(); ++j) {
      if (j == i || used[j] ||
          s.classification[j] == EigClass::real)
        continue;
      if (std::abs(s.eigenvalues[j] - target) <
          pair_tol * std::max(1.0, std::abs(target))) {
        used[i] = used[j] = true;
        found = true;
        break;
      }
    }
    if (!found) {
      std::ostringstream msg;
      msg << "unpaired complex eigenvalue " << s.eigenvalues[i];
      s.warnings.push_back(msg.str());
    }
  }
  return s;
}

void export_spectrum_csv(const SpectrumResult& s, std::ostream& out) {
  write_header_block(
      out, {{"kind", "spectrum"},
            {"method", s.method == Method::dense
                           ? "dense"
                           : (s.method == Method::krylov_shift_invert
                                  ? "krylov_shift_invert"
                                  : "krylov_rightmost")},
            {"eps_im", format_full(s.eps_im_used)}});
  out << "mu,seed,block,re,im,classification\n";
  for (size_t i = 0; i < s.eigenvalues.size(); ++i) {
    out << format_full(s.mu) << ',' << s.realization_id << ','
        << s.block_label << ',' << format_full(s.eigenvalues[i].real()) << ','
        << format_full(s.eigenvalues[i].imag()) << ','
        << (s.classification[i] == EigClass::real ? "real"
                                                  : "complex_pair_member")
        << '\n';
  }
}

}  // namespace lsyk
