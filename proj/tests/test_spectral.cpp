#include <algorithm>
#include <cmath>
#include <sstream>

#include "doctest.h"
#include "lsyk/model.hpp"
#include "lsyk/spectral.hpp"

using namespace lsyk;

namespace {

SparseOperator two_by_two(cplx a00, cplx a01, cplx a10, cplx a11) {
  std::vector<Eigen::Triplet<cplx>> t;
  if (a00 != cplx{}) t.emplace_back(0, 0, a00);
  if (a01 != cplx{}) t.emplace_back(0, 1, a01);
  if (a10 != cplx{}) t.emplace_back(1, 0, a10);
  if (a11 != cplx{}) t.emplace_back(1, 1, a11);
  return SparseOperator::from_triplets(2, t);
}

// nearest-member distance of each value in `sub` to the multiset `full`
double subset_distance(const std::vector<cplx>& sub,
                       const std::vector<cplx>& full) {
  double worst = 0.0;
  for (const auto& v : sub) {
    double best = 1e300;
    for (const auto& w : full) best = std::min(best, std::abs(v - w));
    worst = std::max(worst, best);
  }
  return worst;
}

}  // namespace

TEST_SUITE("spectral") {

TEST_CASE("dense: diagonal matrix returns itself, sorted by |Re|") {
  const auto op = two_by_two(cplx{-2.0, 3.0}, 0, 0, cplx{-1.0, 0.0});
  const auto s = dense_spectrum(op, true);
  REQUIRE(s.eigenvalues.size() == 2);
  CHECK(s.eigenvalues[0] == cplx{-1.0, 0.0});
  CHECK(s.eigenvalues[1] == cplx{-2.0, 3.0});
  CHECK(s.method == Method::dense);
  CHECK(s.residuals[0] < 1e-14);
  CHECK(s.residuals[1] < 1e-14);
  CHECK(s.classification[0] == EigClass::real);
  CHECK(s.classification[1] == EigClass::complex_pair_member);
  // -2+3i has no conjugate partner here: audit must warn, not fail
  CHECK(!s.warnings.empty());
}

TEST_CASE("dense: defective Jordan block") {
  const auto op = two_by_two(0, 1, 0, 0);
  const auto s = dense_spectrum(op, true);
  CHECK(std::abs(s.eigenvalues[0]) < 1e-14);
  CHECK(std::abs(s.eigenvalues[1]) < 1e-14);
  // single eigenvector direction: the two returned columns coincide
  CHECK(eigenvector_distance(s.eigenvectors->col(0),
                             s.eigenvectors->col(1)) < 1e-12);
}

TEST_CASE("dense: two-mode block closed form at J=0.244, mu=0.05") {
  const double J = 0.244, mu = 0.05;
  const auto op = two_by_two(cplx{-2 * mu, -J / 2}, cplx{-mu, 0},
                             cplx{-mu, 0}, cplx{-2 * mu, J / 2});
  const auto s = dense_spectrum(op, false);
  const double im = std::sqrt(J * J / 4 - mu * mu);
  REQUIRE(s.eigenvalues.size() == 2);
  CHECK(std::abs(s.eigenvalues[0] - cplx{-0.1, -im}) < 1e-12);
  CHECK(std::abs(s.eigenvalues[1] - cplx{-0.1, +im}) < 1e-12);
  CHECK(im == doctest::Approx(0.111283).epsilon(1e-4));
}

TEST_CASE("dense: dim over limit throws") {
  CHECK_THROWS_AS(
      dense_spectrum(SparseOperator::identity(2 * kDenseLimit), false),
      resource_limit_error);
}

TEST_CASE("krylov shift-invert matches dense on the N=8 gap block") {
  const auto b = build_bundle(sample_disorder(8, 4, 41), 0.2);
  const auto& blk = gap_block(b);
  REQUIRE(blk.dim() == 128);
  const auto dense = dense_spectrum(blk, false);
  const auto kr = krylov_near_zero(blk, 6);
  CHECK(kr.method == Method::krylov_shift_invert);
  REQUIRE(kr.eigenvalues.size() == 6);
  CHECK(subset_distance(kr.eigenvalues, dense.eigenvalues) < 1e-8);
  for (double r : kr.residuals) CHECK(r < 1e-8);
  // nearest-|lambda| selection must reach the smallest-|Re| eigenvalue
  CHECK(std::abs(std::abs(kr.eigenvalues[0].real()) -
                 std::abs(dense.eigenvalues[0].real())) < 1e-8);
}

TEST_CASE("krylov rightmost matches dense leading |Re| set (N=8)") {
  const auto b = build_bundle(sample_disorder(8, 4, 43), 0.25);
  const auto& blk = gap_block(b);
  const auto dense = dense_spectrum(blk, false);
  KrylovOptions o;
  o.k = 6;
  const auto kr = krylov_rightmost(blk, o);
  CHECK(kr.method == Method::krylov_rightmost);
  REQUIRE(kr.eigenvalues.size() == 6);
  for (double r : kr.residuals) CHECK(r < 1e-8);
  // the 6 rightmost eigenvalues are exactly the first 6 in |Re| order
  std::vector<cplx> lead(dense.eigenvalues.begin(),
                         dense.eigenvalues.begin() + 6);
  CHECK(subset_distance(kr.eigenvalues, lead) < 1e-8);
}

TEST_CASE("krylov: steady block returns the zero mode") {
  const auto b = build_bundle(sample_disorder(6, 4, 19), 0.3);
  const auto s = krylov_near_zero(steady_block(b), 4);
  double best = 1e300;
  for (const auto& l : s.eigenvalues) best = std::min(best, std::abs(l));
  CHECK(best < 1e-9);
}

TEST_CASE("krylov: k >= dim falls through to the full spectrum") {
  const auto b = build_bundle(sample_disorder(4, 4, 3), 0.15);
  const auto& blk = gap_block(b);
  const auto full = krylov_near_zero(blk, 32);
  const auto dense = dense_spectrum(blk, false);
  REQUIRE(full.eigenvalues.size() == dense.eigenvalues.size());
  for (size_t i = 0; i < full.eigenvalues.size(); ++i)
    CHECK(std::abs(full.eigenvalues[i] - dense.eigenvalues[i]) < 1e-10);
}

TEST_CASE("krylov runs are deterministic") {
  const auto b = build_bundle(sample_disorder(8, 4, 7), 0.18);
  const auto a1 = krylov_near_zero(gap_block(b), 5);
  const auto a2 = krylov_near_zero(gap_block(b), 5);
  REQUIRE(a1.eigenvalues.size() == a2.eigenvalues.size());
  for (size_t i = 0; i < a1.eigenvalues.size(); ++i) {
    CHECK(a1.eigenvalues[i].real() == a2.eigenvalues[i].real());
    CHECK(a1.eigenvalues[i].imag() == a2.eigenvalues[i].imag());
  }
}

TEST_CASE("krylov: unreachable tolerance raises convergence error") {
  const auto b = build_bundle(sample_disorder(6, 4, 2), 0.2);
  KrylovOptions o;
  o.k = 4;
  o.tol = 1e-300;
  o.defective_tol = 1e-299;
  try {
    krylov_near_zero(gap_block(b), o);
    FAIL("expected convergence_error");
  } catch (const convergence_error& e) {
    CHECK(e.best_residual > 0.0);
    CHECK(e.best_residual < 1e-6);  // it did in fact converge well
  }
}

TEST_CASE("dissipative gap from the N=4 gap block follows 2mu") {
  const auto d = sample_disorder(4, 4, 57);
  const double J = std::abs(d.couplings.front().second);
  const double mu = 0.3 * J;
  const auto b = build_bundle(d, mu);
  auto s = dense_spectrum(gap_block(b), false);
  s.mu = mu;
  const auto g = dissipative_gap(s, false);
  CHECK(g.gamma0 == doctest::Approx(2 * mu).epsilon(1e-10));
  CHECK(g.mu == mu);
  CHECK_THROWS_AS(dissipative_gap(s, true), std::invalid_argument);
  CHECK_THROWS_AS(dissipative_gap(SpectrumResult{}, false),
                  std::invalid_argument);
}

TEST_CASE("eigenvector distance: phase invariance and orthogonality") {
  Eigen::VectorXcd v(3);
  v << cplx{0.3, 0.1}, cplx{-0.5, 0.4}, cplx{0.7, 0.0};
  v.normalize();
  const cplx phase = std::polar(1.0, 1.234);
  CHECK(eigenvector_distance(v, (v * phase).eval()) < 1e-14);
  Eigen::VectorXcd w(3);
  w << 0, 0, 1;
  Eigen::VectorXcd u(3);
  u << 1, 0, 0;
  CHECK(eigenvector_distance(u, w) == doctest::Approx(1.0));
  Eigen::VectorXcd bad(2);
  CHECK_THROWS_AS(eigenvector_distance(v, bad), std::invalid_argument);
}

TEST_CASE("eigenvector distance shrinks towards the two-mode coalescence") {
  const double J = 0.244;
  double prev = 1.0;
  for (double f : {0.90, 0.95, 0.99, 0.999}) {
    const double mu = f * J / 2;
    const auto op = two_by_two(cplx{-2 * mu, -J / 2}, cplx{-mu, 0},
                               cplx{-mu, 0}, cplx{-2 * mu, J / 2});
    const auto s = dense_spectrum(op, true);
    const double d = eigenvector_distance(s.eigenvectors->col(0),
                                          s.eigenvectors->col(1));
    CHECK(d < prev);
    prev = d;
    if (f == 0.99) CHECK(d < 0.15);
  }
  CHECK(prev < 0.02);
}

TEST_CASE("classification across the two-mode real/complex transition") {
  const double J = 0.244;
  for (double f : {0.5, 0.9, 1.1, 2.0}) {
    const double mu = f * J / 2;
    const auto op = two_by_two(cplx{-2 * mu, -J / 2}, cplx{-mu, 0},
                               cplx{-mu, 0}, cplx{-2 * mu, J / 2});
    const auto s = dense_spectrum(op, false);
    for (const auto c : s.classification)
      CHECK(c == (f < 1.0 ? EigClass::complex_pair_member : EigClass::real));
  }
}

TEST_CASE("classify_real: explicit tolerance and pairing") {
  SpectrumResult s;
  s.eigenvalues = {cplx{-1, 2}, cplx{-1, -2}, cplx{-3, 1e-12}};
  s = classify_real(std::move(s), 1e-6);
  CHECK(s.eps_im_used == 1e-6);
  CHECK(s.classification[0] == EigClass::complex_pair_member);
  CHECK(s.classification[1] == EigClass::complex_pair_member);
  CHECK(s.classification[2] == EigClass::real);
  CHECK(s.warnings.empty());
}

TEST_CASE("spectrum csv export carries values and classifications") {
  const auto b = build_bundle(sample_disorder(4, 4, 5), 0.2);
  auto s = dense_spectrum(gap_block(b), false);
  s.mu = 0.2;
  s.realization_id = 5;
  s.block_label = "gap";
  std::ostringstream out;
  export_spectrum_csv(s, out);
  const auto text = out.str();
  CHECK(text.find("mu,seed,block,re,im,classification") != std::string::npos);
  CHECK(text.find("gap") != std::string::npos);
  size_t rows = 0;
  for (char c : text)
    if (c == '\n') ++rows;
  CHECK(rows >= s.eigenvalues.size() + 1);
}

}  // TEST_SUITE
