#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "lsyk/ep.hpp"

using namespace lsyk;

namespace {

// single-coupling N=4 realization with a prescribed coupling strength
DisorderRealization n4_realization(double J) {
  DisorderRealization d;
  d.n_majorana = 4;
  d.q = 4;
  d.seed = 1;
  d.couplings = {{{0, 1, 2, 3}, J}};
  return d;
}

std::vector<double> linspace_grid(double lo, double hi, int n) {
  std::vector<double> g(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i)
    g[static_cast<size_t>(i)] = lo + (hi - lo) * i / (n - 1);
  return g;
}

// the conjugate pair (trace with Im < 0 early on, plus its partner)
std::pair<const BranchTrace*, const BranchTrace*> find_pair(
    const std::vector<BranchTrace>& traces) {
  for (const auto& t : traces) {
    if (t.values.front().imag() < -1e-10 && t.partner_id) {
      for (const auto& u : traces)
        if (u.id == *t.partner_id) return {&t, &u};
    }
  }
  return {nullptr, nullptr};
}

}  // namespace

TEST_SUITE("ep") {

TEST_CASE("closed-form gap: piecewise branches and continuity") {
  CHECK(n4_oracle_gap(0.244, 0.05) == doctest::Approx(0.1).epsilon(1e-12));
  // continuous at the coalescence point mu = J/2 (square-root branch:
  // the approach from above goes like sqrt(mu - J/2))
  CHECK(n4_oracle_gap(0.244, 0.122) ==
        doctest::Approx(0.244).epsilon(1e-12));
  CHECK(n4_oracle_gap(0.244, 0.122 + 1e-12) ==
        doctest::Approx(0.244).epsilon(1e-5));
  const double expect = 0.4 - std::sqrt(0.04 - 0.014884);
  CHECK(n4_oracle_gap(0.244, 0.2) == doctest::Approx(expect).epsilon(1e-12));
  CHECK(n4_oracle_gap(1.0, 0.1) == doctest::Approx(0.2).epsilon(1e-12));
  CHECK_THROWS_AS((void)n4_oracle_gap(0.0, 0.1), std::invalid_argument);
  CHECK_THROWS_AS((void)n4_oracle_gap(0.3, -0.1), std::invalid_argument);
}

TEST_CASE("closed-form pair: conjugate below, real split above") {
  const double J = 0.244;
  {
    const auto [a, b] = n4_oracle_pair(J, 0.05);
    CHECK(a.real() == doctest::Approx(-0.1).epsilon(1e-12));
    CHECK(b.real() == doctest::Approx(-0.1).epsilon(1e-12));
    const double g = std::sqrt(0.25 * J * J - 0.05 * 0.05);
    CHECK(a.imag() == doctest::Approx(g).epsilon(1e-12));
    CHECK(b.imag() == doctest::Approx(-g).epsilon(1e-12));
  }
  {
    const auto [a, b] = n4_oracle_pair(J, 0.2);
    CHECK(a.imag() == 0.0);
    CHECK(b.imag() == 0.0);
    CHECK(std::min(std::abs(a.real()), std::abs(b.real())) ==
          doctest::Approx(n4_oracle_gap(J, 0.2)).epsilon(1e-12));
    CHECK(a.real() + b.real() == doctest::Approx(-0.8).epsilon(1e-12));
  }
}

TEST_CASE("sweep: every branch follows the analytic pair") {
  const auto d = n4_realization(0.244);
  const auto grid = linspace_grid(0.02, 0.45, 44);
  const auto traces = sweep_branches(d, grid, 8);
  REQUIRE(traces.size() >= 8);

  for (const auto& t : traces) {
    for (size_t i = 0; i < t.mu_grid.size(); ++i) {
      const auto [a, b] = n4_oracle_pair(0.244, t.mu_grid[i]);
      const double dist =
          std::min(std::abs(t.values[i] - a), std::abs(t.values[i] - b));
      CHECK(dist < 1e-9);
    }
  }

  // complex branches carry conjugate partners and a coalescence point
  // within one grid step of J/2
  int paired = 0;
  for (const auto& t : traces) {
    if (std::abs(t.values.front().imag()) < 1e-10) continue;
    REQUIRE(t.partner_id.has_value());
    ++paired;
    REQUIRE(t.became_real_at.has_value());
    CHECK(std::abs(*t.became_real_at - 0.122) < 0.011);
  }
  CHECK(paired == 8);

  // post-coalescence repulsion: the split real branches move in opposite
  // directions along the real axis relative to the common -2mu drift.
  // (the block is the pair with multiplicity four, so which degenerate
  // copy continues onto which real branch is a gauge choice: check the
  // populations, not a specific partner assignment)
  const auto slope_past = [&](const BranchTrace& t) {
    std::vector<std::pair<double, double>> pts;
    for (size_t i = 0; i < t.mu_grid.size(); ++i)
      if (t.mu_grid[i] > 0.25)
        pts.emplace_back(t.mu_grid[i], t.values[i].real());
    REQUIRE(pts.size() >= 2);
    return (pts.back().second - pts.front().second) /
           (pts.back().first - pts.front().first);
  };
  int slower = 0, faster = 0;
  for (const auto& t : traces) {
    if (std::abs(t.values.front().imag()) < 1e-10) continue;
    const double s = slope_past(t);
    if (s + 2.0 > 0.1) ++slower;
    if (s + 2.0 < -0.1) ++faster;
  }
  CHECK(slower == 4);
  CHECK(faster == 4);
}

TEST_CASE("sweep: values match a fresh diagonalization at each mu") {
  const auto d = sample_disorder(6, 4, 33);
  const auto grid = linspace_grid(0.05, 0.5, 10);
  const auto traces = sweep_branches(d, grid, 6);
  for (const auto& t : traces) {
    for (size_t i = 0; i < t.mu_grid.size(); ++i) {
      const auto b = build_bundle(d, t.mu_grid[i]);
      const auto s = dense_spectrum(gap_block(b), false);
      double best = 1e300;
      for (const auto& l : s.eigenvalues)
        best = std::min(best, std::abs(l - t.values[i]));
      CHECK(best < 1e-9);
    }
  }
}

TEST_CASE("sweep: grid entirely above the coalescence is all-real") {
  const auto d = n4_realization(0.244);
  const auto traces =
      sweep_branches(d, {0.3, 0.4, 0.5}, 8);
  for (const auto& t : traces) {
    CHECK(!t.partner_id.has_value());
    for (const auto& v : t.values) CHECK(std::abs(v.imag()) < 1e-9);
  }
}

TEST_CASE("locate: coalescence at half the coupling") {
  for (double J : {0.244, 1.0}) {
    CAPTURE(J);
    const auto d = n4_realization(J);
    const auto traces =
        sweep_branches(d, {0.35 * J, 0.65 * J}, 8);
    const auto [b1, b2] = find_pair(traces);
    REQUIRE(b1 != nullptr);
    const auto ev = locate_ep(*b1, *b2, d);
    CHECK(std::abs(ev.mu_ep - 0.5 * J) <= 1e-6);
    CHECK(ev.refinement_width <= 1e-6);
    CHECK(std::abs(ev.lambda_ep.imag()) < 1e-6);
    CHECK(std::abs(ev.lambda_ep.real() + J) < 1e-5);
    REQUIRE(ev.d_trace.size() >= 3);
    // eigenvector coalescence: decreasing approach, tiny at the end
    for (size_t i = 0; i + 1 < ev.d_trace.size(); ++i)
      CHECK(ev.d_trace[i + 1].second < ev.d_trace[i].second + 1e-12);
    CHECK(ev.d_trace.back().second < 1e-4);
  }
}

TEST_CASE("locate: reproduces half-coupling for many random couplings") {
  std::mt19937_64 rng(424242);
  std::uniform_real_distribution<double> uj(0.1, 1.0);
  for (int rep = 0; rep < 100; ++rep) {
    const double J = uj(rng);
    CAPTURE(rep);
    CAPTURE(J);
    const auto d = n4_realization(J);
    const auto traces =
        sweep_branches(d, {0.35 * J, 0.65 * J}, 8);
    const auto [b1, b2] = find_pair(traces);
    REQUIRE(b1 != nullptr);
    const auto ev = locate_ep(*b1, *b2, d);
    CHECK(std::abs(ev.mu_ep - 0.5 * J) <= 1e-6);
  }
}

TEST_CASE("locate: no event when the pair stays complex") {
  const auto d = n4_realization(0.244);
  const auto traces =
      sweep_branches(d, {0.02, 0.06, 0.10}, 8);
  const auto [b1, b2] = find_pair(traces);
  REQUIRE(b1 != nullptr);
  CHECK_THROWS_AS((void)locate_ep(*b1, *b2, d), no_ep_error);
}

TEST_CASE("locate: rejects non-partner branches") {
  const auto d = n4_realization(0.244);
  const auto traces =
      sweep_branches(d, {0.08, 0.16}, 8);
  const auto [b1, b2] = find_pair(traces);
  REQUIRE(b1 != nullptr);
  // a second trace with the same sign of Im is not the conjugate partner
  const BranchTrace* other = nullptr;
  for (const auto& t : traces)
    if (t.id != b1->id && t.id != b2->id &&
        t.values.front().imag() * b1->values.front().imag() > 0.0)
      other = &t;
  REQUIRE(other != nullptr);
  CHECK_THROWS_AS((void)locate_ep(*b1, *other, d), no_ep_error);
}

TEST_CASE("counts: pair births past the coalescence, no intruders") {
  const auto d = n4_realization(0.244);
  const auto grid = linspace_grid(0.03, 0.3, 10);
  const auto traces = sweep_branches(d, grid, 8);
  const auto rows = count_real_and_intruders(traces, grid, 1e-8);
  REQUIRE(rows.size() == grid.size());
  for (const auto& r : rows) {
    CHECK(r.intruder_count == 0);
    if (r.mu < 0.122) {
      CHECK(r.real_count == 0);
      CHECK(r.ep_born_count == 0);
    }
    if (r.mu > 0.13) {
      CHECK(r.real_count == 8);
      CHECK(r.ep_born_count == 8);
    }
  }
}

TEST_CASE("counts: pure-loss generator is real everywhere") {
  auto d = sample_disorder(6, 4, 17);
  for (auto& c : d.couplings) c.second = 0.0;
  const auto grid = linspace_grid(0.1, 0.4, 4);
  const auto traces = sweep_branches(d, grid, 8);
  const auto rows = count_real_and_intruders(traces, grid, 1e-8);
  for (const auto& r : rows) {
    CHECK(r.real_count >= 8);
    CHECK(r.intruder_count >= 8);
    CHECK(r.ep_born_count == 0);
  }
}

TEST_CASE("sweep: branch topology is stable under grid refinement") {
  const auto d = sample_disorder(8, 4, 11);
  const auto coarse = linspace_grid(0.05, 0.6, 23);
  const auto fine = linspace_grid(0.05, 0.6, 45);
  const int k = 128;  // whole gap block: no tracking-window churn
  const auto ta = sweep_branches(d, coarse, k);
  const auto tb = sweep_branches(d, fine, k);
  CHECK(ta.size() == tb.size());
  const auto n_became = [](const std::vector<BranchTrace>& ts) {
    int n = 0;
    for (const auto& t : ts)
      if (t.became_real_at) ++n;
    return n;
  };
  CHECK(n_became(ta) == n_became(tb));
  const auto ra = count_real_and_intruders(ta, coarse, 1e-8);
  const auto rb = count_real_and_intruders(tb, coarse, 1e-8);
  REQUIRE(ra.size() == rb.size());
  for (size_t i = 0; i < ra.size(); ++i) {
    CHECK(ra[i].real_count == rb[i].real_count);
    CHECK(ra[i].intruder_count == rb[i].intruder_count);
  }
}

TEST_CASE("exports: branch csv and event json") {
  const auto d = n4_realization(0.244);
  const auto traces = sweep_branches(d, {0.08, 0.16}, 8);
  std::ostringstream csv;
  export_branches_csv(traces, csv);
  CHECK(csv.str().find("branch_id,mu,re,im") != std::string::npos);
  CHECK(csv.str().find("0.08") != std::string::npos);

  const auto [b1, b2] = find_pair(traces);
  REQUIRE(b1 != nullptr);
  const auto ev = locate_ep(*b1, *b2, d);
  std::ostringstream js;
  export_ep_json({ev}, d, js);
  CHECK(js.str().find("\"mu_ep\"") != std::string::npos);
  CHECK(js.str().find("\"d_trace\"") != std::string::npos);
}

TEST_CASE("validation: malformed sweep requests throw") {
  const auto d = n4_realization(0.244);
  CHECK_THROWS_AS((void)sweep_branches(d, {}, 4), std::invalid_argument);
  CHECK_THROWS_AS((void)sweep_branches(d, {0.2, 0.1}, 4),
                  std::invalid_argument);
  CHECK_THROWS_AS((void)sweep_branches(d, {-0.1, 0.2}, 4),
                  std::invalid_argument);
  CHECK_THROWS_AS((void)sweep_branches(d, {0.1, 0.2}, 0),
                  std::invalid_argument);
  CHECK_THROWS_AS(
      (void)count_real_and_intruders({}, {0.1}, 0.0), std::invalid_argument);
}

}  // TEST_SUITE
