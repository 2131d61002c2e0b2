#include <cmath>
#include <complex>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "lsyk/sd.hpp"

using namespace lsyk;

namespace {

constexpr double kLn2 = 0.6931471805599453;

SDState synthetic_state(const SDGrid& grid, double mu,
                        const std::vector<cplx>& column) {
  SDState s;
  s.G = Eigen::MatrixXcd::Zero(2 * grid.m, 2 * grid.m);
  for (int j = 0; j < grid.m; ++j) s.G(j, 0) = column[static_cast<size_t>(j)];
  s.mu = mu;
  s.J = 0.5;
  s.converged = true;
  return s;
}

}  // namespace

TEST_SUITE("sd") {

TEST_CASE("grid construction and validation") {
  const SDGrid g = make_grid(5.0, 64);
  CHECK(g.dt == doctest::Approx(5.0 / 64).epsilon(1e-15));
  CHECK(g.weights.size() == 64);
  CHECK(g.weights.front() == g.dt);
  CHECK_THROWS_AS(make_grid(0.0, 64), std::invalid_argument);
  CHECK_THROWS_AS(make_grid(5.0, 8), std::invalid_argument);
}

TEST_CASE("dressed propagator structure") {
  const SDGrid g = make_grid(6.0, 32);
  SUBCASE("free limit is the antisymmetric square wave") {
    const auto G0 = dressed_propagator(g, 0.0);
    for (int i = 0; i < 32; ++i)
      for (int j = 0; j < 32; ++j) {
        const cplx expect =
            i == j ? cplx(0.0) : cplx(i > j ? 0.5 : -0.5, 0.0);
        CHECK(std::abs(G0(i, j) - expect) < 1e-14);      // ++ block
        CHECK(std::abs(G0(32 + i, j)) < 1e-14);          // -+ block vanishes
      }
  }
  SUBCASE("dissipative kernel symmetries") {
    const double mu = 0.3;
    const auto G0 = dressed_propagator(g, mu);
    const auto pp = G0.topLeftCorner(32, 32);
    const auto pm = G0.topRightCorner(32, 32);
    CHECK((pp + pp.transpose()).cwiseAbs().maxCoeff() < 1e-14);
    CHECK((G0.bottomLeftCorner(32, 32) + pm).cwiseAbs().maxCoeff() < 1e-14);
    CHECK(pm.real().cwiseAbs().maxCoeff() < 1e-14);  // pure imaginary
    // equal-time cross-branch value i tanh(mu t / 2) / 2
    const cplx want(0.0, std::tanh(mu * 3.0) / 2.0);
    for (int i = 0; i < 32; ++i) CHECK(std::abs(pm(i, i) - want) < 1e-14);
    CHECK_THROWS_AS(dressed_propagator(g, -0.1), std::invalid_argument);
  }
}

TEST_CASE("free case: solver lands on the dressed propagator immediately") {
  const SDGrid g = make_grid(10.0, 64);
  const double mu = 0.2;
  SDState seed;
  seed.G = dressed_propagator(g, mu);
  const SDState s = sd_iterate(g, mu, /*J=*/0.0, 4, seed);
  CHECK(s.converged);
  CHECK(s.iterations <= 2);
  CHECK((s.G - dressed_propagator(g, mu)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(equal_time_error(s) < 5.0 * g.dt);
  CHECK(antisymmetry_error(s) < 1e-14);
  // |G_{++}| decays exponentially away from the source
  const Eigen::VectorXcd col = s.G.col(0).head(64);
  CHECK(std::abs(col(40)) < std::abs(col(10)));
}

TEST_CASE("free case: fitted decay rate equals the loss rate") {
  // the image charge at t - tau stays negligible inside the fit window
  const double mu = 0.2;
  const SDGrid g = make_grid(70.0, 256);
  SDState seed;
  seed.G = dressed_propagator(g, mu);
  const SDState s = sd_iterate(g, mu, 0.0, 4, seed);
  REQUIRE(s.converged);
  const SDFitResult f = fit_gamma0_sd(s, g, 0.05, 0.25);
  CHECK(f.form == "log_linear");
  CHECK(std::abs(f.gamma0 - mu) < 1e-3);
}

TEST_CASE("closed-system limit: branches decouple at zero loss") {
  const double J = 0.5;
  const int m = 64;
  const SDState s = solve_system_branch(0.0, 3.0, m, J);
  REQUIRE(s.converged);
  CHECK(s.G.topRightCorner(m, m).cwiseAbs().maxCoeff() < 1e-10);
  CHECK(s.G.bottomLeftCorner(m, m).cwiseAbs().maxCoeff() < 1e-10);
  // the ++ block alone satisfies the single-branch Dyson equation
  const SDGrid g = make_grid(3.0, m);
  const Eigen::MatrixXcd g0 =
      dressed_propagator(g, 0.0).topLeftCorner(m, m);
  const Eigen::MatrixXcd gpp = s.G.topLeftCorner(m, m);
  const Eigen::MatrixXcd sig =
      -J * J * gpp.cwiseProduct(gpp).cwiseProduct(gpp);
  const Eigen::MatrixXcd lhs =
      (Eigen::MatrixXcd::Identity(m, m) - g.dt * g.dt * (g0 * sig)) * gpp;
  CHECK((lhs - g0).cwiseAbs().maxCoeff() < 1e-7);
  // conjugate saddle on the minus branch
  CHECK((s.G.bottomRightCorner(m, m) - gpp.conjugate())
            .cwiseAbs()
            .maxCoeff() < 1e-7);
}

TEST_CASE("action normalization is exact in the trivial limit") {
  const SDGrid g = make_grid(2.0, 32);
  SDState seed;
  seed.G = dressed_propagator(g, 0.0);
  const SDState s = sd_iterate(g, 0.0, 0.0, 4, seed);
  REQUIRE(s.converged);
  CHECK(evaluate_action(s, g).iS == doctest::Approx(kLn2).epsilon(1e-14));
}

TEST_CASE("action approaches ln 2 on a short contour") {
  const SDGrid g = make_grid(0.1, 256);
  SDState seed;
  seed.G = dressed_propagator(g, 0.15);
  const SDState s = sd_iterate(g, 0.15, 0.5, 4, seed);
  REQUIRE(s.converged);
  CHECK(std::abs(evaluate_action(s, g).iS - kLn2) < 1e-2);
}

TEST_CASE("anchored action values reproduce a reference implementation") {
  // frozen from an independent prototype of the same discretization
  // (J = 0.5, m = 64 midpoint grid)
  const double J = 0.5;
  const int m = 64;
  SUBCASE("system branch at zero loss") {
    const SDState s = solve_system_branch(0.0, 5.0, m, J);
    const ActionValue a = evaluate_action(s, make_grid(5.0, m));
    CHECK(a.iS == doctest::Approx(0.54863328).epsilon(5e-4));
  }
  SUBCASE("system branch continued to mu = 0.15") {
    const SDState s = solve_system_branch(0.15, 5.0, m, J);
    const ActionValue a = evaluate_action(s, make_grid(5.0, m));
    CHECK(a.iS == doctest::Approx(0.27555315).epsilon(5e-4));
  }
  SUBCASE("bath branch at mu = 0.15, long contour") {
    const SDState s = solve_bath_branch(0.15, 12.0, m, J);
    CHECK(s.iterations < 500);
    const ActionValue a = evaluate_action(s, make_grid(12.0, m));
    CHECK(a.iS == doctest::Approx(0.03045433).epsilon(5e-4));
  }
}

TEST_CASE("single saddle above the dynamical transition") {
  const double J = 0.5, mu = 0.35;
  const int m = 64;
  const SDState sys = solve_system_branch(mu, 5.0, m, J);
  const SDState bath = solve_bath_branch(mu, 5.0, m, J);
  REQUIRE(sys.converged);
  REQUIRE(bath.converged);
  CHECK((sys.G - bath.G).cwiseAbs().maxCoeff() < 1e-5);
  const auto g = make_grid(5.0, m);
  const double a_sys = evaluate_action(sys, g).iS;
  const double a_bath = evaluate_action(bath, g).iS;
  CHECK(a_sys == doctest::Approx(0.12219632).epsilon(5e-4));
  CHECK(std::abs(a_sys - a_bath) < 1e-6);
}

TEST_CASE("two distinct saddles coexist below the transition") {
  const double J = 0.5, mu = 0.15;
  const int m = 64;
  const SDState sys = solve_system_branch(mu, 8.0, m, J);
  const SDState bath = solve_bath_branch(mu, 8.0, m, J);
  REQUIRE(sys.converged);
  REQUIRE(bath.converged);
  CHECK((sys.G - bath.G).cwiseAbs().maxCoeff() > 0.1);
  const auto g = make_grid(8.0, m);
  const double a_sys = evaluate_action(sys, g).iS;
  const double a_bath = evaluate_action(bath, g).iS;
  CHECK(a_sys == doctest::Approx(0.094643).epsilon(5e-3));
  CHECK(a_bath == doctest::Approx(0.088315).epsilon(5e-3));
  CHECK(a_sys > a_bath);  // the short-time phase still dominates here
  CHECK(equal_time_error(sys) < 5.0 * g.dt);
  CHECK(equal_time_error(bath) < 5.0 * g.dt);
  CHECK(antisymmetry_error(sys) < 1e-7);
  CHECK(antisymmetry_error(bath) < 1e-7);
}

TEST_CASE("grid halving converges second order or better in budget") {
  const double J = 0.5, mu = 0.2, t = 3.0;
  double prev = 0.0, is32 = 0.0, is64 = 0.0, is128 = 0.0;
  for (int m : {32, 64, 128}) {
    SDState seed;
    const SDGrid g = make_grid(t, m);
    seed.G = dressed_propagator(g, mu);
    const SDState s = sd_iterate(g, mu, J, 4, seed, 0.3, 1e-10);
    REQUIRE(s.converged);
    prev = evaluate_action(s, g).iS;
    (m == 32 ? is32 : m == 64 ? is64 : is128) = prev;
  }
  CHECK(is64 == doctest::Approx(0.40389853).epsilon(5e-4));
  const double d1 = std::abs(is64 - is32);
  const double d2 = std::abs(is128 - is64);
  CHECK(d2 < 4.0 * d1);
  // measured contraction is ~1/2 per halving (the equal-time kink keeps
  // the midpoint rule first order here)
  CHECK(d2 < 0.75 * d1);
}

TEST_CASE("dominant branch: synthetic crossings") {
  const auto act = [](double t, double is, BranchLabel b) {
    ActionValue a;
    a.t = t;
    a.iS = is;
    a.branch_label = b;
    a.converged = true;
    return a;
  };
  SUBCASE("transversal line crossing") {
    std::vector<ActionValue> rows;
    for (double t : {1.0, 2.0, 3.0, 4.0, 5.0}) {
      rows.push_back(act(t, -0.1 * t, BranchLabel::system_seeded));
      rows.push_back(act(t, -0.3, BranchLabel::bath_seeded));
    }
    const auto rep = dominant_branch(rows);
    CHECK(rep.verdict == TransitionReport::Verdict::transition);
    REQUIRE(rep.t_star.has_value());
    CHECK(*rep.t_star == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(rep.slope_difference == doctest::Approx(0.1).epsilon(1e-9));
  }
  SUBCASE("identical branches mean a crossover") {
    std::vector<ActionValue> rows;
    for (double t : {1.0, 2.0, 3.0}) {
      rows.push_back(act(t, -0.2 * t, BranchLabel::system_seeded));
      rows.push_back(act(t, -0.2 * t, BranchLabel::bath_seeded));
    }
    CHECK(dominant_branch(rows).verdict ==
          TransitionReport::Verdict::crossover);
  }
  SUBCASE("a single surviving branch is a crossover") {
    std::vector<ActionValue> rows;
    for (double t : {1.0, 2.0, 3.0})
      rows.push_back(act(t, -0.2 * t, BranchLabel::bath_seeded));
    ActionValue dead;
    dead.t = 1.0;
    dead.branch_label = BranchLabel::system_seeded;
    dead.converged = false;
    rows.push_back(dead);
    CHECK(dominant_branch(rows).verdict ==
          TransitionReport::Verdict::crossover);
  }
  SUBCASE("disjoint basins extrapolate to a crossing") {
    // each branch dies near the exchange of dominance; the tails still
    // locate the crossing between the basin ends
    std::vector<ActionValue> rows;
    for (double t : {1.0, 2.0, 3.0})
      rows.push_back(act(t, 0.5 - 0.1 * t, BranchLabel::system_seeded));
    for (double t : {5.0, 6.0})
      rows.push_back(act(t, 0.15 - 0.02 * (t - 5.0),
                         BranchLabel::bath_seeded));
    const auto rep = dominant_branch(rows);
    CHECK(rep.verdict == TransitionReport::Verdict::transition);
    REQUIRE(rep.t_star.has_value());
    CHECK(*rep.t_star == doctest::Approx(3.125).epsilon(1e-9));
    CHECK(rep.slope_difference == doctest::Approx(0.08).epsilon(1e-9));
  }
  SUBCASE("non-crossing separated branches stay a crossover") {
    std::vector<ActionValue> rows;
    for (double t : {1.0, 2.0, 3.0}) {
      rows.push_back(act(t, -0.1 * t, BranchLabel::system_seeded));
      rows.push_back(act(t, -1.0 - 0.1 * t, BranchLabel::bath_seeded));
    }
    CHECK(dominant_branch(rows).verdict ==
          TransitionReport::Verdict::crossover);
  }
}

TEST_CASE("branch scan at mu = 0.35 reports the crossover") {
  const std::vector<double> grid{2.0, 3.0, 4.0};
  const auto rows = scan_branches(0.35, grid, 32, 0.5);
  REQUIRE(rows.size() == 6);
  for (const auto& a : rows) CHECK(a.converged);
  CHECK(dominant_branch(rows).verdict ==
        TransitionReport::Verdict::crossover);
}

TEST_CASE("decay fits on synthetic columns") {
  const SDGrid g = make_grid(20.0, 128);
  SUBCASE("pure exponential, log-linear regime") {
    std::vector<cplx> col(128);
    for (int j = 0; j < 128; ++j)
      col[static_cast<size_t>(j)] = 0.5 * std::exp(-0.2 * j * g.dt);
    const auto s = synthetic_state(g, 0.2, col);
    const auto f = fit_gamma0_sd(s, g);
    CHECK(f.form == "log_linear");
    CHECK(std::abs(f.gamma0 - 0.2) < 1e-6);
  }
  SUBCASE("damped oscillation, sinusoid regime") {
    std::vector<cplx> col(128);
    for (int j = 0; j < 128; ++j) {
      const double tau = j * g.dt;
      col[static_cast<size_t>(j)] =
          0.4 * std::exp(-0.1 * tau) * std::sin(0.7 * tau + 0.3);
    }
    const auto s = synthetic_state(g, 0.05, col);
    const auto f = fit_gamma0_sd(s, g);
    CHECK(f.form == "damped_sinusoid");
    CHECK(std::abs(f.gamma0 - 0.1) < 1e-4);
    REQUIRE(f.omega.has_value());
    CHECK(std::abs(*f.omega - 0.7) < 1e-4);
  }
  SUBCASE("regimes agree on oscillation-free data") {
    std::vector<cplx> col(128);
    for (int j = 0; j < 128; ++j)
      col[static_cast<size_t>(j)] = 0.5 * std::exp(-0.3 * j * g.dt);
    const auto below = fit_gamma0_sd(synthetic_state(g, 0.149, col), g);
    const auto above = fit_gamma0_sd(synthetic_state(g, 0.151, col), g);
    CHECK(below.form == "damped_sinusoid");
    CHECK(above.form == "log_linear");
    CHECK(std::abs(below.gamma0 - above.gamma0) <
          0.1 * std::abs(above.gamma0));
  }
}

TEST_CASE("argument validation") {
  const SDGrid g = make_grid(2.0, 32);
  SDState seed;
  seed.G = dressed_propagator(g, 0.1);
  CHECK_THROWS_AS(sd_iterate(g, 0.1, 0.5, 3, seed), std::invalid_argument);
  CHECK_THROWS_AS(sd_iterate(g, 0.1, 0.5, 4, seed, 0.0),
                  std::invalid_argument);
  CHECK_THROWS_AS(sd_iterate(g, 0.1, 0.5, 4, seed, 1.5),
                  std::invalid_argument);
  SDState bad;
  bad.G = Eigen::MatrixXcd::Zero(10, 10);
  CHECK_THROWS_AS(sd_iterate(g, 0.1, 0.5, 4, bad), std::invalid_argument);

  SDState unconverged;
  unconverged.G = dressed_propagator(g, 0.1);
  unconverged.converged = false;
  CHECK_THROWS_AS(evaluate_action(unconverged, g), std::invalid_argument);
  CHECK_THROWS_AS(fit_gamma0_sd(unconverged, g), std::invalid_argument);

  SDState ok = sd_iterate(g, 0.1, 0.0, 4, seed);
  CHECK_THROWS_AS(fit_gamma0_sd(ok, g, 0.3, 0.2), std::invalid_argument);
  CHECK_THROWS_AS(fit_gamma0_sd(ok, g, 0.1, 0.6), std::invalid_argument);
  CHECK_THROWS_AS(scan_branches(0.1, {}, 32, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(scan_branches(0.1, {3.0, 2.0}, 32, 0.5),
                  std::invalid_argument);
}

TEST_CASE("export formats") {
  const SDGrid g = make_grid(2.0, 32);
  SDState seed;
  seed.G = dressed_propagator(g, 0.2);
  seed.branch = BranchLabel::bath_seeded;
  const SDState s = sd_iterate(g, 0.2, 0.5, 4, seed);
  REQUIRE(s.converged);
  const ActionValue a = evaluate_action(s, g);

  std::ostringstream js;
  export_sd_json(s, g, a, js);
  CHECK(js.str().find("\"branch\": \"bath_seeded\"") != std::string::npos);
  CHECK(js.str().find("\"iS\": ") != std::string::npos);
  CHECK(js.str().find("\"converged\": true") != std::string::npos);

  std::ostringstream csv;
  export_g_slice_csv(s, g, csv);
  const std::string text = csv.str();
  CHECK(text.find("tau,re,im,abs") != std::string::npos);
  CHECK(std::count(text.begin(), text.end(), '\n') >= 33);
}

}  // TEST_SUITE
