#include "lsyk/sd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

#include "lsyk/fit.hpp"
#include "lsyk/io_util.hpp"

namespace lsyk {

namespace {

constexpr double kLn2 = 0.6931471805599453;

// Margin over ln 2 beyond which a marched solution has left the physical
// basin (the form factor is bounded by the doubled-space dimension).
constexpr double kActionCeiling = kLn2 + 2e-2;

void check_q(int q) {
  if (q < 2 || q % 2 != 0)
    throw std::invalid_argument("sd: q must be even and >= 2");
}

// elementwise integer power by repeated multiplication (exact for the
// small exponents used here)
Eigen::MatrixXcd elem_pow(const Eigen::MatrixXcd& a, int p) {
  Eigen::MatrixXcd r = Eigen::MatrixXcd::Ones(a.rows(), a.cols());
  for (int i = 0; i < p; ++i) r = r.cwiseProduct(a);
  return r;
}

int sign_offdiag(int q) { return (q / 2) % 2 == 0 ? 1 : -1; }  // (-1)^{q/2}

// one damped fixed-point pass shared by the single-branch (phase
// continuation) and full two-branch solvers
struct IterationOutcome {
  bool converged = false;
  double residual = 0.0;
  int iterations = 0;
};

// Solve (I - dt^2 G0 S(G)) G = G0 by damped iteration; S is supplied by
// the caller so the same loop serves both the dressed two-branch closure
// and the phase-continued single-branch closure.
template <typename SigmaFn>
IterationOutcome damped_iterate(const Eigen::MatrixXcd& G0, double dt,
                                Eigen::MatrixXcd& G, const SigmaFn& sigma,
                                double mixing, double tol, int max_iter) {
  const auto n = G0.rows();
  const Eigen::MatrixXcd I = Eigen::MatrixXcd::Identity(n, n);
  double alpha = mixing;
  double best = std::numeric_limits<double>::infinity();
  std::vector<double> tail;
  IterationOutcome out;
  for (int it = 0; it < max_iter; ++it) {
    const Eigen::MatrixXcd M = I - dt * dt * (G0 * sigma(G));
    const Eigen::MatrixXcd Gn = M.partialPivLu().solve(G0);
    const double res = (Gn - G).cwiseAbs().maxCoeff();
    out.iterations = it + 1;
    out.residual = res;
    if (!std::isfinite(res))
      throw numeric_error("sd_iterate: non-finite update at iteration " +
                          std::to_string(it + 1));
    G = (1.0 - alpha) * G + alpha * Gn;
    if (res < tol) {
      out.converged = true;
      return out;
    }
    tail.push_back(res);
    if (tail.size() > 8) tail.erase(tail.begin());
    if (res > 1e6 && res > 1e4 * best) {
      std::ostringstream msg;
      msg << "sd_iterate: diverging residuals (last";
      for (double r : tail) msg << ' ' << r;
      msg << ")";
      throw convergence_error(msg.str(), best);
    }
    // sustained growth: damp harder
    if (res > 4.0 * best) alpha = std::max(alpha * 0.5, 0.02);
    best = std::min(best, res);
  }
  return out;
}

Eigen::MatrixXcd full_sigma(const Eigen::MatrixXcd& G, double J, int q,
                            int m) {
  Eigen::MatrixXcd S(2 * m, 2 * m);
  const double d = -J * J;                      // same branch
  const double o = sign_offdiag(q) * J * J;     // opposite branch
  S.topLeftCorner(m, m) = d * elem_pow(G.topLeftCorner(m, m), q - 1);
  S.bottomRightCorner(m, m) = d * elem_pow(G.bottomRightCorner(m, m), q - 1);
  S.topRightCorner(m, m) = o * elem_pow(G.topRightCorner(m, m), q - 1);
  S.bottomLeftCorner(m, m) = o * elem_pow(G.bottomLeftCorner(m, m), q - 1);
  return S;
}

// the mu = 0 single-branch closed-system saddle on the real-time contour,
// reached by continuing the coupling phase J^2 -> e^{i phi} J^2 from the
// statistics-friendly phi = 0 solution to the target phi = pi
Eigen::MatrixXcd closed_system_saddle(const SDGrid& grid, double J, int q) {
  const int m = grid.m;
  const Eigen::MatrixXcd G0full = dressed_propagator(grid, 0.0);
  const Eigen::MatrixXcd g0 = G0full.topLeftCorner(m, m);
  Eigen::MatrixXcd g = g0;
  const double pi = 3.14159265358979323846;
  double phi = 0.0, step = pi / 8.0;
  const double min_step = pi / 4096.0;
  while (phi < pi - 1e-12) {
    const double nxt = std::min(phi + step, pi);
    const cplx pref = std::exp(cplx(0.0, nxt)) * J * J;
    Eigen::MatrixXcd trial = g;
    const double tol = nxt >= pi - 1e-12 ? 1e-9 : 1e-7;
    IterationOutcome o;
    try {
      o = damped_iterate(
          g0, grid.dt, trial,
          [&](const Eigen::MatrixXcd& x) {
            return (pref * elem_pow(x, q - 1)).eval();
          },
          0.3, tol, 3000);
    } catch (const std::exception&) {
      o.converged = false;
    }
    if (!o.converged) {
      step *= 0.5;
      if (step < min_step)
        throw convergence_error(
            "closed-system saddle: phase continuation stalled at phi = " +
                std::to_string(phi),
            o.residual);
      continue;
    }
    g = trial;
    phi = nxt;
    step = std::min(step * 1.5, pi / 8.0);
  }
  Eigen::MatrixXcd G = Eigen::MatrixXcd::Zero(2 * m, 2 * m);
  G.topLeftCorner(m, m) = g;
  G.bottomRightCorner(m, m) = g.conjugate();
  return G;
}

SDState make_state(Eigen::MatrixXcd G, double mu, double J, int q,
                   BranchLabel branch, const IterationOutcome& o, int m) {
  SDState s;
  s.Sigma = full_sigma(G, J, q, m);
  s.G = std::move(G);
  s.mu = mu;
  s.J = J;
  s.q = q;
  s.converged = o.converged;
  s.residual = o.residual;
  s.iterations = o.iterations;
  s.branch = branch;
  return s;
}

// continuation helpers: march one converged G to new (mu, t) with adaptive
// step halving; returns false when the step floor is hit
bool march_mu(Eigen::MatrixXcd& G, const SDGrid& grid, double J, int q,
              double mu_from, double mu_to, double tol) {
  double mu = mu_from, step = 0.05;
  while (std::abs(mu - mu_to) > 1e-12) {
    const double dir = mu_to > mu ? 1.0 : -1.0;
    const double nxt = mu + dir * std::min(step, std::abs(mu_to - mu));
    Eigen::MatrixXcd trial = G;
    bool ok = true;
    try {
      const Eigen::MatrixXcd G0 = dressed_propagator(grid, nxt);
      ok = damped_iterate(
               G0, grid.dt, trial,
               [&](const Eigen::MatrixXcd& x) {
                 return full_sigma(x, J, q, grid.m);
               },
               0.4, tol, 4000)
               .converged;
    } catch (const std::exception&) {
      ok = false;
    }
    if (!ok) {
      step *= 0.5;
      if (step < 1e-4) return false;
      continue;
    }
    G = trial;
    mu = nxt;
    step = std::min(step * 1.5, 0.05);
  }
  return true;
}

// Marching in contour length keeps m fixed: midpoint fractions are
// t-independent, so the previous G seeds the next grid unchanged. Each
// accepted step must stay below the action ceiling (spurious saddles
// violate the form-factor bound and must not silently take over).
bool march_t(Eigen::MatrixXcd& G, int m, double mu, double J, int q,
             double t_from, double t_to, double tol) {
  double t = t_from, step = 0.5;
  const double dir = t_to > t_from ? 1.0 : -1.0;
  while (std::abs(t - t_to) > 1e-12) {
    const double nxt = t + dir * std::min(step, std::abs(t_to - t));
    const SDGrid g = make_grid(nxt, m);
    Eigen::MatrixXcd trial = G;
    bool ok = true;
    try {
      const Eigen::MatrixXcd G0 = dressed_propagator(g, mu);
      ok = damped_iterate(
               G0, g.dt, trial,
               [&](const Eigen::MatrixXcd& x) {
                 return full_sigma(x, J, q, m);
               },
               0.4, tol, 4000)
               .converged;
    } catch (const std::exception&) {
      ok = false;
    }
    if (ok) {
      IterationOutcome conv;
      conv.converged = true;
      SDState probe = make_state(trial, mu, J, q,
                                 BranchLabel::system_seeded, conv, m);
      if (evaluate_action(probe, g).iS > kActionCeiling) ok = false;
    }
    if (!ok) {
      step *= 0.5;
      if (step < 1e-3) return false;
      continue;
    }
    G = trial;
    t = nxt;
    step = std::min(step * 1.5, 0.5);
  }
  return true;
}

}  // namespace

SDGrid make_grid(double t, int m) {
  if (!(t > 0.0)) throw std::invalid_argument("make_grid: t must be > 0");
  if (m < 16) throw std::invalid_argument("make_grid: m must be >= 16");
  SDGrid g;
  g.t = t;
  g.m = m;
  g.dt = t / m;
  g.weights.assign(static_cast<size_t>(m), g.dt);
  return g;
}

Eigen::MatrixXcd dressed_propagator(const SDGrid& grid, double mu) {
  if (!(mu >= 0.0))
    throw std::invalid_argument("dressed_propagator: mu must be >= 0");
  const int m = grid.m;
  const double t = grid.t;
  const double ch = 2.0 * std::cosh(mu * t / 2.0);
  Eigen::MatrixXcd pp(m, m), pm(m, m);
  for (int i = 0; i < m; ++i) {
    const double ti = (i + 0.5) * grid.dt;
    for (int j = 0; j < m; ++j) {
      const double s = ti - (j + 0.5) * grid.dt;
      // antiperiodic image for negative separations: G(s) = -G(s + t)
      const double sa = s < 0.0 ? s + t : s;
      const double sgn = s < 0.0 ? -1.0 : 1.0;
      pp(i, j) = sgn * std::cosh(mu * (t / 2.0 - sa)) / ch;
      pm(i, j) = cplx(0.0, sgn * std::sinh(mu * (t / 2.0 - sa)) / ch);
    }
    pp(i, i) = 0.0;  // same-branch jump average
  }
  Eigen::MatrixXcd G0(2 * m, 2 * m);
  G0.topLeftCorner(m, m) = pp;
  G0.bottomRightCorner(m, m) = pp;
  G0.topRightCorner(m, m) = pm;
  G0.bottomLeftCorner(m, m) = -pm;
  return G0;
}

Eigen::MatrixXcd self_energy(const Eigen::MatrixXcd& G, double J, int q) {
  check_q(q);
  if (G.rows() != G.cols() || G.rows() % 2 != 0)
    throw std::invalid_argument("self_energy: G must be square 2m x 2m");
  return full_sigma(G, J, q, static_cast<int>(G.rows() / 2));
}

SDState sd_iterate(const SDGrid& grid, double mu, double J, int q,
                   const SDState& seed_state, double mixing, double tol,
                   int max_iter) {
  check_q(q);
  if (!(mixing > 0.0 && mixing <= 1.0))
    throw std::invalid_argument("sd_iterate: mixing must be in (0, 1]");
  if (!(tol > 0.0)) throw std::invalid_argument("sd_iterate: tol must be > 0");
  if (seed_state.G.rows() != 2 * grid.m || seed_state.G.cols() != 2 * grid.m)
    throw std::invalid_argument("sd_iterate: seed state has wrong dimension");

  const Eigen::MatrixXcd G0 = dressed_propagator(grid, mu);
  Eigen::MatrixXcd G = seed_state.G;
  const IterationOutcome o = damped_iterate(
      G0, grid.dt, G,
      [&](const Eigen::MatrixXcd& x) { return full_sigma(x, J, q, grid.m); },
      mixing, tol, max_iter);
  return make_state(std::move(G), mu, J, q, seed_state.branch, o, grid.m);
}

ActionValue evaluate_action(const SDState& state, const SDGrid& grid) {
  if (!state.converged)
    throw std::invalid_argument("evaluate_action: state is not converged");
  const int m = grid.m;
  if (state.G.rows() != 2 * m)
    throw std::invalid_argument("evaluate_action: state/grid mismatch");
  const double dt = grid.dt;
  const Eigen::MatrixXcd G0 = dressed_propagator(grid, state.mu);
  const Eigen::MatrixXcd S = full_sigma(state.G, state.J, state.q, m);
  const Eigen::MatrixXcd M =
      Eigen::MatrixXcd::Identity(2 * m, 2 * m) - dt * dt * (G0 * S);

  // real part of log det from the LU factor magnitudes (the imaginary part
  // is branch-ambiguous on a discrete grid and drops out of iS)
  const Eigen::PartialPivLU<Eigen::MatrixXcd> lu(M);
  double logdet_re = 0.0;
  for (Eigen::Index i = 0; i < lu.matrixLU().rows(); ++i)
    logdet_re += std::log(std::abs(lu.matrixLU()(i, i)));

  // quartic counterterm with t_ab = -s_ab
  const double off = -sign_offdiag(state.q);
  cplx gq = 0.0;
  gq += elem_pow(state.G.topLeftCorner(m, m), state.q).sum();
  gq += elem_pow(state.G.bottomRightCorner(m, m), state.q).sum();
  gq += off * elem_pow(state.G.topRightCorner(m, m), state.q).sum();
  gq += off * elem_pow(state.G.bottomLeftCorner(m, m), state.q).sum();
  gq *= dt * dt;

  const double pref =
      state.J * state.J / 2.0 * (1.0 - 1.0 / static_cast<double>(state.q));
  ActionValue a;
  a.t = grid.t;
  a.iS = std::log1p(std::exp(-state.mu * grid.t)) + 0.5 * logdet_re +
         pref * gq.real();
  a.branch_label = state.branch;
  a.converged = state.converged;
  return a;
}

SDState solve_bath_branch(double mu, double t, int m, double J, int q) {
  check_q(q);
  const SDGrid grid = make_grid(t, m);
  SDState seed;
  seed.G = dressed_propagator(grid, mu);
  seed.branch = BranchLabel::bath_seeded;
  SDState direct = sd_iterate(grid, mu, J, q, seed);
  if (direct.converged) return direct;

  // narrow basin at this t: anchor at a longer contour where the flat
  // branch is wide, then march down
  const double t_anchor = std::max(2.0 * t, t + 8.0);
  const SDGrid ga = make_grid(t_anchor, m);
  SDState aseed;
  aseed.G = dressed_propagator(ga, mu);
  aseed.branch = BranchLabel::bath_seeded;
  SDState anchor = sd_iterate(ga, mu, J, q, aseed);
  if (!anchor.converged)
    throw convergence_error("solve_bath_branch: no convergence at t = " +
                                std::to_string(t) + " or at the anchor t = " +
                                std::to_string(t_anchor),
                            anchor.residual);
  Eigen::MatrixXcd G = anchor.G;
  if (!march_t(G, m, mu, J, q, t_anchor, t, 1e-8))
    throw convergence_error(
        "solve_bath_branch: branch basin ends before reaching t = " +
            std::to_string(t),
        0.0);
  SDState out = sd_iterate(grid, mu, J, q,
                           [&] {
                             SDState s;
                             s.G = std::move(G);
                             s.branch = BranchLabel::bath_seeded;
                             return s;
                           }());
  if (!out.converged)
    throw convergence_error("solve_bath_branch: final polish did not converge",
                            out.residual);
  return out;
}

SDState solve_system_branch(double mu, double t, int m, double J, int q) {
  check_q(q);
  if (!(mu >= 0.0))
    throw std::invalid_argument("solve_system_branch: mu must be >= 0");
  const double t0 = std::min(t, 5.0);
  const SDGrid anchor_grid = make_grid(t0, m);
  Eigen::MatrixXcd G = closed_system_saddle(anchor_grid, J, q);
  if (mu > 0.0 && !march_mu(G, anchor_grid, J, q, 0.0, mu, 1e-9))
    throw convergence_error(
        "solve_system_branch: loss-rate continuation stalled before mu = " +
            std::to_string(mu),
        0.0);
  if (std::abs(t - t0) > 1e-12 && !march_t(G, m, mu, J, q, t0, t, 1e-9))
    throw convergence_error(
        "solve_system_branch: contour-length continuation stalled before "
        "t = " + std::to_string(t) +
            " (the branch basin ends or the action exceeds ln 2)",
        0.0);
  const SDGrid grid = make_grid(t, m);
  SDState seed;
  seed.G = std::move(G);
  seed.branch = BranchLabel::system_seeded;
  SDState out = sd_iterate(grid, mu, J, q, seed, 0.3, 1e-9);
  if (!out.converged)
    throw convergence_error(
        "solve_system_branch: final polish did not converge", out.residual);
  return out;
}

TransitionReport dominant_branch(const std::vector<ActionValue>& actions) {
  // collate per-t values of the two branches (converged entries only)
  std::vector<double> ts;
  for (const auto& a : actions)
    if (a.converged) ts.push_back(a.t);
  std::sort(ts.begin(), ts.end());
  ts.erase(std::unique(ts.begin(), ts.end(),
                       [](double a, double b) { return std::abs(a - b) < 1e-12; }),
           ts.end());

  const auto value_at = [&](BranchLabel b, double t) -> std::optional<double> {
    for (const auto& a : actions)
      if (a.converged && a.branch_label == b && std::abs(a.t - t) < 1e-12)
        return a.iS;
    return std::nullopt;
  };

  struct Curve {
    std::vector<double> t, y;
  };
  Curve sys, bath;
  for (double t : ts) {
    if (const auto v = value_at(BranchLabel::system_seeded, t)) {
      sys.t.push_back(t);
      sys.y.push_back(*v);
    }
    if (const auto v = value_at(BranchLabel::bath_seeded, t)) {
      bath.t.push_back(t);
      bath.y.push_back(*v);
    }
  }

  TransitionReport rep;
  if (sys.t.size() < 2 || bath.t.size() < 2) return rep;  // single branch

  // overlap analysis
  std::vector<std::pair<double, double>> diff;  // (t, iS_sys - iS_bath)
  for (size_t i = 0; i < sys.t.size(); ++i)
    if (const auto v = value_at(BranchLabel::bath_seeded, sys.t[i]))
      diff.emplace_back(sys.t[i], sys.y[i] - *v);

  double scale = 0.0;
  for (const auto& a : actions)
    if (a.converged) scale = std::max(scale, std::abs(a.iS));
  const double merge_tol = 1e-5 * std::max(scale, 1.0);

  const auto slope_near = [](const Curve& c, double t) {
    size_t j = 0;
    for (size_t i = 1; i < c.t.size(); ++i)
      if (std::abs(c.t[i] - t) < std::abs(c.t[j] - t)) j = i;
    const size_t a = j == 0 ? 0 : j - 1;
    const size_t b = j + 1 < c.t.size() ? j + 1 : j;
    return (c.y[b] - c.y[a]) / (c.t[b] - c.t[a]);
  };

  if (!diff.empty()) {
    const bool merged = std::all_of(
        diff.begin(), diff.end(),
        [&](const auto& d) { return std::abs(d.second) < merge_tol; });
    if (merged) return rep;  // one saddle: crossover
    for (size_t i = 1; i < diff.size(); ++i) {
      if (diff[i - 1].second == 0.0 || diff[i].second == 0.0) continue;
      if ((diff[i - 1].second < 0.0) != (diff[i].second < 0.0)) {
        const double t0 = diff[i - 1].first, t1 = diff[i].first;
        const double d0 = diff[i - 1].second, d1 = diff[i].second;
        rep.verdict = TransitionReport::Verdict::transition;
        rep.t_star = t0 + (t1 - t0) * (-d0) / (d1 - d0);
        rep.slope_difference = std::abs(slope_near(sys, *rep.t_star) -
                                        slope_near(bath, *rep.t_star));
        return rep;
      }
    }
    return rep;  // distinct branches that never cross in the window
  }

  // disjoint supports: the two basins end near the transition; extrapolate
  // each branch linearly from its endpoint facing the gap
  const bool sys_below = sys.t.back() < bath.t.front();
  const Curve& lo = sys_below ? sys : bath;
  const Curve& hi = sys_below ? bath : sys;
  if (lo.t.back() >= hi.t.front()) return rep;
  const size_t nl = lo.t.size();
  const double sl = (lo.y[nl - 1] - lo.y[nl - 2]) / (lo.t[nl - 1] - lo.t[nl - 2]);
  const double sh = (hi.y[1] - hi.y[0]) / (hi.t[1] - hi.t[0]);
  if (std::abs(sl - sh) < 1e-12) return rep;
  const double tx = (hi.y[0] - lo.y[nl - 1] + sl * lo.t[nl - 1] - sh * hi.t[0]) /
                    (sl - sh);
  if (tx > lo.t[nl - 1] - 1e-9 && tx < hi.t.front() + 1e-9) {
    rep.verdict = TransitionReport::Verdict::transition;
    rep.t_star = tx;
    rep.slope_difference = std::abs(sl - sh);
  }
  return rep;
}

std::vector<ActionValue> scan_branches(double mu,
                                       const std::vector<double>& t_grid,
                                       int m, double J, int q) {
  check_q(q);
  if (t_grid.empty())
    throw std::invalid_argument("scan_branches: empty t grid");
  if (!std::is_sorted(t_grid.begin(), t_grid.end()))
    throw std::invalid_argument("scan_branches: t grid must ascend");
  if (!(t_grid.front() > 0.0))
    throw std::invalid_argument("scan_branches: t must be > 0");

  std::vector<ActionValue> out;
  const auto record = [&](Eigen::MatrixXcd G, double t, BranchLabel label) {
    const SDGrid g = make_grid(t, m);
    SDState seed;
    seed.G = std::move(G);
    seed.branch = label;
    const SDState s = sd_iterate(g, mu, J, q, seed, 0.3, 1e-9);
    ActionValue a;
    a.t = t;
    a.branch_label = label;
    if (s.converged) {
      a = evaluate_action(s, g);
    }
    out.push_back(a);
    return s.G;
  };
  const auto unreached = [&](double t, BranchLabel label) {
    ActionValue a;
    a.t = t;
    a.branch_label = label;
    a.converged = false;
    out.push_back(a);
  };

  // system branch: anchor once, then march bidirectionally through the grid
  {
    const double t0 = std::min(5.0, t_grid.back());
    Eigen::MatrixXcd G_anchor;
    bool anchored = true;
    try {
      const SDGrid ag = make_grid(t0, m);
      G_anchor = closed_system_saddle(ag, J, q);
      if (mu > 0.0 && !march_mu(G_anchor, ag, J, q, 0.0, mu, 1e-9))
        anchored = false;
    } catch (const std::exception&) {
      anchored = false;
    }
    if (!anchored) {
      for (double t : t_grid) unreached(t, BranchLabel::system_seeded);
    } else {
      std::vector<double> below, above;
      for (double t : t_grid)
        (t <= t0 + 1e-12 ? below : above).push_back(t);
      std::sort(below.rbegin(), below.rend());
      for (const auto& seq : {below, above}) {
        Eigen::MatrixXcd G = G_anchor;
        double t_cur = t0;
        bool alive = true;
        for (double t : seq) {
          if (alive && march_t(G, m, mu, J, q, t_cur, t, 1e-9)) {
            t_cur = t;
            G = record(G, t, BranchLabel::system_seeded);
          } else {
            alive = false;
            unreached(t, BranchLabel::system_seeded);
          }
        }
      }
    }
  }

  // bath branch: converge at the top of the grid (directly, or marched in
  // from a longer anchor contour), then march downward
  {
    Eigen::MatrixXcd G;
    double t_cur = t_grid.back();
    bool alive = false;
    try {
      const SDGrid g = make_grid(t_cur, m);
      SDState seed;
      seed.G = dressed_propagator(g, mu);
      seed.branch = BranchLabel::bath_seeded;
      const SDState s = sd_iterate(g, mu, J, q, seed);
      if (s.converged) {
        G = s.G;
        alive = true;
      }
    } catch (const std::exception&) {
    }
    if (!alive) {
      try {
        const double ta = t_grid.back() + 8.0;
        const SDGrid g = make_grid(ta, m);
        SDState seed;
        seed.G = dressed_propagator(g, mu);
        seed.branch = BranchLabel::bath_seeded;
        const SDState s = sd_iterate(g, mu, J, q, seed);
        if (s.converged) {
          G = s.G;
          alive = march_t(G, m, mu, J, q, ta, t_cur, 1e-8);
        }
      } catch (const std::exception&) {
      }
    }
    for (auto it = t_grid.rbegin(); it != t_grid.rend(); ++it) {
      if (alive && march_t(G, m, mu, J, q, t_cur, *it, 1e-9)) {
        t_cur = *it;
        G = record(G, *it, BranchLabel::bath_seeded);
      } else {
        alive = false;
        unreached(*it, BranchLabel::bath_seeded);
      }
    }
  }

  std::sort(out.begin(), out.end(), [](const ActionValue& a,
                                       const ActionValue& b) {
    if (a.t != b.t) return a.t < b.t;
    return a.branch_label == BranchLabel::system_seeded &&
           b.branch_label == BranchLabel::bath_seeded;
  });
  return out;
}

SDFitResult fit_gamma0_sd(const SDState& state, const SDGrid& grid,
                          double window_lo, double window_hi) {
  if (!state.converged)
    throw std::invalid_argument("fit_gamma0_sd: state is not converged");
  if (!(window_lo > 0.0 && window_lo < window_hi && window_hi <= 0.5))
    throw std::invalid_argument(
        "fit_gamma0_sd: window fractions must satisfy 0 < lo < hi <= 1/2");
  const int m = grid.m;
  const Eigen::VectorXcd col = state.G.block(0, 0, m, m).col(0);
  const int lo = std::max(1, static_cast<int>(window_lo * m));
  const int hi = std::max(lo + 4, static_cast<int>(window_hi * m));
  if (hi > m)
    throw std::invalid_argument("fit_gamma0_sd: window exceeds the contour");

  std::vector<double> tau, mag, re;
  for (int j = lo; j < hi; ++j) {
    tau.push_back(j * grid.dt);  // separation from tau_0 on the midpoint grid
    mag.push_back(std::abs(col(j)));
    re.push_back(col(j).real());
  }

  SDFitResult out;
  if (state.mu >= 0.15) {
    out.form = "log_linear";
    out.gamma0 = fit_log_linear_decay(tau, mag);
    double ss = 0.0;
    // residual of the implied pure-exponential model
    const double c0 = std::log(mag.front()) + out.gamma0 * tau.front();
    for (size_t i = 0; i < tau.size(); ++i) {
      const double model = std::exp(c0 - out.gamma0 * tau[i]);
      ss += (mag[i] - model) * (mag[i] - model);
    }
    out.rms_residual = std::sqrt(ss / static_cast<double>(tau.size()));
  } else {
    out.form = "damped_sinusoid";
    const double gmax = 2.0 * std::max({state.J, state.mu, 0.5});
    const double wmax = 4.0 * std::max(state.J, 0.5);
    const SinusoidFit f = fit_damped_sinusoid(tau, re, gmax, wmax);
    if (!f.converged)
      throw fit_error("fit_gamma0_sd: damped-sinusoid fit did not converge");
    out.gamma0 = f.gamma;
    out.omega = f.omega;
    out.rms_residual = f.rms_residual;
  }
  return out;
}

double equal_time_error(const SDState& state) {
  const int m = static_cast<int>(state.G.rows() / 2);
  double worst = 0.0;
  for (int j = 0; j + 1 < m; ++j)
    worst = std::max(worst, std::abs(state.G(j + 1, j) - cplx(0.5, 0.0)));
  return worst;
}

double antisymmetry_error(const SDState& state) {
  const int m = static_cast<int>(state.G.rows() / 2);
  const auto pp = state.G.topLeftCorner(m, m);
  const auto mm = state.G.bottomRightCorner(m, m);
  return std::max((pp + pp.transpose()).cwiseAbs().maxCoeff(),
                  (mm + mm.transpose()).cwiseAbs().maxCoeff());
}

void export_sd_json(const SDState& state, const SDGrid& grid,
                    const ActionValue& action, std::ostream& out) {
  out << "{\"mu\": " << format_full(state.mu)
      << ", \"J\": " << format_full(state.J) << ", \"q\": " << state.q
      << ", \"t\": " << format_full(grid.t) << ", \"m\": " << grid.m
      << ", \"branch\": \""
      << (state.branch == BranchLabel::system_seeded ? "system_seeded"
                                                     : "bath_seeded")
      << "\", \"iS\": " << format_full(action.iS)
      << ", \"residual\": " << format_full(state.residual)
      << ", \"iterations\": " << state.iterations
      << ", \"converged\": " << (state.converged ? "true" : "false") << "}\n";
}

void export_g_slice_csv(const SDState& state, const SDGrid& grid,
                        std::ostream& out) {
  write_header_block(out, {{"kind", "g_slice"},
                           {"mu", format_full(state.mu)},
                           {"J", format_full(state.J)},
                           {"t", format_full(grid.t)}});
  out << "tau,re,im,abs\n";
  const int m = grid.m;
  const Eigen::VectorXcd col = state.G.block(0, 0, m, m).col(0);
  for (int j = 0; j < m; ++j)
    out << format_full(j * grid.dt) << ',' << format_full(col(j).real())
        << ',' << format_full(col(j).imag()) << ','
        << format_full(std::abs(col(j))) << '\n';
}

}  // namespace lsyk
