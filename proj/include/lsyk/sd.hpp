#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "lsyk/types.hpp"

namespace lsyk {

// Midpoint discretization of the length-t contour: tau_j = (j + 1/2) dt.
struct SDGrid {
  double t = 0.0;
  int m = 0;
  double dt = 0.0;
  std::vector<double> weights;  // midpoint rule: dt each
};

SDGrid make_grid(double t, int m);  // m >= 16 enforced

enum class BranchLabel { system_seeded, bath_seeded };

// Two-time state on the doubled contour. The four m x m blocks (a,b) in
// {+,-}^2 are stored as one 2m x 2m matrix with + indices first:
// G.block(a*m, b*m, m, m) is G_ab(tau_i, tau_j).
struct SDState {
  Eigen::MatrixXcd G;
  Eigen::MatrixXcd Sigma;
  double mu = 0.0;
  double J = 0.0;
  int q = 4;
  bool converged = false;
  double residual = 0.0;
  int iterations = 0;
  BranchLabel branch = BranchLabel::bath_seeded;
};

struct ActionValue {
  double t = 0.0;
  double iS = 0.0;
  BranchLabel branch_label = BranchLabel::bath_seeded;
  bool converged = false;
};

// Analytic J=0 propagator with the jump terms absorbed: the bath-dressed
// two-branch kernel (antiperiodic on the contour, same-branch diagonal
// set to the jump average 0).
Eigen::MatrixXcd dressed_propagator(const SDGrid& grid, double mu);

// Smooth self-energy closure Sigma_ab = s_ab J^2 G_ab^{q-1} with
// s_aa = -1, s_{+-} = s_{-+} = (-1)^{q/2} (q = 4: +1); the delta-function
// bath terms live inside the dressed propagator instead. The action's
// quartic table is t_ab = -s_ab, fixed by requiring its variation to
// reproduce these closures.
Eigen::MatrixXcd self_energy(const Eigen::MatrixXcd& G, double J, int q);

// Damped fixed-point iteration of (I - G0 Sigma dt^2) G = G0.
SDState sd_iterate(const SDGrid& grid, double mu, double J, int q,
                   const SDState& seed_state, double mixing = 0.3,
                   double tol = 1e-8, int max_iter = 5000);

// iS per Majorana, normalized so t -> 0 gives ln 2; real part of the
// saddle value (conjugate-pair saddles make it real up to roundoff).
ActionValue evaluate_action(const SDState& state, const SDGrid& grid);

// Bath branch: seeded from the dressed propagator, with a downward
// t-march fallback when the direct basin is too narrow at small t.
SDState solve_bath_branch(double mu, double t, int m, double J, int q = 4);

// System branch: the closed-SYK saddle continued from mu = 0 (coupling-
// phase continuation at a small anchor contour, then marched in mu and t).
SDState solve_system_branch(double mu, double t, int m, double J, int q = 4);

struct TransitionReport {
  enum class Verdict { transition, crossover };
  Verdict verdict = Verdict::crossover;
  std::optional<double> t_star;      // crossing time when transition
  double slope_difference = 0.0;     // d(iS)/dt mismatch at the crossing
};

TransitionReport dominant_branch(const std::vector<ActionValue>& actions);

// Actions of both branches across a t grid (ascending). Each branch is
// anchored once and marched point to point: continuity keeps a branch on
// its own saddle, where independent per-t solves can fall into spurious
// attractors near a basin edge. Points beyond a basin end are returned
// with converged = false.
std::vector<ActionValue> scan_branches(double mu,
                                       const std::vector<double>& t_grid,
                                       int m, double J, int q = 4);

struct SDFitResult {
  double gamma0 = 0.0;
  std::optional<double> omega;  // oscillatory regime only
  double rms_residual = 0.0;
  std::string form;  // "log_linear" or "damped_sinusoid"
};

// Decay rate of G_{++}(tau_j, tau_0) inside the window (fractions of t);
// oscillatory fit below mu = 0.15, log-linear above.
SDFitResult fit_gamma0_sd(const SDState& state, const SDGrid& grid,
                          double window_lo = 0.05, double window_hi = 0.45);

// Equal-time and antisymmetry diagnostics (max deviations).
double equal_time_error(const SDState& state);
double antisymmetry_error(const SDState& state);

void export_sd_json(const SDState& state, const SDGrid& grid,
                    const ActionValue& action, std::ostream& out);
void export_g_slice_csv(const SDState& state, const SDGrid& grid,
                        std::ostream& out);

}  // namespace lsyk
