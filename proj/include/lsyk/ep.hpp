#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "lsyk/model.hpp"
#include "lsyk/spectral.hpp"

namespace lsyk {

struct no_ep_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct BranchTrace {
  int id = 0;
  std::vector<double> mu_grid;  // ascending
  std::vector<cplx> values;     // one eigenvalue per mu
  std::optional<int> partner_id;          // conjugate partner
  std::optional<double> became_real_at;   // first mu real onward
  std::vector<std::string> warnings;
};

struct EPEvent {
  double mu_ep = 0.0;
  cplx lambda_ep;
  std::pair<int, int> branch_ids{-1, -1};
  std::vector<std::pair<double, double>> d_trace;  // (mu, D) on approach
  double refinement_width = 0.0;
};

struct SweepOptions {
  int k = 8;                   // branches tracked per mu
  int dense_auto_limit = 512;  // dense below, Krylov above
  double min_step = 1e-4;      // refinement floor for branch matching
  double eps_im_rel = 1e-8;    // x spectral scale
};

// Track the k near-zero gap-block eigenvalues across an ascending mu grid,
// nearest-neighbor matched, with local step halving where matching fails.
std::vector<BranchTrace> sweep_branches(const DisorderRealization& d,
                                        const std::vector<double>& mu_grid,
                                        int k, SweepOptions opts = {});

// Bisect (on the squared imaginary part) the coalescence of a conjugate
// pair to width 1e-6 in mu, recording the eigenvector distance approach.
EPEvent locate_ep(const BranchTrace& b1, const BranchTrace& b2,
                  const DisorderRealization& d, SweepOptions opts = {});

// Closed-form N=4 gap: 2mu below the exceptional point mu = J/2, else
// 2mu - sqrt(mu^2 - (J/2)^2).
double n4_oracle_gap(double J, double mu);

// The N=4 slow pair -2mu +- sqrt(mu^2 - (J/2)^2).
std::pair<cplx, cplx> n4_oracle_pair(double J, double mu);

struct RealCountRow {
  double mu = 0.0;
  int real_count = 0;      // branches real at this mu
  int ep_born_count = 0;   // real here with became_real_at <= mu
  int intruder_count = 0;  // real at every sampled mu
};

std::vector<RealCountRow> count_real_and_intruders(
    const std::vector<BranchTrace>& traces,
    const std::vector<double>& mu_grid, double eps_im);

void export_branches_csv(const std::vector<BranchTrace>& traces,
                         std::ostream& out);
void export_ep_json(const std::vector<EPEvent>& events,
                    const DisorderRealization& d, std::ostream& out);

}  // namespace lsyk
