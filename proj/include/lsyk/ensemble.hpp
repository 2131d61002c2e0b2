#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lsyk/fit.hpp"
#include "lsyk/io_util.hpp"
#include "lsyk/spectral.hpp"

namespace lsyk {

struct EnsembleSpec {
  std::vector<int> n_list;       // system Majoranas N (N_tot = 2N)
  std::vector<double> mu_list;
  int samples_per_point = 1;
  std::uint64_t base_seed = 0;
  std::map<int, int> samples_override;  // per-N sample count override
  int k = 16;                    // Krylov eigenvalue count
  int dense_auto_limit = 512;    // block dim at or below -> dense path
  int workers = 0;               // 0 = LSYK_WORKERS env, else core count
};

EnsembleSpec parse_ensemble_spec(const KeyValueConfig& cfg);

struct ScalingFit {
  double mu = 0.0;
  double gamma0_inf = 0.0;  // extrapolated intercept
  double b = 0.0;           // slope against 1/N_tot
  double stderr_gamma0 = 0.0;
  double stderr_b = 0.0;
  double chi2 = 0.0;
  std::vector<std::tuple<int, double, double>> points;  // (N_tot, mean, sem)
};

// One gap per (N, mu, sample); seeds derive from (base_seed, N, mu-index,
// sample-index) via the stable mixing hash. Completed records append to
// the JSON-lines journal; existing records are trusted and skipped, so
// interrupted runs resume. Per-point failures are recorded, not fatal.
std::vector<GapValue> run_ensemble(const EnsembleSpec& spec,
                                   const std::string& journal_path);

ScalingFit fit_scaling(
    const std::vector<std::tuple<int, double, double>>& points, double mu);

struct MeanPoint {
  int n_total = 0;
  double mu = 0.0;
  double mean = 0.0;
  double sem = 0.0;
  int samples = 0;
};

// Per-(size, mu) sample means and standard errors, in (mu, size) order.
std::vector<MeanPoint> aggregate_means(const EnsembleSpec& spec,
                                       const std::vector<GapValue>& gaps);

// Aggregate gap records into per-mu scaling fits. A mu value is skipped
// (not fitted) unless at least three distinct sizes contributed samples.
std::vector<ScalingFit> fit_all_scalings(const EnsembleSpec& spec,
                                         const std::vector<GapValue>& gaps);

// Error records accumulated in a journal (empty when every task succeeded).
std::vector<std::string> journal_failures(const std::string& journal_path);

struct CurvePoint {
  double mu = 0.0;
  double gamma0 = 0.0;
  double stderr_gamma0 = 0.0;
};

struct CurveSummary {
  std::vector<CurvePoint> points;  // ascending mu
  std::optional<double> local_max_mu;
  std::optional<double> local_min_mu;
  bool monotonic = true;
};

// Interior extrema are strict against both neighbors; with several, the
// highest-valued maximum and lowest-valued minimum are the ones reported.
CurveSummary gap_curve(const std::vector<ScalingFit>& fits);

std::uint64_t ensemble_sample_seed(std::uint64_t base, int n, int mu_index,
                                   int sample_index);

// The gap of one realization: build, decompose, diagonalize the gap block
// (dense at or below the auto limit, Krylov above), min |Re| eigenvalue.
GapValue single_gap(int n, double mu, std::uint64_t seed, int k,
                    int dense_auto_limit);

void export_scaling_csv(const std::vector<ScalingFit>& fits,
                        std::ostream& out);

}  // namespace lsyk
