#include "lsyk/ensemble.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <mutex>
#include <nlohmann/json.hpp>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>
#include <tuple>

#include "lsyk/model.hpp"

namespace lsyk {

namespace {

using json = nlohmann::json;

// Sparse LU of the shifted block stays affordable up to this dimension;
// beyond it the factorization-free rightmost Arnoldi takes over. (Kept
// below the dense ceiling so every path has headroom.)
constexpr SparseOperator::Index kFactorLimit = 4096;

void validate_spec(const EnsembleSpec& spec) {
  if (spec.n_list.empty())
    throw std::invalid_argument("ensemble: n_list is empty");
  for (int n : spec.n_list)
    if (n < 4 || n % 2 != 0)
      throw std::invalid_argument("ensemble: system sizes must be even and "
                                  ">= 4, got " + std::to_string(n));
  if (spec.mu_list.empty())
    throw std::invalid_argument("ensemble: mu_list is empty");
  for (double mu : spec.mu_list)
    if (!(mu >= 0.0))
      throw std::invalid_argument("ensemble: mu must be >= 0");
  if (spec.samples_per_point < 1)
    throw std::invalid_argument("ensemble: samples_per_point must be >= 1");
  for (const auto& [n, s] : spec.samples_override)
    if (s < 1)
      throw std::invalid_argument("ensemble: sample override must be >= 1");
  if (spec.k < 1) throw std::invalid_argument("ensemble: k must be >= 1");
  if (spec.dense_auto_limit < 1)
    throw std::invalid_argument("ensemble: dense_auto_limit must be >= 1");
}

int samples_for(const EnsembleSpec& spec, int n) {
  const auto it = spec.samples_override.find(n);
  return it == spec.samples_override.end() ? spec.samples_per_point
                                           : it->second;
}

struct Task {
  int n = 0;
  int mu_index = 0;
  int sample = 0;
  std::uint64_t seed = 0;
};

using TaskKey = std::tuple<int, int, int>;  // (n, mu_index, sample)

int resolve_workers(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("LSYK_WORKERS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && v >= 1 && v <= 256) return static_cast<int>(v);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

// Journal lines are appended one JSON object at a time; a torn final line
// from an interrupted run parses as garbage and is skipped on reload.
std::vector<json> read_journal_records(const std::string& path) {
  std::vector<json> records;
  std::ifstream in(path);
  if (!in) return records;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json rec = json::parse(line, nullptr, /*allow_exceptions=*/false);
    if (rec.is_discarded() || !rec.is_object()) continue;
    records.push_back(std::move(rec));
  }
  return records;
}

}  // namespace

std::uint64_t ensemble_sample_seed(std::uint64_t base, int n, int mu_index,
                                   int sample_index) {
  return mix_seed(base, {static_cast<std::uint64_t>(n),
                         static_cast<std::uint64_t>(mu_index),
                         static_cast<std::uint64_t>(sample_index)});
}

GapValue single_gap(int n, double mu, std::uint64_t seed, int k,
                    int dense_auto_limit) {
  if (n < 4 || n % 2 != 0)
    throw std::invalid_argument("single_gap: system size must be even, >= 4");
  if (!(mu >= 0.0)) throw std::invalid_argument("single_gap: mu must be >= 0");
  if (k < 1) throw std::invalid_argument("single_gap: k must be >= 1");

  const DisorderRealization d = sample_disorder(n, 4, seed);
  const LiouvillianBundle bundle = build_bundle(d, mu);
  const SparseOperator& block = gap_block(bundle);
  const auto dim = block.dim();

  SpectrumResult s;
  if (dim <= dense_auto_limit) {
    s = dense_spectrum(block, false);
  } else {
    // All gap-block eigenvalues sit in the open left half-plane, so the
    // smallest |Re| is the rightmost eigenvalue; a shift-invert ranking by
    // |lambda| could skip a slow complex pair with large Im. Below the
    // factorization ceiling the LU-based solver is still cheaper.
    KrylovOptions opts;
    opts.k = k;
    opts.start_seed = mix_seed(seed, {0x5eedu});
    if (dim <= kFactorLimit) {
      SpectrumResult si = krylov_near_zero(block, opts);
      // Guard the blind spot: confirm against the rightmost eigenvalue.
      KrylovOptions ro = opts;
      ro.k = 1;
      SpectrumResult rm = krylov_rightmost(block, ro);
      if (!rm.eigenvalues.empty() &&
          std::abs(rm.eigenvalues.front().real()) + 1e-9 <
              std::abs(si.eigenvalues.front().real()))
        si = std::move(rm);
      s = std::move(si);
    } else {
      s = krylov_rightmost(block, opts);
    }
  }
  s.mu = mu;
  s.realization_id = seed;
  GapValue g = dissipative_gap(s, false);
  if (!std::isfinite(g.gamma0))
    throw numeric_error("single_gap: non-finite gap value");
  g.n_total = 2 * n;
  return g;
}

std::vector<GapValue> run_ensemble(const EnsembleSpec& spec,
                                   const std::string& journal_path) {
  validate_spec(spec);

  // Full deterministic task grid.
  std::vector<Task> tasks;
  for (int n : spec.n_list) {
    const int samples = samples_for(spec, n);
    for (int mi = 0; mi < static_cast<int>(spec.mu_list.size()); ++mi)
      for (int s = 0; s < samples; ++s)
        tasks.push_back(
            {n, mi, s, ensemble_sample_seed(spec.base_seed, n, mi, s)});
  }

  // Resume: trust previously journaled gap records, but only when their
  // identity fields match what this spec would have produced.
  std::map<TaskKey, double> done;
  bool journal_exists = false;
  {
    std::ifstream probe(journal_path);
    journal_exists = probe.good();
  }
  if (journal_exists) {
    std::map<TaskKey, Task> expected;
    for (const auto& t : tasks) expected.emplace(TaskKey{t.n, t.mu_index, t.sample}, t);
    for (const auto& rec : read_journal_records(journal_path)) {
      if (rec.value("kind", "") != "gap") continue;
      if (!rec.contains("n") || !rec.contains("mu_index") ||
          !rec.contains("sample") || !rec.contains("seed") ||
          !rec.contains("gamma0"))
        continue;
      const TaskKey key{rec["n"].get<int>(), rec["mu_index"].get<int>(),
                        rec["sample"].get<int>()};
      const auto it = expected.find(key);
      if (it == expected.end()) continue;  // outside this spec's grid
      // Seeds hash (base, n, mu-index, sample); a mu-index must also still
      // point at the same mu value, or an inserted grid point would silently
      // re-label old results.
      if (rec["seed"].get<std::uint64_t>() != it->second.seed ||
          (rec.contains("mu") &&
           rec["mu"].get<double>() != spec.mu_list[it->second.mu_index]))
        throw consistency_error(
            "run_ensemble: journal '" + journal_path +
            "' does not match this spec at size " +
            std::to_string(it->second.n) +
            " (different base_seed or reordered grid; use a fresh journal)");
      done[key] = rec["gamma0"].get<double>();
    }
  }

  std::ofstream journal(journal_path, std::ios::app);
  if (!journal)
    throw std::runtime_error("run_ensemble: cannot open journal '" +
                             journal_path + "'");
  if (journal_exists) {
    // a run killed mid-write leaves a torn line; terminate it so appended
    // records start on their own line
    std::ifstream tail(journal_path, std::ios::binary);
    tail.seekg(0, std::ios::end);
    if (tail.tellg() > 0) {
      tail.seekg(-1, std::ios::end);
      char last = 0;
      tail.get(last);
      if (last != '\n') journal << '\n';
    }
  }
  if (!journal_exists) {
    json meta{{"kind", "meta"},
              {"base_seed", spec.base_seed},
              {"q", 4},
              {"code_version", kVersion}};
    journal << meta.dump() << '\n' << std::flush;
  }

  std::vector<Task> pending;
  for (const auto& t : tasks)
    if (!done.count({t.n, t.mu_index, t.sample})) pending.push_back(t);

  // Shared-nothing workers over the pending queue; the journal append is
  // the single serialization point. Failures are journaled, not fatal.
  std::mutex journal_mutex;
  std::atomic<size_t> next{0};
  std::vector<std::pair<TaskKey, double>> fresh(pending.size());
  std::vector<char> ok(pending.size(), 0);

  const auto worker = [&]() {
    for (;;) {
      const size_t i = next.fetch_add(1);
      if (i >= pending.size()) return;
      const Task& t = pending[i];
      json rec{{"kind", "gap"},       {"n", t.n},
               {"n_total", 2 * t.n},  {"mu", spec.mu_list[t.mu_index]},
               {"mu_index", t.mu_index}, {"sample", t.sample},
               {"seed", t.seed}};
      try {
        const GapValue g = single_gap(t.n, spec.mu_list[t.mu_index], t.seed,
                                      spec.k, spec.dense_auto_limit);
        rec["gamma0"] = g.gamma0;
        fresh[i] = {{t.n, t.mu_index, t.sample}, g.gamma0};
        ok[i] = 1;
      } catch (const std::exception& e) {
        rec["kind"] = "error";
        rec["message"] = e.what();
      }
      const std::lock_guard<std::mutex> lock(journal_mutex);
      journal << rec.dump() << '\n' << std::flush;
    }
  };

  const int nworkers = std::max(
      1, std::min(resolve_workers(spec.workers),
                  static_cast<int>(std::max<size_t>(pending.size(), 1))));
  if (nworkers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(nworkers));
    for (int w = 0; w < nworkers; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  for (size_t i = 0; i < pending.size(); ++i)
    if (ok[i]) done[fresh[i].first] = fresh[i].second;

  // Deterministic output order: the task grid order, successes only.
  std::vector<GapValue> out;
  out.reserve(done.size());
  for (const auto& t : tasks) {
    const auto it = done.find({t.n, t.mu_index, t.sample});
    if (it == done.end()) continue;
    GapValue g;
    g.gamma0 = it->second;
    g.mu = spec.mu_list[t.mu_index];
    g.n_total = 2 * t.n;
    g.realization_id = t.seed;
    out.push_back(g);
  }
  return out;
}

std::vector<std::string> journal_failures(const std::string& journal_path) {
  std::vector<std::string> out;
  for (const auto& rec : read_journal_records(journal_path)) {
    if (rec.value("kind", "") != "error") continue;
    std::ostringstream msg;
    msg << "n=" << rec.value("n", 0) << " mu=" << rec.value("mu", 0.0)
        << " sample=" << rec.value("sample", 0) << ": "
        << rec.value("message", "(no message)");
    out.push_back(msg.str());
  }
  return out;
}

ScalingFit fit_scaling(
    const std::vector<std::tuple<int, double, double>>& points, double mu) {
  std::set<int> sizes;
  for (const auto& [nt, mean, sem] : points) {
    (void)mean;
    (void)sem;
    if (nt <= 0)
      throw std::invalid_argument("fit_scaling: n_total must be positive");
    sizes.insert(nt);
  }
  if (sizes.size() < 3)
    throw std::invalid_argument(
        "fit_scaling: need at least 3 distinct sizes, got " +
        std::to_string(sizes.size()));

  std::vector<double> x, y, sem;
  for (const auto& [nt, mean, s] : points) {
    x.push_back(1.0 / static_cast<double>(nt));
    y.push_back(mean);
    sem.push_back(s);
  }
  const LineFit f = wls_line(x, y, sem);

  ScalingFit out;
  out.mu = mu;
  out.gamma0_inf = f.intercept;
  out.b = f.slope;
  out.stderr_gamma0 = f.stderr_intercept;
  out.stderr_b = f.stderr_slope;
  out.chi2 = f.chi2;
  out.points = points;
  std::sort(out.points.begin(), out.points.end());
  return out;
}

std::vector<MeanPoint> aggregate_means(const EnsembleSpec& spec,
                                       const std::vector<GapValue>& gaps) {
  validate_spec(spec);
  std::vector<MeanPoint> out;
  for (double mu : spec.mu_list) {
    std::map<int, std::vector<double>> by_size;
    for (const auto& g : gaps)
      if (g.mu == mu) by_size[g.n_total].push_back(g.gamma0);
    for (auto& [nt, vals] : by_size) {
      // sorted accumulation: the mean is bitwise invariant under sample
      // reordering, not just invariant up to rounding
      std::sort(vals.begin(), vals.end());
      const double mean =
          std::accumulate(vals.begin(), vals.end(), 0.0) /
          static_cast<double>(vals.size());
      double sem = 0.0;
      if (vals.size() > 1) {
        double ss = 0.0;
        for (double v : vals) ss += (v - mean) * (v - mean);
        sem = std::sqrt(ss / static_cast<double>(vals.size() - 1)) /
              std::sqrt(static_cast<double>(vals.size()));
      }
      out.push_back({nt, mu, mean, sem, static_cast<int>(vals.size())});
    }
  }
  return out;
}

std::vector<ScalingFit> fit_all_scalings(const EnsembleSpec& spec,
                                         const std::vector<GapValue>& gaps) {
  const std::vector<MeanPoint> means = aggregate_means(spec, gaps);
  std::vector<ScalingFit> fits;
  for (double mu : spec.mu_list) {
    std::vector<std::tuple<int, double, double>> points;
    for (const auto& p : means)
      if (p.mu == mu) points.emplace_back(p.n_total, p.mean, p.sem);
    if (points.size() < 3) continue;
    fits.push_back(fit_scaling(points, mu));
  }
  std::sort(fits.begin(), fits.end(),
            [](const ScalingFit& a, const ScalingFit& b) { return a.mu < b.mu; });
  return fits;
}

CurveSummary gap_curve(const std::vector<ScalingFit>& fits) {
  CurveSummary cs;
  for (const auto& f : fits)
    cs.points.push_back({f.mu, f.gamma0_inf, f.stderr_gamma0});
  std::sort(cs.points.begin(), cs.points.end(),
            [](const CurvePoint& a, const CurvePoint& b) { return a.mu < b.mu; });

  bool rising = false, falling = false;
  for (size_t i = 1; i < cs.points.size(); ++i) {
    const double d = cs.points[i].gamma0 - cs.points[i - 1].gamma0;
    if (d > 0.0) rising = true;
    if (d < 0.0) falling = true;
  }
  cs.monotonic = !(rising && falling);

  double best_max = -1e300, best_min = 1e300;
  for (size_t i = 1; i + 1 < cs.points.size(); ++i) {
    const double y0 = cs.points[i - 1].gamma0;
    const double y1 = cs.points[i].gamma0;
    const double y2 = cs.points[i + 1].gamma0;
    if (y1 > y0 && y1 > y2 && y1 > best_max) {
      best_max = y1;
      cs.local_max_mu = cs.points[i].mu;
    }
    if (y1 < y0 && y1 < y2 && y1 < best_min) {
      best_min = y1;
      cs.local_min_mu = cs.points[i].mu;
    }
  }
  return cs;
}

EnsembleSpec parse_ensemble_spec(const KeyValueConfig& cfg) {
  EnsembleSpec spec;
  spec.n_list = cfg.get_int_list("n_list");
  spec.mu_list = cfg.get_double_list("mu_list");
  spec.samples_per_point = static_cast<int>(cfg.get_int("samples", 1));
  spec.base_seed = static_cast<std::uint64_t>(cfg.get_int("base_seed", 0));
  spec.k = static_cast<int>(cfg.get_int("k", spec.k));
  spec.dense_auto_limit = static_cast<int>(
      cfg.get_int("dense_auto_limit", spec.dense_auto_limit));
  spec.workers = static_cast<int>(cfg.get_int("workers", 0));
  for (int n : spec.n_list) {
    const std::string key = "samples_n" + std::to_string(n);
    if (cfg.has(key))
      spec.samples_override[n] = static_cast<int>(cfg.get_int(key, 0));
  }
  validate_spec(spec);
  return spec;
}

void export_scaling_csv(const std::vector<ScalingFit>& fits,
                        std::ostream& out) {
  write_header_block(out, {{"kind", "scaling_fits"},
                           {"model", "gamma0(N_tot) = gamma0_inf + b/N_tot"}});
  out << "mu,gamma0_inf,stderr_gamma0,b,stderr_b,chi2,n_sizes\n";
  for (const auto& f : fits)
    out << format_full(f.mu) << ',' << format_full(f.gamma0_inf) << ','
        << format_full(f.stderr_gamma0) << ',' << format_full(f.b) << ','
        << format_full(f.stderr_b) << ',' << format_full(f.chi2) << ','
        << f.points.size() << '\n';
}

}  // namespace lsyk
