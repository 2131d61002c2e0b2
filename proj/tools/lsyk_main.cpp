#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "lsyk/ensemble.hpp"
#include "lsyk/ep.hpp"
#include "lsyk/model.hpp"
#include "lsyk/sd.hpp"
#include "lsyk/spectral.hpp"

namespace fs = std::filesystem;
using namespace lsyk;

namespace {

struct usage_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

const char* kUsage = R"(usage: lsyk <command> [--config FILE] [--key value | --key=value ...]

commands
  spectrum   eigenvalues of one parity block for a single disorder sample
             keys: n q seed mu mu_list block{gap,steady}
                   method{auto,dense,shift_invert,rightmost} k
                   dense_auto_limit out
  gap-scan   dissipative gap of one sample across a loss-rate grid
             keys: n seed mu_list k dense_auto_limit out format
  ep-scan    eigenvalue branches across an ascending loss-rate grid with
             coalescence events refined by bisection; the smallest size
             adds a closed-form comparison file
             keys: n seed mu_list k dense_auto_limit out
  scaling    disorder-averaged gaps over sizes and loss rates, journaled
             and resumable, with an infinite-size extrapolation per rate
             keys: n_list mu_list samples samples_n<N> base_seed k
                   dense_auto_limit workers journal out format
  sd-solve   melon-diagram saddle solver: two-branch action scan over
             contour lengths at one loss rate (--mu), or a decay-rate
             scan over --mu-list on the long-contour branch
             keys: mu t t_list m J q export_states
                   mu_list gamma_t gamma_m window_lo window_hi out format
  oracle     closed-form smallest-size gap and slow eigenvalue pair
             keys: seed J mu mu_list out format

A config file holds the same keys as `key = value` lines ('#' comments);
command-line pairs override file entries.  LSYK_WORKERS overrides the
worker count when no --workers flag is given.
Exit codes: 0 success, 1 runtime failure, 2 usage error.
)";

std::string json_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    out.push_back(c);
  }
  return out;
}

bool numeric_cell(const std::string& s) {
  if (s.empty()) return false;
  size_t pos = 0;
  try {
    std::stod(s, &pos);
  } catch (...) {
    return false;
  }
  return pos == s.size();
}

using Meta = std::vector<std::pair<std::string, std::string>>;

std::string meta_json(const Meta& meta) {
  std::ostringstream out;
  out << "{\"version\": \"" << kVersion << '"';
  for (const auto& [k, v] : meta) {
    out << ", \"" << json_escape(k) << "\": ";
    if (numeric_cell(v))
      out << v;
    else
      out << '"' << json_escape(v) << '"';
  }
  out << '}';
  return out.str();
}

// '# key: value' continuation lines for files whose body writes its own
// version header (library exporters).
void meta_lines(std::ostream& out, const Meta& meta) {
  for (const auto& [k, v] : meta) out << "# " << k << ": " << v << '\n';
}

struct Out {
  fs::path dir;
  std::string format = "csv";
  std::vector<std::string> written;

  std::ofstream create(const std::string& name) {
    fs::create_directories(dir);
    const fs::path p = dir / name;
    std::ofstream f(p);
    if (!f) throw std::runtime_error("cannot write " + p.string());
    written.push_back(p.string());
    return f;
  }
};

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
};

void write_table_csv(std::ostream& out, const Meta& meta, const Table& t) {
  write_header_block(out, meta);
  for (size_t i = 0; i < t.columns.size(); ++i)
    out << t.columns[i] << (i + 1 < t.columns.size() ? "," : "\n");
  for (const auto& row : t.rows)
    for (size_t i = 0; i < row.size(); ++i)
      out << row[i] << (i + 1 < row.size() ? "," : "\n");
}

void write_table_json(std::ostream& out, const Meta& meta, const Table& t) {
  out << "{\"meta\": " << meta_json(meta) << ",\n \"columns\": [";
  for (size_t i = 0; i < t.columns.size(); ++i)
    out << '"' << json_escape(t.columns[i]) << '"'
        << (i + 1 < t.columns.size() ? ", " : "");
  out << "],\n \"rows\": [";
  for (size_t r = 0; r < t.rows.size(); ++r) {
    out << "\n  [";
    for (size_t i = 0; i < t.rows[r].size(); ++i) {
      const std::string& c = t.rows[r][i];
      if (c.empty())
        out << "null";
      else if (numeric_cell(c))
        out << c;
      else
        out << '"' << json_escape(c) << '"';
      if (i + 1 < t.rows[r].size()) out << ", ";
    }
    out << ']' << (r + 1 < t.rows.size() ? "," : "");
  }
  out << "\n]}\n";
}

// honors Out::format; library-exported bodies stay csv regardless
void emit_table(Out& out, const std::string& base, const Meta& meta,
                const Table& t) {
  if (out.format == "json") {
    auto f = out.create(base + ".json");
    write_table_json(f, meta, t);
  } else {
    auto f = out.create(base + ".csv");
    write_table_csv(f, meta, t);
  }
}

// ---- config plumbing ----------------------------------------------------

struct Cli {
  std::string command;
  KeyValueConfig cfg;
};

Cli parse_cli(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  for (const auto& a : args)
    if (a == "--help" || a == "-h" || a == "help") {
      std::cout << kUsage;
      std::exit(0);
    }
  if (args.empty()) throw usage_error("missing command");
  Cli cli;
  cli.command = args[0];
  if (cli.command.rfind("-", 0) == 0)
    throw usage_error("first argument must be a command, got " + cli.command);

  std::vector<std::pair<std::string, std::string>> pairs;
  for (size_t i = 1; i < args.size(); ++i) {
    std::string tok = args[i];
    if (tok.rfind("--", 0) != 0)
      throw usage_error("expected --key, got '" + tok + "'");
    tok.erase(0, 2);
    std::string key, val;
    const auto eq = tok.find('=');
    if (eq != std::string::npos) {
      key = tok.substr(0, eq);
      val = tok.substr(eq + 1);
    } else {
      key = tok;
      if (i + 1 >= args.size())
        throw usage_error("missing value for --" + key);
      val = args[++i];
    }
    if (key.empty()) throw usage_error("empty option name");
    std::replace(key.begin(), key.end(), '-', '_');
    pairs.emplace_back(key, val);
  }

  // config files form the base; explicit pairs override in given order
  for (const auto& [k, v] : pairs)
    if (k == "config") {
      KeyValueConfig file;
      try {
        file = KeyValueConfig::from_file(v);
      } catch (const std::exception& e) {
        throw usage_error(e.what());
      }
      for (const auto& [fk, fv] : file.entries()) cli.cfg.set(fk, fv);
    }
  for (const auto& [k, v] : pairs)
    if (k != "config") cli.cfg.set(k, v);
  return cli;
}

void check_keys(const KeyValueConfig& cfg, std::set<std::string> allowed,
                const std::string& cmd, bool samples_overrides = false) {
  allowed.insert("out");
  for (const auto& [k, v] : cfg.entries()) {
    if (allowed.count(k)) continue;
    if (samples_overrides && k.rfind("samples_n", 0) == 0 &&
        k.size() > 9 &&
        std::all_of(k.begin() + 9, k.end(),
                    [](char c) { return c >= '0' && c <= '9'; }))
      continue;
    throw usage_error("unknown option --" + k + " for command " + cmd);
  }
}

// config-value accessors that turn parse failures into usage errors
double cfg_double(const KeyValueConfig& c, const std::string& k, double fb) {
  try {
    return c.get_double(k, fb);
  } catch (const std::exception& e) {
    throw usage_error(std::string("--") + k + ": " + e.what());
  }
}

std::int64_t cfg_int(const KeyValueConfig& c, const std::string& k,
                     std::int64_t fb) {
  try {
    return c.get_int(k, fb);
  } catch (const std::exception& e) {
    throw usage_error(std::string("--") + k + ": " + e.what());
  }
}

std::vector<double> cfg_dlist(const KeyValueConfig& c, const std::string& k) {
  try {
    return c.get_double_list(k);
  } catch (const std::exception& e) {
    throw usage_error(std::string("--") + k + ": " + e.what());
  }
}

std::uint64_t cfg_seed(const KeyValueConfig& c, const std::string& k,
                       std::int64_t fb) {
  const std::int64_t v = cfg_int(c, k, fb);
  if (v < 0) throw usage_error("--" + k + " must be >= 0");
  return static_cast<std::uint64_t>(v);
}

int require_even_n(const KeyValueConfig& cfg) {
  const auto n = cfg_int(cfg, "n", 4);
  if (n < 4 || n > 24 || n % 2 != 0)
    throw usage_error("--n must be even and within [4, 24]");
  return static_cast<int>(n);
}

std::vector<double> require_mu_grid(const KeyValueConfig& cfg,
                                    const std::string& cmd,
                                    bool allow_single) {
  std::vector<double> mus;
  if (cfg.has("mu_list"))
    mus = cfg_dlist(cfg, "mu_list");
  else if (allow_single && cfg.has("mu"))
    mus = {cfg_double(cfg, "mu", 0.0)};
  if (mus.empty())
    throw usage_error(cmd + " requires --mu-list" +
                      (allow_single ? " or --mu" : ""));
  for (double mu : mus)
    if (!(mu >= 0.0) || !std::isfinite(mu))
      throw usage_error("loss rates must be finite and >= 0");
  return mus;
}

Meta base_meta(const std::string& command, const KeyValueConfig& cfg) {
  return {{"command", command}, {"config_hash", cfg.config_hash()}};
}

std::vector<std::vector<std::string>> read_csv_rows(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  bool seen_columns = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!seen_columns) {  // first non-comment line names the columns
      seen_columns = true;
      continue;
    }
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    rows.push_back(std::move(cells));
  }
  return rows;
}

// combined decay-rate comparison: written once both the extrapolated
// spectral curve (scaling.csv) and the saddle-point curve (sd_gamma0.csv)
// exist in the output directory
void try_write_fig2(Out& out, const KeyValueConfig& cfg,
                    const std::string& command) {
  const fs::path spectral = out.dir / "scaling.csv";
  const fs::path sd = out.dir / "sd_gamma0.csv";
  if (!fs::exists(spectral) || !fs::exists(sd)) {
    std::cout << "fig2: skipped (needs both scaling.csv and sd_gamma0.csv)\n";
    return;
  }
  Table t;
  t.columns = {"source", "mu", "gamma0", "stderr"};
  for (const auto& r : read_csv_rows(spectral))
    if (r.size() >= 3)
      t.rows.push_back({"spectral_gap_extrapolated", r[0], r[1], r[2]});
  for (const auto& r : read_csv_rows(sd))
    if (r.size() >= 2) t.rows.push_back({"sd_decay", r[0], r[1], ""});
  Meta meta = base_meta(command, cfg);
  meta.emplace_back("kind", "fig2_combined");
  auto f = out.create("fig2.csv");
  write_table_csv(f, meta, t);
}

// ---- commands -----------------------------------------------------------

void cmd_spectrum(const KeyValueConfig& cfg, Out& out) {
  check_keys(cfg,
             {"n", "q", "seed", "mu", "mu_list", "block", "method", "k",
              "dense_auto_limit"},
             "spectrum");
  const int n = require_even_n(cfg);
  if (cfg_int(cfg, "q", 4) != 4)
    throw usage_error("only q = 4 interactions are implemented");
  const std::uint64_t seed = cfg_seed(cfg, "seed", 1);
  const auto mus = require_mu_grid(cfg, "spectrum", true);
  const std::string block = cfg.get_string("block", "gap");
  if (block != "gap" && block != "steady")
    throw usage_error("--block must be gap or steady");
  const std::string method = cfg.get_string("method", "auto");
  if (method != "auto" && method != "dense" && method != "shift_invert" &&
      method != "rightmost")
    throw usage_error(
        "--method must be auto, dense, shift_invert or rightmost");
  const int k = static_cast<int>(cfg_int(cfg, "k", 16));
  const int dal = static_cast<int>(cfg_int(cfg, "dense_auto_limit", 4096));
  if (k < 1 || dal < 1)
    throw usage_error("--k and --dense-auto-limit must be >= 1");

  const auto d = sample_disorder(n, 4, seed);
  for (size_t i = 0; i < mus.size(); ++i) {
    const auto bundle = build_bundle(d, mus[i]);
    const SparseOperator& blk =
        block == "gap" ? gap_block(bundle) : steady_block(bundle);
    const auto dim = blk.dim();
    std::string resolved = method;
    if (method == "auto") resolved = dim <= dal ? "dense" : "rightmost";
    if (resolved == "dense" && dim > 8192)
      throw std::runtime_error(
          "block dimension " + std::to_string(dim) +
          " is beyond the dense solver; use --method rightmost");
    SpectrumResult s;
    KrylovOptions ko;
    ko.k = k;
    if (resolved == "dense")
      s = dense_spectrum(blk, false);
    else if (resolved == "shift_invert")
      s = krylov_near_zero(blk, ko);
    else
      s = krylov_rightmost(blk, ko);
    s = classify_real(std::move(s), 0.0);
    s.mu = mus[i];
    s.realization_id = seed;
    s.block_label = block;

    auto f = out.create("spectrum_mu" + std::to_string(i) + ".csv");
    Meta meta = base_meta("spectrum", cfg);
    meta.insert(meta.end(), {{"n", std::to_string(n)},
                             {"seed", std::to_string(seed)},
                             {"mu", format_full(mus[i])},
                             {"block", block},
                             {"resolved_method", resolved},
                             {"dim", std::to_string(dim)},
                             {"krylov_tol", format_full(ko.tol)}});
    meta_lines(f, meta);
    export_spectrum_csv(s, f);
  }
}

void cmd_gap_scan(const KeyValueConfig& cfg, Out& out) {
  check_keys(cfg, {"n", "seed", "mu", "mu_list", "k", "dense_auto_limit",
                   "format"},
             "gap-scan");
  const int n = require_even_n(cfg);
  const std::uint64_t seed = cfg_seed(cfg, "seed", 1);
  const auto mus = require_mu_grid(cfg, "gap-scan", true);
  const int k = static_cast<int>(cfg_int(cfg, "k", 16));
  const int dal = static_cast<int>(cfg_int(cfg, "dense_auto_limit", 512));
  if (k < 1 || dal < 1)
    throw usage_error("--k and --dense-auto-limit must be >= 1");

  Table t;
  t.columns = {"mu", "gamma0", "n_total", "seed"};
  for (double mu : mus) {
    const GapValue g = single_gap(n, mu, seed, k, dal);
    t.rows.push_back({format_full(mu), format_full(g.gamma0),
                      std::to_string(g.n_total), std::to_string(seed)});
  }
  Meta meta = base_meta("gap-scan", cfg);
  meta.insert(meta.end(), {{"n", std::to_string(n)},
                           {"k", std::to_string(k)},
                           {"dense_auto_limit", std::to_string(dal)},
                           {"krylov_tol", format_full(KrylovOptions{}.tol)}});
  emit_table(out, "gap_scan", meta, t);
}

void cmd_ep_scan(const KeyValueConfig& cfg, Out& out) {
  check_keys(cfg, {"n", "seed", "mu_list", "k", "dense_auto_limit"},
             "ep-scan");
  const int n = require_even_n(cfg);
  const std::uint64_t seed = cfg_seed(cfg, "seed", 1);
  const auto mus = require_mu_grid(cfg, "ep-scan", false);
  for (size_t i = 1; i < mus.size(); ++i)
    if (!(mus[i] > mus[i - 1]))
      throw usage_error("ep-scan needs a strictly ascending --mu-list");
  if (mus.size() < 2)
    throw usage_error("ep-scan needs at least two grid points");
  const int k = static_cast<int>(cfg_int(cfg, "k", 8));
  const int dal = static_cast<int>(cfg_int(cfg, "dense_auto_limit", 512));
  if (k < 1 || dal < 1)
    throw usage_error("--k and --dense-auto-limit must be >= 1");

  const auto d = sample_disorder(n, 4, seed);
  SweepOptions opts;
  opts.k = k;
  opts.dense_auto_limit = dal;
  const auto traces = sweep_branches(d, mus, k, opts);

  Meta meta = base_meta("ep-scan", cfg);
  meta.insert(meta.end(), {{"n", std::to_string(n)},
                           {"seed", std::to_string(seed)},
                           {"refinement_width", "1e-06"}});
  {
    auto f = out.create("branches.csv");
    meta_lines(f, meta);
    export_branches_csv(traces, f);
  }

  std::vector<EPEvent> events;
  for (const auto& b : traces) {
    if (!b.partner_id || !b.became_real_at || b.id > *b.partner_id) continue;
    const auto partner =
        std::find_if(traces.begin(), traces.end(),
                     [&](const BranchTrace& p) { return p.id == *b.partner_id; });
    if (partner == traces.end()) continue;
    try {
      events.push_back(locate_ep(b, *partner, d, opts));
    } catch (const std::exception& e) {
      std::cerr << "warning: branches " << b.id << "/" << *b.partner_id
                << ": " << e.what() << '\n';
    }
  }
  {
    auto f = out.create("ep_events.json");
    f << "{\"meta\": " << meta_json(meta) << ",\n\"events\": ";
    export_ep_json(events, d, f);
    f << "}\n";
  }

  if (n == 4) {
    // closed-form cross-check: gap curve and coalescence point
    const double Jmag = std::abs(d.couplings.at(0).second);
    Table t;
    t.columns = {"mu", "gamma0_numeric", "gamma0_oracle", "abs_error"};
    double gap_err = 0.0;
    for (size_t i = 0; i < mus.size(); ++i) {
      double gnum = 1e300;
      for (const auto& b : traces)
        if (i < b.values.size())
          gnum = std::min(gnum, std::abs(b.values[i].real()));
      const double gor = n4_oracle_gap(Jmag, mus[i]);
      gap_err = std::max(gap_err, std::abs(gnum - gor));
      t.rows.push_back({format_full(mus[i]), format_full(gnum),
                        format_full(gor), format_full(std::abs(gnum - gor))});
    }
    double ep_err = 0.0;
    for (const auto& e : events)
      ep_err = std::max(ep_err, std::abs(e.mu_ep - Jmag / 2.0));
    Meta om = base_meta("ep-scan", cfg);
    om.insert(om.end(),
              {{"J", format_full(Jmag)},
               {"mu_ep_oracle", format_full(Jmag / 2.0)},
               {"events", std::to_string(events.size())},
               {"mu_ep_max_abs_error", format_full(ep_err)},
               {"gap_max_abs_error", format_full(gap_err)},
               {"ep_within_tolerance",
                events.empty() ? "no-events"
                               : (ep_err < 1e-6 ? "yes" : "no")}});
    auto f = out.create("ep_oracle.csv");
    write_table_csv(f, om, t);
  }
}

void cmd_scaling(const KeyValueConfig& cfg, Out& out) {
  check_keys(cfg,
             {"n_list", "mu_list", "samples", "base_seed", "k",
              "dense_auto_limit", "workers", "journal", "format"},
             "scaling", /*samples_overrides=*/true);
  EnsembleSpec spec;
  try {
    spec = parse_ensemble_spec(cfg);
  } catch (const std::exception& e) {
    throw usage_error(e.what());
  }
  const std::string journal =
      cfg.get_string("journal", (out.dir / "journal.jsonl").string());
  if (fs::path(journal).has_parent_path())
    fs::create_directories(fs::path(journal).parent_path());

  const auto gaps = run_ensemble(spec, journal);
  for (const auto& w : journal_failures(journal))
    std::cerr << "warning: " << w << '\n';

  Meta meta = base_meta("scaling", cfg);
  meta.insert(meta.end(),
              {{"journal", journal},
               {"krylov_tol", format_full(KrylovOptions{}.tol)},
               {"fit_model", "gamma0(N_tot) = gamma0_inf + b/N_tot"}});

  Table means_t;
  means_t.columns = {"n_total", "mu", "mean_gamma0", "sem", "samples"};
  for (const auto& p : aggregate_means(spec, gaps))
    means_t.rows.push_back({std::to_string(p.n_total), format_full(p.mu),
                            format_full(p.mean), format_full(p.sem),
                            std::to_string(p.samples)});
  emit_table(out, "means", meta, means_t);

  const auto fits = fit_all_scalings(spec, gaps);
  {
    auto f = out.create("scaling.csv");
    meta_lines(f, meta);
    export_scaling_csv(fits, f);
  }

  const CurveSummary curve = gap_curve(fits);
  {
    auto f = out.create("curve_summary.json");
    f << "{\"meta\": " << meta_json(meta)
      << ",\n \"monotonic\": " << (curve.monotonic ? "true" : "false")
      << ",\n \"local_max_mu\": "
      << (curve.local_max_mu ? format_full(*curve.local_max_mu) : "null")
      << ",\n \"local_min_mu\": "
      << (curve.local_min_mu ? format_full(*curve.local_min_mu) : "null")
      << ",\n \"points\": [";
    for (size_t i = 0; i < curve.points.size(); ++i) {
      const auto& p = curve.points[i];
      f << '[' << format_full(p.mu) << ',' << format_full(p.gamma0) << ','
        << format_full(p.stderr_gamma0) << ']'
        << (i + 1 < curve.points.size() ? "," : "");
    }
    f << "]}\n";
  }
  try_write_fig2(out, cfg, "scaling");
}

std::string branch_name(BranchLabel b) {
  return b == BranchLabel::system_seeded ? "system_seeded" : "bath_seeded";
}

void cmd_sd_solve(const KeyValueConfig& cfg, Out& out) {
  check_keys(cfg,
             {"mu", "mu_list", "J", "q", "m", "t", "t_list", "export_states",
              "gamma_t", "gamma_m", "window_lo", "window_hi", "format"},
             "sd-solve");
  const double J = cfg_double(cfg, "J", 0.5);
  if (!(J > 0.0)) throw usage_error("--J must be > 0");
  const int q = static_cast<int>(cfg_int(cfg, "q", 4));
  if (q < 2 || q % 2 != 0) throw usage_error("--q must be even and >= 2");

  if (cfg.has("mu_list")) {
    // decay-rate scan on the long-contour branch
    const auto mus = require_mu_grid(cfg, "sd-solve", false);
    const double gt = cfg_double(cfg, "gamma_t", 30.0);
    const int gm = static_cast<int>(cfg_int(cfg, "gamma_m", 384));
    const double wlo = cfg_double(cfg, "window_lo", 0.05);
    const double whi = cfg_double(cfg, "window_hi", 0.45);
    if (!(gt > 0.0) || gm < 16)
      throw usage_error("--gamma-t must be > 0 and --gamma-m >= 16");
    if (!(wlo > 0.0 && wlo < whi && whi <= 0.5))
      throw usage_error("fit window must satisfy 0 < lo < hi <= 1/2");

    Table t;
    t.columns = {"mu", "gamma0", "omega", "form", "rms_residual"};
    const SDGrid grid = make_grid(gt, gm);
    for (double mu : mus) {
      const SDState s = solve_bath_branch(mu, gt, gm, J, q);
      const SDFitResult fr = fit_gamma0_sd(s, grid, wlo, whi);
      t.rows.push_back({format_full(mu), format_full(fr.gamma0),
                        fr.omega ? format_full(*fr.omega) : "", fr.form,
                        format_full(fr.rms_residual)});
    }
    Meta meta = base_meta("sd-solve", cfg);
    meta.insert(meta.end(), {{"J", format_full(J)},
                             {"q", std::to_string(q)},
                             {"t", format_full(gt)},
                             {"m", std::to_string(gm)},
                             {"window", format_full(wlo) + ".." +
                                            format_full(whi)},
                             {"sd_tol", "1e-08"}});
    auto f = out.create("sd_gamma0.csv");
    write_table_csv(f, meta, t);
    try_write_fig2(out, cfg, "sd-solve");
    return;
  }

  if (!cfg.has("mu"))
    throw usage_error(
        "sd-solve requires --mu (branch scan) or --mu-list (decay-rate "
        "scan)");
  const double mu = cfg_double(cfg, "mu", 0.0);
  if (!(mu >= 0.0)) throw usage_error("--mu must be >= 0");
  const int m = static_cast<int>(cfg_int(cfg, "m", 64));
  if (m < 16) throw usage_error("--m must be >= 16");
  std::vector<double> t_grid;
  if (cfg.has("t_list"))
    t_grid = cfg_dlist(cfg, "t_list");
  else if (cfg.has("t"))
    t_grid = {cfg_double(cfg, "t", 0.0)};
  else
    for (int i = 2; i <= 12; ++i) t_grid.push_back(i);
  if (t_grid.empty()) throw usage_error("--t-list is empty");
  for (size_t i = 0; i < t_grid.size(); ++i)
    if (!(t_grid[i] > 0.0) || (i > 0 && !(t_grid[i] > t_grid[i - 1])))
      throw usage_error("--t-list must be positive and strictly ascending");
  const bool export_states = cfg_int(cfg, "export_states", 1) != 0;

  const auto actions = scan_branches(mu, t_grid, m, J, q);
  Meta meta = base_meta("sd-solve", cfg);
  meta.insert(meta.end(), {{"mu", format_full(mu)},
                           {"J", format_full(J)},
                           {"q", std::to_string(q)},
                           {"m", std::to_string(m)},
                           {"sd_tol", "1e-08"}});
  Table t;
  t.columns = {"t", "branch", "iS", "converged"};
  for (const auto& a : actions)
    t.rows.push_back({format_full(a.t), branch_name(a.branch_label),
                      a.converged ? format_full(a.iS) : "",
                      a.converged ? "1" : "0"});
  emit_table(out, "sd_actions", meta, t);

  const TransitionReport rep = dominant_branch(actions);
  {
    auto f = out.create("sd_transition.json");
    f << "{\"meta\": " << meta_json(meta) << ",\n \"verdict\": \""
      << (rep.verdict == TransitionReport::Verdict::transition
              ? "transition"
              : "crossover")
      << "\", \"t_star\": "
      << (rep.t_star ? format_full(*rep.t_star) : "null")
      << ", \"slope_difference\": " << format_full(rep.slope_difference)
      << "}\n";
  }

  if (!export_states) return;
  for (const BranchLabel b :
       {BranchLabel::system_seeded, BranchLabel::bath_seeded}) {
    double t_best = 0.0;
    for (const auto& a : actions)
      if (a.branch_label == b && a.converged) t_best = std::max(t_best, a.t);
    if (t_best == 0.0) {
      std::cout << "state export: " << branch_name(b)
                << " never converged on this grid\n";
      continue;
    }
    const SDState s = b == BranchLabel::system_seeded
                          ? solve_system_branch(mu, t_best, m, J, q)
                          : solve_bath_branch(mu, t_best, m, J, q);
    const SDGrid grid = make_grid(t_best, m);
    const ActionValue a = evaluate_action(s, grid);
    {
      auto f = out.create("sd_state_" + branch_name(b) + ".json");
      f << "{\"meta\": " << meta_json(meta) << ",\n \"state\": ";
      export_sd_json(s, grid, a, f);
      f << "}\n";
    }
    {
      auto f = out.create("sd_g_" + branch_name(b) + ".csv");
      meta_lines(f, meta);
      export_g_slice_csv(s, grid, f);
    }
  }
}

void cmd_oracle(const KeyValueConfig& cfg, Out& out) {
  check_keys(cfg, {"seed", "J", "mu", "mu_list", "format"}, "oracle");
  double Jmag = 0.0;
  if (cfg.has("J")) {
    Jmag = cfg_double(cfg, "J", 0.0);
    if (!(Jmag > 0.0)) throw usage_error("--J must be > 0");
  } else {
    const std::uint64_t seed = cfg_seed(cfg, "seed", 1);
    const auto d = sample_disorder(4, 4, seed);
    Jmag = std::abs(d.couplings.at(0).second);
  }
  const auto mus = require_mu_grid(cfg, "oracle", true);

  Table t;
  t.columns = {"mu", "gamma0", "re_slow", "im_slow", "re_conj", "im_conj"};
  for (double mu : mus) {
    const auto [a, b] = n4_oracle_pair(Jmag, mu);
    t.rows.push_back({format_full(mu), format_full(n4_oracle_gap(Jmag, mu)),
                      format_full(a.real()), format_full(a.imag()),
                      format_full(b.real()), format_full(b.imag())});
  }
  Meta meta = base_meta("oracle", cfg);
  meta.insert(meta.end(),
              {{"J", format_full(Jmag)},
               {"mu_ep", format_full(Jmag / 2.0)},
               {"gap_peak_at", format_full(Jmag / 2.0)},
               {"gap_dip_at", format_full(Jmag / std::sqrt(3.0))}});
  emit_table(out, "oracle", meta, t);
}

}  // namespace

int main(int argc, char** argv) {
  Out out;
  try {
    const Cli cli = parse_cli(argc, argv);
    out.dir = cli.cfg.get_string("out", ".");
    out.format = cli.cfg.get_string("format", "csv");
    if (out.format != "csv" && out.format != "json")
      throw usage_error("--format must be csv or json");

    if (cli.command == "spectrum")
      cmd_spectrum(cli.cfg, out);
    else if (cli.command == "gap-scan")
      cmd_gap_scan(cli.cfg, out);
    else if (cli.command == "ep-scan")
      cmd_ep_scan(cli.cfg, out);
    else if (cli.command == "scaling")
      cmd_scaling(cli.cfg, out);
    else if (cli.command == "sd-solve")
      cmd_sd_solve(cli.cfg, out);
    else if (cli.command == "oracle")
      cmd_oracle(cli.cfg, out);
    else
      throw usage_error("unknown command: " + cli.command);
  } catch (const usage_error& e) {
    std::cerr << "usage error: " << e.what() << "\n\n" << kUsage;
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    if (!out.written.empty()) {
      std::cerr << "partial outputs:";
      for (const auto& w : out.written) std::cerr << ' ' << w;
      std::cerr << '\n';
    }
    return 1;
  }
  for (const auto& w : out.written) std::cout << "wrote " << w << '\n';
  return 0;
}
