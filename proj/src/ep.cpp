#include "lsyk/ep.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>

#include "lsyk/io_util.hpp"

namespace lsyk {

namespace {

struct Eval {
  std::vector<cplx> values;   // sorted by |Re| asc
  Eigen::MatrixXcd vectors;   // unit columns, same order (may be empty)
  double scale = 0.0;         // max |lambda|
};

Eval eval_gap(const BlockFamily& fam, double mu, int k,
              const SweepOptions& opts, bool want_vectors) {
  const SparseOperator blk = fam.at(mu);
  SpectrumResult s;
  if (blk.dim() <= opts.dense_auto_limit) {
    s = dense_spectrum(blk, want_vectors);
  } else {
    KrylovOptions ko;
    ko.k = k;
    s = krylov_near_zero(blk, ko);
  }
  Eval e;
  e.values = s.eigenvalues;
  if (s.eigenvectors) e.vectors = *s.eigenvectors;
  for (const auto& l : e.values) e.scale = std::max(e.scale, std::abs(l));
  return e;
}

// greedy nearest-neighbor assignment between old branch values and new
// eigenvalues. `rival` holds, per old value, the distance to the nearest
// new value materially different from the matched one: a large rival means
// the assignment is unambiguous no matter how far the branch moved.
struct Assignment {
  std::vector<int> match;      // old index -> new index
  std::vector<double> dist;    // matched distance
  std::vector<double> rival;   // nearest distinct alternative
};

Assignment assign_nearest(const std::vector<cplx>& olds,
                          const std::vector<cplx>& news, double deg_tol) {
  struct Cand {
    double dist;
    size_t i, j;
  };
  std::vector<Cand> cands;
  for (size_t i = 0; i < olds.size(); ++i)
    for (size_t j = 0; j < news.size(); ++j)
      cands.push_back({std::abs(olds[i] - news[j]), i, j});
  std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
    if (a.dist != b.dist) return a.dist < b.dist;
    if (a.i != b.i) return a.i < b.i;
    return a.j < b.j;
  });
  Assignment a;
  a.match.assign(olds.size(), -1);
  a.dist.assign(olds.size(), 0.0);
  a.rival.assign(olds.size(), std::numeric_limits<double>::infinity());
  std::vector<bool> used(news.size(), false);
  size_t left = std::min(olds.size(), news.size());
  for (const auto& c : cands) {
    if (left == 0) break;
    if (a.match[c.i] != -1 || used[c.j]) continue;
    a.match[c.i] = static_cast<int>(c.j);
    a.dist[c.i] = c.dist;
    used[c.j] = true;
    --left;
  }
  for (size_t i = 0; i < olds.size(); ++i) {
    if (a.match[i] < 0) continue;
    const cplx matched = news[static_cast<size_t>(a.match[i])];
    for (size_t j = 0; j < news.size(); ++j) {
      if (static_cast<int>(j) == a.match[i]) continue;
      if (std::abs(news[j] - matched) <= deg_tol) continue;
      a.rival[i] = std::min(a.rival[i], std::abs(olds[i] - news[j]));
    }
  }
  return a;
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

}  // namespace

std::vector<BranchTrace> sweep_branches(const DisorderRealization& d,
                                        const std::vector<double>& mu_grid,
                                        int k, SweepOptions opts) {
  if (mu_grid.empty())
    throw std::invalid_argument("sweep_branches: empty mu grid");
  if (k < 1) throw std::invalid_argument("sweep_branches: k < 1");
  for (size_t i = 0; i < mu_grid.size(); ++i) {
    if (mu_grid[i] < 0.0)
      throw std::invalid_argument("sweep_branches: negative mu");
    if (i > 0 && mu_grid[i] <= mu_grid[i - 1])
      throw std::invalid_argument("sweep_branches: grid not ascending");
  }

  const BlockFamily fam = gap_block_family(d);

  std::vector<BranchTrace> traces;
  std::vector<int> alive;          // indices into traces
  std::vector<cplx> velocities;    // per alive branch dlambda/dmu
  std::vector<bool> vel_known;     // velocity history available
  std::vector<cplx> last_values;   // per alive branch
  double mu_prev = 0.0;

  // refinement revisits grid points: memoize the eigensolves
  std::map<double, Eval> cache;
  const auto eval_at = [&](double mu) -> const Eval& {
    auto it = cache.find(mu);
    if (it == cache.end())
      it = cache.emplace(mu, eval_gap(fam, mu, k, opts, false)).first;
    return it->second;
  };

  // descending stack: back() is the next (smallest) mu to process
  std::vector<double> pending(mu_grid.rbegin(), mu_grid.rend());

  // bounded work per original grid interval even when ambiguity persists
  // down to the minimum step (e.g. exactly crossing real branches)
  constexpr int kRefineBudget = 32;
  int refine_used = 0;

  bool first = true;
  while (!pending.empty()) {
    const double mu = pending.back();
    const auto& ev = eval_at(mu);
    const int kc = static_cast<int>(
        std::min<size_t>(static_cast<size_t>(k), ev.values.size()));
    const std::vector<cplx> news(ev.values.begin(), ev.values.begin() + kc);

    if (first) {
      pending.pop_back();
      for (int j = 0; j < kc; ++j) {
        BranchTrace t;
        t.id = static_cast<int>(traces.size());
        t.mu_grid.push_back(mu);
        t.values.push_back(news[static_cast<size_t>(j)]);
        alive.push_back(t.id);
        velocities.push_back(cplx{});
        vel_known.push_back(false);
        last_values.push_back(news[static_cast<size_t>(j)]);
        traces.push_back(std::move(t));
      }
      mu_prev = mu;
      first = false;
      continue;
    }

    const double dmu = mu - mu_prev;
    const double deg_tol = 1e-10 * std::max(ev.scale, 1.0);

    // match against linearly extrapolated positions: crossing branches
    // separate cleanly in prediction space even when their values meet
    std::vector<cplx> preds(last_values);
    for (size_t i = 0; i < preds.size(); ++i)
      if (vel_known[i]) preds[i] += velocities[i] * dmu;
    auto asg = assign_nearest(preds, news, deg_tol);

    // matching radius: 3 x median inter-step motion, scaled to this step
    std::vector<double> known;
    for (size_t i = 0; i < velocities.size(); ++i)
      if (vel_known[i]) known.push_back(std::abs(velocities[i]));
    const double med = median(known);
    const double radius = known.empty()
                              ? std::numeric_limits<double>::infinity()
                              : 3.0 * std::max(med * dmu, 1e-14);

    // refine only on genuine ambiguity: a branch whose prediction missed
    // by more than the radius with a rival candidate nearby could be
    // misassigned; one with no nearby alternative cannot be
    const auto is_ambiguous = [&](size_t i) {
      return asg.match[i] >= 0 && asg.dist[i] > radius &&
             asg.rival[i] < 2.0 * asg.dist[i];
    };
    bool ambiguous = false;
    for (size_t i = 0; i < alive.size(); ++i)
      if (is_ambiguous(i)) ambiguous = true;

    if (ambiguous && dmu > opts.min_step * (1.0 + 1e-9) &&
        refine_used < kRefineBudget) {
      ++refine_used;
      pending.push_back(0.5 * (mu_prev + mu));  // refine locally
      continue;
    }

    pending.pop_back();
    if (std::binary_search(mu_grid.begin(), mu_grid.end(), mu))
      refine_used = 0;
    std::vector<int> next_alive;
    std::vector<cplx> next_vel;
    std::vector<bool> next_known;
    std::vector<cplx> next_last;
    std::vector<bool> used(news.size(), false);
    for (size_t i = 0; i < alive.size(); ++i) {
      const int j = asg.match[i];
      if (j < 0) continue;  // branch left the tracked window
      used[static_cast<size_t>(j)] = true;
      auto& t = traces[static_cast<size_t>(alive[i])];
      if (is_ambiguous(i)) {
        std::ostringstream msg;
        msg << "ambiguous match at mu=" << mu << " (prediction miss "
            << asg.dist[i] << " > radius " << radius
            << " at refinement limit)";
        t.warnings.push_back(msg.str());
      }
      const cplx value = news[static_cast<size_t>(j)];
      t.mu_grid.push_back(mu);
      t.values.push_back(value);
      next_alive.push_back(t.id);
      next_vel.push_back((value - last_values[i]) / dmu);
      next_known.push_back(true);
      next_last.push_back(value);
    }
    for (size_t j = 0; j < news.size(); ++j) {
      if (used[j]) continue;  // new branch entering the window
      BranchTrace t;
      t.id = static_cast<int>(traces.size());
      t.mu_grid.push_back(mu);
      t.values.push_back(news[j]);
      next_alive.push_back(t.id);
      next_vel.push_back(cplx{});
      next_known.push_back(false);
      next_last.push_back(news[j]);
      traces.push_back(std::move(t));
    }
    alive = std::move(next_alive);
    velocities = std::move(next_vel);
    vel_known = std::move(next_known);
    last_values = std::move(next_last);
    mu_prev = mu;
  }

  // post-pass: became_real_at (longest real suffix, unset when the whole
  // trace is real) using a per-branch relative Im tolerance
  for (auto& t : traces) {
    double scale = 0.0;
    for (const auto& v : t.values) scale = std::max(scale, std::abs(v));
    const double eps = opts.eps_im_rel * std::max(scale, 1e-300);
    size_t suffix = t.values.size();
    while (suffix > 0 && std::abs(t.values[suffix - 1].imag()) < eps)
      --suffix;
    if (suffix < t.values.size() && suffix > 0)
      t.became_real_at = t.mu_grid[suffix];
  }

  // post-pass: conjugate partners over the shared complex support
  for (size_t i = 0; i < traces.size(); ++i) {
    for (size_t j = i + 1; j < traces.size(); ++j) {
      if (traces[i].partner_id || traces[j].partner_id) continue;
      double worst = -1.0;
      double scale = 1e-300;
      for (size_t a = 0; a < traces[i].mu_grid.size(); ++a) {
        for (size_t b = 0; b < traces[j].mu_grid.size(); ++b) {
          if (traces[i].mu_grid[a] != traces[j].mu_grid[b]) continue;
          const cplx va = traces[i].values[a];
          const cplx vb = traces[j].values[b];
          scale = std::max({scale, std::abs(va), std::abs(vb)});
          if (std::abs(va.imag()) + std::abs(vb.imag()) >
              2e-8 * std::max(std::abs(va), std::abs(vb)))
            worst = std::max(worst, std::abs(va - std::conj(vb)));
        }
      }
      if (worst >= 0.0 && worst < 1e-8 * scale) {
        traces[i].partner_id = traces[j].id;
        traces[j].partner_id = traces[i].id;
      }
    }
  }
  return traces;
}

EPEvent locate_ep(const BranchTrace& b1, const BranchTrace& b2,
                  const DisorderRealization& d, SweepOptions opts) {
  // bracket: last complex sample followed by a real sample on b1
  double scale = 0.0;
  for (const auto& v : b1.values) scale = std::max(scale, std::abs(v));
  const double eps = opts.eps_im_rel * std::max(scale, 1e-300);

  std::optional<size_t> bracket;
  for (size_t i = 0; i + 1 < b1.values.size(); ++i) {
    if (std::abs(b1.values[i].imag()) >= eps &&
        std::abs(b1.values[i + 1].imag()) < eps) {
      bracket = i;
      break;
    }
  }
  if (!bracket)
    throw no_ep_error("locate_ep: pair does not reach the real axis "
                      "inside the sweep range");

  // conjugate-partner sanity on the complex side of the bracket
  const size_t ib = *bracket;
  cplx pa = b1.values[ib];
  cplx pb_expect = std::conj(pa);
  {
    bool ok = false;
    for (size_t b = 0; b < b2.mu_grid.size(); ++b)
      if (b2.mu_grid[b] == b1.mu_grid[ib] &&
          std::abs(b2.values[b] - pb_expect) < 1e-6 * std::max(scale, 1.0))
        ok = true;
    if (!ok)
      throw no_ep_error("locate_ep: branches are not conjugate partners");
  }

  double lo = b1.mu_grid[ib];       // complex side
  double hi = b1.mu_grid[ib + 1];   // real side
  cplx cur_a = pa, cur_b = pb_expect;

  EPEvent ev;
  ev.branch_ids = {b1.id, b2.id};

  const BlockFamily fam = gap_block_family(d);
  const auto pair_at = [&](double mu) {
    const auto e = eval_gap(fam, mu, std::max(opts.k, 2), opts, true);
    if (e.values.size() < 2)
      throw no_ep_error("locate_ep: fewer than two eigenvalues at mu");
    size_t ja = 0, jb = 1;
    double da = 1e300;
    for (size_t j = 0; j < e.values.size(); ++j) {
      const double dd = std::abs(e.values[j] - cur_a);
      if (dd < da) {
        da = dd;
        ja = j;
      }
    }
    double db = 1e300;
    for (size_t j = 0; j < e.values.size(); ++j) {
      if (j == ja) continue;
      const double dd = std::abs(e.values[j] - cur_b);
      if (dd < db) {
        db = dd;
        jb = j;
      }
    }
    struct Out {
      cplx va, vb;
      double dist;
      double sc;
    } out;
    out.va = e.values[ja];
    out.vb = e.values[jb];
    out.sc = e.scale;
    out.dist = 1.0;
    if (e.vectors.cols() > 0) {
      // the eigenvalues may be degenerate (the N=4 gap block is the slow
      // pair with multiplicity four), so measure coalescence between whole
      // degenerate eigenspaces: 1 - sigma_max(Qa^* Qb) over orthonormal
      // cluster bases, which reduces to 1 - |<va,vb>| when both are simple.
      // the cluster tolerance sits above the O(sqrt(machine eps)) eigenvalue
      // scatter of a defective point so near-coalesced copies group together
      const double ctol = 1e-7 * std::max(out.sc, 1.0);
      const auto cluster_basis = [&](const cplx& val) {
        std::vector<Eigen::Index> idx;
        for (size_t j = 0; j < e.values.size(); ++j)
          if (std::abs(e.values[j] - val) < ctol)
            idx.push_back(static_cast<Eigen::Index>(j));
        Eigen::MatrixXcd cols(e.vectors.rows(),
                              static_cast<Eigen::Index>(idx.size()));
        for (size_t j = 0; j < idx.size(); ++j)
          cols.col(static_cast<Eigen::Index>(j)) = e.vectors.col(idx[j]);
        Eigen::HouseholderQR<Eigen::MatrixXcd> qr(cols);
        Eigen::MatrixXcd q = Eigen::MatrixXcd::Identity(cols.rows(),
                                                        cols.cols());
        return Eigen::MatrixXcd(qr.householderQ() * q);
      };
      const Eigen::MatrixXcd qa = cluster_basis(out.va);
      const Eigen::MatrixXcd qb = cluster_basis(out.vb);
      const double smax =
          (qa.adjoint() * qb).jacobiSvd().singularValues().maxCoeff();
      out.dist = 1.0 - std::min(1.0, smax);
    }
    return out;
  };

  // record the starting complex-side distance
  {
    const auto o = pair_at(lo);
    ev.d_trace.emplace_back(lo, o.dist);
  }

  for (int it = 0; it < 80 && hi - lo > 1e-6; ++it) {
    const double mid = 0.5 * (lo + hi);
    const auto o = pair_at(mid);
    // a midpoint can land within rounding of the coalescence itself, where
    // the computed Im carries O(sqrt(machine eps)) noise: the real/complex
    // decision threshold must sit above that floor
    const double e2 =
        std::max(opts.eps_im_rel, 1e-7) * std::max(o.sc, 1e-300);
    if (std::abs(o.va.imag()) < e2 && std::abs(o.vb.imag()) < e2) {
      hi = mid;
    } else {
      lo = mid;
      cur_a = o.va;
      cur_b = o.vb;
      ev.d_trace.emplace_back(mid, o.dist);
    }
  }

  ev.mu_ep = 0.5 * (lo + hi);
  ev.refinement_width = hi - lo;
  const auto fin = pair_at(hi);
  ev.lambda_ep = 0.5 * (fin.va + fin.vb);

  // conjunctive criterion: eigenvector coalescence, measured at the final
  // complex-side endpoint (the recorded trace may be sparse when the
  // bracket center started near the coalescence)
  if (ev.d_trace.empty() || ev.d_trace.back().first != lo)
    ev.d_trace.emplace_back(lo, pair_at(lo).dist);
  std::sort(ev.d_trace.begin(), ev.d_trace.end());
  const double d_final = ev.d_trace.back().second;
  if (d_final >= 1e-4)
    throw no_ep_error(
        "locate_ep: eigenvectors do not coalesce (D stays above 1e-4); "
        "treating as an accidental real crossing");
  const size_t nw = std::min<size_t>(5, ev.d_trace.size());
  for (size_t i = ev.d_trace.size() - nw; i + 1 < ev.d_trace.size(); ++i) {
    if (ev.d_trace[i + 1].second >= ev.d_trace[i].second + 1e-12)
      throw no_ep_error(
          "locate_ep: eigenvector distance not decreasing on approach");
  }
  return ev;
}

double n4_oracle_gap(double J, double mu) {
  if (!(J > 0.0)) throw std::invalid_argument("n4_oracle_gap: J must be > 0");
  if (mu < 0.0) throw std::invalid_argument("n4_oracle_gap: mu must be >= 0");
  const double half = 0.5 * J;
  if (mu <= half) return 2.0 * mu;
  return 2.0 * mu - std::sqrt(mu * mu - half * half);
}

std::pair<cplx, cplx> n4_oracle_pair(double J, double mu) {
  const cplx disc = std::sqrt(cplx{mu * mu - 0.25 * J * J, 0.0});
  return {cplx{-2.0 * mu, 0.0} + disc, cplx{-2.0 * mu, 0.0} - disc};
}

std::vector<RealCountRow> count_real_and_intruders(
    const std::vector<BranchTrace>& traces,
    const std::vector<double>& mu_grid, double eps_im) {
  if (eps_im <= 0.0)
    throw std::invalid_argument("count_real_and_intruders: eps_im <= 0");

  const double mu_front =
      mu_grid.empty() ? 0.0 : mu_grid.front();
  std::vector<bool> intruder(traces.size(), false);
  for (size_t t = 0; t < traces.size(); ++t) {
    const auto& tr = traces[t];
    if (tr.mu_grid.empty() || tr.mu_grid.front() != mu_front) continue;
    bool all_real = true;
    for (const auto& v : tr.values)
      if (std::abs(v.imag()) >= eps_im) all_real = false;
    intruder[t] = all_real;
  }

  std::vector<RealCountRow> rows;
  for (double mu : mu_grid) {
    RealCountRow row;
    row.mu = mu;
    for (size_t t = 0; t < traces.size(); ++t) {
      const auto& tr = traces[t];
      const auto it =
          std::lower_bound(tr.mu_grid.begin(), tr.mu_grid.end(), mu - 1e-15);
      if (it == tr.mu_grid.end() || std::abs(*it - mu) > 1e-12) continue;
      const auto idx = static_cast<size_t>(it - tr.mu_grid.begin());
      if (std::abs(tr.values[idx].imag()) >= eps_im) continue;
      ++row.real_count;
      if (intruder[t])
        ++row.intruder_count;
      else if (tr.became_real_at && *tr.became_real_at <= mu + 1e-15)
        ++row.ep_born_count;
    }
    rows.push_back(row);
  }
  return rows;
}

void export_branches_csv(const std::vector<BranchTrace>& traces,
                         std::ostream& out) {
  write_header_block(out, {{"kind", "branch_traces"},
                           {"branches", std::to_string(traces.size())}});
  out << "branch_id,mu,re,im,partner_id,became_real_at\n";
  for (const auto& t : traces) {
    for (size_t i = 0; i < t.mu_grid.size(); ++i) {
      out << t.id << ',' << format_full(t.mu_grid[i]) << ','
          << format_full(t.values[i].real()) << ','
          << format_full(t.values[i].imag()) << ',';
      if (t.partner_id) out << *t.partner_id;
      out << ',';
      if (t.became_real_at) out << format_full(*t.became_real_at);
      out << '\n';
    }
  }
}

void export_ep_json(const std::vector<EPEvent>& events,
                    const DisorderRealization& d, std::ostream& out) {
  out << "[\n";
  for (size_t i = 0; i < events.size(); ++i) {
    const auto& e = events[i];
    out << "  {\"seed\": " << d.seed << ", \"n\": " << d.n_majorana
        << ", \"mu_ep\": " << format_full(e.mu_ep)
        << ", \"lambda_ep_re\": " << format_full(e.lambda_ep.real())
        << ", \"lambda_ep_im\": " << format_full(e.lambda_ep.imag())
        << ", \"branch_a\": " << e.branch_ids.first
        << ", \"branch_b\": " << e.branch_ids.second
        << ", \"refinement_width\": " << format_full(e.refinement_width)
        << ", \"d_trace\": [";
    for (size_t j = 0; j < e.d_trace.size(); ++j) {
      out << '[' << format_full(e.d_trace[j].first) << ','
          << format_full(e.d_trace[j].second) << ']';
      if (j + 1 < e.d_trace.size()) out << ',';
    }
    out << "]}";
    if (i + 1 < events.size()) out << ',';
    out << '\n';
  }
  out << "]\n";
}

}  // namespace lsyk
