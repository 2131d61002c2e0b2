#include "lsyk/fit.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace lsyk {

namespace {

Eigen::Map<const Eigen::VectorXd> as_vec(const std::vector<double>& v) {
  return {v.data(), static_cast<Eigen::Index>(v.size())};
}

// residual vector of y - A e^{-g tau} sin(w tau + p) for fixed (g, w) with
// the amplitudes solved linearly: y ~ a e^{-g tau} sin(w tau) +
// b e^{-g tau} cos(w tau).
struct QuadratureSolve {
  double a = 0.0, b = 0.0, rss = 0.0;
};

QuadratureSolve solve_quadrature(const Eigen::VectorXd& tau,
                                 const Eigen::VectorXd& y, double g,
                                 double w) {
  const Eigen::ArrayXd env = (-g * tau.array()).exp();
  Eigen::MatrixXd M(tau.size(), 2);
  M.col(0) = env * (w * tau.array()).sin();
  M.col(1) = env * (w * tau.array()).cos();
  const Eigen::Vector2d ab =
      M.colPivHouseholderQr().solve(y);
  QuadratureSolve q;
  q.a = ab(0);
  q.b = ab(1);
  q.rss = (y - M * ab).squaredNorm();
  return q;
}

}  // namespace

LineFit wls_line(const std::vector<double>& x, const std::vector<double>& y,
                 const std::vector<double>& sem) {
  if (x.size() != y.size() || (!sem.empty() && sem.size() != x.size()))
    throw std::invalid_argument("wls_line: size mismatch");
  if (x.size() < 2) throw fit_error("wls_line: need at least 2 points");

  const auto n = static_cast<Eigen::Index>(x.size());
  Eigen::VectorXd w = Eigen::VectorXd::Ones(n);
  bool uniform = sem.empty();
  if (!uniform)
    for (double s : sem)
      if (!(s > 0.0)) uniform = true;
  if (!uniform)
    for (Eigen::Index i = 0; i < n; ++i) w(i) = 1.0 / (sem[i] * sem[i]);

  const auto xv = as_vec(x);
  const auto yv = as_vec(y);
  const double sw = w.sum();
  const double sx = w.dot(xv);
  const double sy = w.dot(yv);
  const double sxx = (w.array() * xv.array() * xv.array()).sum();
  const double sxy = (w.array() * xv.array() * yv.array()).sum();
  const double det = sw * sxx - sx * sx;
  if (!(std::abs(det) > 0.0))
    throw fit_error("wls_line: degenerate abscissae");

  LineFit f;
  f.npoints = static_cast<int>(n);
  f.slope = (sw * sxy - sx * sy) / det;
  f.intercept = (sxx * sy - sx * sxy) / det;
  // covariance of the weighted normal equations: inverse of [sw sx; sx sxx]
  double var_icpt = sxx / det;
  double var_slope = sw / det;
  f.chi2 = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double r = yv(i) - f.intercept - f.slope * xv(i);
    f.chi2 += w(i) * r * r;
  }
  if (uniform && n > 2) {
    // unweighted: scale covariance by the residual variance estimate
    const double s2 = f.chi2 / static_cast<double>(n - 2);
    var_icpt *= s2;
    var_slope *= s2;
  }
  f.stderr_intercept = std::sqrt(std::max(var_icpt, 0.0));
  f.stderr_slope = std::sqrt(std::max(var_slope, 0.0));
  return f;
}

SinusoidFit fit_damped_sinusoid(const std::vector<double>& tau,
                                const std::vector<double>& y,
                                double gamma_max, double omega_max) {
  if (tau.size() != y.size())
    throw std::invalid_argument("fit_damped_sinusoid: size mismatch");
  if (tau.size() < 8)
    throw fit_error("fit_damped_sinusoid: need at least 8 points");
  if (!(gamma_max > 0.0) || !(omega_max > 0.0))
    throw std::invalid_argument("fit_damped_sinusoid: bounds must be > 0");

  const auto tv = as_vec(tau).eval();
  const auto yv = as_vec(y).eval();

  // multi-start over a (gamma, omega) grid, amplitudes solved linearly
  constexpr int kGrid = 24;
  double best_g = 0.0, best_w = 0.0, best_rss = 1e300;
  for (int ig = 0; ig <= kGrid; ++ig) {
    const double g = gamma_max * ig / kGrid;
    for (int iw = 0; iw <= kGrid; ++iw) {
      const double w = omega_max * iw / kGrid;
      const auto q = solve_quadrature(tv, yv, g, w);
      if (q.rss < best_rss) {
        best_rss = q.rss;
        best_g = g;
        best_w = w;
      }
    }
  }

  // Gauss-Newton on theta = (a, b, g, w); model a E sin + b E cos,
  // E = e^{-g tau}
  auto q0 = solve_quadrature(tv, yv, best_g, best_w);
  Eigen::Vector4d th(q0.a, q0.b, best_g, best_w);
  double rss = q0.rss;
  bool converged = false;
  for (int it = 0; it < 200; ++it) {
    const double a = th(0), b = th(1), g = th(2), w = th(3);
    const Eigen::ArrayXd env = (-g * tv.array()).exp();
    const Eigen::ArrayXd s = (w * tv.array()).sin();
    const Eigen::ArrayXd c = (w * tv.array()).cos();
    const Eigen::ArrayXd model = env * (a * s + b * c);
    const Eigen::VectorXd r = yv.array() - model;
    Eigen::MatrixXd Jm(tv.size(), 4);
    Jm.col(0) = env * s;
    Jm.col(1) = env * c;
    Jm.col(2) = -tv.array() * model;
    Jm.col(3) = tv.array() * env * (a * c - b * s);
    const Eigen::Vector4d step =
        (Jm.transpose() * Jm +
         1e-12 * Eigen::Matrix4d::Identity())
            .ldlt()
            .solve(Jm.transpose() * r);
    // backtracking line search on the residual sum of squares
    double alpha = 1.0;
    double new_rss = rss;
    Eigen::Vector4d cand = th;
    for (int ls = 0; ls < 30; ++ls) {
      cand = th + alpha * step;
      const Eigen::ArrayXd e2 = (-cand(2) * tv.array()).exp();
      const Eigen::ArrayXd m2 =
          e2 * (cand(0) * (cand(3) * tv.array()).sin() +
                cand(1) * (cand(3) * tv.array()).cos());
      new_rss = (yv.array() - m2).matrix().squaredNorm();
      if (new_rss <= rss) break;
      alpha *= 0.5;
    }
    if (new_rss > rss) {
      // no descent direction left; accept as a stationary point when the
      // gradient has collapsed (happens on oscillation-free data, where
      // omega -> 0 leaves the sine amplitude unidentifiable)
      converged = (Jm.transpose() * r).norm() < 1e-6 * std::max(1.0, yv.norm());
      break;
    }
    const double rel = (rss - new_rss) / std::max(rss, 1e-300);
    th = cand;
    rss = new_rss;
    if (rel < 1e-14 && it > 2) {
      converged = true;
      break;
    }
  }

  SinusoidFit f;
  const double a = th(0), b = th(1);
  f.amplitude = std::hypot(a, b);
  f.gamma = th(2);
  f.omega = std::abs(th(3));
  // a sin(wt) + b cos(wt) = A sin(wt + phase), phase = atan2(b, a); if the
  // fitted frequency came out negative, report |w| and flip the sine term
  f.phase = th(3) < 0.0 ? std::atan2(b, -a) : std::atan2(b, a);
  f.converged = converged;
  f.rms_residual =
      std::sqrt(rss / static_cast<double>(tau.size()));
  return f;
}

double fit_log_linear_decay(const std::vector<double>& tau,
                            const std::vector<double>& y, double floor) {
  if (tau.size() != y.size())
    throw std::invalid_argument("fit_log_linear_decay: size mismatch");
  std::vector<double> xs, ys;
  for (size_t i = 0; i < y.size(); ++i) {
    if (std::abs(y[i]) > floor) {
      xs.push_back(tau[i]);
      ys.push_back(std::log(std::abs(y[i])));
    }
  }
  if (xs.size() < 2)
    throw fit_error("fit_log_linear_decay: fewer than 2 usable points");
  return -wls_line(xs, ys, {}).slope;
}

}  // namespace lsyk
