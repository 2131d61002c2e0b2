#pragma once

#include <vector>

#include "lsyk/types.hpp"

namespace lsyk {

struct LineFit {
  double intercept = 0.0;
  double slope = 0.0;
  double stderr_intercept = 0.0;
  double stderr_slope = 0.0;
  double chi2 = 0.0;
  int npoints = 0;
};

// Weighted least squares y = intercept + slope * x with weights 1/sem^2;
// any non-positive sem switches the whole fit to uniform weights.
LineFit wls_line(const std::vector<double>& x, const std::vector<double>& y,
                 const std::vector<double>& sem);

struct SinusoidFit {
  double amplitude = 0.0;
  double gamma = 0.0;  // decay rate
  double omega = 0.0;  // oscillation frequency
  double phase = 0.0;
  double rms_residual = 0.0;
  bool converged = false;
};

// Least squares of y ~ A e^{-gamma tau} sin(omega tau + phase) via a
// (gamma, omega) grid multi-start (linear in the quadrature amplitudes)
// followed by Gauss-Newton refinement of all four parameters.
SinusoidFit fit_damped_sinusoid(const std::vector<double>& tau,
                                const std::vector<double>& y,
                                double gamma_max, double omega_max);

// Least squares of ln|y| = -gamma tau + c; entries with |y| below floor
// are skipped. Returns the decay rate gamma.
double fit_log_linear_decay(const std::vector<double>& tau,
                            const std::vector<double>& y,
                            double floor = 1e-13);

}  // namespace lsyk
