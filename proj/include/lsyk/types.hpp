#pragma once

#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace lsyk {

using cplx = std::complex<double>;
using std::size_t;

inline constexpr const char* kVersion = "0.1.0";

// Amplitudes at or below this magnitude are dropped from sparse storage.
inline constexpr double kDropTol = 1e-15;

// Hard cap on qubit count for operator construction (memory guard).
inline constexpr int kMaxQubits = 20;

// Dense-diagonalization ceiling (matrix dimension).
inline constexpr int kDenseLimit = 4096;

struct resource_limit_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct consistency_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct convergence_error : std::runtime_error {
  convergence_error(const std::string& msg, double best_residual)
      : std::runtime_error(msg), best_residual(best_residual) {}
  double best_residual = 0.0;
};

struct numeric_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct fit_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace lsyk
