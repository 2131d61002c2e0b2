#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lsyk/types.hpp"

namespace lsyk {

// One sample of the Gaussian q-body couplings: i.i.d. zero mean, variance
// (q-1)!/N^{q-1}, one entry per ascending index tuple (0-based indices).
struct DisorderRealization {
  int n_majorana = 0;
  int q = 0;
  std::uint64_t seed = 0;
  std::vector<std::pair<std::vector<int>, double>> couplings;
};

DisorderRealization sample_disorder(int n, int q, std::uint64_t seed);

double coupling_sigma(int n, int q);  // sqrt((q-1)!/N^{q-1})

// Self-describing text record (replayable bit-exactly).
std::string serialize_disorder(const DisorderRealization& d);
DisorderRealization parse_disorder(const std::string& text);

}  // namespace lsyk
