#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "lsyk/types.hpp"

namespace lsyk {

// SplitMix64: stable 64-bit mixing used for all derived seeds, so adding
// grid points never reshuffles previously assigned sample seeds.
std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t mix_seed(std::uint64_t base,
                       std::initializer_list<std::uint64_t> parts);

// Deterministic standard-normal stream (Box-Muller over a 64-bit LCG-free
// engine); independent of platform library distributions.
class GaussianStream {
 public:
  explicit GaussianStream(std::uint64_t seed);
  double next();

 private:
  double uniform01();
  std::uint64_t state_;
  std::optional<double> spare_;
};

std::uint64_t fnv1a64(const std::string& text);

// Flat key-value config: `key = value` lines, '#' comments, arrays as
// comma-separated scalars. Command line pairs override file entries.
class KeyValueConfig {
 public:
  static KeyValueConfig from_file(const std::string& path);
  static KeyValueConfig from_string(const std::string& text);

  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const;
  std::string get_string(const std::string& key,
                         const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  std::vector<double> get_double_list(const std::string& key) const;
  std::vector<int> get_int_list(const std::string& key) const;

  // Canonical (sorted, normalized) text rendering and its FNV-1a hash.
  std::string canonical_text() const;
  std::string config_hash() const;

  const std::map<std::string, std::string>& entries() const {
    return entries_;
  }

 private:
  std::map<std::string, std::string> entries_;
};

// Standard output-file preamble: '# key: value' lines carrying the config
// hash, code version, and tolerances.
void write_header_block(std::ostream& out,
                        const std::vector<std::pair<std::string,
                                                    std::string>>& meta);

std::string format_full(double v);  // shortest round-trip decimal

}  // namespace lsyk
