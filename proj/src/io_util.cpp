#include "lsyk/io_util.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

namespace lsyk {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

std::uint64_t mix_seed(std::uint64_t base,
                       std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = splitmix64(base);
  for (std::uint64_t p : parts) h = splitmix64(h ^ p);
  return h;
}

GaussianStream::GaussianStream(std::uint64_t seed)
    : state_(splitmix64(seed ^ 0x5ca1ab1e0ddba11ull)) {}

double GaussianStream::uniform01() {
  state_ = splitmix64(state_);
  // 53 high bits -> (0, 1]; never exactly 0, so log() below is safe.
  return static_cast<double>((state_ >> 11) + 1) * 0x1.0p-53;
}

double GaussianStream::next() {
  if (spare_) {
    const double v = *spare_;
    spare_.reset();
    return v;
  }
  const double u1 = uniform01();
  const double u2 = uniform01();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double a = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(a);
  return r * std::cos(a);
}

std::uint64_t fnv1a64(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

}  // namespace

KeyValueConfig KeyValueConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return from_string(buf.str());
}

KeyValueConfig KeyValueConfig::from_string(const std::string& text) {
  KeyValueConfig cfg;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line missing '=': " + line);
    cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

void KeyValueConfig::set(const std::string& key, const std::string& value) {
  if (key.empty()) throw std::invalid_argument("empty config key");
  entries_[key] = value;
}

bool KeyValueConfig::has(const std::string& key) const {
  return entries_.count(key) > 0;
}

std::string KeyValueConfig::get_string(const std::string& key,
                                       const std::string& fallback) const {
  const auto it = entries_.find(key);
  return it == entries_.end() ? fallback : it->second;
}

double KeyValueConfig::get_double(const std::string& key,
                                  double fallback) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  size_t pos = 0;
  const double v = std::stod(it->second, &pos);
  if (pos != it->second.size())
    throw std::invalid_argument("bad numeric value for " + key);
  return v;
}

std::int64_t KeyValueConfig::get_int(const std::string& key,
                                     std::int64_t fallback) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  size_t pos = 0;
  const std::int64_t v = std::stoll(it->second, &pos);
  if (pos != it->second.size())
    throw std::invalid_argument("bad integer value for " + key);
  return v;
}

std::vector<double> KeyValueConfig::get_double_list(
    const std::string& key) const {
  std::vector<double> out;
  const auto it = entries_.find(key);
  if (it == entries_.end()) return out;
  std::istringstream in(it->second);
  std::string tok;
  while (std::getline(in, tok, ',')) {
    tok = trim(tok);
    if (!tok.empty()) out.push_back(std::stod(tok));
  }
  return out;
}

std::vector<int> KeyValueConfig::get_int_list(const std::string& key) const {
  std::vector<int> out;
  for (double v : get_double_list(key)) {
    const int i = static_cast<int>(std::llround(v));
    if (std::abs(v - i) > 1e-12)
      throw std::invalid_argument("non-integer entry in list " + key);
    out.push_back(i);
  }
  return out;
}

std::string KeyValueConfig::canonical_text() const {
  std::ostringstream out;
  for (const auto& [k, v] : entries_) out << k << '=' << v << '\n';
  return out.str();
}

std::string KeyValueConfig::config_hash() const {
  std::ostringstream out;
  out << std::hex << fnv1a64(canonical_text());
  return out.str();
}

void write_header_block(
    std::ostream& out,
    const std::vector<std::pair<std::string, std::string>>& meta) {
  out << "# version: " << kVersion << '\n';
  for (const auto& [k, v] : meta) out << "# " << k << ": " << v << '\n';
}

std::string format_full(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

}  // namespace lsyk
