#include "lsyk/disorder.hpp"

#include <cmath>
#include <sstream>

#include "lsyk/io_util.hpp"

namespace lsyk {

double coupling_sigma(int n, int q) {
  double fact = 1.0;
  for (int i = 2; i < q; ++i) fact *= i;
  return std::sqrt(fact / std::pow(static_cast<double>(n), q - 1));
}

DisorderRealization sample_disorder(int n, int q, std::uint64_t seed) {
  if (n <= 0 || (n & 1)) throw std::invalid_argument("n must be even, > 0");
  if (q <= 0 || (q & 1)) throw std::invalid_argument("q must be even, > 0");
  if (q > n) throw std::invalid_argument("q must not exceed n");
  DisorderRealization d;
  d.n_majorana = n;
  d.q = q;
  d.seed = seed;
  const double sigma = coupling_sigma(n, q);
  GaussianStream gauss(seed);

  // Ascending index tuples in lexicographic order (0-based).
  std::vector<int> idx(static_cast<size_t>(q));
  for (int i = 0; i < q; ++i) idx[static_cast<size_t>(i)] = i;
  while (true) {
    d.couplings.emplace_back(idx, sigma * gauss.next());
    int pos = q - 1;
    while (pos >= 0 && idx[static_cast<size_t>(pos)] == n - q + pos) --pos;
    if (pos < 0) break;
    ++idx[static_cast<size_t>(pos)];
    for (int i = pos + 1; i < q; ++i)
      idx[static_cast<size_t>(i)] = idx[static_cast<size_t>(i - 1)] + 1;
  }
  return d;
}

std::string serialize_disorder(const DisorderRealization& d) {
  std::ostringstream out;
  out << "disorder n=" << d.n_majorana << " q=" << d.q << " seed=" << d.seed
      << " terms=" << d.couplings.size() << '\n';
  for (const auto& [idx, J] : d.couplings) {
    for (size_t i = 0; i < idx.size(); ++i)
      out << (i ? " " : "") << idx[i];
    out << ' ' << format_full(J) << '\n';
  }
  return out.str();
}

DisorderRealization parse_disorder(const std::string& text) {
  std::istringstream in(text);
  std::string tag;
  DisorderRealization d;
  size_t terms = 0;
  std::string field;
  if (!(in >> tag) || tag != "disorder")
    throw std::invalid_argument("bad disorder record header");
  auto read_kv = [&](const std::string& want) -> std::string {
    if (!(in >> field)) throw std::invalid_argument("truncated header");
    const auto pos = field.find('=');
    if (pos == std::string::npos || field.substr(0, pos) != want)
      throw std::invalid_argument("expected field " + want);
    return field.substr(pos + 1);
  };
  d.n_majorana = std::stoi(read_kv("n"));
  d.q = std::stoi(read_kv("q"));
  d.seed = std::stoull(read_kv("seed"));
  terms = std::stoull(read_kv("terms"));
  for (size_t k = 0; k < terms; ++k) {
    std::vector<int> idx(static_cast<size_t>(d.q));
    for (auto& v : idx)
      if (!(in >> v)) throw std::invalid_argument("truncated couplings");
    double J = 0.0;
    if (!(in >> J)) throw std::invalid_argument("truncated couplings");
    d.couplings.emplace_back(std::move(idx), J);
  }
  return d;
}

}  // namespace lsyk
