#include "pcnet/rng.hpp"

#include <sstream>

#include "pcnet/errors.hpp"

namespace pcnet {

std::uint64_t derive_seed(std::uint64_t root_seed, std::string_view stream) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : stream) {
    h ^= c;
    h *= 1099511628211ull;
  }
  std::seed_seq seq{static_cast<std::uint32_t>(root_seed), static_cast<std::uint32_t>(root_seed >> 32),
                    static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32)};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

Rng& RngStreams::stream(const std::string& name) {
  auto it = streams_.find(name);
  if (it == streams_.end()) it = streams_.emplace(name, Rng(derive_seed(root_seed_, name))).first;
  return it->second;
}

std::string RngStreams::serialize() const {
  std::ostringstream os;
  for (const auto& [name, rng] : streams_) os << name << ' ' << rng << '\n';
  return os.str();
}

void RngStreams::deserialize(std::string_view text) {
  std::istringstream is{std::string(text)};
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string name;
    Rng rng;
    if (!(ls >> name >> rng)) throw IoError("rng state: malformed entry for stream '" + name + "'");
    streams_[name] = rng;
  }
}

double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

std::size_t uniform_index(Rng& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

}  // namespace pcnet
