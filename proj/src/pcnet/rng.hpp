#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <string_view>

namespace pcnet {

using Rng = std::mt19937_64;

// Derives an independent generator seed from a root seed and a stream name.
std::uint64_t derive_seed(std::uint64_t root_seed, std::string_view stream);

// One root seed split into named streams ("init", "sampler", "augment",
// "selection"), so drawing more numbers from one stream never shifts another.
class RngStreams {
 public:
  explicit RngStreams(std::uint64_t root_seed = 0) : root_seed_(root_seed) {}

  Rng& stream(const std::string& name);
  std::uint64_t root_seed() const { return root_seed_; }

  // Text form of every materialized stream, one "name state" entry per line.
  std::string serialize() const;
  void deserialize(std::string_view text);

 private:
  std::uint64_t root_seed_;
  std::map<std::string, Rng> streams_;
};

// Uniform double in [lo, hi); independent of the scalar type that consumes it.
double uniform(Rng& rng, double lo, double hi);
// Uniform integer in [0, n).
std::size_t uniform_index(Rng& rng, std::size_t n);

}  // namespace pcnet
