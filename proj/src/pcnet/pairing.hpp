#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pcnet/rng.hpp"
#include "pcnet/tensor.hpp"

namespace pcnet {

// P classes x K images per batch.
struct BatchSpec {
  std::size_t classes_per_batch = 30;
  std::size_t images_per_class = 6;
  std::uint64_t seed = 0;
};

struct BatchSample {
  std::vector<std::size_t> indices;  // dataset item indices, class-major
  std::vector<std::size_t> labels;
  std::vector<std::size_t> short_classes;  // sampled with replacement (fewer than K items)
};

// Draws P distinct classes, then K items per class (without replacement when
// the class has at least K items). Deterministic given the generator state.
BatchSample sample_batch(std::span<const std::size_t> dataset_labels, const BatchSpec& spec, Rng& rng);

enum class Metric { kEuclidean, kCosine, kRandom };

// Partner construction per anchor, named (inter, intra):
//   kSS           most similar inter, most similar intra
//   kSD           most similar inter, most different intra
//   kSRandom      most similar inter, random intra
//   kRandomRandom random inter, random intra
enum class Strategy { kSS, kSD, kSRandom, kRandomRandom };

std::string to_string(Metric metric);
std::string to_string(Strategy strategy);
Metric parse_metric(const std::string& text);
Strategy parse_strategy(const std::string& text);

template <typename T>
double euclidean_distance(std::span<const T> u, std::span<const T> v);

// 1 - cos(u, v); throws DomainError for a zero vector.
template <typename T>
double cosine_distance(std::span<const T> u, std::span<const T> v);

struct PairAssignment {
  std::vector<std::size_t> intra_partner;
  std::vector<std::size_t> inter_partner;
  // Always Euclidean, whatever metric drove the choice.
  std::vector<double> intra_distance;
  std::vector<double> inter_distance;

  std::size_t size() const { return intra_partner.size(); }
};

// Per anchor (in index order): intra partner from the same label, inter
// partner from a different label. Ties go to the lowest index. Random
// choices draw from `rng`, intra before inter, uniformly over candidates in
// ascending index order.
template <typename T>
PairAssignment select_pairs(const Tensor<T>& features, std::span<const std::size_t> labels, Metric metric,
                            Strategy strategy, Rng& rng);

// CSV with header anchor_id,intra_id,intra_dist,inter_id,inter_dist. When
// `ids` is non-empty, batch positions are mapped through it.
std::string pairs_to_csv(const PairAssignment& pairs, std::span<const std::size_t> ids = {});

}  // namespace pcnet
