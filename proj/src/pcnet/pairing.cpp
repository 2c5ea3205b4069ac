#include "pcnet/pairing.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

#include "pcnet/errors.hpp"

namespace pcnet {

BatchSample sample_batch(std::span<const std::size_t> dataset_labels, const BatchSpec& spec, Rng& rng) {
  if (spec.classes_per_batch < 2 || spec.images_per_class < 2) {
    throw ConfigError("batch: classes_per_batch and images_per_class must both be >= 2");
  }
  std::map<std::size_t, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < dataset_labels.size(); ++i) members[dataset_labels[i]].push_back(i);
  if (members.size() < spec.classes_per_batch) {
    throw ConfigError("batch: dataset has " + std::to_string(members.size()) + " classes, batch needs " +
                      std::to_string(spec.classes_per_batch));
  }

  std::vector<std::size_t> classes;
  for (const auto& [label, items] : members) classes.push_back(label);
  // Partial Fisher-Yates: the first P slots become the selected classes.
  for (std::size_t i = 0; i < spec.classes_per_batch; ++i) {
    std::swap(classes[i], classes[i + uniform_index(rng, classes.size() - i)]);
  }

  BatchSample out;
  for (std::size_t c = 0; c < spec.classes_per_batch; ++c) {
    std::vector<std::size_t> pool = members[classes[c]];
    const std::size_t k = spec.images_per_class;
    if (pool.size() >= k) {
      for (std::size_t i = 0; i < k; ++i) {
        std::swap(pool[i], pool[i + uniform_index(rng, pool.size() - i)]);
        out.indices.push_back(pool[i]);
      }
    } else {
      out.short_classes.push_back(classes[c]);
      for (std::size_t i = 0; i < k; ++i) out.indices.push_back(pool[uniform_index(rng, pool.size())]);
    }
    out.labels.insert(out.labels.end(), k, classes[c]);
  }
  return out;
}

std::string to_string(Metric metric) {
  switch (metric) {
    case Metric::kEuclidean: return "euclidean";
    case Metric::kCosine: return "cosine";
    case Metric::kRandom: return "random";
  }
  return "?";
}

std::string to_string(Strategy strategy) {
  switch (strategy) {
    case Strategy::kSS: return "SS";
    case Strategy::kSD: return "SD";
    case Strategy::kSRandom: return "SRandom";
    case Strategy::kRandomRandom: return "RandomRandom";
  }
  return "?";
}

Metric parse_metric(const std::string& text) {
  if (text == "euclidean") return Metric::kEuclidean;
  if (text == "cosine") return Metric::kCosine;
  if (text == "random") return Metric::kRandom;
  throw ConfigError("unknown metric '" + text + "' (euclidean|cosine|random)");
}

Strategy parse_strategy(const std::string& text) {
  if (text == "SS") return Strategy::kSS;
  if (text == "SD") return Strategy::kSD;
  if (text == "SRandom") return Strategy::kSRandom;
  if (text == "RandomRandom") return Strategy::kRandomRandom;
  throw ConfigError("unknown strategy '" + text + "' (SS|SD|SRandom|RandomRandom)");
}

template <typename T>
double euclidean_distance(std::span<const T> u, std::span<const T> v) {
  if (u.size() != v.size()) {
    throw DimensionError("euclidean_distance: lengths " + std::to_string(u.size()) + " and " +
                         std::to_string(v.size()));
  }
  double acc = 0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double d = static_cast<double>(u[i]) - static_cast<double>(v[i]);
    acc += d * d;
  }
  return std::sqrt(acc);
}

template <typename T>
double cosine_distance(std::span<const T> u, std::span<const T> v) {
  if (u.size() != v.size()) {
    throw DimensionError("cosine_distance: lengths " + std::to_string(u.size()) + " and " +
                         std::to_string(v.size()));
  }
  double dot = 0, uu = 0, vv = 0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double a = u[i], b = v[i];
    dot += a * b;
    uu += a * a;
    vv += b * b;
  }
  if (uu == 0.0 || vv == 0.0) throw DomainError("cosine_distance: zero vector");
  return 1.0 - dot / (std::sqrt(uu) * std::sqrt(vv));
}

template <typename T>
PairAssignment select_pairs(const Tensor<T>& features, std::span<const std::size_t> labels, Metric metric,
                            Strategy strategy, Rng& rng) {
  if (features.rank() != 2 || features.dim(0) != labels.size()) {
    throw DimensionError("select_pairs: features " + shape_to_string(features.shape()) + " for " +
                         std::to_string(labels.size()) + " labels");
  }
  const std::size_t n = labels.size();
  const std::size_t dim = features.dim(1);
  std::map<std::size_t, std::size_t> counts;
  for (std::size_t l : labels) ++counts[l];
  for (const auto& [label, count] : counts) {
    if (count < 2) {
      throw PreconditionError("select_pairs: label " + std::to_string(label) +
                              " occurs once in the batch; every label needs >= 2 items");
    }
  }
  if (counts.size() < 2) throw PreconditionError("select_pairs: batch needs at least 2 distinct labels");

  auto row = [&](std::size_t i) { return features.data().subspan(i * dim, dim); };
  std::vector<double> euclid(n * n, 0.0), chosen;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) euclid[i * n + j] = euclid[j * n + i] = euclidean_distance(row(i), row(j));
  if (metric == Metric::kCosine) {
    chosen.assign(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) chosen[i * n + j] = chosen[j * n + i] = cosine_distance(row(i), row(j));
  }
  const std::vector<double>& metric_distance = metric == Metric::kCosine ? chosen : euclid;

  auto pick_extreme = [&](std::size_t anchor, const std::vector<std::size_t>& candidates, bool nearest) {
    std::size_t best = candidates.front();
    for (std::size_t j : candidates) {
      const double d = metric_distance[anchor * n + j];
      const double b = metric_distance[anchor * n + best];
      if (nearest ? d < b : d > b) best = j;
    }
    return best;
  };
  auto pick_random = [&](const std::vector<std::size_t>& candidates) {
    return candidates[uniform_index(rng, candidates.size())];
  };

  const bool random_metric = metric == Metric::kRandom;
  const bool intra_random = random_metric || strategy == Strategy::kSRandom || strategy == Strategy::kRandomRandom;
  const bool inter_random = random_metric || strategy == Strategy::kRandomRandom;

  PairAssignment out;
  std::vector<std::size_t> same, other;
  for (std::size_t a = 0; a < n; ++a) {
    same.clear();
    other.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (j == a) continue;
      (labels[j] == labels[a] ? same : other).push_back(j);
    }
    const std::size_t intra = intra_random ? pick_random(same) : pick_extreme(a, same, strategy != Strategy::kSD);
    const std::size_t inter = inter_random ? pick_random(other) : pick_extreme(a, other, true);
    out.intra_partner.push_back(intra);
    out.inter_partner.push_back(inter);
    out.intra_distance.push_back(euclid[a * n + intra]);
    out.inter_distance.push_back(euclid[a * n + inter]);
  }
  return out;
}

std::string pairs_to_csv(const PairAssignment& pairs, std::span<const std::size_t> ids) {
  auto id = [&](std::size_t i) { return ids.empty() ? i : ids[i]; };
  std::string out = "anchor_id,intra_id,intra_dist,inter_id,inter_dist\n";
  char line[256];
  for (std::size_t a = 0; a < pairs.size(); ++a) {
    std::snprintf(line, sizeof line, "%zu,%zu,%.17g,%zu,%.17g\n", id(a), id(pairs.intra_partner[a]),
                  pairs.intra_distance[a], id(pairs.inter_partner[a]), pairs.inter_distance[a]);
    out += line;
  }
  return out;
}

template double euclidean_distance(std::span<const float>, std::span<const float>);
template double euclidean_distance(std::span<const double>, std::span<const double>);
template double cosine_distance(std::span<const float>, std::span<const float>);
template double cosine_distance(std::span<const double>, std::span<const double>);
template PairAssignment select_pairs(const Tensor<float>&, std::span<const std::size_t>, Metric, Strategy, Rng&);
template PairAssignment select_pairs(const Tensor<double>&, std::span<const std::size_t>, Metric, Strategy, Rng&);

}  // namespace pcnet
