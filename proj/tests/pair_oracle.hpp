#pragma once

// Brute-force pair selection used as an independent oracle: scans every
// ordered pair, compares exact (long double) distances and breaks ties by
// index.

#include <cmath>
#include <cstddef>
#include <vector>

#include "pcnet/pairing.hpp"

namespace pcnet::testing {

struct OracleBatch {
  std::vector<std::vector<double>> features;
  std::vector<std::size_t> labels;
};

inline long double oracle_euclidean(const std::vector<double>& u, const std::vector<double>& v) {
  long double s = 0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const long double d = static_cast<long double>(u[i]) - v[i];
    s += d * d;
  }
  return std::sqrt(s);
}

inline long double oracle_cosine(const std::vector<double>& u, const std::vector<double>& v) {
  long double dot = 0, uu = 0, vv = 0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += static_cast<long double>(u[i]) * v[i];
    uu += static_cast<long double>(u[i]) * u[i];
    vv += static_cast<long double>(v[i]) * v[i];
  }
  return 1.0L - dot / (std::sqrt(uu) * std::sqrt(vv));
}

inline PairAssignment brute_force_pairs(const OracleBatch& batch, Metric metric, Strategy strategy, Rng& rng) {
  const std::size_t n = batch.labels.size();
  auto dist = [&](std::size_t i, std::size_t j) {
    return metric == Metric::kCosine ? oracle_cosine(batch.features[i], batch.features[j])
                                     : oracle_euclidean(batch.features[i], batch.features[j]);
  };
  const bool intra_random = metric == Metric::kRandom || strategy == Strategy::kSRandom ||
                            strategy == Strategy::kRandomRandom;
  const bool inter_random = metric == Metric::kRandom || strategy == Strategy::kRandomRandom;
  const bool intra_far = strategy == Strategy::kSD;

  PairAssignment out;
  for (std::size_t a = 0; a < n; ++a) {
    std::vector<std::size_t> same, other;
    for (std::size_t j = 0; j < n; ++j) {
      if (j != a) (batch.labels[j] == batch.labels[a] ? same : other).push_back(j);
    }
    std::size_t intra = same.front(), inter = other.front();
    if (intra_random) {
      intra = same[uniform_index(rng, same.size())];
    } else {
      for (std::size_t j : same) {
        const long double d = dist(a, j), b = dist(a, intra);
        if (intra_far ? d > b : d < b) intra = j;
      }
    }
    if (inter_random) {
      inter = other[uniform_index(rng, other.size())];
    } else {
      for (std::size_t j : other) {
        if (dist(a, j) < dist(a, inter)) inter = j;
      }
    }
    out.intra_partner.push_back(intra);
    out.inter_partner.push_back(inter);
    out.intra_distance.push_back(static_cast<double>(oracle_euclidean(batch.features[a], batch.features[intra])));
    out.inter_distance.push_back(static_cast<double>(oracle_euclidean(batch.features[a], batch.features[inter])));
  }
  return out;
}

// B <= 24 items over 2..6 labels, each label at least twice, in shuffled
// order. Integer-valued features (Euclidean) create many exact ties;
// duplicated rows create ties under every metric.
inline OracleBatch random_oracle_batch(Rng& rng, bool integer_features) {
  OracleBatch b;
  const std::size_t classes = 2 + uniform_index(rng, 5);
  std::vector<std::size_t> labels;
  for (std::size_t c = 0; c < classes; ++c) {
    const std::size_t k = 2 + uniform_index(rng, 3);
    for (std::size_t i = 0; i < k && labels.size() < 24; ++i) labels.push_back(c * 7 + 3);
  }
  // Each label must appear twice even after the 24 cap.
  while (labels.size() >= 2 && labels.back() != labels[labels.size() - 2]) labels.pop_back();
  for (std::size_t i = labels.size(); i > 1; --i) std::swap(labels[i - 1], labels[uniform_index(rng, i)]);
  const std::size_t dim = 1 + uniform_index(rng, 6);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    std::vector<double> f(dim);
    if (i > 0 && uniform_index(rng, 5) == 0) {
      f = b.features[uniform_index(rng, i)];
    } else {
      for (auto& v : f) {
        v = integer_features ? static_cast<double>(static_cast<long>(uniform_index(rng, 5)) - 2) : uniform(rng, -1, 1);
      }
      if (!integer_features) f[0] += 2.0;  // keep cosine away from zero vectors
    }
    b.features.push_back(f);
  }
  b.labels = labels;
  return b;
}

template <typename T>
Tensor<T> oracle_features_tensor(const OracleBatch& b) {
  const std::size_t n = b.features.size(), d = b.features.front().size();
  Tensor<T> t(Shape{n, d});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) t[i * d + j] = static_cast<T>(b.features[i][j]);
  return t;
}

}  // namespace pcnet::testing
