#include <gtest/gtest.h>

#include <cmath>
#include <algorithm>
#include <map>
#include <set>

#include "pair_oracle.hpp"
#include "pcnet/errors.hpp"
#include "pcnet/pairing.hpp"
#include "test_util.hpp"

using namespace pcnet;
using namespace pcnet::testing;

namespace {

const Metric kMetrics[] = {Metric::kEuclidean, Metric::kCosine, Metric::kRandom};
const Strategy kStrategies[] = {Strategy::kSS, Strategy::kSD, Strategy::kSRandom, Strategy::kRandomRandom};

}  // namespace

TEST(SampleBatch, ExhaustiveCase) {
  const std::vector<std::size_t> labels{0, 0, 1, 1};
  Rng rng(3);
  auto b = sample_batch(labels, {2, 2, 0}, rng);
  ASSERT_EQ(b.indices.size(), 4u);
  std::vector<std::size_t> sorted = b.indices;
  std::sort(sorted.begin(), sorted.end());
  EXPECT_EQ(sorted, (std::vector<std::size_t>{0, 1, 2, 3}));
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(b.labels[i], labels[b.indices[i]]);
  EXPECT_TRUE(b.short_classes.empty());
}

TEST(SampleBatch, DeterministicAndExactHistogram) {
  std::vector<std::size_t> labels;
  for (std::size_t c = 0; c < 45; ++c)
    for (std::size_t i = 0; i < 10; ++i) labels.push_back(c);
  Rng a(99), b(99);
  auto x = sample_batch(labels, {30, 6, 0}, a);
  auto y = sample_batch(labels, {30, 6, 0}, b);
  EXPECT_EQ(x.indices, y.indices);
  ASSERT_EQ(x.indices.size(), 180u);
  std::map<std::size_t, std::size_t> hist;
  for (std::size_t l : x.labels) ++hist[l];
  EXPECT_EQ(hist.size(), 30u);
  for (const auto& [l, n] : hist) EXPECT_EQ(n, 6u);
  std::set<std::size_t> distinct(x.indices.begin(), x.indices.end());
  EXPECT_EQ(distinct.size(), 180u);
}

TEST(SampleBatch, ShortClassesSampleWithReplacement) {
  const std::vector<std::size_t> labels{0, 0, 0, 1, 1, 1, 1, 1, 1};
  Rng rng(1);
  auto b = sample_batch(labels, {2, 6, 0}, rng);
  EXPECT_EQ(b.indices.size(), 12u);
  EXPECT_EQ(b.short_classes, (std::vector<std::size_t>{0}));
}

TEST(SampleBatch, InvalidSpecRejected) {
  const std::vector<std::size_t> labels{0, 0, 1, 1};
  Rng rng(1);
  EXPECT_THROW(sample_batch(labels, {1, 2, 0}, rng), Error);
  EXPECT_THROW(sample_batch(labels, {2, 1, 0}, rng), Error);
  EXPECT_THROW(sample_batch(labels, {3, 2, 0}, rng), Error);
}

TEST(Distances, Examples) {
  const std::vector<double> o{0, 0}, p{3, 4}, e1{1, 0}, e2{0, 1};
  EXPECT_EQ(euclidean_distance<double>(p, p), 0.0);
  EXPECT_EQ(euclidean_distance<double>(o, p), 5.0);
  EXPECT_NEAR(cosine_distance<double>(p, p), 0.0, 1e-15);
  EXPECT_EQ(cosine_distance<double>(e1, e2), 1.0);
  EXPECT_THROW(cosine_distance<double>(o, p), DomainError);

  Rng rng(5);
  for (int t = 0; t < 20; ++t) {
    std::vector<double> u(64), v(64);
    for (auto& x : u) x = uniform(rng, -1, 1);
    for (auto& x : v) x = uniform(rng, -1, 1);
    EXPECT_NEAR(euclidean_distance<double>(u, v), static_cast<double>(oracle_euclidean(u, v)), 1e-13);
    EXPECT_NEAR(cosine_distance<double>(u, v), static_cast<double>(oracle_cosine(u, v)), 1e-13);
  }
}

TEST(SelectPairs, WorkedExample) {
  Tensor<double> f({4, 2}, {0, 0, 0, 1, 5, 5, 5, 6});
  const std::vector<std::size_t> labels{0, 0, 1, 1};
  Rng rng(0);
  auto p = select_pairs(f, labels, Metric::kEuclidean, Strategy::kSS, rng);
  EXPECT_EQ(p.intra_partner[0], 1u);
  EXPECT_EQ(p.intra_distance[0], 1.0);
  EXPECT_EQ(p.inter_partner[0], 2u);
  EXPECT_EQ(p.inter_distance[0], std::sqrt(50.0));
}

TEST(SelectPairs, TieGoesToLowerIndex) {
  Tensor<double> f({5, 1}, {0, 1, 1, 9, 9});
  const std::vector<std::size_t> labels{0, 0, 0, 1, 1};
  Rng rng(0);
  auto p = select_pairs(f, labels, Metric::kEuclidean, Strategy::kSS, rng);
  EXPECT_EQ(p.intra_partner[0], 1u);
  EXPECT_EQ(p.inter_partner[0], 3u);
  EXPECT_EQ(p.inter_partner[1], 3u);
}

TEST(SelectPairs, RejectsSingletonLabel) {
  Tensor<double> f({3, 1}, {0, 1, 2});
  const std::vector<std::size_t> labels{0, 0, 1};
  Rng rng(0);
  EXPECT_THROW(select_pairs(f, labels, Metric::kEuclidean, Strategy::kSS, rng), PreconditionError);
}

TEST(SelectPairs, MatchesBruteForceOracle) {
  Rng gen(2024);
  for (int batch = 0; batch < 1000; ++batch) {
    for (Metric metric : kMetrics) {
      const OracleBatch b = random_oracle_batch(gen, metric != Metric::kCosine);
      const auto features = oracle_features_tensor<double>(b);
      for (Strategy strategy : kStrategies) {
        Rng r1(batch * 31 + 7), r2(batch * 31 + 7);
        const auto got = select_pairs(features, b.labels, metric, strategy, r1);
        const auto want = brute_force_pairs(b, metric, strategy, r2);
        ASSERT_EQ(got.intra_partner, want.intra_partner) << "batch " << batch;
        ASSERT_EQ(got.inter_partner, want.inter_partner) << "batch " << batch;
        for (std::size_t a = 0; a < got.size(); ++a) {
          ASSERT_NEAR(got.intra_distance[a], want.intra_distance[a], 1e-12);
          ASSERT_NEAR(got.inter_distance[a], want.inter_distance[a], 1e-12);
        }
      }
    }
  }
}

TEST(SelectPairs, ConstraintsAndPurity) {
  Rng gen(77);
  for (int batch = 0; batch < 200; ++batch) {
    const OracleBatch b = random_oracle_batch(gen, false);
    const auto features = oracle_features_tensor<double>(b);
    for (Metric metric : kMetrics) {
      for (Strategy strategy : kStrategies) {
        Rng r1(batch), r2(batch);
        const auto p = select_pairs(features, b.labels, metric, strategy, r1);
        const auto q = select_pairs(features, b.labels, metric, strategy, r2);
        EXPECT_EQ(p.intra_partner, q.intra_partner);
        EXPECT_EQ(p.inter_partner, q.inter_partner);
        for (std::size_t a = 0; a < p.size(); ++a) {
          EXPECT_NE(p.intra_partner[a], a);
          EXPECT_EQ(b.labels[p.intra_partner[a]], b.labels[a]);
          EXPECT_NE(b.labels[p.inter_partner[a]], b.labels[a]);
          EXPECT_EQ(p.intra_distance[a], euclidean_distance<double>(features.data().subspan(a * features.dim(1), features.dim(1)),
                                                                      features.data().subspan(p.intra_partner[a] * features.dim(1), features.dim(1))));
        }
      }
    }
  }
}

TEST(PairsCsv, HeaderAndIdMapping) {
  PairAssignment p;
  p.intra_partner = {1, 0};
  p.inter_partner = {1, 0};
  p.intra_distance = {0.5, 0.5};
  p.inter_distance = {2, 2};
  const std::vector<std::size_t> ids{40, 41};
  const std::string csv = pairs_to_csv(p, ids);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "anchor_id,intra_id,intra_dist,inter_id,inter_dist");
  EXPECT_NE(csv.find("40,41,0.5,41,2\n"), std::string::npos);
}
