#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "pcnet/config.hpp"
#include "pcnet/data.hpp"
#include "pcnet/model.hpp"
#include "pcnet/rng.hpp"

namespace pcnet {

// lr_min + (lr0 - lr_min)(1 + cos(pi t / T)) / 2 for 0 <= t <= T.
double cosine_lr(std::size_t t, std::size_t total, double lr0, double lr_min);

// Coupled weight decay with heavy-ball momentum:
//   g = grad + wd * p;  v = momentum * v + g;  p -= lr * v
template <typename T>
void sgd_step(std::span<T> param, std::span<const T> grad, std::span<T> velocity, double lr, double momentum,
              double weight_decay);

struct EpochMetrics {
  std::size_t epoch = 0;  // 1-based
  double lr = 0;
  double lc = 0;  // per-pair means, averaged over the epoch's batches
  double lr_loss = 0;
  double loss = 0;
  double lc_sum = 0;  // raw per-batch sums, averaged over batches
  double lr_sum = 0;
  double train_acc = 0;
  double test_oa = 0;
};

std::string metrics_csv(const std::vector<EpochMetrics>& history);
std::string metrics_csv_row(const EpochMetrics& m);
EpochMetrics parse_metrics_row(const std::string& line);

// Train/test halves after the stratified split, both standardized with the
// train split's channel statistics.
struct PreparedData {
  Dataset train;
  Dataset test;
  ChannelStats stats;
  std::string fingerprint;  // of the full raw dataset
};

PreparedData prepare_data(const TrainConfig& config);

// Config as it will actually run on `data`: classes_per_batch is capped at
// the number of classes.
TrainConfig resolve_config(const TrainConfig& config, const PreparedData& data, std::string* note = nullptr);

template <typename T>
Tensor<T> images_to_tensor(const std::vector<const Image*>& images);

template <typename T>
struct TrainState {
  TrainConfig config;
  std::vector<std::string> class_names;
  Model<T> model;
  std::vector<Tensor<T>> velocity;  // aligned with model.parameters()
  std::size_t epoch = 0;            // completed epochs
  RngStreams rng;
  std::vector<EpochMetrics> history;

  static TrainState create(const TrainConfig& config, const std::vector<std::string>& class_names);
};

template <typename T>
struct BatchOutcome {
  LossBundle<T> loss;
  T lc_sum = 0;
  T lr_sum = 0;
  std::size_t correct = 0;  // anchors whose self head argmax is right
  std::size_t anchors = 0;
};

// Forward pass and losses for one batch of already augmented images under
// the active tape. Pair selection reads pooled features as constants.
template <typename T>
BatchOutcome<T> batch_loss(const Model<T>& model, const TrainConfig& config, const Tensor<T>& images,
                           std::span<const std::size_t> labels, Rng& selection_rng);

using Logger = std::function<void(const std::string&)>;

// One pass of ceil(N_train / (P K)) batches; test_oa is left at 0.
template <typename T>
EpochMetrics train_epoch(TrainState<T>& state, const Dataset& train, const Logger& log = {});

}  // namespace pcnet
