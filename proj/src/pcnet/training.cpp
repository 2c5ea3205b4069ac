#include "pcnet/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <numbers>
#include <sstream>

#include "pcnet/errors.hpp"
#include "pcnet/ops.hpp"
#include "pcnet/pairing.hpp"

namespace pcnet {

double cosine_lr(std::size_t t, std::size_t total, double lr0, double lr_min) {
  if (total < 1) throw UsageError("cosine_lr: total epochs must be >= 1");
  if (t > total) {
    throw UsageError("cosine_lr: epoch index " + std::to_string(t) + " exceeds total " + std::to_string(total));
  }
  return lr_min + 0.5 * (lr0 - lr_min) * (1.0 + std::cos(std::numbers::pi * static_cast<double>(t) / total));
}

template <typename T>
void sgd_step(std::span<T> param, std::span<const T> grad, std::span<T> velocity, double lr, double momentum,
              double weight_decay) {
  if (grad.size() != param.size() || velocity.size() != param.size()) {
    throw DimensionError("sgd_step: param/grad/velocity sizes " + std::to_string(param.size()) + "/" +
                         std::to_string(grad.size()) + "/" + std::to_string(velocity.size()));
  }
  const T lr_t = static_cast<T>(lr), mu = static_cast<T>(momentum), wd = static_cast<T>(weight_decay);
  for (std::size_t i = 0; i < param.size(); ++i) {
    const T g = grad[i] + wd * param[i];
    velocity[i] = mu * velocity[i] + g;
    param[i] -= lr_t * velocity[i];
  }
}

std::string metrics_csv_row(const EpochMetrics& m) {
  char line[512];
  std::snprintf(line, sizeof line, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", m.epoch, m.lr, m.lc,
                m.lr_loss, m.loss, m.train_acc, m.test_oa, m.lc_sum, m.lr_sum);
  return line;
}

std::string metrics_csv(const std::vector<EpochMetrics>& history) {
  std::string out = "epoch,lr,L_c,L_r,L,train_acc,test_OA,L_c_sum,L_r_sum\n";
  for (const auto& m : history) out += metrics_csv_row(m);
  return out;
}

EpochMetrics parse_metrics_row(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (cells.size() != 9) throw IoError("metrics row has " + std::to_string(cells.size()) + " fields: '" + line + "'");
  auto num = [&](std::size_t i) {
    char* end = nullptr;
    const double v = std::strtod(cells[i].c_str(), &end);
    if (end == cells[i].c_str()) throw IoError("metrics row: bad number '" + cells[i] + "'");
    return v;
  };
  EpochMetrics m;
  m.epoch = static_cast<std::size_t>(num(0));
  m.lr = num(1);
  m.lc = num(2);
  m.lr_loss = num(3);
  m.loss = num(4);
  m.train_acc = num(5);
  m.test_oa = num(6);
  m.lc_sum = num(7);
  m.lr_sum = num(8);
  return m;
}

PreparedData prepare_data(const TrainConfig& config) {
  config.validate();
  const Dataset raw = config.dataset == "synth"
                          ? generate_synthetic(config.synth_classes, config.synth_per_class, config.input_size,
                                               config.input_size, config.seed)
                          : load_folder_dataset(config.dataset, config.input_size, config.input_size);
  if (raw.num_classes() < 2) throw ConfigError("dataset: need at least 2 classes, found " + std::to_string(raw.num_classes()));
  PreparedData out;
  out.fingerprint = dataset_fingerprint(raw);
  std::tie(out.train, out.test) = split(raw, config.train_fraction, config.seed);
  out.stats = compute_channel_stats(out.train);
  standardize(out.train, out.stats);
  standardize(out.test, out.stats);
  return out;
}

TrainConfig resolve_config(const TrainConfig& config, const PreparedData& data, std::string* note) {
  TrainConfig out = config;
  const std::size_t n = data.train.num_classes();
  if (out.classes_per_batch > n) {
    if (note) {
      *note = "classes_per_batch " + std::to_string(out.classes_per_batch) + " exceeds the " + std::to_string(n) +
              " classes of the dataset; using " + std::to_string(n);
    }
    out.classes_per_batch = n;
  }
  return out;
}

template <typename T>
Tensor<T> images_to_tensor(const std::vector<const Image*>& images) {
  if (images.empty()) throw UsageError("images_to_tensor: no images");
  const Image& first = *images.front();
  Tensor<T> x(Shape{images.size(), first.channels, first.height, first.width});
  const std::size_t block = first.pixels.size();
  auto dst = x.data();
  for (std::size_t b = 0; b < images.size(); ++b) {
    if (images[b]->pixels.size() != block) throw DimensionError("images_to_tensor: images differ in size");
    std::transform(images[b]->pixels.begin(), images[b]->pixels.end(), dst.begin() + b * block,
                   [](float v) { return static_cast<T>(v); });
  }
  return x;
}

template <typename T>
TrainState<T> TrainState<T>::create(const TrainConfig& config, const std::vector<std::string>& class_names) {
  TrainState s;
  s.config = config;
  s.class_names = class_names;
  s.rng = RngStreams(config.seed);
  s.model = Model<T>::create(config.model_config(class_names.size()), s.rng.stream("init"));
  for (const auto& [name, p] : s.model.parameters()) s.velocity.push_back(Tensor<T>::zeros(p.shape()));
  return s;
}

template <typename T>
BatchOutcome<T> batch_loss(const Model<T>& model, const TrainConfig& config, const Tensor<T>& images,
                           std::span<const std::size_t> labels, Rng& selection_rng) {
  const std::size_t batch = labels.size();
  BatchOutcome<T> out;
  out.anchors = batch;
  Tensor<T> f = model.backbone.forward(images);

  auto count_correct = [&](const Tensor<T>& q) {
    const std::size_t n = q.dim(1);
    for (std::size_t b = 0; b < batch; ++b)
      if (argmax_lowest<T>(q.data().subspan(b * n, n)) == labels[b]) ++out.correct;
  };

  if (config.architecture == Architecture::kSingle) {
    Tensor<T> q = classify(model.classifier, self_representation(model, f));
    Tensor<T> lc_sum = sum(cross_entropy(q, labels));
    Tensor<T> lc = scale(lc_sum, T(1) / static_cast<T>(batch));
    out.loss = total_loss(lc, Tensor<T>::scalar(T(0)), T(0), static_cast<T>(config.epsilon));
    out.lc_sum = lc_sum.item();
    count_correct(q);
    return out;
  }

  Tensor<T> pooled;
  {
    NoGradScope<T> no_grad;
    pooled = global_average_pool(f);
  }
  const PairAssignment pairs = select_pairs(pooled, labels, config.metric, config.strategy, selection_rng);
  std::vector<std::size_t> first, second, l1, l2;
  auto emit = [&](const std::vector<std::size_t>& partner) {
    for (std::size_t a = 0; a < batch; ++a) {
      first.push_back(a);
      second.push_back(partner[a]);
      l1.push_back(labels[a]);
      l2.push_back(labels[partner[a]]);
    }
  };
  if (config.pair_mode == PairMode::kBoth) emit(pairs.intra_partner);
  emit(pairs.inter_partner);

  const RepresentationSet<T> reps = pair_representations(model, gather_rows(f, first), gather_rows(f, second));
  const LossTerms<T> lc = classification_loss(reps, l1, l2, config.representation);
  LossTerms<T> lr{Tensor<T>::scalar(T(0)), Tensor<T>::scalar(T(0))};
  if (config.representation == Representation::kBoth) lr = ranking_loss(reps, l1, l2, static_cast<T>(config.epsilon));
  const T lambda = config.objective == Objective::kLcLr ? static_cast<T>(config.lambda) : T(0);
  out.loss = total_loss(lc.mean, lr.mean, lambda, static_cast<T>(config.epsilon));
  out.lc_sum = lc.sum.item();
  out.lr_sum = lr.sum.item();
  // Rows 0..B-1 carry every anchor as the first image.
  count_correct(reps.q_self1);
  return out;
}

template <typename T>
EpochMetrics train_epoch(TrainState<T>& state, const Dataset& train, const Logger& log) {
  const TrainConfig& cfg = state.config;
  if (state.epoch >= cfg.epochs) throw UsageError("train_epoch: all " + std::to_string(cfg.epochs) + " epochs done");
  EpochMetrics m;
  m.epoch = state.epoch + 1;
  m.lr = cosine_lr(state.epoch, cfg.epochs, cfg.lr0, cfg.lr_min);

  const BatchSpec spec{cfg.classes_per_batch, cfg.images_per_class, cfg.seed};
  const std::size_t per_batch = spec.classes_per_batch * spec.images_per_class;
  const std::size_t steps = (train.size() + per_batch - 1) / per_batch;
  const AugmentationPolicy policy{cfg.rotate_max_deg, cfg.hflip, cfg.vflip, cfg.fixed_rotation};
  Rng& sampler = state.rng.stream("sampler");
  Rng& augment_rng = state.rng.stream("augment");
  Rng& selection = state.rng.stream("selection");
  const auto params = state.model.parameters();

  std::size_t correct = 0, seen = 0;
  bool warned = false;
  for (std::size_t step = 0; step < steps; ++step) {
    const BatchSample batch = sample_batch(train.labels, spec, sampler);
    if (!batch.short_classes.empty() && !warned && log) {
      warned = true;
      log("warning: " + std::to_string(batch.short_classes.size()) + " class(es) have fewer than " +
          std::to_string(spec.images_per_class) + " images and are sampled with replacement");
    }
    std::vector<Image> augmented;
    augmented.reserve(batch.indices.size());
    for (std::size_t idx : batch.indices) augmented.push_back(augment(train.images[idx], policy, augment_rng));
    std::vector<const Image*> ptrs;
    for (const Image& img : augmented) ptrs.push_back(&img);
    const Tensor<T> x = images_to_tensor<T>(ptrs);

    for (const auto& [name, p] : params) p.clear_grad();
    Tape<T> tape;
    BatchOutcome<T> outcome;
    {
      TapeScope<T> scope(&tape);
      outcome = batch_loss(state.model, cfg, x, batch.labels, selection);
    }
    if (!std::isfinite(static_cast<double>(outcome.loss.value))) {
      throw NumericError("non-finite loss at epoch " + std::to_string(m.epoch) + ", batch " +
                         std::to_string(step + 1) + " (seed " + std::to_string(cfg.seed) + ")");
    }
    tape.backward(outcome.loss.total);
    for (std::size_t i = 0; i < params.size(); ++i) {
      const Tensor<T>& p = params[i].second;
      if (!p.has_grad() || p.numel() == 0) continue;
      Tensor<T> param = p;
      sgd_step<T>(param.data(), p.grad(), state.velocity[i].data(), m.lr, cfg.momentum, cfg.weight_decay);
    }
    tape.clear();

    m.lc += outcome.loss.classification;
    m.lr_loss += outcome.loss.ranking;
    m.loss += outcome.loss.value;
    m.lc_sum += outcome.lc_sum;
    m.lr_sum += outcome.lr_sum;
    correct += outcome.correct;
    seen += outcome.anchors;
  }
  const double n = static_cast<double>(steps);
  m.lc /= n;
  m.lr_loss /= n;
  m.loss /= n;
  m.lc_sum /= n;
  m.lr_sum /= n;
  m.train_acc = seen ? static_cast<double>(correct) / seen : 0.0;
  ++state.epoch;
  return m;
}

#define PCNET_INSTANTIATE(T)                                                                                    \
  template void sgd_step<T>(std::span<T>, std::span<const T>, std::span<T>, double, double, double);           \
  template Tensor<T> images_to_tensor<T>(const std::vector<const Image*>&);                                    \
  template struct TrainState<T>;                                                                               \
  template BatchOutcome<T> batch_loss(const Model<T>&, const TrainConfig&, const Tensor<T>&,                   \
                                      std::span<const std::size_t>, Rng&);                                     \
  template EpochMetrics train_epoch(TrainState<T>&, const Dataset&, const Logger&);

PCNET_INSTANTIATE(float)
PCNET_INSTANTIATE(double)
#undef PCNET_INSTANTIATE

}  // namespace pcnet
