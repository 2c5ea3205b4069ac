#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include <unistd.h>

#include "pcnet/evaluation.hpp"
#include "pcnet/image_io.hpp"
#include "pcnet/training.hpp"

using namespace pcnet;
namespace fs = std::filesystem;

namespace {

TrainConfig tiny() {
  TrainConfig c;
  c.synth_classes = 4;
  c.synth_per_class = 9;
  c.input_size = 16;
  c.widths = {4, 8};
  c.eca_k = 3;
  c.classes_per_batch = 4;
  c.images_per_class = 2;
  c.seed = 5;
  return c;
}

template <typename T>
Model<T> fresh_model(const TrainConfig& c) {
  Rng rng(c.seed);
  return Model<T>::create(c.model_config(c.synth_classes), rng);
}

}  // namespace

TEST(Evaluate, ConfusionSumsAndAccuracyArithmetic) {
  const TrainConfig c = tiny();
  const PreparedData d = prepare_data(c);
  const auto model = fresh_model<double>(c);
  const EvalReport r = evaluate(model, d.test);
  ASSERT_EQ(r.confusion.size(), 4u);
  std::size_t total = 0, diag = 0;
  for (std::size_t t = 0; t < 4; ++t) {
    const std::size_t row = std::accumulate(r.confusion[t].begin(), r.confusion[t].end(), std::size_t{0});
    EXPECT_EQ(row, static_cast<std::size_t>(std::count(d.test.labels.begin(), d.test.labels.end(), t)));
    total += row;
    diag += r.confusion[t][t];
  }
  EXPECT_EQ(total, d.test.size());
  EXPECT_EQ(r.total(), d.test.size());
  EXPECT_EQ(r.overall_accuracy, static_cast<double>(diag) / static_cast<double>(total));
  EXPECT_EQ(r.predictions.size(), d.test.size());
}

TEST(Evaluate, ZeroWeightModelPredictsClassZero) {
  const TrainConfig c = tiny();
  const PreparedData d = prepare_data(c);
  auto model = fresh_model<float>(c);
  for (auto& v : model.classifier.weight.data()) v = 0;
  for (auto& v : model.classifier.bias.data()) v = 0;
  const EvalReport r = evaluate(model, d.test);
  const double freq0 = static_cast<double>(std::count(d.test.labels.begin(), d.test.labels.end(), 0u)) /
                       static_cast<double>(d.test.size());
  EXPECT_EQ(r.overall_accuracy, freq0);
  for (std::size_t p : r.predictions) EXPECT_EQ(p, 0u);
}

TEST(Evaluate, PermutationInvariant) {
  const TrainConfig c = tiny();
  const PreparedData d = prepare_data(c);
  const auto model = fresh_model<double>(c);
  Dataset shuffled = d.test;
  std::reverse(shuffled.images.begin(), shuffled.images.end());
  std::reverse(shuffled.labels.begin(), shuffled.labels.end());
  std::reverse(shuffled.sources.begin(), shuffled.sources.end());
  const EvalReport a = evaluate(model, d.test), b = evaluate(model, shuffled);
  EXPECT_EQ(a.overall_accuracy, b.overall_accuracy);
  EXPECT_EQ(a.confusion, b.confusion);
}

TEST(Evaluate, ConfusionCsvShape) {
  EvalReport r;
  r.confusion = {{2, 1}, {0, 3}};
  r.overall_accuracy = 5.0 / 6.0;
  const std::string csv = r.confusion_csv({"x", "y"});
  EXPECT_EQ(csv, "true\\pred,x,y\nx,2,1\ny,0,3\n");
  EXPECT_NE(r.summary().find("5/6"), std::string::npos);
}

TEST(Equivalence, HoldsForFreshAndTrainedModels) {
  const TrainConfig c = tiny();
  const PreparedData d = prepare_data(c);
  auto state = TrainState<float>::create(c, d.train.class_names);
  EXPECT_TRUE(inference_equivalence_check(state.model, d.test).equal);
  train_epoch(state, d.train);
  train_epoch(state, d.train);
  const auto r = inference_equivalence_check(state.model, d.test);
  EXPECT_TRUE(r.equal) << r.report;
}

TEST(Equivalence, EvalTimeEcaIsReported) {
  TrainConfig c = tiny();
  c.eval_eca = true;
  auto model = fresh_model<double>(c);
  model.eca.kernel[1] = 0.7;
  const PreparedData d = prepare_data(c);
  const auto r = inference_equivalence_check(model, d.test);
  EXPECT_FALSE(r.equal);
  EXPECT_NE(r.report.find("eval-time ECA"), std::string::npos);
}

TEST(AttentionMaps, ExtentsRangeAndFiles) {
  const TrainConfig c = tiny();
  const PreparedData d = prepare_data(c);
  const auto model = fresh_model<double>(c);
  const AttentionMaps m = attention_maps(model, d.test.images[0], d.test.images[1]);
  EXPECT_EQ(m.height, 4u);
  EXPECT_EQ(m.width, 4u);
  for (const auto* map : {&m.self1, &m.self2, &m.pair}) {
    ASSERT_EQ(map->size(), 16u);
    for (double v : *map) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }

  const fs::path dir = fs::temp_directory_path() / ("pcnet_maps_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  write_attention_maps(m, dir);
  for (const char* name : {"self1", "self2", "pair"}) {
    const Image png = read_image(dir / (std::string(name) + ".png"));
    EXPECT_EQ(png.height, 4u);
    EXPECT_EQ(png.width, 4u);
    std::ifstream csv(dir / (std::string(name) + ".csv"));
    std::vector<double> values;
    std::string line;
    while (std::getline(csv, line)) {
      std::size_t pos = 0;
      while (pos <= line.size()) {
        const std::size_t comma = std::min(line.find(',', pos), line.size());
        values.push_back(std::stod(line.substr(pos, comma - pos)));
        pos = comma + 1;
      }
    }
    ASSERT_EQ(values.size(), 16u);
    for (std::size_t i = 0; i < 16; ++i) EXPECT_NEAR(png.pixels[i], values[i], 0.5 / 255.0 + 1e-6);
  }
  fs::remove_all(dir);
}

TEST(AttentionMaps, ZeroFeaturesGiveZeroMaps) {
  const TrainConfig c = tiny();
  auto model = fresh_model<double>(c);
  for (auto& [name, p] : model.backbone.parameters())
    for (auto& v : p.data()) v = 0;
  Image img(3, 16, 16);
  const AttentionMaps m = attention_maps(model, img, img);
  for (double v : m.self1) EXPECT_EQ(v, 0.0);
  for (double v : m.pair) EXPECT_EQ(v, 0.0);
}
