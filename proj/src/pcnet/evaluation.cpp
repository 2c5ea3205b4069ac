#include "pcnet/evaluation.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>

#include "pcnet/errors.hpp"
#include "pcnet/ops.hpp"
#include "pcnet/training.hpp"

namespace pcnet {

std::size_t EvalReport::total() const {
  std::size_t n = 0;
  for (const auto& row : confusion)
    for (std::size_t v : row) n += v;
  return n;
}

std::string EvalReport::confusion_csv(const std::vector<std::string>& class_names) const {
  std::string out = "true\\pred";
  for (std::size_t c = 0; c < confusion.size(); ++c) out += "," + (c < class_names.size() ? class_names[c] : std::to_string(c));
  out += "\n";
  for (std::size_t r = 0; r < confusion.size(); ++r) {
    out += r < class_names.size() ? class_names[r] : std::to_string(r);
    for (std::size_t v : confusion[r]) out += "," + std::to_string(v);
    out += "\n";
  }
  return out;
}

std::string EvalReport::summary() const {
  std::size_t correct = 0;
  for (std::size_t c = 0; c < confusion.size(); ++c) correct += confusion[c][c];
  char line[160];
  std::snprintf(line, sizeof line, "OA %.6f (%zu/%zu correct, %zu classes)", overall_accuracy, correct, total(),
                confusion.size());
  return line;
}

template <typename T>
Tensor<T> score_image(const Model<T>& model, const Image& image) {
  NoGradScope<T> no_grad;
  const Tensor<T> x = images_to_tensor<T>({&image});
  return single_branch_forward(model.backbone, model.classifier, x, model.config.eval_eca ? &model.eca : nullptr);
}

template <typename T>
EvalReport evaluate(const Model<T>& model, const Dataset& test) {
  if (test.size() == 0) throw UsageError("evaluate: empty test set");
  const std::size_t n = model.classifier.num_classes();
  EvalReport r;
  r.confusion.assign(n, std::vector<std::size_t>(n, 0));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    if (test.labels[i] >= n) {
      throw ConfigError("evaluate: test label " + std::to_string(test.labels[i]) + " outside the model's " +
                        std::to_string(n) + " classes");
    }
    const Tensor<T> q = score_image(model, test.images[i]);
    const std::size_t pred = argmax_lowest<T>(q.data());
    r.predictions.push_back(pred);
    ++r.confusion[test.labels[i]][pred];
    if (pred == test.labels[i]) ++correct;
  }
  r.overall_accuracy = static_cast<double>(correct) / static_cast<double>(test.size());
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t row = 0;
    for (std::size_t v : r.confusion[c]) row += v;
    r.per_class_accuracy.push_back(row ? static_cast<double>(r.confusion[c][c]) / row
                                       : std::numeric_limits<double>::quiet_NaN());
  }
  return r;
}

template <typename T>
EquivalenceResult inference_equivalence_check(const Model<T>& model, const Dataset& probe_set, std::size_t probe) {
  EquivalenceResult out;
  const std::size_t count = std::min(probe, probe_set.size());
  for (std::size_t i = 0; i < count; ++i) {
    const Tensor<T> deployed = score_image(model, probe_set.images[i]);
    Tensor<T> baseline;
    {
      NoGradScope<T> no_grad;
      baseline = single_branch_forward(model.backbone, model.classifier, images_to_tensor<T>({&probe_set.images[i]}));
    }
    if (deployed.numel() != baseline.numel() ||
        std::memcmp(deployed.data().data(), baseline.data().data(), baseline.numel() * sizeof(T)) != 0) {
      out.equal = false;
      std::size_t k = 0;
      while (k < baseline.numel() && deployed[k] == baseline[k]) ++k;
      char line[256];
      std::snprintf(line, sizeof line, "probe item %zu diverges at class %zu: deployed %.17g vs baseline %.17g%s", i,
                    k, static_cast<double>(deployed[k]), static_cast<double>(baseline[k]),
                    model.config.eval_eca ? " (eval-time ECA is enabled)" : "");
      out.report = line;
      return out;
    }
  }
  out.report = "bitwise identical on " + std::to_string(count) + " probe items";
  return out;
}

namespace {

template <typename T>
std::vector<double> channel_norm_map(const Tensor<T>& f, const Tensor<T>& weights) {
  const std::size_t c = f.dim(1), hw = f.dim(2) * f.dim(3);
  std::vector<double> map(hw, 0.0);
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double a = weights[ch];
    for (std::size_t p = 0; p < hw; ++p) {
      const double v = a * static_cast<double>(f[ch * hw + p]);
      map[p] += v * v;
    }
  }
  double peak = 0;
  for (double& v : map) peak = std::max(peak, v = std::sqrt(v));
  for (double& v : map) v = peak > 0 ? v / peak : 0.0;
  return map;
}

}  // namespace

template <typename T>
AttentionMaps attention_maps(const Model<T>& model, const Image& image1, const Image& image2) {
  NoGradScope<T> no_grad;
  const Tensor<T> f1 = model.backbone.forward(images_to_tensor<T>({&image1}));
  const Tensor<T> f2 = model.backbone.forward(images_to_tensor<T>({&image2}));
  AttentionMaps maps;
  maps.height = f1.dim(2);
  maps.width = f1.dim(3);
  auto self_weights = [&](const Tensor<T>& f) {
    return model.config.self_attention ? eca_weights(model.eca, f) : Tensor<T>::full(Shape{1, f.dim(1)}, T(1));
  };
  maps.self1 = channel_norm_map(f1, self_weights(f1));
  maps.self2 = channel_norm_map(f2, self_weights(f2));
  const Tensor<T> cat = mutual_features(model.mutual, f1, f2);
  maps.pair = channel_norm_map(cat, Tensor<T>::full(Shape{1, cat.dim(1)}, T(1)));
  return maps;
}

void write_attention_maps(const AttentionMaps& maps, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  auto write = [&](const std::string& name, const std::vector<double>& map) {
    Image img(1, maps.height, maps.width);
    for (std::size_t i = 0; i < map.size(); ++i) img.pixels[i] = static_cast<float>(map[i]);
    write_png(out_dir / (name + ".png"), img);
    const auto csv_path = out_dir / (name + ".csv");
    std::ofstream csv(csv_path);
    if (!csv) throw IoError("cannot write '" + csv_path.string() + "'");
    char cell[40];
    for (std::size_t y = 0; y < maps.height; ++y) {
      for (std::size_t x = 0; x < maps.width; ++x) {
        std::snprintf(cell, sizeof cell, "%s%.17g", x ? "," : "", map[y * maps.width + x]);
        csv << cell;
      }
      csv << '\n';
    }
    if (!csv) throw IoError("write failed for '" + csv_path.string() + "'");
  };
  write("self1", maps.self1);
  write("self2", maps.self2);
  write("pair", maps.pair);
}

#define PCNET_INSTANTIATE(T)                                                                            \
  template Tensor<T> score_image(const Model<T>&, const Image&);                                       \
  template EvalReport evaluate(const Model<T>&, const Dataset&);                                       \
  template EquivalenceResult inference_equivalence_check(const Model<T>&, const Dataset&, std::size_t); \
  template AttentionMaps attention_maps(const Model<T>&, const Image&, const Image&);

PCNET_INSTANTIATE(float)
PCNET_INSTANTIATE(double)
#undef PCNET_INSTANTIATE

}  // namespace pcnet
