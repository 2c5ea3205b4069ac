#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "pcnet/data.hpp"
#include "pcnet/model.hpp"

namespace pcnet {

struct EvalReport {
  double overall_accuracy = 0;
  std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
  std::vector<double> per_class_accuracy;           // NaN for a class absent from the test set
  std::vector<std::size_t> predictions;

  std::size_t total() const;
  // Header "true\\pred,<class...>", one row per true class.
  std::string confusion_csv(const std::vector<std::string>& class_names) const;
  std::string summary() const;
};

// Scores one standardized image through the deployment path: backbone, GAP,
// classifier, softmax (ECA only when model.config.eval_eca is set).
template <typename T>
Tensor<T> score_image(const Model<T>& model, const Image& image);

// Argmax of score_image per item, ties to the lowest class index.
template <typename T>
EvalReport evaluate(const Model<T>& model, const Dataset& test);

struct EquivalenceResult {
  bool equal = true;
  std::string report;
};

// Compares score_image against the plain backbone+classifier path on the
// first `probe` items, bit for bit.
template <typename T>
EquivalenceResult inference_equivalence_check(const Model<T>& model, const Dataset& probe_set,
                                              std::size_t probe = 16);

// Normalized spatial response maps [h*w] in [0,1]:
//   self1/self2: per-position L2 norm over channels of a_c * f_c (a = ECA weights)
//   pair: the same over the attended concatenation f_cat
struct AttentionMaps {
  std::size_t height = 0, width = 0;
  std::vector<double> self1, self2, pair;
};

template <typename T>
AttentionMaps attention_maps(const Model<T>& model, const Image& image1, const Image& image2);

// Writes self1/self2/pair as grayscale PNG and CSV (rows = feature-map rows).
void write_attention_maps(const AttentionMaps& maps, const std::filesystem::path& out_dir);

}  // namespace pcnet
