#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pcnet/attention.hpp"
#include "pcnet/rng.hpp"
#include "pcnet/tensor.hpp"

namespace pcnet {

template <typename T>
using NamedTensor = std::pair<std::string, Tensor<T>>;

struct BackboneConfig {
  std::size_t in_channels = 3;
  std::vector<std::size_t> widths{16, 32, 64};
  std::size_t input_height = 64;
  std::size_t input_width = 64;
};

// Residual micro-backbone. Each stage is
//   h = relu(conv3x3_stride2(x) + b_down)
//   y = h + relu(conv3x3(h) + b_body)
// so every stage halves the spatial extent (rounding up).
template <typename T>
class Backbone {
 public:
  struct Stage {
    Tensor<T> down_weight, down_bias, body_weight, body_bias;
  };

  static Backbone create(const BackboneConfig& config, Rng& rng);

  // images [B, in_channels, input_height, input_width] -> f [B, C, h, w]
  Tensor<T> forward(const Tensor<T>& images) const;

  const BackboneConfig& config() const { return config_; }
  std::size_t out_channels() const { return config_.widths.back(); }
  std::pair<std::size_t, std::size_t> output_extent() const;
  std::vector<NamedTensor<T>> parameters() const;
  std::vector<Stage>& stages() { return stages_; }

 private:
  BackboneConfig config_;
  std::vector<Stage> stages_;
};

// One FC layer shared by the inference path and all four pair heads.
template <typename T>
struct Classifier {
  Tensor<T> weight;  // [N, C]
  Tensor<T> bias;    // [N]

  static Classifier create(std::size_t num_classes, std::size_t channels, Rng& rng);
  std::size_t num_classes() const { return weight.dim(0); }
};

struct ModelConfig {
  BackboneConfig backbone;
  std::size_t num_classes = 8;
  std::size_t eca_k = 5;
  MutualAttention mutual_attention = MutualAttention::kEca;
  bool self_attention = true;  // false: self representation is plain GAP
  bool eval_eca = false;       // ablation only: route inference through ECA
};

template <typename T>
struct Model {
  ModelConfig config;
  Backbone<T> backbone;
  Classifier<T> classifier;
  EcaModule<T> eca;
  MutualHead<T> mutual;

  // Draws backbone, classifier, ECA and mutual-head parameters from `rng`
  // in that fixed order regardless of which parts a run uses.
  static Model create(const ModelConfig& config, Rng& rng);
  std::vector<NamedTensor<T>> parameters() const;
};

template <typename T>
struct RepresentationSet {
  Tensor<T> self1, self2, mut1, mut2;          // [M, C]
  Tensor<T> q_self1, q_self2, q_mut1, q_mut2;  // [M, N]
  Tensor<T> cue;                               // a_mut [M, C]
};

enum class Representation { kSelf, kMutual, kBoth };

template <typename T>
struct LossTerms {
  Tensor<T> sum;   // raw sum over pairs
  Tensor<T> mean;  // per-pair mean (optimized)
};

template <typename T>
struct LossBundle {
  Tensor<T> total;  // tape-connected L
  T classification = 0;
  T ranking = 0;
  T value = 0;
  T lambda = 0;
  T epsilon = 0;
};

// softmax(W * pooled + b) for pooled [B, C] or [C].
template <typename T>
Tensor<T> classify(const Classifier<T>& cl, const Tensor<T>& pooled);

// Test-time path: softmax(affine(GAP(backbone(image)))) for a single
// [1,3,H,W] image, returning q [N]. No attention unless `eca` is given.
template <typename T>
Tensor<T> single_branch_forward(const Backbone<T>& bk, const Classifier<T>& cl, const Tensor<T>& image,
                                const EcaModule<T>* eca = nullptr);

// Batched inference scores [B, N]; honours config.eval_eca.
template <typename T>
Tensor<T> predict_scores(const Model<T>& model, const Tensor<T>& images);

// Self representation GAP(ECA(f)), or GAP(f) when self attention is off.
template <typename T>
Tensor<T> self_representation(const Model<T>& model, const Tensor<T>& f);

// Four representations and scores for M pairs of backbone feature maps.
template <typename T>
RepresentationSet<T> pair_representations(const Model<T>& model, const Tensor<T>& f1, const Tensor<T>& f2);

template <typename T>
RepresentationSet<T> pair_forward(const Model<T>& model, const Tensor<T>& image1, const Tensor<T>& image2);

// -log(max(q[label], 1e-12)) for q [N] (scalar) or q [B, N] with one label per row ([B]).
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& q, std::span<const std::size_t> labels);

template <typename T>
LossTerms<T> classification_loss(const RepresentationSet<T>& reps, std::span<const std::size_t> labels1,
                                 std::span<const std::size_t> labels2,
                                 Representation heads = Representation::kBoth);

// sum_n max(0, q_n^mut(c_n) - q_n^self(c_n) + epsilon)
template <typename T>
LossTerms<T> ranking_loss(const RepresentationSet<T>& reps, std::span<const std::size_t> labels1,
                          std::span<const std::size_t> labels2, T epsilon);

template <typename T>
LossBundle<T> total_loss(const Tensor<T>& classification, const Tensor<T>& ranking, T lambda,
                         T epsilon = T(0));

template <typename T>
std::size_t count_parameters(const Backbone<T>& bk, const Classifier<T>& cl, const EcaModule<T>& eca,
                             const MutualHead<T>& mh);

// Index of the largest score; ties go to the lowest index.
template <typename T>
std::size_t argmax_lowest(std::span<const T> scores) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i)
    if (scores[i] > scores[best]) best = i;
  return best;
}

}  // namespace pcnet
