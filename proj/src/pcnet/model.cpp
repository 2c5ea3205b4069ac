#include "pcnet/model.hpp"

#include <cmath>
#include <string>

#include "pcnet/errors.hpp"
#include "pcnet/init.hpp"
#include "pcnet/ops.hpp"

namespace pcnet {

namespace {

template <typename T>
Tensor<T> conv_weight(std::size_t out, std::size_t in, Rng& rng) {
  Tensor<T> w(Shape{out, in, 3, 3}, true);
  // He-uniform for relu units.
  fill_uniform(w, std::sqrt(6.0 / static_cast<double>(in * 9)), rng);
  return w;
}

}  // namespace

template <typename T>
Backbone<T> Backbone<T>::create(const BackboneConfig& config, Rng& rng) {
  if (config.widths.empty()) throw ConfigError("backbone: at least one stage width is required");
  if (config.input_height == 0 || config.input_width == 0) throw ConfigError("backbone: empty input size");
  Backbone bk;
  bk.config_ = config;
  std::size_t in = config.in_channels;
  for (std::size_t width : config.widths) {
    if (width == 0) throw ConfigError("backbone: stage width must be positive");
    Stage s;
    s.down_weight = conv_weight<T>(width, in, rng);
    s.down_bias = Tensor<T>(Shape{width}, true);
    s.body_weight = conv_weight<T>(width, width, rng);
    s.body_bias = Tensor<T>(Shape{width}, true);
    bk.stages_.push_back(std::move(s));
    in = width;
  }
  return bk;
}

template <typename T>
Tensor<T> Backbone<T>::forward(const Tensor<T>& images) const {
  if (images.rank() != 4 || images.dim(1) != config_.in_channels || images.dim(2) != config_.input_height ||
      images.dim(3) != config_.input_width) {
    throw DimensionError("backbone: expected images [B," + std::to_string(config_.in_channels) + "," +
                         std::to_string(config_.input_height) + "," + std::to_string(config_.input_width) +
                         "], got " + shape_to_string(images.shape()));
  }
  Tensor<T> x = images;
  for (const Stage& s : stages_) {
    Tensor<T> h = relu(add_channel_bias(conv2d(x, s.down_weight, 2, 1), s.down_bias));
    x = add(h, relu(add_channel_bias(conv2d(h, s.body_weight, 1, 1), s.body_bias)));
  }
  return x;
}

template <typename T>
std::pair<std::size_t, std::size_t> Backbone<T>::output_extent() const {
  std::size_t h = config_.input_height, w = config_.input_width;
  for (std::size_t i = 0; i < stages_.size(); ++i) {
    h = (h + 2 - 3) / 2 + 1;
    w = (w + 2 - 3) / 2 + 1;
  }
  return {h, w};
}

template <typename T>
std::vector<NamedTensor<T>> Backbone<T>::parameters() const {
  std::vector<NamedTensor<T>> out;
  for (std::size_t i = 0; i < stages_.size(); ++i) {
    const std::string p = "backbone.stage" + std::to_string(i) + ".";
    out.emplace_back(p + "down.weight", stages_[i].down_weight);
    out.emplace_back(p + "down.bias", stages_[i].down_bias);
    out.emplace_back(p + "body.weight", stages_[i].body_weight);
    out.emplace_back(p + "body.bias", stages_[i].body_bias);
  }
  return out;
}

template <typename T>
Classifier<T> Classifier<T>::create(std::size_t num_classes, std::size_t channels, Rng& rng) {
  if (num_classes < 2) throw ConfigError("classifier: need at least 2 classes");
  Classifier cl;
  cl.weight = Tensor<T>(Shape{num_classes, channels}, true);
  fill_uniform(cl.weight, 1.0 / std::sqrt(static_cast<double>(channels)), rng);
  cl.bias = Tensor<T>(Shape{num_classes}, true);
  return cl;
}

template <typename T>
Model<T> Model<T>::create(const ModelConfig& config, Rng& rng) {
  Model m;
  m.config = config;
  m.backbone = Backbone<T>::create(config.backbone, rng);
  const std::size_t c = m.backbone.out_channels();
  m.classifier = Classifier<T>::create(config.num_classes, c, rng);
  m.eca = EcaModule<T>::create(c, config.eca_k, rng);
  m.mutual = MutualHead<T>::create(c, config.eca_k, config.mutual_attention, rng);
  return m;
}

template <typename T>
std::vector<NamedTensor<T>> Model<T>::parameters() const {
  auto out = backbone.parameters();
  out.emplace_back("classifier.weight", classifier.weight);
  out.emplace_back("classifier.bias", classifier.bias);
  out.emplace_back("eca.kernel", eca.kernel);
  out.emplace_back("mutual.eca.kernel", mutual.eca2c.kernel);
  out.emplace_back("mutual.reduce.weight", mutual.reduce_weight);
  out.emplace_back("mutual.reduce.bias", mutual.reduce_bias);
  return out;
}

template <typename T>
Tensor<T> classify(const Classifier<T>& cl, const Tensor<T>& pooled) {
  return softmax(affine(pooled, cl.weight, cl.bias));
}

template <typename T>
Tensor<T> single_branch_forward(const Backbone<T>& bk, const Classifier<T>& cl, const Tensor<T>& image,
                                const EcaModule<T>* eca) {
  if (image.rank() != 4 || image.dim(0) != 1) {
    throw DimensionError("single_branch_forward: expected one image [1,C,H,W], got " +
                         shape_to_string(image.shape()));
  }
  Tensor<T> f = bk.forward(image);
  if (eca != nullptr) f = eca_apply(*eca, f);
  Tensor<T> q = classify(cl, global_average_pool(f));
  return reshape(q, Shape{cl.num_classes()});
}

template <typename T>
Tensor<T> predict_scores(const Model<T>& model, const Tensor<T>& images) {
  Tensor<T> f = model.backbone.forward(images);
  if (model.config.eval_eca) f = eca_apply(model.eca, f);
  return classify(model.classifier, global_average_pool(f));
}

template <typename T>
Tensor<T> self_representation(const Model<T>& model, const Tensor<T>& f) {
  return global_average_pool(model.config.self_attention ? eca_apply(model.eca, f) : f);
}

template <typename T>
RepresentationSet<T> pair_representations(const Model<T>& model, const Tensor<T>& f1, const Tensor<T>& f2) {
  RepresentationSet<T> r;
  r.self1 = self_representation(model, f1);
  r.self2 = self_representation(model, f2);
  r.cue = mutual_cue(model.mutual, f1, f2);
  std::tie(r.mut1, r.mut2) = mutual_representations(r.cue, global_average_pool(f1), global_average_pool(f2));
  r.q_self1 = classify(model.classifier, r.self1);
  r.q_self2 = classify(model.classifier, r.self2);
  r.q_mut1 = classify(model.classifier, r.mut1);
  r.q_mut2 = classify(model.classifier, r.mut2);
  return r;
}

template <typename T>
RepresentationSet<T> pair_forward(const Model<T>& model, const Tensor<T>& image1, const Tensor<T>& image2) {
  return pair_representations(model, model.backbone.forward(image1), model.backbone.forward(image2));
}

template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& q, std::span<const std::size_t> labels) {
  return neg_log_clamped(pick(q, labels));
}

template <typename T>
LossTerms<T> classification_loss(const RepresentationSet<T>& reps, std::span<const std::size_t> labels1,
                                 std::span<const std::size_t> labels2, Representation heads) {
  const std::size_t pairs = labels1.size();
  if (labels2.size() != pairs || reps.q_self1.dim(0) != pairs) {
    throw DimensionError("classification_loss: label count does not match the number of pairs");
  }
  Tensor<T> total;
  auto accumulate = [&](const Tensor<T>& q, std::span<const std::size_t> labels) {
    Tensor<T> term = sum(cross_entropy(q, labels));
    total = total.defined() ? add(total, term) : term;
  };
  if (heads != Representation::kMutual) {
    accumulate(reps.q_self1, labels1);
    accumulate(reps.q_self2, labels2);
  }
  if (heads != Representation::kSelf) {
    accumulate(reps.q_mut1, labels1);
    accumulate(reps.q_mut2, labels2);
  }
  return {total, scale(total, T(1) / static_cast<T>(pairs))};
}

template <typename T>
LossTerms<T> ranking_loss(const RepresentationSet<T>& reps, std::span<const std::size_t> labels1,
                          std::span<const std::size_t> labels2, T epsilon) {
  if (epsilon < T(0)) throw ConfigError("ranking_loss: epsilon must be >= 0");
  const std::size_t pairs = labels1.size();
  if (labels2.size() != pairs || reps.q_self1.dim(0) != pairs) {
    throw DimensionError("ranking_loss: label count does not match the number of pairs");
  }
  auto hinge = [&](const Tensor<T>& q_mut, const Tensor<T>& q_self, std::span<const std::size_t> labels) {
    return sum(relu(add_scalar(sub(pick(q_mut, labels), pick(q_self, labels)), epsilon)));
  };
  Tensor<T> total = add(hinge(reps.q_mut1, reps.q_self1, labels1), hinge(reps.q_mut2, reps.q_self2, labels2));
  return {total, scale(total, T(1) / static_cast<T>(pairs))};
}

template <typename T>
LossBundle<T> total_loss(const Tensor<T>& classification, const Tensor<T>& ranking, T lambda, T epsilon) {
  if (!(lambda >= T(0))) throw ConfigError("total_loss: lambda must be >= 0");
  LossBundle<T> b;
  b.total = add(classification, scale(ranking, lambda));
  b.classification = classification.item();
  b.ranking = ranking.item();
  b.value = b.total.item();
  b.lambda = lambda;
  b.epsilon = epsilon;
  return b;
}

template <typename T>
std::size_t count_parameters(const Backbone<T>& bk, const Classifier<T>& cl, const EcaModule<T>& eca,
                             const MutualHead<T>& mh) {
  std::size_t n = 0;
  for (const auto& [name, t] : bk.parameters()) n += t.numel();
  n += cl.weight.numel() + cl.bias.numel();
  n += eca.kernel.numel();
  n += mh.eca2c.kernel.numel() + mh.reduce_weight.numel() + mh.reduce_bias.numel();
  return n;
}

template class Backbone<float>;
template class Backbone<double>;
template struct Classifier<float>;
template struct Classifier<double>;
template struct Model<float>;
template struct Model<double>;

#define PCNET_INSTANTIATE(T)                                                                                \
  template Tensor<T> classify(const Classifier<T>&, const Tensor<T>&);                                     \
  template Tensor<T> single_branch_forward(const Backbone<T>&, const Classifier<T>&, const Tensor<T>&,     \
                                           const EcaModule<T>*);                                           \
  template Tensor<T> predict_scores(const Model<T>&, const Tensor<T>&);                                    \
  template Tensor<T> self_representation(const Model<T>&, const Tensor<T>&);                               \
  template RepresentationSet<T> pair_representations(const Model<T>&, const Tensor<T>&, const Tensor<T>&); \
  template RepresentationSet<T> pair_forward(const Model<T>&, const Tensor<T>&, const Tensor<T>&);         \
  template Tensor<T> cross_entropy(const Tensor<T>&, std::span<const std::size_t>);                        \
  template LossTerms<T> classification_loss(const RepresentationSet<T>&, std::span<const std::size_t>,     \
                                            std::span<const std::size_t>, Representation);                \
  template LossTerms<T> ranking_loss(const RepresentationSet<T>&, std::span<const std::size_t>,            \
                                     std::span<const std::size_t>, T);                                     \
  template LossBundle<T> total_loss(const Tensor<T>&, const Tensor<T>&, T, T);                             \
  template std::size_t count_parameters(const Backbone<T>&, const Classifier<T>&, const EcaModule<T>&,     \
                                        const MutualHead<T>&);

PCNET_INSTANTIATE(float)
PCNET_INSTANTIATE(double)
#undef PCNET_INSTANTIATE

}  // namespace pcnet
