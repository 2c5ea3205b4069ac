#include "pcnet/attention.hpp"

#include <cmath>
#include <string>

#include "pcnet/errors.hpp"
#include "pcnet/init.hpp"
#include "pcnet/ops.hpp"

namespace pcnet {

template <typename T>
EcaModule<T> EcaModule<T>::create(std::size_t channels, std::size_t k, Rng& rng) {
  if (k % 2 == 0) throw ConfigError("eca: kernel size k must be odd, got " + std::to_string(k));
  EcaModule m;
  m.channels = channels;
  // Zero start: every channel weight begins at sigmoid(0) = 1/2, so the
  // attended and plain pooled features differ only by a common scale and
  // the classifier learned through ECA also fits the plain test path.
  m.kernel = Tensor<T>(Shape{k}, true);
  (void)rng;
  return m;
}

template <typename T>
MutualHead<T> MutualHead<T>::create(std::size_t channels, std::size_t k, MutualAttention mode, Rng& rng) {
  MutualHead h;
  h.eca2c = EcaModule<T>::create(2 * channels, k, rng);
  h.reduce_weight = Tensor<T>(Shape{channels, 2 * channels}, true);
  fill_uniform(h.reduce_weight, 1.0 / std::sqrt(static_cast<double>(2 * channels)), rng);
  h.reduce_bias = Tensor<T>(Shape{channels}, true);
  h.mode = mode;
  return h;
}

template <typename T>
Tensor<T> eca_weights(const EcaModule<T>& m, const Tensor<T>& f) {
  if (f.rank() != 4 || f.dim(1) != m.channels) {
    throw DimensionError("eca: module configured for " + std::to_string(m.channels) +
                         " channels, got feature map " + shape_to_string(f.shape()));
  }
  return sigmoid(conv1d_channels(global_average_pool(f), m.kernel));
}

template <typename T>
Tensor<T> eca_apply(const EcaModule<T>& m, const Tensor<T>& f) {
  return scale_channels(f, eca_weights(m, f));
}

template <typename T>
Tensor<T> mutual_features(const MutualHead<T>& h, const Tensor<T>& f1, const Tensor<T>& f2) {
  if (f1.shape() != f2.shape()) {
    throw DimensionError("mutual_cue: pair features differ in shape " + shape_to_string(f1.shape()) +
                         " vs " + shape_to_string(f2.shape()));
  }
  if (f1.rank() != 4 || f1.dim(1) != h.channels()) {
    throw DimensionError("mutual_cue: head configured for " + std::to_string(h.channels()) +
                         " channels, got " + shape_to_string(f1.shape()));
  }
  Tensor<T> cat = concat_channels(f1, f2);
  return h.mode == MutualAttention::kEca ? eca_apply(h.eca2c, cat) : cat;
}

template <typename T>
Tensor<T> mutual_cue(const MutualHead<T>& h, const Tensor<T>& f1, const Tensor<T>& f2) {
  Tensor<T> cat = mutual_features(h, f1, f2);
  return sigmoid(affine(global_average_pool(cat), h.reduce_weight, h.reduce_bias));
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> mutual_representations(const Tensor<T>& a_mut, const Tensor<T>& pooled1,
                                                       const Tensor<T>& pooled2) {
  return {mul(pooled1, a_mut), mul(pooled2, a_mut)};
}

template struct EcaModule<float>;
template struct EcaModule<double>;
template struct MutualHead<float>;
template struct MutualHead<double>;

#define PCNET_INSTANTIATE(T)                                                                    \
  template Tensor<T> eca_weights(const EcaModule<T>&, const Tensor<T>&);                       \
  template Tensor<T> eca_apply(const EcaModule<T>&, const Tensor<T>&);                         \
  template Tensor<T> mutual_features(const MutualHead<T>&, const Tensor<T>&, const Tensor<T>&); \
  template Tensor<T> mutual_cue(const MutualHead<T>&, const Tensor<T>&, const Tensor<T>&);      \
  template std::pair<Tensor<T>, Tensor<T>> mutual_representations(                              \
      const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);

PCNET_INSTANTIATE(float)
PCNET_INSTANTIATE(double)
#undef PCNET_INSTANTIATE

}  // namespace pcnet
