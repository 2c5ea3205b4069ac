#pragma once

#include <cstddef>
#include <utility>

#include "pcnet/rng.hpp"
#include "pcnet/tensor.hpp"

namespace pcnet {

// Efficient channel attention: GAP, a k-tap cross-channel conv (no bias),
// sigmoid, channel-wise rescale.
template <typename T>
struct EcaModule {
  std::size_t channels = 0;
  Tensor<T> kernel;  // [k], k odd

  static EcaModule create(std::size_t channels, std::size_t k, Rng& rng);
  std::size_t k() const { return kernel.dim(0); }
};

// How the concatenated pair features are attended before the reducing FC.
enum class MutualAttention {
  kEca,     // concat -> ECA(2C) -> GAP -> FC(2C->C) -> sigmoid
  kFcOnly,  // concat -> GAP -> FC(2C->C) -> sigmoid
};

template <typename T>
struct MutualHead {
  EcaModule<T> eca2c;
  Tensor<T> reduce_weight;  // [C, 2C]
  Tensor<T> reduce_bias;    // [C]
  MutualAttention mode = MutualAttention::kEca;

  static MutualHead create(std::size_t channels, std::size_t k, MutualAttention mode, Rng& rng);
  std::size_t channels() const { return reduce_weight.dim(0); }
};

// Channel weights a = sigmoid(conv1d(GAP(f))) in (0,1), shape [B,C].
template <typename T>
Tensor<T> eca_weights(const EcaModule<T>& m, const Tensor<T>& f);

template <typename T>
Tensor<T> eca_apply(const EcaModule<T>& m, const Tensor<T>& f);

// The attended concatenation f_cat [B,2C,H,W] (plain concatenation in
// kFcOnly mode).
template <typename T>
Tensor<T> mutual_features(const MutualHead<T>& h, const Tensor<T>& f1, const Tensor<T>& f2);

// Comparison cue a_mut [B,C] in (0,1).
template <typename T>
Tensor<T> mutual_cue(const MutualHead<T>& h, const Tensor<T>& f1, const Tensor<T>& f2);

// (F1 * a_mut, F2 * a_mut): the same cue applied to both pooled features.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> mutual_representations(const Tensor<T>& a_mut, const Tensor<T>& pooled1,
                                                       const Tensor<T>& pooled2);

}  // namespace pcnet
