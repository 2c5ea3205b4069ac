#pragma once

#include "pcnet/rng.hpp"
#include "pcnet/tensor.hpp"

namespace pcnet {

// Draws U(-bound, bound) in double precision, so float and double models
// built from the same seed start from the same (rounded) values.
template <typename T>
void fill_uniform(Tensor<T>& t, double bound, Rng& rng) {
  for (auto& v : t.data()) v = static_cast<T>(uniform(rng, -bound, bound));
}

}  // namespace pcnet
