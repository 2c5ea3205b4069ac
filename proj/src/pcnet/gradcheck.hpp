#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "pcnet/tensor.hpp"

namespace pcnet {

// Largest per-tensor relative error between tape gradients and central
// differences of `loss` w.r.t. each of `inputs`:
//   ||g_tape - g_fd|| / max(||g_tape||, ||g_fd||)
// (absolute difference when both norms are below 1e-10). `loss` must
// rebuild the graph from the current input values on every call.
template <typename T>
double gradient_error(const std::function<Tensor<T>()>& loss, const std::vector<Tensor<T>>& inputs, double step);

struct GradcheckCase {
  std::string name;
  std::size_t instances = 0;
  double max_error = 0;
  double tolerance = 0;
  bool passed() const { return max_error < tolerance; }
};

struct GradcheckOptions {
  std::size_t instances = 20;
  std::uint64_t seed = 1;
  double step = 1e-5;
  double primitive_tolerance = 1e-5;
  double composite_tolerance = 1e-4;
};

// Every differentiable op, the attention blocks, the backbone and the full
// pair forward + loss composite, in 64-bit precision.
std::vector<GradcheckCase> run_gradcheck(const GradcheckOptions& options = {});

// op,instances,max_rel_error,tolerance,status
std::string gradcheck_csv(const std::vector<GradcheckCase>& cases);

}  // namespace pcnet
