#include "pcnet/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "pcnet/errors.hpp"
#include "pcnet/gemm.hpp"

namespace pcnet {

namespace {

template <typename T, typename... Inputs>
Tape<T>* tape_for(const Inputs&... inputs) {
  Tape<T>* tape = active_tape<T>();
  if (tape == nullptr) return nullptr;
  return (inputs.requires_grad() || ...) ? tape : nullptr;
}

template <typename T>
void require_same_shape(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) +
                         " vs " + shape_to_string(b.shape()));
  }
}

template <typename T>
void require_rank(const char* op, const Tensor<T>& t, std::size_t rank) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) +
                         ", got shape " + shape_to_string(t.shape()));
  }
}

struct ConvGeometry {
  std::size_t batch, in_c, in_h, in_w, out_c, kh, kw, out_h, out_w, stride, pad;
  std::size_t col_rows() const { return in_c * kh * kw; }
  std::size_t col_cols() const { return out_h * out_w; }
};

// Unfolds one image [C,H,W] into columns [C*kh*kw, H'*W'].
template <typename T>
void im2col(const ConvGeometry& g, const T* image, T* col) {
  for (std::size_t c = 0; c < g.in_c; ++c) {
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        T* row = col + ((c * g.kh + ki) * g.kw + kj) * g.col_cols();
        for (std::size_t oh = 0; oh < g.out_h; ++oh) {
          const long ih = static_cast<long>(oh * g.stride + ki) - static_cast<long>(g.pad);
          T* dst = row + oh * g.out_w;
          if (ih < 0 || ih >= static_cast<long>(g.in_h)) {
            std::fill(dst, dst + g.out_w, T(0));
            continue;
          }
          const T* src = image + (c * g.in_h + static_cast<std::size_t>(ih)) * g.in_w;
          for (std::size_t ow = 0; ow < g.out_w; ++ow) {
            const long iw = static_cast<long>(ow * g.stride + kj) - static_cast<long>(g.pad);
            dst[ow] = (iw < 0 || iw >= static_cast<long>(g.in_w)) ? T(0)
                                                                    : src[static_cast<std::size_t>(iw)];
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatters columns back onto the image, accumulating.
template <typename T>
void col2im(const ConvGeometry& g, const T* col, T* image) {
  for (std::size_t c = 0; c < g.in_c; ++c) {
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        const T* row = col + ((c * g.kh + ki) * g.kw + kj) * g.col_cols();
        for (std::size_t oh = 0; oh < g.out_h; ++oh) {
          const long ih = static_cast<long>(oh * g.stride + ki) - static_cast<long>(g.pad);
          if (ih < 0 || ih >= static_cast<long>(g.in_h)) continue;
          T* dst = image + (c * g.in_h + static_cast<std::size_t>(ih)) * g.in_w;
          const T* src = row + oh * g.out_w;
          for (std::size_t ow = 0; ow < g.out_w; ++ow) {
            const long iw = static_cast<long>(ow * g.stride + kj) - static_cast<long>(g.pad);
            if (iw >= 0 && iw < static_cast<long>(g.in_w)) dst[static_cast<std::size_t>(iw)] += src[ow];
          }
        }
      }
    }
  }
}

template <typename T>
T stable_sigmoid(T z) {
  // Clamped so the result stays strictly inside (0,1) even when exp saturates.
  constexpr T lo = std::numeric_limits<T>::min();
  constexpr T hi = T(1) - std::numeric_limits<T>::epsilon() / T(2);
  T y;
  if (z >= T(0)) {
    y = T(1) / (T(1) + std::exp(-z));
  } else {
    const T e = std::exp(z);
    y = e / (T(1) + e);
  }
  return std::clamp(y, lo, hi);
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, std::size_t stride,
                 std::size_t pad) {
  require_rank("conv2d", input, 4);
  require_rank("conv2d", kernel, 4);
  if (stride < 1) throw ConfigError("conv2d: stride must be >= 1");
  if (input.dim(1) != kernel.dim(1)) {
    throw DimensionError("conv2d: input has " + std::to_string(input.dim(1)) +
                         " channels but kernel expects " + std::to_string(kernel.dim(1)));
  }
  ConvGeometry g{input.dim(0), input.dim(1), input.dim(2), input.dim(3), kernel.dim(0),
                 kernel.dim(2), kernel.dim(3), 0, 0, stride, pad};
  if (g.kh > g.in_h + 2 * pad || g.kw > g.in_w + 2 * pad) {
    throw DimensionError("conv2d: kernel " + shape_to_string(kernel.shape()) +
                         " larger than padded input " + shape_to_string(input.shape()));
  }
  g.out_h = (g.in_h + 2 * pad - g.kh) / stride + 1;
  g.out_w = (g.in_w + 2 * pad - g.kw) / stride + 1;

  Tensor<T> out(Shape{g.batch, g.out_c, g.out_h, g.out_w});
  std::vector<T> col(g.col_rows() * g.col_cols());
  const std::size_t in_stride = g.in_c * g.in_h * g.in_w;
  const std::size_t out_stride = g.out_c * g.col_cols();
  for (std::size_t b = 0; b < g.batch; ++b) {
    im2col(g, input.data().data() + b * in_stride, col.data());
    detail::gemm(false, false, g.out_c, g.col_cols(), g.col_rows(), T(1), kernel.data().data(),
                 col.data(), T(0), out.data().data() + b * out_stride);
  }

  if (auto* tape = tape_for<T>(input, kernel)) {
    out.set_requires_grad(true);
    tape->record("conv2d", {input, kernel}, out, [input, kernel, out, g]() mutable {
      const std::size_t in_stride = g.in_c * g.in_h * g.in_w;
      const std::size_t out_stride = g.out_c * g.col_cols();
      std::vector<T> col(g.col_rows() * g.col_cols());
      const T* dout = out.grad().data();
      for (std::size_t b = 0; b < g.batch; ++b) {
        const T* dout_b = dout + b * out_stride;
        if (kernel.requires_grad()) {
          im2col(g, input.data().data() + b * in_stride, col.data());
          detail::gemm(false, true, g.out_c, g.col_rows(), g.col_cols(), T(1), dout_b, col.data(),
                       T(1), kernel.grad().data());
        }
        if (input.requires_grad()) {
          detail::gemm(true, false, g.col_rows(), g.col_cols(), g.out_c, T(1),
                       kernel.data().data(), dout_b, T(0), col.data());
          col2im(g, col.data(), input.grad().data() + b * in_stride);
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> add_channel_bias(const Tensor<T>& x, const Tensor<T>& bias) {
  if (x.rank() < 2 || bias.rank() != 1 || bias.dim(0) != x.dim(1)) {
    throw DimensionError("add_channel_bias: bias " + shape_to_string(bias.shape()) +
                         " does not match channels of " + shape_to_string(x.shape()));
  }
  const std::size_t batch = x.dim(0), channels = x.dim(1);
  const std::size_t inner = x.numel() / (batch * channels);
  Tensor<T> out(x.shape());
  auto xs = x.data();
  auto os = out.data();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < channels; ++c) {
      const std::size_t base = (b * channels + c) * inner;
      for (std::size_t i = 0; i < inner; ++i) os[base + i] = xs[base + i] + bias[c];
    }

  if (auto* tape = tape_for<T>(x, bias)) {
    out.set_requires_grad(true);
    tape->record("add_channel_bias", {x, bias}, out,
                 [x, bias, out, batch, channels, inner]() mutable {
                   auto dout = out.grad();
                   if (x.requires_grad()) {
                     auto dx = x.grad();
                     for (std::size_t i = 0; i < dout.size(); ++i) dx[i] += dout[i];
                   }
                   if (bias.requires_grad()) {
                     auto db = bias.grad();
                     for (std::size_t b = 0; b < batch; ++b)
                       for (std::size_t c = 0; c < channels; ++c) {
                         const std::size_t base = (b * channels + c) * inner;
                         T acc = 0;
                         for (std::size_t i = 0; i < inner; ++i) acc += dout[base + i];
                         db[c] += acc;
                       }
                   }
                 });
  }
  return out;
}

template <typename T>
Tensor<T> conv1d_channels(const Tensor<T>& v, const Tensor<T>& kernel) {
  require_rank("conv1d_channels", kernel, 1);
  const std::size_t k = kernel.dim(0);
  if (k % 2 == 0) {
    throw ConfigError("conv1d_channels: kernel size must be odd, got " + std::to_string(k));
  }
  if (v.rank() != 1 && v.rank() != 2) {
    throw DimensionError("conv1d_channels: expected [C] or [B,C], got " + shape_to_string(v.shape()));
  }
  const std::size_t channels = v.shape().back();
  const std::size_t rows = v.numel() / std::max<std::size_t>(channels, 1);
  const long half = static_cast<long>(k / 2);

  Tensor<T> out(v.shape());
  auto vs = v.data();
  auto ks = kernel.data();
  auto os = out.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = vs.data() + r * channels;
    for (std::size_t c = 0; c < channels; ++c) {
      T acc = 0;
      for (std::size_t j = 0; j < k; ++j) {
        const long src = static_cast<long>(c + j) - half;
        if (src >= 0 && src < static_cast<long>(channels)) acc += ks[j] * in[src];
      }
      os[r * channels + c] = acc;
    }
  }

  if (auto* tape = tape_for<T>(v, kernel)) {
    out.set_requires_grad(true);
    tape->record("conv1d_channels", {v, kernel}, out,
                 [v, kernel, out, rows, channels, k, half]() mutable {
                   auto dout = out.grad();
                   for (std::size_t r = 0; r < rows; ++r) {
                     for (std::size_t c = 0; c < channels; ++c) {
                       const T g = dout[r * channels + c];
                       for (std::size_t j = 0; j < k; ++j) {
                         const long src = static_cast<long>(c + j) - half;
                         if (src < 0 || src >= static_cast<long>(channels)) continue;
                         const std::size_t s = r * channels + static_cast<std::size_t>(src);
                         if (v.requires_grad()) v.grad()[s] += kernel[j] * g;
                         if (kernel.requires_grad()) kernel.grad()[j] += v[s] * g;
                       }
                     }
                   }
                 });
  }
  return out;
}

template <typename T>
Tensor<T> global_average_pool(const Tensor<T>& f) {
  require_rank("global_average_pool", f, 4);
  const std::size_t planes = f.dim(0) * f.dim(1);
  const std::size_t area = f.dim(2) * f.dim(3);
  if (area == 0) throw DimensionError("global_average_pool: empty spatial extent");
  Tensor<T> out(Shape{f.dim(0), f.dim(1)});
  auto fs = f.data();
  const T inv = T(1) / static_cast<T>(area);
  for (std::size_t p = 0; p < planes; ++p) {
    T acc = 0;
    for (std::size_t i = 0; i < area; ++i) acc += fs[p * area + i];
    out[p] = acc * inv;
  }
  if (auto* tape = tape_for<T>(f)) {
    out.set_requires_grad(true);
    tape->record("global_average_pool", {f}, out, [f, out, planes, area, inv]() mutable {
      auto dout = out.grad();
      auto df = f.grad();
      for (std::size_t p = 0; p < planes; ++p) {
        const T g = dout[p] * inv;
        for (std::size_t i = 0; i < area; ++i) df[p * area + i] += g;
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> affine(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  require_rank("affine", weight, 2);
  require_rank("affine", bias, 1);
  if (x.rank() != 1 && x.rank() != 2) {
    throw DimensionError("affine: expected x of shape [D] or [B,D], got " + shape_to_string(x.shape()));
  }
  const std::size_t in_dim = x.shape().back();
  const std::size_t rows = x.rank() == 2 ? x.dim(0) : 1;
  const std::size_t out_dim = weight.dim(0);
  if (weight.dim(1) != in_dim || bias.dim(0) != out_dim) {
    throw DimensionError("affine: x " + shape_to_string(x.shape()) + ", W " +
                         shape_to_string(weight.shape()) + ", b " + shape_to_string(bias.shape()));
  }
  Tensor<T> out(x.rank() == 2 ? Shape{rows, out_dim} : Shape{out_dim});
  auto xs = x.data();
  auto ws = weight.data();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t n = 0; n < out_dim; ++n) {
      T acc = 0;
      for (std::size_t d = 0; d < in_dim; ++d) acc += xs[r * in_dim + d] * ws[n * in_dim + d];
      out[r * out_dim + n] = acc + bias[n];
    }

  if (auto* tape = tape_for<T>(x, weight, bias)) {
    out.set_requires_grad(true);
    tape->record("affine", {x, weight, bias}, out,
                 [x, weight, bias, out, rows, in_dim, out_dim]() mutable {
                   auto dout = out.grad();
                   if (x.requires_grad()) {
                     auto dx = x.grad();
                     for (std::size_t r = 0; r < rows; ++r)
                       for (std::size_t n = 0; n < out_dim; ++n) {
                         const T g = dout[r * out_dim + n];
                         for (std::size_t d = 0; d < in_dim; ++d)
                           dx[r * in_dim + d] += g * weight[n * in_dim + d];
                       }
                   }
                   if (weight.requires_grad()) {
                     auto dw = weight.grad();
                     for (std::size_t r = 0; r < rows; ++r)
                       for (std::size_t n = 0; n < out_dim; ++n) {
                         const T g = dout[r * out_dim + n];
                         for (std::size_t d = 0; d < in_dim; ++d) dw[n * in_dim + d] += g * x[r * in_dim + d];
                       }
                   }
                   if (bias.requires_grad()) {
                     auto db = bias.grad();
                     for (std::size_t r = 0; r < rows; ++r)
                       for (std::size_t n = 0; n < out_dim; ++n) db[n] += dout[r * out_dim + n];
                   }
                 });
  }
  return out;
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& z) {
  if ((z.rank() != 1 && z.rank() != 2) || z.numel() == 0) {
    throw DimensionError("softmax: expected non-empty [N] or [B,N], got " + shape_to_string(z.shape()));
  }
  const std::size_t n = z.shape().back();
  const std::size_t rows = z.numel() / n;
  Tensor<T> out(z.shape());
  auto zs = z.data();
  auto os = out.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = zs.data() + r * n;
    T* o = os.data() + r * n;
    const T peak = *std::max_element(in, in + n);
    T total = 0;
    for (std::size_t i = 0; i < n; ++i) {
      o[i] = std::exp(in[i] - peak);
      total += o[i];
    }
    for (std::size_t i = 0; i < n; ++i) o[i] /= total;
  }
  if (auto* tape = tape_for<T>(z)) {
    out.set_requires_grad(true);
    tape->record("softmax", {z}, out, [z, out, rows, n]() mutable {
      auto dout = out.grad();
      auto dz = z.grad();
      for (std::size_t r = 0; r < rows; ++r) {
        T dot = 0;
        for (std::size_t i = 0; i < n; ++i) dot += dout[r * n + i] * out[r * n + i];
        for (std::size_t i = 0; i < n; ++i) dz[r * n + i] += out[r * n + i] * (dout[r * n + i] - dot);
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& z) {
  Tensor<T> out(z.shape());
  for (std::size_t i = 0; i < z.numel(); ++i) out[i] = stable_sigmoid(z[i]);
  if (auto* tape = tape_for<T>(z)) {
    out.set_requires_grad(true);
    tape->record("sigmoid", {z}, out, [z, out]() mutable {
      auto dout = out.grad();
      auto dz = z.grad();
      for (std::size_t i = 0; i < dz.size(); ++i) dz[i] += dout[i] * out[i] * (T(1) - out[i]);
    });
  }
  return out;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& z) {
  Tensor<T> out(z.shape());
  for (std::size_t i = 0; i < z.numel(); ++i) out[i] = z[i] > T(0) ? z[i] : T(0);
  if (auto* tape = tape_for<T>(z)) {
    out.set_requires_grad(true);
    tape->record("relu", {z}, out, [z, out]() mutable {
      auto dout = out.grad();
      auto dz = z.grad();
      for (std::size_t i = 0; i < dz.size(); ++i)
        if (z[i] > T(0)) dz[i] += dout[i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape("add", a, b);
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) out[i] = a[i] + b[i];
  if (auto* tape = tape_for<T>(a, b)) {
    out.set_requires_grad(true);
    tape->record("add", {a, b}, out, [a, b, out]() mutable {
      auto dout = out.grad();
      if (a.requires_grad())
        for (std::size_t i = 0; i < dout.size(); ++i) a.grad()[i] += dout[i];
      if (b.requires_grad())
        for (std::size_t i = 0; i < dout.size(); ++i) b.grad()[i] += dout[i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape("sub", a, b);
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) out[i] = a[i] - b[i];
  if (auto* tape = tape_for<T>(a, b)) {
    out.set_requires_grad(true);
    tape->record("sub", {a, b}, out, [a, b, out]() mutable {
      auto dout = out.grad();
      if (a.requires_grad())
        for (std::size_t i = 0; i < dout.size(); ++i) a.grad()[i] += dout[i];
      if (b.requires_grad())
        for (std::size_t i = 0; i < dout.size(); ++i) b.grad()[i] -= dout[i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape("mul", a, b);
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) out[i] = a[i] * b[i];
  if (auto* tape = tape_for<T>(a, b)) {
    out.set_requires_grad(true);
    tape->record("mul", {a, b}, out, [a, b, out]() mutable {
      auto dout = out.grad();
      if (a.requires_grad())
        for (std::size_t i = 0; i < dout.size(); ++i) a.grad()[i] += dout[i] * b[i];
      if (b.requires_grad())
        for (std::size_t i = 0; i < dout.size(); ++i) b.grad()[i] += dout[i] * a[i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) out[i] = factor * x[i];
  if (auto* tape = tape_for<T>(x)) {
    out.set_requires_grad(true);
    tape->record("scale", {x}, out, [x, out, factor]() mutable {
      auto dout = out.grad();
      auto dx = x.grad();
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += factor * dout[i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T offset) {
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) out[i] = x[i] + offset;
  if (auto* tape = tape_for<T>(x)) {
    out.set_requires_grad(true);
    tape->record("add_scalar", {x}, out, [x, out]() mutable {
      auto dout = out.grad();
      auto dx = x.grad();
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dout[i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() < 2 || a.rank() != b.rank() || a.dim(0) != b.dim(0)) {
    throw DimensionError("concat_channels: incompatible " + shape_to_string(a.shape()) + " and " +
                         shape_to_string(b.shape()));
  }
  for (std::size_t axis = 2; axis < a.rank(); ++axis) {
    if (a.dim(axis) != b.dim(axis)) {
      throw DimensionError("concat_channels: trailing extents differ " + shape_to_string(a.shape()) +
                           " vs " + shape_to_string(b.shape()));
    }
  }
  const std::size_t batch = a.dim(0);
  const std::size_t a_block = a.numel() / batch;
  const std::size_t b_block = b.numel() / batch;
  Shape shape = a.shape();
  shape[1] = a.dim(1) + b.dim(1);
  Tensor<T> out(shape);
  for (std::size_t n = 0; n < batch; ++n) {
    std::copy_n(a.data().data() + n * a_block, a_block, out.data().data() + n * (a_block + b_block));
    std::copy_n(b.data().data() + n * b_block, b_block,
                out.data().data() + n * (a_block + b_block) + a_block);
  }
  if (auto* tape = tape_for<T>(a, b)) {
    out.set_requires_grad(true);
    tape->record("concat_channels", {a, b}, out, [a, b, out, batch, a_block, b_block]() mutable {
      auto dout = out.grad();
      for (std::size_t n = 0; n < batch; ++n) {
        const T* src = dout.data() + n * (a_block + b_block);
        if (a.requires_grad())
          for (std::size_t i = 0; i < a_block; ++i) a.grad()[n * a_block + i] += src[i];
        if (b.requires_grad())
          for (std::size_t i = 0; i < b_block; ++i) b.grad()[n * b_block + i] += src[a_block + i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> scale_channels(const Tensor<T>& f, const Tensor<T>& weights) {
  require_rank("scale_channels", f, 4);
  if (weights.shape() != Shape{f.dim(0), f.dim(1)}) {
    throw DimensionError("scale_channels: weights " + shape_to_string(weights.shape()) +
                         " do not match feature map " + shape_to_string(f.shape()));
  }
  const std::size_t planes = f.dim(0) * f.dim(1);
  const std::size_t area = f.dim(2) * f.dim(3);
  Tensor<T> out(f.shape());
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t i = 0; i < area; ++i) out[p * area + i] = weights[p] * f[p * area + i];
  if (auto* tape = tape_for<T>(f, weights)) {
    out.set_requires_grad(true);
    tape->record("scale_channels", {f, weights}, out, [f, weights, out, planes, area]() mutable {
      auto dout = out.grad();
      for (std::size_t p = 0; p < planes; ++p) {
        if (f.requires_grad()) {
          auto df = f.grad();
          for (std::size_t i = 0; i < area; ++i) df[p * area + i] += weights[p] * dout[p * area + i];
        }
        if (weights.requires_grad()) {
          T acc = 0;
          for (std::size_t i = 0; i < area; ++i) acc += f[p * area + i] * dout[p * area + i];
          weights.grad()[p] += acc;
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> gather_rows(const Tensor<T>& x, std::span<const std::size_t> rows) {
  if (x.rank() < 1) throw DimensionError("gather_rows: scalar input");
  const std::size_t block = x.numel() / std::max<std::size_t>(x.dim(0), 1);
  Shape shape = x.shape();
  shape[0] = rows.size();
  Tensor<T> out(shape);
  std::vector<std::size_t> index(rows.begin(), rows.end());
  for (std::size_t r = 0; r < index.size(); ++r) {
    if (index[r] >= x.dim(0)) {
      throw DimensionError("gather_rows: row " + std::to_string(index[r]) + " out of range for " +
                           shape_to_string(x.shape()));
    }
    std::copy_n(x.data().data() + index[r] * block, block, out.data().data() + r * block);
  }
  if (auto* tape = tape_for<T>(x)) {
    out.set_requires_grad(true);
    tape->record("gather_rows", {x}, out, [x, out, index, block]() mutable {
      auto dout = out.grad();
      auto dx = x.grad();
      for (std::size_t r = 0; r < index.size(); ++r)
        for (std::size_t i = 0; i < block; ++i) dx[index[r] * block + i] += dout[r * block + i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> pick(const Tensor<T>& q, std::span<const std::size_t> columns) {
  std::size_t rows = 0, width = 0;
  Shape shape;
  if (q.rank() == 2) {
    rows = q.dim(0);
    width = q.dim(1);
    shape = Shape{rows};
  } else if (q.rank() == 1) {
    rows = 1;
    width = q.dim(0);
    shape = Shape{};
  } else {
    throw DimensionError("pick: expected [N] or [B,N], got " + shape_to_string(q.shape()));
  }
  if (columns.size() != rows) {
    throw DimensionError("pick: " + std::to_string(columns.size()) + " indices for " +
                         std::to_string(rows) + " rows");
  }
  std::vector<std::size_t> index(columns.begin(), columns.end());
  Tensor<T> out(shape);
  for (std::size_t r = 0; r < rows; ++r) {
    if (index[r] >= width) {
      throw UsageError("pick: class index " + std::to_string(index[r]) + " out of range [0," +
                       std::to_string(width) + ")");
    }
    out[r] = q[r * width + index[r]];
  }
  if (auto* tape = tape_for<T>(q)) {
    out.set_requires_grad(true);
    tape->record("pick", {q}, out, [q, out, index, width]() mutable {
      auto dout = out.grad();
      auto dq = q.grad();
      for (std::size_t r = 0; r < index.size(); ++r) dq[r * width + index[r]] += dout[r];
    });
  }
  return out;
}

template <typename T>
Tensor<T> neg_log_clamped(const Tensor<T>& x) {
  const T floor = static_cast<T>(kLogClamp);
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) out[i] = -std::log(std::max(x[i], floor));
  if (auto* tape = tape_for<T>(x)) {
    out.set_requires_grad(true);
    tape->record("neg_log_clamped", {x}, out, [x, out, floor]() mutable {
      auto dout = out.grad();
      auto dx = x.grad();
      for (std::size_t i = 0; i < dx.size(); ++i)
        if (x[i] > floor) dx[i] -= dout[i] / x[i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T acc = 0;
  for (T v : x.data()) acc += v;
  Tensor<T> out = Tensor<T>::scalar(acc);
  if (auto* tape = tape_for<T>(x)) {
    out.set_requires_grad(true);
    tape->record("sum", {x}, out, [x, out]() mutable {
      const T g = out.grad()[0];
      auto dx = x.grad();
      for (auto& d : dx) d += g;
    });
  }
  return out;
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  if (x.numel() == 0) throw DimensionError("mean: empty tensor");
  return scale(sum(x), T(1) / static_cast<T>(x.numel()));
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: " + shape_to_string(x.shape()) + " to " + shape_to_string(shape));
  }
  Tensor<T> out(std::move(shape), std::vector<T>(x.data().begin(), x.data().end()));
  if (auto* tape = tape_for<T>(x)) {
    out.set_requires_grad(true);
    tape->record("reshape", {x}, out, [x, out]() mutable {
      auto dout = out.grad();
      auto dx = x.grad();
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dout[i];
    });
  }
  return out;
}

#define PCNET_INSTANTIATE_OPS(T)                                                              \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, std::size_t, std::size_t);   \
  template Tensor<T> add_channel_bias(const Tensor<T>&, const Tensor<T>&);                   \
  template Tensor<T> conv1d_channels(const Tensor<T>&, const Tensor<T>&);                    \
  template Tensor<T> global_average_pool(const Tensor<T>&);                                  \
  template Tensor<T> affine(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);           \
  template Tensor<T> softmax(const Tensor<T>&);                                              \
  template Tensor<T> sigmoid(const Tensor<T>&);                                              \
  template Tensor<T> relu(const Tensor<T>&);                                                 \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> scale(const Tensor<T>&, T);                                             \
  template Tensor<T> add_scalar(const Tensor<T>&, T);                                        \
  template Tensor<T> concat_channels(const Tensor<T>&, const Tensor<T>&);                    \
  template Tensor<T> scale_channels(const Tensor<T>&, const Tensor<T>&);                     \
  template Tensor<T> gather_rows(const Tensor<T>&, std::span<const std::size_t>);            \
  template Tensor<T> pick(const Tensor<T>&, std::span<const std::size_t>);                   \
  template Tensor<T> neg_log_clamped(const Tensor<T>&);                                      \
  template Tensor<T> sum(const Tensor<T>&);                                                  \
  template Tensor<T> mean(const Tensor<T>&);                                                 \
  template Tensor<T> reshape(const Tensor<T>&, Shape);

PCNET_INSTANTIATE_OPS(float)
PCNET_INSTANTIATE_OPS(double)

#undef PCNET_INSTANTIATE_OPS

}  // namespace pcnet
