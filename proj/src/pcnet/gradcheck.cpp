#include "pcnet/gradcheck.hpp"

#include <cmath>
#include <cstdio>

#include "pcnet/attention.hpp"
#include "pcnet/model.hpp"
#include "pcnet/ops.hpp"
#include "pcnet/rng.hpp"

namespace pcnet {

template <typename T>
double gradient_error(const std::function<Tensor<T>()>& loss, const std::vector<Tensor<T>>& inputs, double step) {
  for (const auto& x : inputs) {
    x.clear_grad();
    const_cast<Tensor<T>&>(x).set_requires_grad(true);
  }
  Tape<T> tape;
  Tensor<T> out;
  {
    TapeScope<T> scope(&tape);
    out = loss();
  }
  tape.backward(out);

  NoGradScope<T> no_grad;
  double worst = 0;
  for (const auto& input : inputs) {
    Tensor<T> x = input;
    const auto analytic = x.grad();
    double diff2 = 0, a2 = 0, n2 = 0;
    for (std::size_t i = 0; i < x.numel(); ++i) {
      const T saved = x[i];
      x[i] = saved + static_cast<T>(step);
      const double up = loss().item();
      x[i] = saved - static_cast<T>(step);
      const double down = loss().item();
      x[i] = saved;
      const double numeric = (up - down) / (2 * step);
      const double a = analytic[i];
      diff2 += (a - numeric) * (a - numeric);
      a2 += a * a;
      n2 += numeric * numeric;
    }
    const double scale = std::sqrt(std::max(a2, n2));
    const double err = scale < 1e-10 ? std::sqrt(diff2) : std::sqrt(diff2) / scale;
    worst = std::max(worst, err);
  }
  return worst;
}

template double gradient_error(const std::function<Tensor<float>()>&, const std::vector<Tensor<float>>&, double);
template double gradient_error(const std::function<Tensor<double>()>&, const std::vector<Tensor<double>>&, double);

namespace {

using D = double;
using TD = Tensor<D>;

TD random_tensor(Shape shape, Rng& rng, double lo = -1, double hi = 1) {
  TD t(shape, true);
  for (auto& v : t.data()) v = uniform(rng, lo, hi);
  return t;
}

// Keeps values at least `gap` away from zero so kinks stay out of the
// finite-difference stencil.
TD away_from_zero(TD t, double gap) {
  for (auto& v : t.data())
    if (std::abs(v) < gap) v = v < 0 ? -gap - std::abs(v) : gap + v;
  return t;
}

// Scalar projection sum(w * y) with fixed random weights.
TD project(const TD& y, const TD& w) { return sum(mul(y, w)); }

struct Suite {
  Rng rng;
  const GradcheckOptions& opt;
  std::vector<GradcheckCase> cases;

  // `make` draws a fresh instance and returns (loss closure, inputs).
  void check(const std::string& name, double tolerance,
             const std::function<std::pair<std::function<TD()>, std::vector<TD>>(Rng&)>& make) {
    GradcheckCase c{name, opt.instances, 0.0, tolerance};
    for (std::size_t i = 0; i < opt.instances; ++i) {
      auto [fn, inputs] = make(rng);
      c.max_error = std::max(c.max_error, gradient_error<D>(fn, inputs, opt.step));
    }
    cases.push_back(c);
  }

  // Unary/binary op checked through a random projection.
  void projected(const std::string& name, const std::vector<Shape>& shapes,
                 const std::function<TD(const std::vector<TD>&)>& op, double lo = -1, double hi = 1,
                 double kink_gap = 0) {
    check(name, opt.primitive_tolerance, [=](Rng& r) {
      std::vector<TD> in;
      for (const auto& s : shapes) {
        TD t = random_tensor(s, r, lo, hi);
        in.push_back(kink_gap > 0 ? away_from_zero(t, kink_gap) : t);
      }
      TD probe;
      {
        NoGradScope<D> ng;
        probe = op(in);
      }
      TD w = random_tensor(probe.shape(), r);
      w.set_requires_grad(false);
      return std::pair{std::function<TD()>([=] { return project(op(in), w); }), in};
    });
  }
};

}  // namespace

std::vector<GradcheckCase> run_gradcheck(const GradcheckOptions& opt) {
  Suite s{Rng(derive_seed(opt.seed, "gradcheck")), opt, {}};

  s.check("conv2d", opt.primitive_tolerance, [&](Rng& r) {
    const std::size_t stride = 1 + uniform_index(r, 2), pad = uniform_index(r, 2);
    std::vector<TD> in{random_tensor({2, 2, 4, 4}, r), random_tensor({3, 2, 3, 3}, r)};
    TD probe;
    {
      NoGradScope<D> ng;
      probe = conv2d(in[0], in[1], stride, pad);
    }
    TD w = random_tensor(probe.shape(), r);
    w.set_requires_grad(false);
    return std::pair{std::function<TD()>([=] { return project(conv2d(in[0], in[1], stride, pad), w); }), in};
  });
  s.projected("add_channel_bias", {{2, 3, 2, 2}, {3}}, [](const auto& in) { return add_channel_bias(in[0], in[1]); });
  s.projected("conv1d_channels", {{2, 7}, {5}}, [](const auto& in) { return conv1d_channels(in[0], in[1]); });
  s.projected("conv1d_channels_vector", {{6}, {3}}, [](const auto& in) { return conv1d_channels(in[0], in[1]); });
  s.projected("global_average_pool", {{2, 3, 3, 3}}, [](const auto& in) { return global_average_pool(in[0]); });
  s.projected("affine", {{3, 4}, {5, 4}, {5}}, [](const auto& in) { return affine(in[0], in[1], in[2]); });
  s.projected("softmax", {{3, 5}}, [](const auto& in) { return softmax(in[0]); }, -3, 3);
  s.projected("sigmoid", {{4, 5}}, [](const auto& in) { return sigmoid(in[0]); }, -4, 4);
  s.projected("relu", {{4, 5}}, [](const auto& in) { return relu(in[0]); }, -1, 1, 1e-3);
  s.projected("add", {{3, 4}, {3, 4}}, [](const auto& in) { return add(in[0], in[1]); });
  s.projected("sub", {{3, 4}, {3, 4}}, [](const auto& in) { return sub(in[0], in[1]); });
  s.projected("mul", {{3, 4}, {3, 4}}, [](const auto& in) { return mul(in[0], in[1]); });
  s.projected("scale", {{3, 4}}, [](const auto& in) { return scale(in[0], 1.7); });
  s.projected("add_scalar", {{3, 4}}, [](const auto& in) { return add_scalar(in[0], -0.3); });
  s.projected("concat_channels", {{2, 2, 2, 2}, {2, 3, 2, 2}},
              [](const auto& in) { return concat_channels(in[0], in[1]); });
  s.projected("scale_channels", {{2, 3, 2, 2}, {2, 3}}, [](const auto& in) { return scale_channels(in[0], in[1]); });
  s.projected("gather_rows", {{4, 3}}, [](const auto& in) {
    const std::size_t rows[] = {2, 0, 2, 3};
    return gather_rows(in[0], rows);
  });
  s.projected("pick", {{3, 5}}, [](const auto& in) {
    const std::size_t cols[] = {4, 0, 2};
    return pick(in[0], cols);
  });
  s.projected("neg_log_clamped", {{3, 4}}, [](const auto& in) { return neg_log_clamped(in[0]); }, 0.1, 1.0);
  s.projected("sum", {{3, 4}}, [](const auto& in) { return sum(in[0]); });
  s.projected("mean", {{3, 4}}, [](const auto& in) { return mean(in[0]); });
  s.projected("reshape", {{3, 4}}, [](const auto& in) { return reshape(in[0], Shape{2, 6}); });

  s.check("eca_apply", opt.primitive_tolerance, [&](Rng& r) {
    EcaModule<D> m = EcaModule<D>::create(5, 3, r);
    for (auto& v : m.kernel.data()) v = uniform(r, -0.6, 0.6);
    std::vector<TD> in{random_tensor({2, 5, 3, 3}, r), m.kernel};
    TD w = random_tensor({2, 5, 3, 3}, r);
    w.set_requires_grad(false);
    return std::pair{std::function<TD()>([=] { return project(eca_apply(m, in[0]), w); }), in};
  });
  for (MutualAttention mode : {MutualAttention::kEca, MutualAttention::kFcOnly}) {
    s.check(mode == MutualAttention::kEca ? "mutual_cue" : "mutual_cue_fc_only", opt.primitive_tolerance,
            [&, mode](Rng& r) {
              MutualHead<D> h = MutualHead<D>::create(3, 3, mode, r);
              for (auto& v : h.reduce_bias.data()) v = uniform(r, -0.5, 0.5);
              for (auto& v : h.eca2c.kernel.data()) v = uniform(r, -0.6, 0.6);
              std::vector<TD> in{random_tensor({2, 3, 2, 2}, r), random_tensor({2, 3, 2, 2}, r), h.reduce_weight,
                                 h.reduce_bias};
              if (mode == MutualAttention::kEca) in.push_back(h.eca2c.kernel);
              TD w = random_tensor({2, 3}, r);
              w.set_requires_grad(false);
              return std::pair{std::function<TD()>([=] { return project(mutual_cue(h, in[0], in[1]), w); }), in};
            });
  }
  s.projected("mutual_representations", {{2, 3}, {2, 3}, {2, 3}}, [](const auto& in) {
    auto [a, b] = mutual_representations(in[0], in[1], in[2]);
    return concat_channels(reshape(a, Shape{2, 3, 1, 1}), reshape(b, Shape{2, 3, 1, 1}));
  });

  auto tiny_model = [](Rng& r) {
    ModelConfig mc;
    mc.backbone.widths = {2, 4};
    mc.backbone.input_height = 8;
    mc.backbone.input_width = 8;
    mc.num_classes = 3;
    mc.eca_k = 3;
    Model<D> m = Model<D>::create(mc, r);
    // Non-zero biases and ECA kernels so every gradient path is exercised.
    for (const auto& [name, p] : m.parameters()) {
      if (name.find("bias") == std::string::npos && name.find("kernel") == std::string::npos) continue;
      Tensor<D> t = p;
      for (auto& v : t.data()) v = uniform(r, -0.1, 0.1);
    }
    return m;
  };
  auto params_of = [](const Model<D>& m, std::vector<TD> extra) {
    for (const auto& [name, p] : m.parameters()) extra.push_back(p);
    return extra;
  };

  s.check("backbone", opt.primitive_tolerance, [&](Rng& r) {
    Model<D> m = tiny_model(r);
    TD x = random_tensor({2, 3, 8, 8}, r);
    TD w = random_tensor({2, 4, 2, 2}, r);
    w.set_requires_grad(false);
    std::vector<TD> in{x};
    for (const auto& [name, p] : m.backbone.parameters()) in.push_back(p);
    return std::pair{std::function<TD()>([=] { return project(m.backbone.forward(x), w); }), in};
  });

  s.check("single_branch_forward+cross_entropy", opt.composite_tolerance, [&](Rng& r) {
    Model<D> m = tiny_model(r);
    TD x = random_tensor({1, 3, 8, 8}, r);
    const std::size_t label = uniform_index(r, 3);
    std::vector<TD> in{x};
    for (const auto& [name, p] : m.backbone.parameters()) in.push_back(p);
    in.push_back(m.classifier.weight);
    in.push_back(m.classifier.bias);
    return std::pair{std::function<TD()>([=] {
                       const std::size_t labels[] = {label};
                       return cross_entropy(single_branch_forward(m.backbone, m.classifier, x), labels);
                     }),
                     in};
  });

  s.check("pair_forward+total_loss", opt.composite_tolerance, [&](Rng& r) {
    Model<D> m = tiny_model(r);
    TD x1 = random_tensor({2, 3, 8, 8}, r), x2 = random_tensor({2, 3, 8, 8}, r);
    const std::vector<std::size_t> l1{uniform_index(r, 3), uniform_index(r, 3)};
    const std::vector<std::size_t> l2{uniform_index(r, 3), uniform_index(r, 3)};
    // A large margin keeps the hinge active, a zero one usually inactive;
    // mix both so either branch is covered.
    const double eps = uniform(r, 0, 1) < 0.5 ? 0.8 : 0.0;
    const double lambda = uniform(r, 0.5, 1.5);
    return std::pair{std::function<TD()>([=] {
                       RepresentationSet<D> reps = pair_forward(m, x1, x2);
                       LossTerms<D> lc = classification_loss(reps, l1, l2);
                       LossTerms<D> lr = ranking_loss(reps, l1, l2, eps);
                       return total_loss(lc.mean, lr.mean, lambda, eps).total;
                     }),
                     params_of(m, {x1, x2})};
  });
  return s.cases;
}

std::string gradcheck_csv(const std::vector<GradcheckCase>& cases) {
  std::string out = "op,instances,max_rel_error,tolerance,status\n";
  char line[256];
  for (const auto& c : cases) {
    std::snprintf(line, sizeof line, "%s,%zu,%.3e,%.0e,%s\n", c.name.c_str(), c.instances, c.max_error, c.tolerance,
                  c.passed() ? "pass" : "FAIL");
    out += line;
  }
  return out;
}

}  // namespace pcnet
