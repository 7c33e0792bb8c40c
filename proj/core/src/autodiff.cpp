#include "hrnet/autodiff.hpp"

#include <cmath>

namespace hrnet {

Var Tape::push(Tensor4 value, std::span<const Var> inputs,
               std::function<void(Tape&, const Tensor4&)> backward) {
  if (replayed_) throw TapeError("Tape: recording after backward(); call reset() first");
  bool needs = false;
  for (Var v : inputs) needs = needs || node(v).requires_grad;
  Node n;
  n.value = std::move(value);
  n.requires_grad = needs;
  if (needs) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Tape::Node& Tape::node(Var v) {
  if (v.index >= nodes_.size()) throw TapeError("Tape: unknown Var");
  return nodes_[v.index];
}

const Tape::Node& Tape::node(Var v) const {
  if (v.index >= nodes_.size()) throw TapeError("Tape: unknown Var");
  return nodes_[v.index];
}

void Tape::accumulate(Var v, Tensor4 g) {
  Node& n = node(v);
  if (!n.requires_grad) return;
  if (!n.has_grad) {
    n.grad = std::move(g);
    n.has_grad = true;
    return;
  }
  auto dst = n.grad.data();
  const auto src = g.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

void Tape::accumulate(Var v, std::span<const double> g) {
  Node& n = node(v);
  if (!n.requires_grad) return;
  accumulate(v, Tensor4(n.value.shape(), std::vector<double>(g.begin(), g.end())));
}

const Tensor4& Tape::grad(Var v) const {
  const Node& n = node(v);
  if (!replayed_) throw TapeError("Tape: grad() requested before backward()");
  return n.grad;
}

std::vector<Var> Tape::parameters() const {
  std::vector<Var> out;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].requires_grad && !nodes_[i].backward) out.push_back(Var{i});
  }
  return out;
}

void Tape::backward(Var root, double seed) {
  if (replayed_) throw TapeError("Tape: backward() replayed without reset()");
  if (node(root).value.numel() != 1) {
    throw TapeError("Tape: backward() needs a scalar root, got " +
                    to_string(node(root).value.shape()));
  }
  replayed_ = true;
  visited_ = 0;
  accumulate(root, Tensor4(node(root).value.shape(), seed));
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    Node& n = nodes_[i];
    ++visited_;
    if (!n.requires_grad || !n.has_grad || !n.backward) continue;
    // Records only ever write into their inputs' buffers, never their own.
    n.backward(*this, n.grad);
  }
  for (Node& n : nodes_) {
    if (n.requires_grad && !n.has_grad) {
      n.grad = Tensor4(n.value.shape());
      n.has_grad = true;
    }
  }
}

void Tape::reset() {
  nodes_.clear();
  replayed_ = false;
  visited_ = 0;
}

Var Tape::constant(Tensor4 value) { return push(std::move(value), {}, nullptr); }

Var Tape::parameter(Tensor4 value) {
  Var v = push(std::move(value), {}, nullptr);
  nodes_.back().requires_grad = true;
  return v;
}

Var Tape::conv2d(Var input, Var weights, std::optional<Var> bias,
                 const ops::ConvSpec& spec) {
  if (spec.has_bias != bias.has_value()) {
    throw ShapeError("Tape::conv2d: has_bias does not match bias argument");
  }
  std::span<const double> b;
  if (bias) b = value(*bias).data();
  Tensor4 out = ops::conv2d(value(input), spec, value(weights), b);
  std::vector<Var> ins{input, weights};
  if (bias) ins.push_back(*bias);
  return push(std::move(out), ins, [=](Tape& t, const Tensor4& g) {
    const bool need_dx = t.node(input).requires_grad;
    ops::ConvGrads grads =
        ops::conv2d_backward(t.value(input), spec, t.value(weights), g, need_dx);
    if (need_dx) t.accumulate(input, std::move(grads.input));
    t.accumulate(weights, std::move(grads.weights));
    if (bias) t.accumulate(*bias, grads.bias);
  });
}

Var Tape::batch_norm_train(Var input, Var gamma, Var beta, double epsilon,
                           std::optional<RunningStats> running) {
  const Tensor4& x = value(input);
  const int channels = x.shape().c;
  if (static_cast<int>(value(gamma).numel()) != channels ||
      static_cast<int>(value(beta).numel()) != channels) {
    throw ShapeError("batch_norm: channel mismatch, input has " +
                     std::to_string(channels) + " channels");
  }
  std::vector<double> mean;
  std::vector<double> var;
  ops::channel_moments(x, mean, var);
  std::vector<double> inv_std(channels);
  for (int c = 0; c < channels; ++c) inv_std[c] = 1.0 / std::sqrt(var[c] + epsilon);
  if (running && running->mean && running->var) {
    const double count = static_cast<double>(x.shape().n) * x.shape().plane();
    const double unbias = count > 1.0 ? count / (count - 1.0) : 1.0;
    const double m = running->momentum;
    for (int c = 0; c < channels; ++c) {
      (*running->mean)[c] = (1.0 - m) * (*running->mean)[c] + m * mean[c];
      (*running->var)[c] = (1.0 - m) * (*running->var)[c] + m * var[c] * unbias;
    }
  }
  Tensor4 out =
      ops::channel_affine(x, mean, inv_std, value(gamma).data(), value(beta).data());
  const Var ins[] = {input, gamma, beta};
  return push(std::move(out), ins,
              [=, mean = std::move(mean), inv_std = std::move(inv_std)](
                  Tape& t, const Tensor4& g) {
                ops::BatchNormGrads grads = ops::batch_norm_backward(
                    t.value(input), g, mean, inv_std, t.value(gamma).data(), true);
                t.accumulate(input, std::move(grads.input));
                t.accumulate(gamma, grads.gamma);
                t.accumulate(beta, grads.beta);
              });
}

Var Tape::batch_norm_infer(Var input, Var gamma, Var beta,
                           std::span<const double> mean_in,
                           std::span<const double> var_in, double epsilon) {
  const Tensor4& x = value(input);
  const int channels = x.shape().c;
  if (static_cast<int>(value(gamma).numel()) != channels ||
      static_cast<int>(mean_in.size()) != channels ||
      static_cast<int>(var_in.size()) != channels) {
    throw ShapeError("batch_norm: channel mismatch, input has " +
                     std::to_string(channels) + " channels");
  }
  std::vector<double> mean(mean_in.begin(), mean_in.end());
  std::vector<double> inv_std(channels);
  for (int c = 0; c < channels; ++c) inv_std[c] = 1.0 / std::sqrt(var_in[c] + epsilon);
  Tensor4 out =
      ops::channel_affine(x, mean, inv_std, value(gamma).data(), value(beta).data());
  const Var ins[] = {input, gamma, beta};
  return push(std::move(out), ins,
              [=, mean = std::move(mean), inv_std = std::move(inv_std)](
                  Tape& t, const Tensor4& g) {
                ops::BatchNormGrads grads = ops::batch_norm_backward(
                    t.value(input), g, mean, inv_std, t.value(gamma).data(), false);
                t.accumulate(input, std::move(grads.input));
                t.accumulate(gamma, grads.gamma);
                t.accumulate(beta, grads.beta);
              });
}

Var Tape::relu(Var input) {
  const Var ins[] = {input};
  return push(ops::relu(value(input)), ins, [=](Tape& t, const Tensor4& g) {
    t.accumulate(input, ops::relu_backward(t.value(input), g));
  });
}

Var Tape::sum(std::span<const Var> inputs) {
  std::vector<const Tensor4*> refs;
  for (Var v : inputs) refs.push_back(&value(v));
  std::vector<Var> ins(inputs.begin(), inputs.end());
  return push(ops::sum_n(refs), ins, [ins](Tape& t, const Tensor4& g) {
    for (Var v : ins) t.accumulate(v, g);
  });
}

Var Tape::mul(std::span<const Var> inputs) {
  std::vector<const Tensor4*> refs;
  for (Var v : inputs) refs.push_back(&value(v));
  std::vector<Var> ins(inputs.begin(), inputs.end());
  return push(ops::mul_n(refs), ins, [ins](Tape& t, const Tensor4& g) {
    std::vector<const Tensor4*> r;
    for (Var v : ins) r.push_back(&t.value(v));
    for (std::size_t i = 0; i < ins.size(); ++i) {
      if (t.node(ins[i]).requires_grad) t.accumulate(ins[i], ops::mul_n_backward(r, i, g));
    }
  });
}

Var Tape::concat(std::span<const Var> inputs) {
  std::vector<const Tensor4*> refs;
  for (Var v : inputs) refs.push_back(&value(v));
  std::vector<Var> ins(inputs.begin(), inputs.end());
  return push(ops::concat_channels(refs), ins, [ins](Tape& t, const Tensor4& g) {
    int base = 0;
    for (Var v : ins) {
      const int c = t.value(v).shape().c;
      if (t.node(v).requires_grad) t.accumulate(v, ops::slice_channels(g, base, c));
      base += c;
    }
  });
}

Var Tape::slice_channels(Var input, int begin, int count) {
  const Var ins[] = {input};
  return push(ops::slice_channels(value(input), begin, count), ins,
              [=](Tape& t, const Tensor4& g) {
                Tensor4 full(t.value(input).shape());
                const Shape4& s = full.shape();
                for (int n = 0; n < s.n; ++n) {
                  for (int c = 0; c < count; ++c) {
                    const auto src = g.plane(n, c);
                    std::copy(src.begin(), src.end(), full.plane(n, begin + c).begin());
                  }
                }
                t.accumulate(input, std::move(full));
              });
}

Var Tape::bilinear_resize(Var input, int out_h, int out_w) {
  const Var ins[] = {input};
  const Shape4 in = value(input).shape();
  return push(ops::bilinear_resize(value(input), out_h, out_w), ins,
              [=](Tape& t, const Tensor4& g) {
                t.accumulate(input, ops::bilinear_resize_backward(g, in.h, in.w));
              });
}

Var Tape::avg_pool(Var input, const ops::PoolSpec& spec) {
  const Var ins[] = {input};
  const Shape4 in = value(input).shape();
  return push(ops::avg_pool(value(input), spec), ins, [=](Tape& t, const Tensor4& g) {
    t.accumulate(input, ops::avg_pool_backward(g, in, spec));
  });
}

Var Tape::max_pool(Var input, const ops::PoolSpec& spec) {
  const Var ins[] = {input};
  return push(ops::max_pool(value(input), spec), ins, [=](Tape& t, const Tensor4& g) {
    t.accumulate(input, ops::max_pool_backward(t.value(input), g, spec));
  });
}

Var Tape::global_avg_pool(Var input) {
  const Var ins[] = {input};
  const Shape4 in = value(input).shape();
  return push(ops::global_avg_pool(value(input)), ins, [=](Tape& t, const Tensor4& g) {
    t.accumulate(input, ops::global_avg_pool_backward(g, in));
  });
}

Var Tape::linear(Var input, Var weights, std::optional<Var> bias) {
  std::span<const double> b;
  if (bias) b = value(*bias).data();
  std::vector<Var> ins{input, weights};
  if (bias) ins.push_back(*bias);
  return push(ops::linear(value(input), value(weights), b), ins,
              [=](Tape& t, const Tensor4& g) {
                ops::LinearGrads grads =
                    ops::linear_backward(t.value(input), t.value(weights), g);
                t.accumulate(input, std::move(grads.input));
                t.accumulate(weights, std::move(grads.weights));
                if (bias) t.accumulate(*bias, grads.bias);
              });
}

Var Tape::zero_pad(Var input, int out_h, int out_w) {
  const Var ins[] = {input};
  const Shape4 in = value(input).shape();
  return push(ops::zero_pad(value(input), out_h, out_w), ins,
              [=](Tape& t, const Tensor4& g) {
                t.accumulate(input, ops::crop(g, in.h, in.w));
              });
}

Var Tape::mse(Var pred, const Tensor4& target) {
  const Var ins[] = {pred};
  const double loss = ops::mse(value(pred), target);
  return push(Tensor4(Shape4{}, loss), ins, [=](Tape& t, const Tensor4& g) {
    Tensor4 d = ops::mse_backward(t.value(pred), target);
    for (double& v : d.data()) v *= g[0];
    t.accumulate(pred, std::move(d));
  });
}

Var Tape::softmax_cross_entropy(Var logits, std::vector<int> labels, int ignore_label) {
  const Var ins[] = {logits};
  const double loss = ops::softmax_cross_entropy(value(logits), labels, ignore_label);
  return push(Tensor4(Shape4{}, loss), ins,
              [=, labels = std::move(labels)](Tape& t, const Tensor4& g) {
                Tensor4 d = ops::softmax_cross_entropy_backward(t.value(logits),
                                                                labels, ignore_label);
                for (double& v : d.data()) v *= g[0];
                t.accumulate(logits, std::move(d));
              });
}

Var Tape::mean(Var input) {
  const Var ins[] = {input};
  const Tensor4& x = value(input);
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  const double n = static_cast<double>(x.numel());
  return push(Tensor4(Shape4{}, acc / n), ins, [=](Tape& t, const Tensor4& g) {
    t.accumulate(input, Tensor4(t.value(input).shape(), g[0] / n));
  });
}

Var Tape::dot(Var input, const Tensor4& weights) {
  const Tensor4& x = value(input);
  if (x.shape() != weights.shape()) {
    throw ShapeError("dot: " + to_string(x.shape()) + " vs " + to_string(weights.shape()));
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < x.numel(); ++i) acc += x[i] * weights[i];
  const Var ins[] = {input};
  return push(Tensor4(Shape4{}, acc), ins, [=](Tape& t, const Tensor4& g) {
    Tensor4 d = weights;
    for (double& v : d.data()) v *= g[0];
    t.accumulate(input, std::move(d));
  });
}

}  // namespace hrnet
