#pragma once

#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "hrnet/ops.hpp"
#include "hrnet/tensor.hpp"

namespace hrnet {

class TapeError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Handle to a value recorded on a Tape.
struct Var {
  std::size_t index = 0;
  friend bool operator==(const Var&, const Var&) = default;
};

/// Running statistics a training-mode batch_norm record folds into.
struct RunningStats {
  std::vector<double>* mean = nullptr;
  std::vector<double>* var = nullptr;
  double momentum = 0.1;
};

/// Reverse-mode gradient tape.
///
/// Every primitive call evaluates eagerly and appends one record. backward()
/// walks the records once in reverse; a second call without reset() throws.
class Tape {
 public:
  Var constant(Tensor4 value);
  Var parameter(Tensor4 value);

  Var conv2d(Var input, Var weights, std::optional<Var> bias, const ops::ConvSpec& spec);
  /// Normalizes with batch statistics; folds them into `running` if given.
  Var batch_norm_train(Var input, Var gamma, Var beta, double epsilon,
                       std::optional<RunningStats> running = std::nullopt);
  Var batch_norm_infer(Var input, Var gamma, Var beta,
                       std::span<const double> mean, std::span<const double> var,
                       double epsilon);
  Var relu(Var input);
  Var sum(std::span<const Var> inputs);
  Var mul(std::span<const Var> inputs);
  Var concat(std::span<const Var> inputs);
  Var slice_channels(Var input, int begin, int count);
  Var bilinear_resize(Var input, int out_h, int out_w);
  Var avg_pool(Var input, const ops::PoolSpec& spec);
  Var max_pool(Var input, const ops::PoolSpec& spec);
  Var global_avg_pool(Var input);
  Var linear(Var input, Var weights, std::optional<Var> bias);
  Var zero_pad(Var input, int out_h, int out_w);

  /// Scalar (1,1,1,1) losses.
  Var mse(Var pred, const Tensor4& target);
  Var softmax_cross_entropy(Var logits, std::vector<int> labels, int ignore_label = -1);
  Var mean(Var input);
  /// sum(input * weights); used to probe gradients with a random cotangent.
  Var dot(Var input, const Tensor4& weights);

  const Tensor4& value(Var v) const { return node(v).value; }
  /// Gradient buffer; same shape as value(v). Valid after backward().
  const Tensor4& grad(Var v) const;
  bool requires_grad(Var v) const { return node(v).requires_grad; }

  /// Propagates `seed` from the scalar `root` back through every record.
  void backward(Var root, double seed = 1.0);
  void reset();

  std::size_t size() const { return nodes_.size(); }
  /// Records visited by the last backward() call (always size()).
  std::size_t visited() const { return visited_; }
  std::vector<Var> parameters() const;

 private:
  struct Node {
    Tensor4 value;
    Tensor4 grad;
    bool has_grad = false;
    bool requires_grad = false;
    std::function<void(Tape&, const Tensor4&)> backward;
  };

  Var push(Tensor4 value, std::span<const Var> inputs,
           std::function<void(Tape&, const Tensor4&)> backward);
  Node& node(Var v);
  const Node& node(Var v) const;
  void accumulate(Var v, Tensor4 g);
  void accumulate(Var v, std::span<const double> g);

  std::vector<Node> nodes_;
  bool replayed_ = false;
  std::size_t visited_ = 0;
};

}  // namespace hrnet
