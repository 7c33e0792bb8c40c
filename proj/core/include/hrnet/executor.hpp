#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "hrnet/autodiff.hpp"
#include "hrnet/graph.hpp"

namespace hrnet {

/// Running mean/variance per batch-norm node, indexed like Graph::buffers().
struct BatchNormBuffers {
  std::vector<std::vector<double>> mean;
  std::vector<std::vector<double>> var;
};

/// Numeric values for every parameter of one Graph.
struct ParamStore {
  std::vector<Tensor4> values;  // indexed like Graph::params()
  BatchNormBuffers buffers;
  std::uint64_t seed = 0;

  /// He-uniform conv/linear weights (bound sqrt(6 / fan_in)) unless declared
  /// small-uniform (bound 1e-3), gamma 1, beta 0, biases 0, running stats
  /// (0, 1). Draws follow declaration order.
  static ParamStore init(const Graph& graph, std::uint64_t seed);

  Tensor4& get(const Graph& graph, std::string_view name);
  const Tensor4& get(const Graph& graph, std::string_view name) const;
};

enum class Mode { kTrain, kEval };

struct Forward {
  std::vector<Shape4> shapes;     // per node
  std::vector<Var> nodes;         // per node
  std::vector<Var> params;        // per parameter
  std::vector<Var> outputs;
};

/// Records the whole graph on `tape`. In kTrain mode batch norm uses batch
/// statistics and, when `update` is non-null, folds them into it.
Forward forward(const Graph& graph, const ParamStore& params,
                std::span<const Tensor4> inputs, Tape& tape, Mode mode,
                BatchNormBuffers* update = nullptr);

/// Output values only.
std::vector<Tensor4> run(const Graph& graph, const ParamStore& params,
                         std::span<const Tensor4> inputs, Mode mode = Mode::kEval);

}  // namespace hrnet
