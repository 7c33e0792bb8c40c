#include "hrnet/executor.hpp"

#include <cmath>
#include <random>

#include "hrnet/analysis.hpp"

namespace hrnet {

ParamStore ParamStore::init(const Graph& graph, std::uint64_t seed) {
  ParamStore store;
  store.seed = seed;
  std::mt19937_64 gen(seed);
  store.values.reserve(graph.params().size());
  for (const ParamDecl& decl : graph.params()) {
    Tensor4 t(decl.shape);
    switch (decl.init) {
      case ParamInit::kOnes: t.fill(1.0); break;
      case ParamInit::kZeros: break;
      case ParamInit::kHeUniform:
      case ParamInit::kSmallUniform: {
        const double bound = decl.init == ParamInit::kSmallUniform
                                 ? 1e-3
                                 : std::sqrt(6.0 / decl.fan_in);
        for (double& v : t.data()) {
          const double u = static_cast<double>(gen() >> 11) * 0x1.0p-53;
          v = (2.0 * u - 1.0) * bound;
        }
        break;
      }
    }
    store.values.push_back(std::move(t));
  }
  for (NodeId id = 0; id < graph.nodes().size(); ++id) {
    if (graph.node(id).as<BatchNormLayer>() == nullptr) continue;
    const auto c = static_cast<std::size_t>(graph.node(id).channels);
    store.buffers.mean.emplace_back(c, 0.0);
    store.buffers.var.emplace_back(c, 1.0);
  }
  return store;
}

Tensor4& ParamStore::get(const Graph& graph, std::string_view name) {
  auto idx = graph.find_param(name);
  if (!idx) throw std::out_of_range("no parameter named '" + std::string(name) + "'");
  return values.at(*idx);
}

const Tensor4& ParamStore::get(const Graph& graph, std::string_view name) const {
  return const_cast<ParamStore*>(this)->get(graph, name);
}

Forward forward(const Graph& graph, const ParamStore& params,
                std::span<const Tensor4> inputs, Tape& tape, Mode mode,
                BatchNormBuffers* update) {
  if (params.values.size() != graph.params().size()) {
    throw ShapeError("parameter store does not match graph (" +
                     std::to_string(params.values.size()) + " vs " +
                     std::to_string(graph.params().size()) + " tensors)");
  }
  if (inputs.size() != graph.inputs().size()) {
    throw ShapeError("graph takes " + std::to_string(graph.inputs().size()) +
                     " inputs, got " + std::to_string(inputs.size()));
  }
  std::vector<Shape4> in_shapes;
  for (const Tensor4& t : inputs) in_shapes.push_back(t.shape());

  Forward fw;
  fw.shapes = infer_shapes(graph, in_shapes);
  fw.params.reserve(params.values.size());
  for (std::size_t i = 0; i < params.values.size(); ++i) {
    if (params.values[i].shape() != graph.params()[i].shape) {
      throw ShapeError("parameter '" + graph.params()[i].name + "' has shape " +
                       to_string(params.values[i].shape()) + ", expected " +
                       to_string(graph.params()[i].shape));
    }
    fw.params.push_back(tape.parameter(params.values[i]));
  }

  fw.nodes.reserve(graph.nodes().size());
  for (NodeId id = 0; id < graph.nodes().size(); ++id) {
    const LayerNode& node = graph.node(id);
    std::vector<Var> xs;
    for (NodeId in : node.inputs) xs.push_back(fw.nodes[in]);
    auto param = [&](std::size_t k) { return fw.params[node.params.at(k)]; };
    const Shape4& out = fw.shapes[id];
    Var v;
    if (const auto* l = node.as<InputLayer>()) {
      v = tape.constant(inputs[static_cast<std::size_t>(l->index)]);
    } else if (const auto* l = node.as<ConvLayer>()) {
      std::optional<Var> bias;
      if (l->spec.has_bias) bias = param(1);
      v = tape.conv2d(xs[0], param(0), bias, l->spec);
    } else if (const auto* l = node.as<BatchNormLayer>()) {
      if (mode == Mode::kTrain) {
        std::optional<RunningStats> running;
        if (update) {
          running = RunningStats{&update->mean.at(l->buffer), &update->var.at(l->buffer),
                                 l->momentum};
        }
        v = tape.batch_norm_train(xs[0], param(0), param(1), l->epsilon, running);
      } else {
        v = tape.batch_norm_infer(xs[0], param(0), param(1),
                                  params.buffers.mean.at(l->buffer),
                                  params.buffers.var.at(l->buffer), l->epsilon);
      }
    } else if (node.as<ReluLayer>()) {
      v = tape.relu(xs[0]);
    } else if (node.as<SumLayer>()) {
      v = tape.sum(xs);
    } else if (node.as<MulLayer>()) {
      v = tape.mul(xs);
    } else if (node.as<ConcatLayer>()) {
      v = tape.concat(xs);
    } else if (node.as<ResizeLayer>()) {
      v = tape.bilinear_resize(xs[0], out.h, out.w);
    } else if (const auto* l = node.as<AvgPoolLayer>()) {
      v = tape.avg_pool(xs[0], l->pool);
    } else if (node.as<GlobalAvgPoolLayer>()) {
      v = tape.global_avg_pool(xs[0]);
    } else if (const auto* l = node.as<LinearLayer>()) {
      std::optional<Var> bias;
      if (l->has_bias) bias = param(1);
      v = tape.linear(xs[0], param(0), bias);
    } else if (node.as<PadLayer>()) {
      v = out == tape.value(xs[0]).shape() ? xs[0] : tape.zero_pad(xs[0], out.h, out.w);
    }
    fw.nodes.push_back(v);
  }
  for (NodeId o : graph.outputs()) fw.outputs.push_back(fw.nodes[o]);
  return fw;
}

std::vector<Tensor4> run(const Graph& graph, const ParamStore& params,
                         std::span<const Tensor4> inputs, Mode mode) {
  Tape tape;
  Forward fw = forward(graph, params, inputs, tape, mode);
  std::vector<Tensor4> out;
  for (Var v : fw.outputs) out.push_back(tape.value(v));
  return out;
}

}  // namespace hrnet
