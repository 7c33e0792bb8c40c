#include "hrnet/trainer.hpp"

#include <cmath>
#include <numeric>
#include <random>

#include "hrnet/builder.hpp"

namespace hrnet {
namespace {

double uniform(std::mt19937_64& gen) { return static_cast<double>(gen() >> 11) * 0x1.0p-53; }

struct OptimizerState {
  std::vector<Tensor4> m;
  std::vector<Tensor4> v;
};

}  // namespace

DivergenceError::DivergenceError(int step, double loss)
    : std::runtime_error("training diverged at step " + std::to_string(step) + " (loss " +
                         std::to_string(loss) + ")"),
      step_(step) {}

double synthetic_oks_falloff() {
  const auto& k = coco_falloff();
  return std::accumulate(k.begin(), k.end(), 0.0) / static_cast<double>(k.size());
}

SyntheticSet make_synthetic(const SyntheticSpec& spec) {
  if (spec.count < 1) throw std::invalid_argument("synthetic set needs at least one sample");
  if (spec.size < 32 || spec.size % 32 != 0) {
    throw std::invalid_argument("synthetic image side must be a positive multiple of 32");
  }
  if (spec.margin < 0.0 || 2.0 * spec.margin >= spec.size - 1) {
    throw std::invalid_argument("synthetic margin leaves no room for keypoints");
  }
  const int s = spec.size;
  SyntheticSet set;
  set.images = Tensor4(Shape4{spec.count, 3, s, s});
  set.targets = Tensor4(Shape4{spec.count, 1, s / kHeatmapStride, s / kHeatmapStride});
  std::mt19937_64 gen(spec.seed);
  const double span = s - 1 - 2.0 * spec.margin;
  const double denom = 2.0 * spec.blob_sigma * spec.blob_sigma;
  for (int n = 0; n < spec.count; ++n) {
    const double cx = spec.margin + span * uniform(gen);
    const double cy = spec.margin + span * uniform(gen);
    KeypointSet kp;
    kp.points.push_back(Keypoint{cx, cy, 2});
    kp.scale = s;
    kp.falloff = {synthetic_oks_falloff()};
    for (int y = 0; y < s; ++y) {
      for (int x = 0; x < s; ++x) {
        const double v = std::exp(-((x - cx) * (x - cx) + (y - cy) * (y - cy)) / denom);
        for (int c = 0; c < 3; ++c) set.images.at(n, c, y, x) = v;
      }
    }
    const Tensor4 target = make_gaussian_targets(kp, s, s);
    std::copy(target.data().begin(), target.data().end(), set.targets.plane(n, 0).begin());
    set.truth.push_back(std::move(kp));
  }
  return set;
}

TrainResult train_toy(const Graph& graph, ParamStore& params, const SyntheticSet& data,
                      const TrainOptions& options) {
  if (options.steps < 0) throw std::invalid_argument("steps must be >= 0");
  OptimizerState state;
  for (const Tensor4& p : params.values) {
    state.m.emplace_back(p.shape());
    state.v.emplace_back(p.shape());
  }
  const Tensor4 inputs[] = {data.images};
  TrainResult result;
  for (int step = 0; step <= options.steps; ++step) {
    Tape tape;
    const bool update = step < options.steps;
    Forward fw = forward(graph, params, inputs, tape, Mode::kTrain,
                         update ? &params.buffers : nullptr);
    const Var loss = tape.mse(fw.outputs.front(), data.targets);
    const double value = tape.value(loss)[0];
    if (!std::isfinite(value)) throw DivergenceError(step, value);
    result.trace.push_back(value);
    if (!update) break;
    tape.backward(loss);

    const double t = step + 1;
    const double bc1 = 1.0 - std::pow(options.beta1, t);
    const double bc2 = 1.0 - std::pow(options.beta2, t);
    for (std::size_t i = 0; i < params.values.size(); ++i) {
      std::span<double> w = params.values[i].data();
      std::span<const double> g = tape.grad(fw.params[i]).data();
      std::span<double> m = state.m[i].data();
      std::span<double> v = state.v[i].data();
      for (std::size_t j = 0; j < w.size(); ++j) {
        if (options.optimizer == Optimizer::kAdam) {
          m[j] = options.beta1 * m[j] + (1.0 - options.beta1) * g[j];
          v[j] = options.beta2 * v[j] + (1.0 - options.beta2) * g[j] * g[j];
          const double mhat = m[j] / bc1;
          const double vhat = v[j] / bc2;
          w[j] -= options.lr * mhat / (std::sqrt(vhat) + options.epsilon);
        } else {
          m[j] = options.momentum * m[j] + g[j];
          w[j] -= options.lr * m[j];
        }
      }
    }
  }
  return result;
}

KeypointEval evaluate_keypoints(const Graph& graph, const ParamStore& params,
                                const SyntheticSet& data) {
  const Tensor4 inputs[] = {data.images};
  const Tensor4 pred = run(graph, params, inputs, Mode::kEval).front();
  KeypointEval eval;
  eval.mse = mse_heatmap_loss(pred, data.targets);
  double total = 0.0;
  for (int n = 0; n < pred.shape().n; ++n) {
    total += oks(decode_keypoints(pred, n), data.truth[static_cast<std::size_t>(n)]);
  }
  eval.mean_oks = total / pred.shape().n;
  return eval;
}

ArchConfig toy_config() {
  ArchConfig c;
  c.width_c = 4;
  c.stage_blocks = {1, 1, 1, 1};
  c.head = HeadKind::kV1;
  c.num_outputs = 1;
  return c;
}

ToyOutcome run_toy_experiment(const ToyExperiment& experiment) {
  if (experiment.train.size != experiment.test.size) {
    throw std::invalid_argument("train and test images must share a size");
  }
  const Graph graph = build(experiment.config);
  ParamStore params = ParamStore::init(graph, experiment.init_seed);
  const SyntheticSet train = make_synthetic(experiment.train);
  const SyntheticSet test = make_synthetic(experiment.test);
  ToyOutcome outcome;
  outcome.trace = train_toy(graph, params, train, experiment.options).trace;
  outcome.held_out = evaluate_keypoints(graph, params, test);
  return outcome;
}

}  // namespace hrnet
