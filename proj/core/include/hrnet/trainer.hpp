#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "hrnet/config.hpp"
#include "hrnet/executor.hpp"
#include "hrnet/heatmaps.hpp"

namespace hrnet {

/// Single-keypoint task: a bright Gaussian blob on a dark image; the target is
/// the heatmap of the blob centre.
struct SyntheticSpec {
  int count = 64;
  int size = 32;          // square input side, multiple of 32
  double blob_sigma = 2.0;  // input pixels
  double margin = 4.0;    // keep centres this far from the border
  std::uint64_t seed = 1;
};

struct SyntheticSet {
  Tensor4 images;   // (N, 3, size, size)
  Tensor4 targets;  // (N, 1, size/4, size/4)
  std::vector<KeypointSet> truth;
};

SyntheticSet make_synthetic(const SyntheticSpec& spec);

/// OKS scale and falloff used for the synthetic task: s = image side, k = mean
/// of the COCO falloffs.
double synthetic_oks_falloff();

enum class Optimizer { kAdam, kSgd };

struct TrainOptions {
  Optimizer optimizer = Optimizer::kAdam;
  double lr = 1e-3;
  int steps = 300;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double momentum = 0.9;  // SGD only
};

class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(int step, double loss);
  int step() const { return step_; }

 private:
  int step_;
};

struct TrainResult {
  /// trace[i] is the full-batch MSE before update i; the last entry follows
  /// the final update, so the trace has steps + 1 values.
  std::vector<double> trace;
};

/// Full-batch training on `data` in place; batch norm uses batch statistics
/// and updates the running estimates.
TrainResult train_toy(const Graph& graph, ParamStore& params, const SyntheticSet& data,
                      const TrainOptions& options);

struct KeypointEval {
  double mean_oks = 0.0;
  double mse = 0.0;
};

/// Inference-mode predictions decoded and scored against the ground truth.
KeypointEval evaluate_keypoints(const Graph& graph, const ParamStore& params,
                                const SyntheticSet& data);

/// C = 4, one block per stage, V1 head with a single keypoint.
ArchConfig toy_config();

/// End-to-end toy experiment: build, initialise, train on one synthetic set,
/// score on an independently drawn held-out set.
struct ToyExperiment {
  ArchConfig config = toy_config();
  std::uint64_t init_seed = 0;
  SyntheticSpec train{32, 32, 2.0, 4.0, 1};
  SyntheticSpec test{64, 32, 2.0, 4.0, 2};
  TrainOptions options;
};

struct ToyOutcome {
  std::vector<double> trace;
  KeypointEval held_out;
  double loss_ratio() const { return trace.front() / trace.back(); }
};

ToyOutcome run_toy_experiment(const ToyExperiment& experiment);

}  // namespace hrnet
