#pragma once

#include <array>
#include <vector>

#include "hrnet/tensor.hpp"

namespace hrnet {

/// Heatmaps live at 1/4 of the network input resolution.
inline constexpr int kHeatmapStride = 4;
inline constexpr double kHeatmapSigma = 2.0;

struct Keypoint {
  double x = 0.0;  // input-image pixels
  double y = 0.0;
  int v = 0;       // 0 unlabeled, 1 labeled but hidden, 2 visible
};

struct KeypointSet {
  std::vector<Keypoint> points;
  /// Object scale s of the OKS formula.
  double scale = 1.0;
  /// Per-keypoint falloff k_i; empty means the COCO constants (K must be 17).
  std::vector<double> falloff;

  int size() const { return static_cast<int>(points.size()); }
  int visible() const;
};

/// COCO keypoint falloffs, k_i = 2 * sigma_i.
const std::array<double, 17>& coco_falloff();

/// (1, K, H/4, W/4) targets: a Gaussian of std `sigma` (heatmap pixels) around
/// (x/4, y/4), scaled so the largest grid value is 1; zero channel when v == 0.
Tensor4 make_gaussian_targets(const KeypointSet& keypoints, int input_h, int input_w,
                              double sigma = kHeatmapSigma);

/// Argmax per channel, shifted 0.25 heatmap pixel toward the largest of the
/// four neighbours (first in scan order on ties; no shift when that neighbour
/// is not positive), then scaled by 4. Channels with no positive response are
/// returned with v = 0.
KeypointSet decode_keypoints(const Tensor4& heatmaps, int sample = 0);

/// Object keypoint similarity against `truth` (which supplies scale and
/// falloff). Undetected predictions contribute 0. Throws std::domain_error if
/// no ground-truth keypoint is visible.
double oks(const KeypointSet& pred, const KeypointSet& truth);

double mse_heatmap_loss(const Tensor4& pred, const Tensor4& target);

}  // namespace hrnet
