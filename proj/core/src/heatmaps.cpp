#include "hrnet/heatmaps.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "hrnet/ops.hpp"

namespace hrnet {

int KeypointSet::visible() const {
  return static_cast<int>(
      std::count_if(points.begin(), points.end(), [](const Keypoint& p) { return p.v > 0; }));
}

const std::array<double, 17>& coco_falloff() {
  static constexpr std::array<double, 17> k{.052, .050, .050, .070, .070, .158, .158, .144, .144,
                                            .124, .124, .214, .214, .174, .174, .178, .178};
  return k;
}

Tensor4 make_gaussian_targets(const KeypointSet& keypoints, int input_h, int input_w,
                              double sigma) {
  if (input_h < kHeatmapStride || input_w < kHeatmapStride || input_h % kHeatmapStride != 0 ||
      input_w % kHeatmapStride != 0) {
    throw ShapeError("heatmap targets need input dims divisible by 4, got " +
                     std::to_string(input_h) + "x" + std::to_string(input_w));
  }
  const int hh = input_h / kHeatmapStride;
  const int hw = input_w / kHeatmapStride;
  Tensor4 out(Shape4{1, keypoints.size(), hh, hw});
  const double denom = 2.0 * sigma * sigma;
  for (int k = 0; k < keypoints.size(); ++k) {
    const Keypoint& p = keypoints.points[static_cast<std::size_t>(k)];
    if (p.v == 0) continue;
    const double cx = p.x / kHeatmapStride;
    const double cy = p.y / kHeatmapStride;
    std::span<double> plane = out.plane(0, k);
    double peak = 0.0;
    for (int y = 0; y < hh; ++y) {
      for (int x = 0; x < hw; ++x) {
        const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
        const double v = std::exp(-d2 / denom);
        plane[static_cast<std::size_t>(y) * hw + x] = v;
        peak = std::max(peak, v);
      }
    }
    if (peak > 0.0) {
      for (double& v : plane) v /= peak;
    }
  }
  return out;
}

KeypointSet decode_keypoints(const Tensor4& heatmaps, int sample) {
  const Shape4& s = heatmaps.shape();
  if (sample < 0 || sample >= s.n) throw ShapeError("decode_keypoints: sample out of range");
  KeypointSet out;
  out.points.resize(static_cast<std::size_t>(s.c));
  for (int k = 0; k < s.c; ++k) {
    std::span<const double> plane = heatmaps.plane(sample, k);
    const auto best = std::max_element(plane.begin(), plane.end());
    Keypoint& kp = out.points[static_cast<std::size_t>(k)];
    if (*best <= 0.0) continue;
    const auto idx = static_cast<int>(best - plane.begin());
    const int px = idx % s.w;
    const int py = idx / s.w;
    double dx = 0.0;
    double dy = 0.0;
    double second = 0.0;
    // Scan order: up, left, right, down.
    const int nx[4] = {px, px - 1, px + 1, px};
    const int ny[4] = {py - 1, py, py, py + 1};
    for (int i = 0; i < 4; ++i) {
      if (nx[i] < 0 || nx[i] >= s.w || ny[i] < 0 || ny[i] >= s.h) continue;
      const double v = plane[static_cast<std::size_t>(ny[i]) * s.w + nx[i]];
      if (v > second) {
        second = v;
        dx = 0.25 * (nx[i] - px);
        dy = 0.25 * (ny[i] - py);
      }
    }
    kp.x = (px + dx) * kHeatmapStride;
    kp.y = (py + dy) * kHeatmapStride;
    kp.v = 2;
  }
  return out;
}

double oks(const KeypointSet& pred, const KeypointSet& truth) {
  if (pred.size() != truth.size()) {
    throw std::invalid_argument("oks: keypoint counts differ (" + std::to_string(pred.size()) +
                                " vs " + std::to_string(truth.size()) + ")");
  }
  std::span<const double> k = truth.falloff;
  if (k.empty()) {
    if (truth.size() != 17) {
      throw std::invalid_argument("oks: default falloffs need 17 keypoints");
    }
    k = coco_falloff();
  }
  if (static_cast<int>(k.size()) != truth.size()) {
    throw std::invalid_argument("oks: falloff count does not match keypoint count");
  }
  if (truth.scale <= 0.0) throw std::invalid_argument("oks: scale must be positive");
  double num = 0.0;
  int count = 0;
  for (int i = 0; i < truth.size(); ++i) {
    const Keypoint& t = truth.points[static_cast<std::size_t>(i)];
    if (t.v <= 0) continue;
    ++count;
    const Keypoint& p = pred.points[static_cast<std::size_t>(i)];
    if (p.v <= 0) continue;
    const double d2 = (p.x - t.x) * (p.x - t.x) + (p.y - t.y) * (p.y - t.y);
    const double sk = truth.scale * k[static_cast<std::size_t>(i)];
    num += std::exp(-d2 / (2.0 * sk * sk));
  }
  if (count == 0) throw std::domain_error("oks: no visible ground-truth keypoints");
  return num / count;
}

double mse_heatmap_loss(const Tensor4& pred, const Tensor4& target) {
  return ops::mse(pred, target);
}

}  // namespace hrnet
