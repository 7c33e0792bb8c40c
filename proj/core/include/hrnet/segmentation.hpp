#pragma once

#include <optional>
#include <span>
#include <vector>

#include "hrnet/autodiff.hpp"
#include "hrnet/tensor.hpp"

namespace hrnet {

/// Per-pixel class labels at input resolution, laid out (N, H, W).
struct SegTarget {
  int n = 1;
  int h = 1;
  int w = 1;
  std::vector<int> labels;
  int ignore_label = 255;

  /// Throws if the label count is wrong or a label is neither < num_classes
  /// nor the ignore label.
  void validate(int num_classes) const;
};

/// Upsamples quarter-resolution logits 4x bilinearly and applies softmax
/// cross-entropy averaged over non-ignored pixels.
Var seg_loss(Tape& tape, Var logits, const SegTarget& target);
double softmax_ce_seg_loss(const Tensor4& logits, const SegTarget& target);

/// Channel argmax per pixel (first maximum wins), laid out (N, H, W).
std::vector<int> argmax_labels(const Tensor4& logits);

struct MiouResult {
  /// Empty for classes whose union is empty.
  std::vector<std::optional<double>> per_class;
  double mean = 0.0;
};

MiouResult miou(std::span<const int> pred, std::span<const int> target, int num_classes,
                int ignore_label = 255);

}  // namespace hrnet
