#include "hrnet/segmentation.hpp"

#include <stdexcept>

#include "hrnet/ops.hpp"

namespace hrnet {
namespace {

void check_logits(const Shape4& s, const SegTarget& target) {
  if (s.n != target.n || s.h * 4 != target.h || s.w * 4 != target.w) {
    throw ShapeError("seg loss: logits " + to_string(s) + " do not upsample 4x to target " +
                     std::to_string(target.n) + "x" + std::to_string(target.h) + "x" +
                     std::to_string(target.w));
  }
}

}  // namespace

void SegTarget::validate(int num_classes) const {
  if (labels.size() != static_cast<std::size_t>(n) * h * w) {
    throw ShapeError("SegTarget: expected " + std::to_string(static_cast<std::size_t>(n) * h * w) +
                     " labels, got " + std::to_string(labels.size()));
  }
  for (int l : labels) {
    if (l != ignore_label && (l < 0 || l >= num_classes)) {
      throw std::invalid_argument("SegTarget: label " + std::to_string(l) + " outside [0, " +
                                  std::to_string(num_classes) + ")");
    }
  }
}

Var seg_loss(Tape& tape, Var logits, const SegTarget& target) {
  const Shape4& s = tape.value(logits).shape();
  check_logits(s, target);
  target.validate(s.c);
  const Var up = tape.bilinear_resize(logits, target.h, target.w);
  return tape.softmax_cross_entropy(up, target.labels, target.ignore_label);
}

double softmax_ce_seg_loss(const Tensor4& logits, const SegTarget& target) {
  check_logits(logits.shape(), target);
  target.validate(logits.shape().c);
  const Tensor4 up = ops::bilinear_resize(logits, target.h, target.w);
  return ops::softmax_cross_entropy(up, target.labels, target.ignore_label);
}

std::vector<int> argmax_labels(const Tensor4& logits) {
  const Shape4& s = logits.shape();
  std::vector<int> out(static_cast<std::size_t>(s.n) * s.plane());
  for (int n = 0; n < s.n; ++n) {
    for (std::size_t p = 0; p < s.plane(); ++p) {
      int best = 0;
      double best_v = logits.plane(n, 0)[p];
      for (int c = 1; c < s.c; ++c) {
        const double v = logits.plane(n, c)[p];
        if (v > best_v) {
          best_v = v;
          best = c;
        }
      }
      out[static_cast<std::size_t>(n) * s.plane() + p] = best;
    }
  }
  return out;
}

MiouResult miou(std::span<const int> pred, std::span<const int> target, int num_classes,
                int ignore_label) {
  if (pred.size() != target.size()) throw ShapeError("miou: prediction/target size mismatch");
  if (num_classes < 1) throw std::invalid_argument("miou: num_classes must be >= 1");
  std::vector<long long> inter(static_cast<std::size_t>(num_classes), 0);
  std::vector<long long> uni(static_cast<std::size_t>(num_classes), 0);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const int t = target[i];
    if (t == ignore_label) continue;
    const int p = pred[i];
    if (t < 0 || t >= num_classes || p < 0 || p >= num_classes) {
      throw std::invalid_argument("miou: label outside [0, num_classes)");
    }
    if (p == t) {
      ++inter[static_cast<std::size_t>(t)];
      ++uni[static_cast<std::size_t>(t)];
    } else {
      ++uni[static_cast<std::size_t>(t)];
      ++uni[static_cast<std::size_t>(p)];
    }
  }
  MiouResult r;
  double total = 0.0;
  int present = 0;
  for (int c = 0; c < num_classes; ++c) {
    const auto i = static_cast<std::size_t>(c);
    if (uni[i] == 0) {
      r.per_class.emplace_back();
      continue;
    }
    const double iou = static_cast<double>(inter[i]) / static_cast<double>(uni[i]);
    r.per_class.emplace_back(iou);
    total += iou;
    ++present;
  }
  r.mean = present > 0 ? total / present : 0.0;
  return r;
}

}  // namespace hrnet
