#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hrnet/autodiff.hpp"

namespace hrnet {

struct GradcheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  /// Denominator floor of the relative error.
  double floor = 1e-6;
};

struct GradcheckResult {
  std::string name;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  int checked = 0;
  int skipped = 0;  // probes whose stencil crossed a relu kink

  bool passed() const { return checked > 0 && max_rel_error < tolerance; }
};

/// |a - n| / max(|a|, |n|, floor).
double relative_error(double analytic, double numeric, double floor);

/// Scalar-valued function of the recorded inputs.
using TapeFn = std::function<Var(Tape&, std::span<const Var>)>;

/// Compares backward() against central differences for every element of
/// every input.
GradcheckResult gradcheck(std::string name, std::vector<Tensor4> inputs, const TapeFn& fn,
                          const GradcheckOptions& options = {});

std::vector<std::string> primitive_checks();

/// Runs every primitive check whose name starts with `filter` (all when empty).
std::vector<GradcheckResult> check_primitives(std::uint64_t seed, std::string_view filter = {},
                                              const GradcheckOptions& options = {});

/// Sampled parameters of the toy network under the MSE heatmap loss, batch
/// norm in training mode with running statistics left untouched. Probes that
/// flip any relu input are redrawn; fewer than `samples` valid probes fails.
GradcheckResult check_deep(std::uint64_t seed, int samples = 25, double tolerance = 1e-3);

}  // namespace hrnet
