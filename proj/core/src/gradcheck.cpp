#include "hrnet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "hrnet/builder.hpp"
#include "hrnet/executor.hpp"
#include "hrnet/trainer.hpp"

namespace hrnet {
namespace {

double uniform(std::mt19937_64& gen) { return static_cast<double>(gen() >> 11) * 0x1.0p-53; }

Tensor4 random_tensor(Shape4 shape, std::mt19937_64& gen, double lo = -1.0, double hi = 1.0) {
  Tensor4 t(shape);
  for (double& v : t.data()) v = lo + (hi - lo) * uniform(gen);
  return t;
}

/// Values bounded away from zero so relu kinks stay out of the FD stencil.
Tensor4 away_from_zero(Shape4 shape, std::mt19937_64& gen) {
  Tensor4 t(shape);
  for (double& v : t.data()) {
    const double mag = 0.1 + 0.9 * uniform(gen);
    v = uniform(gen) < 0.5 ? -mag : mag;
  }
  return t;
}

/// Distinct values (a shuffled ramp) so max-pool winners are unambiguous.
Tensor4 distinct_tensor(Shape4 shape, std::mt19937_64& gen) {
  Tensor4 t(shape);
  std::vector<double> ramp(t.numel());
  for (std::size_t i = 0; i < ramp.size(); ++i) ramp[i] = 0.05 * static_cast<double>(i) - 1.0;
  std::shuffle(ramp.begin(), ramp.end(), gen);
  std::copy(ramp.begin(), ramp.end(), t.data().begin());
  return t;
}

struct Case {
  std::string name;
  std::function<GradcheckResult(std::mt19937_64&, const GradcheckOptions&)> run;
};

/// Wraps a tensor-valued op in a random linear functional.
TapeFn probe(std::function<Var(Tape&, std::span<const Var>)> op, Tensor4 cotangent) {
  return [op = std::move(op), r = std::move(cotangent)](Tape& t, std::span<const Var> xs) {
    return t.dot(op(t, xs), r);
  };
}

Case conv_case(std::string name, Shape4 in, int out, int kernel, int stride, bool bias) {
  return {name, [=](std::mt19937_64& gen, const GradcheckOptions& opt) {
            const ops::ConvSpec spec = ops::ConvSpec::make(in.c, out, kernel, stride, bias);
            std::vector<Tensor4> xs{random_tensor(in, gen), random_tensor(spec.weight_shape(), gen)};
            if (bias) xs.push_back(random_tensor(Shape4{out, 1, 1, 1}, gen));
            const Tensor4 r = random_tensor(spec.output_shape(in), gen);
            return gradcheck(name, std::move(xs),
                             probe(
                                 [spec, bias](Tape& t, std::span<const Var> v) {
                                   std::optional<Var> b;
                                   if (bias) b = v[2];
                                   return t.conv2d(v[0], v[1], b, spec);
                                 },
                                 r),
                             opt);
          }};
}

Case resize_case(std::string name, Shape4 in, int oh, int ow) {
  return {name, [=](std::mt19937_64& gen, const GradcheckOptions& opt) {
            const Tensor4 r = random_tensor(Shape4{in.n, in.c, oh, ow}, gen);
            return gradcheck(name, {random_tensor(in, gen)},
                             probe([=](Tape& t, std::span<const Var> v) {
                               return t.bilinear_resize(v[0], oh, ow);
                             }, r),
                             opt);
          }};
}

std::vector<Case> cases() {
  std::vector<Case> c;
  c.push_back(conv_case("conv2d_3x3", Shape4{1, 2, 5, 5}, 3, 3, 1, false));
  c.push_back(conv_case("conv2d_3x3_stride2", Shape4{2, 3, 6, 6}, 4, 3, 2, false));
  c.push_back(conv_case("conv2d_1x1_bias", Shape4{2, 3, 4, 3}, 2, 1, 1, true));
  c.push_back(conv_case("conv2d_1x1_stride2", Shape4{1, 2, 5, 4}, 3, 1, 2, false));
  c.push_back({"batch_norm_train", [](std::mt19937_64& gen, const GradcheckOptions& opt) {
                 const Shape4 s{3, 2, 3, 3};
                 const Tensor4 r = random_tensor(s, gen);
                 return gradcheck("batch_norm_train",
                                  {random_tensor(s, gen), random_tensor(Shape4{2, 1, 1, 1}, gen, 0.5, 1.5),
                                   random_tensor(Shape4{2, 1, 1, 1}, gen)},
                                  probe([](Tape& t, std::span<const Var> v) {
                                    return t.batch_norm_train(v[0], v[1], v[2], 1e-5);
                                  }, r),
                                  opt);
               }});
  c.push_back({"batch_norm_infer", [](std::mt19937_64& gen, const GradcheckOptions& opt) {
                 const Shape4 s{2, 3, 2, 3};
                 const Tensor4 r = random_tensor(s, gen);
                 std::vector<double> mean(3);
                 std::vector<double> var(3);
                 for (int i = 0; i < 3; ++i) {
                   mean[i] = uniform(gen) - 0.5;
                   var[i] = 0.5 + uniform(gen);
                 }
                 return gradcheck("batch_norm_infer",
                                  {random_tensor(s, gen), random_tensor(Shape4{3, 1, 1, 1}, gen),
                                   random_tensor(Shape4{3, 1, 1, 1}, gen)},
                                  probe([mean, var](Tape& t, std::span<const Var> v) {
                                    return t.batch_norm_infer(v[0], v[1], v[2], mean, var, 1e-5);
                                  }, r),
                                  opt);
               }});
  c.push_back({"relu", [](std::mt19937_64& gen, const GradcheckOptions& opt) {
                 const Shape4 s{2, 2, 3, 3};
                 const Tensor4 r = random_tensor(s, gen);
                 return gradcheck("relu", {away_from_zero(s, gen)},
                                  probe([](Tape& t, std::span<const Var> v) { return t.relu(v[0]); }, r),
                                  opt);
               }});
  c.push_back({"sum", [](std::mt19937_64& gen, const GradcheckOptions& opt) {
                 const Shape4 s{1, 2, 3, 2};
                 const Tensor4 r = random_tensor(s, gen);
                 return gradcheck("sum", {random_tensor(s, gen), random_tensor(s, gen), random_tensor(s, gen)},
                                  probe([](Tape& t, std::span<const Var> v) { return t.sum(v); }, r), opt);
               }});
  c.push_back({"mul", [](std::mt19937_64& gen, const GradcheckOptions& opt) {
                 const Shape4 s{1, 2, 3, 2};
                 const Tensor4 r = random_tensor(s, gen);
                 return gradcheck("mul", {random_tensor(s, gen), random_tensor(s, gen), random_tensor(s, gen)},
                                  probe([](Tape& t, std::span<const Var> v) { return t.mul(v); }, r), opt);
               }});
  c.push_back({"concat", [](std::mt19937_64& gen, const GradcheckOptions& opt) {
                 const Tensor4 r = random_tensor(Shape4{2, 5, 2, 3}, gen);
                 return gradcheck("concat",
                                  {random_tensor(Shape4{2, 2, 2, 3}, gen), random_tensor(Shape4{2, 3, 2, 3}, gen)},
                                  probe([](Tape& t, std::span<const Var> v) { return t.concat(v); }, r), opt);
               }});
  c.push_back({"slice_channels", [](std::mt19937_64& gen, const GradcheckOptions& opt) {
                 const Tensor4 r = random_tensor(Shape4{1, 2, 3, 3}, gen);
                 return gradcheck("slice_channels", {random_tensor(Shape4{1, 4, 3, 3}, gen)},
                                  probe([](Tape& t, std::span<const Var> v) {
                                    return t.slice_channels(v[0], 1, 2);
                                  }, r),
                                  opt);
               }});
  c.push_back(resize_case("bilinear_resize_up", Shape4{1, 1, 3, 3}, 6, 6));
  c.push_back(resize_case("bilinear_resize_down", Shape4{1, 2, 8, 6}, 4, 3));
  c.push_back(resize_case("bilinear_resize_fractional", Shape4{1, 1, 3, 3}, 5, 4));
  c.push_back({"avg_pool", [](std::mt19937_64& gen, const GradcheckOptions& opt) {
                 const ops::PoolSpec pool{2, 2, true};
                 const Shape4 s{1, 2, 5, 4};
                 const Tensor4 r = random_tensor(Shape4{1, 2, pool.out_size(5), pool.out_size(4)}, gen);
                 return gradcheck("avg_pool", {random_tensor(s, gen)},
                                  probe([pool](Tape& t, std::span<const Var> v) {
                                    return t.avg_pool(v[0], pool);
                                  }, r),
                                  opt);
               }});
  c.push_back({"max_pool", [](std::mt19937_64& gen, const GradcheckOptions& opt) {
                 const ops::PoolSpec pool{2, 2, false};
                 const Tensor4 r = random_tensor(Shape4{1, 2, 2, 2}, gen);
                 return gradcheck("max_pool", {distinct_tensor(Shape4{1, 2, 4, 4}, gen)},
                                  probe([pool](Tape& t, std::span<const Var> v) {
                                    return t.max_pool(v[0], pool);
                                  }, r),
                                  opt);
               }});
  c.push_back({"global_avg_pool", [](std::mt19937_64& gen, const GradcheckOptions& opt) {
                 const Tensor4 r = random_tensor(Shape4{2, 3, 1, 1}, gen);
                 return gradcheck("global_avg_pool", {random_tensor(Shape4{2, 3, 3, 2}, gen)},
                                  probe([](Tape& t, std::span<const Var> v) {
                                    return t.global_avg_pool(v[0]);
                                  }, r),
                                  opt);
               }});
  c.push_back({"linear", [](std::mt19937_64& gen, const GradcheckOptions& opt) {
                 const Tensor4 r = random_tensor(Shape4{2, 4, 1, 1}, gen);
                 return gradcheck("linear",
                                  {random_tensor(Shape4{2, 3, 2, 2}, gen), random_tensor(Shape4{4, 12, 1, 1}, gen),
                                   random_tensor(Shape4{4, 1, 1, 1}, gen)},
                                  probe([](Tape& t, std::span<const Var> v) {
                                    return t.linear(v[0], v[1], v[2]);
                                  }, r),
                                  opt);
               }});
  c.push_back({"zero_pad", [](std::mt19937_64& gen, const GradcheckOptions& opt) {
                 const Tensor4 r = random_tensor(Shape4{1, 2, 4, 5}, gen);
                 return gradcheck("zero_pad", {random_tensor(Shape4{1, 2, 3, 3}, gen)},
                                  probe([](Tape& t, std::span<const Var> v) {
                                    return t.zero_pad(v[0], 4, 5);
                                  }, r),
                                  opt);
               }});
  c.push_back({"mse", [](std::mt19937_64& gen, const GradcheckOptions& opt) {
                 const Shape4 s{2, 2, 3, 3};
                 const Tensor4 target = random_tensor(s, gen);
                 return gradcheck("mse", {random_tensor(s, gen)},
                                  [target](Tape& t, std::span<const Var> v) {
                                    return t.mse(v[0], target);
                                  },
                                  opt);
               }});
  c.push_back({"softmax_cross_entropy", [](std::mt19937_64& gen, const GradcheckOptions& opt) {
                 const Shape4 s{2, 4, 3, 3};
                 std::vector<int> labels(2 * 9);
                 for (std::size_t i = 0; i < labels.size(); ++i) {
                   labels[i] = i % 7 == 3 ? -1 : static_cast<int>(gen() % 4);
                 }
                 return gradcheck("softmax_cross_entropy", {random_tensor(s, gen, -2.0, 2.0)},
                                  [labels](Tape& t, std::span<const Var> v) {
                                    return t.softmax_cross_entropy(v[0], labels, -1);
                                  },
                                  opt);
               }});
  c.push_back({"mean", [](std::mt19937_64& gen, const GradcheckOptions& opt) {
                 return gradcheck("mean", {random_tensor(Shape4{2, 3, 2, 2}, gen)},
                                  [](Tape& t, std::span<const Var> v) { return t.mean(v[0]); }, opt);
               }});
  return c;
}

}  // namespace

double relative_error(double analytic, double numeric, double floor) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / scale;
}

GradcheckResult gradcheck(std::string name, std::vector<Tensor4> inputs, const TapeFn& fn,
                          const GradcheckOptions& options) {
  GradcheckResult result;
  result.name = std::move(name);
  result.tolerance = options.tolerance;

  Tape tape;
  std::vector<Var> vars;
  for (const Tensor4& x : inputs) vars.push_back(tape.parameter(x));
  const Var loss = fn(tape, vars);
  tape.backward(loss);

  auto evaluate = [&](const std::vector<Tensor4>& xs) {
    Tape t;
    std::vector<Var> vs;
    for (const Tensor4& x : xs) vs.push_back(t.parameter(x));
    return t.value(fn(t, vs))[0];
  };

  std::vector<Tensor4> probe_inputs = inputs;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const Tensor4& analytic = tape.grad(vars[i]);
    for (std::size_t j = 0; j < inputs[i].numel(); ++j) {
      const double x0 = inputs[i][j];
      probe_inputs[i][j] = x0 + options.step;
      const double up = evaluate(probe_inputs);
      probe_inputs[i][j] = x0 - options.step;
      const double down = evaluate(probe_inputs);
      probe_inputs[i][j] = x0;
      const double numeric = (up - down) / (2.0 * options.step);
      result.max_rel_error =
          std::max(result.max_rel_error, relative_error(analytic[j], numeric, options.floor));
      ++result.checked;
    }
  }
  return result;
}

std::vector<std::string> primitive_checks() {
  std::vector<std::string> names;
  for (const Case& c : cases()) names.push_back(c.name);
  return names;
}

std::vector<GradcheckResult> check_primitives(std::uint64_t seed, std::string_view filter,
                                              const GradcheckOptions& options) {
  std::vector<GradcheckResult> out;
  const std::vector<Case> all = cases();
  for (std::size_t i = 0; i < all.size(); ++i) {
    const Case& c = all[i];
    if (!filter.empty() && !std::string_view(c.name).starts_with(filter)) continue;
    // Each case draws from its own stream so filtering does not shift the data.
    std::seed_seq seq{static_cast<std::uint64_t>(seed), static_cast<std::uint64_t>(i)};
    std::mt19937_64 gen(seq);
    out.push_back(c.run(gen, options));
  }
  return out;
}

GradcheckResult check_deep(std::uint64_t seed, int samples, double tolerance) {
  const Graph graph = build(toy_config());
  ParamStore params = ParamStore::init(graph, seed);
  std::mt19937_64 gen(seed ^ 0x9e3779b97f4a7c15ULL);
  const Tensor4 inputs[] = {random_tensor(Shape4{4, 3, 32, 32}, gen)};
  const Tensor4 target = random_tensor(Shape4{4, 1, 8, 8}, gen, 0.0, 1.0);

  std::vector<NodeId> relus;
  for (NodeId id = 0; id < graph.nodes().size(); ++id) {
    if (graph.node(id).as<ReluLayer>()) relus.push_back(graph.node(id).inputs.front());
  }
  // Loss plus the sign pattern of every relu input.
  auto evaluate = [&](const ParamStore& p, std::vector<bool>* signs) {
    Tape tape;
    Forward fw = forward(graph, p, inputs, tape, Mode::kTrain);
    const double loss = tape.value(tape.mse(fw.outputs.front(), target))[0];
    if (signs) {
      signs->clear();
      for (NodeId id : relus) {
        for (double v : tape.value(fw.nodes[id]).data()) signs->push_back(v > 0.0);
      }
    }
    return loss;
  };

  Tape tape;
  Forward fw = forward(graph, params, inputs, tape, Mode::kTrain);
  tape.backward(tape.mse(fw.outputs.front(), target));

  std::size_t total = 0;
  for (const Tensor4& t : params.values) total += t.numel();

  GradcheckResult result;
  result.name = "deep_toy_network";
  result.tolerance = tolerance;
  const double h = 1e-6;
  std::vector<bool> up_signs;
  std::vector<bool> down_signs;
  const int max_draws = 4 * samples;
  for (int draw = 0; draw < max_draws && result.checked < samples; ++draw) {
    std::size_t flat = gen() % total;
    std::size_t which = 0;
    while (flat >= params.values[which].numel()) flat -= params.values[which++].numel();
    const double analytic = tape.grad(fw.params[which])[flat];

    ParamStore probe = params;
    probe.values[which][flat] += h;
    const double up = evaluate(probe, &up_signs);
    probe.values[which][flat] -= 2.0 * h;
    const double down = evaluate(probe, &down_signs);
    // A relu input changing sign inside the stencil makes the loss
    // non-differentiable there; the central difference is meaningless.
    if (up_signs != down_signs) {
      ++result.skipped;
      continue;
    }
    const double numeric = (up - down) / (2.0 * h);
    result.max_rel_error = std::max(result.max_rel_error, relative_error(analytic, numeric, 1e-6));
    ++result.checked;
  }
  if (result.checked < samples) result.max_rel_error = std::numeric_limits<double>::infinity();
  return result;
}

}  // namespace hrnet
