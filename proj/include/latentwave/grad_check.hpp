#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "latentwave/autodiff.hpp"

namespace latentwave {

struct GradCheckOptions {
  /// Coordinates checked per input; every coordinate when the input is smaller.
  std::size_t max_samples_per_input = 64;
  double relative_step = 1e-5;
  /// Lower bound of the relative-error denominator, for near-zero gradients.
  double denominator_floor = 1e-6;
  unsigned seed = 7;
};

/// Worst relative error between reverse-mode gradients of `fn` and central
/// finite differences, over (sampled) coordinates of every input.
inline double grad_check(const std::function<Var<double>(const std::vector<Var<double>>&)>& fn,
                         const std::vector<Tensor<double>>& inputs, const GradCheckOptions& opt = {}) {
  std::vector<Var<double>> vars;
  for (const auto& t : inputs) vars.push_back(parameter(t));
  Var<double> out = fn(vars);
  if (out.value().numel() != 1) throw ShapeError("grad_check: computation must yield a scalar");
  backward(out);

  auto evaluate = [&](std::size_t which, std::size_t idx, double value) {
    std::vector<Var<double>> probe;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      Tensor<double> t = inputs[i];
      if (i == which) t[idx] = value;
      probe.push_back(constant(std::move(t)));
    }
    return fn(probe).value()[0];
  };

  std::mt19937 rng(opt.seed);
  double worst = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const std::size_t n = inputs[i].numel();
    std::vector<std::size_t> coords(n);
    for (std::size_t j = 0; j < n; ++j) coords[j] = j;
    if (n > opt.max_samples_per_input) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(opt.max_samples_per_input);
    }
    const auto& analytic = vars[i].grad();
    for (std::size_t idx : coords) {
      const double x = inputs[i][idx];
      const double h = opt.relative_step * std::max(1.0, std::abs(x));
      const double numeric = (evaluate(i, idx, x + h) - evaluate(i, idx, x - h)) / (2.0 * h);
      const double a = analytic[idx];
      const double denom = std::max({std::abs(a), std::abs(numeric), opt.denominator_floor});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace latentwave
