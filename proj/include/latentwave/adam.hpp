#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "latentwave/autodiff.hpp"

namespace latentwave {

template <class T>
struct AdamState {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  long step_count = 0;
  std::vector<std::vector<T>> first_moment;
  std::vector<std::vector<T>> second_moment;

  AdamState() = default;
  explicit AdamState(double lr) : learning_rate(lr) {}
};

/// Bias-corrected Adam update of `params` in place using `grads`, with the
/// correction folded into the step size: p -= lr_t * m / (sqrt(v) + eps),
/// lr_t = lr * sqrt(1 - beta2^t) / (1 - beta1^t). Moment buffers are created
/// lazily on the first call.
template <class T>
void adam_step(std::vector<Tensor<T>*> params, const std::vector<const Tensor<T>*>& grads, AdamState<T>& state) {
  if (params.size() != grads.size()) throw ShapeError("adam_step: params and grads differ in count");
  if (state.first_moment.empty()) {
    for (const auto* p : params) {
      state.first_moment.emplace_back(p->numel(), T{0});
      state.second_moment.emplace_back(p->numel(), T{0});
    }
  }
  if (state.first_moment.size() != params.size()) throw ShapeError("adam_step: state tracks a different parameter list");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->shape() != grads[i]->shape() || state.first_moment[i].size() != params[i]->numel()) {
      throw ShapeError("adam_step: shape mismatch for parameter " + std::to_string(i));
    }
  }
  ++state.step_count;
  const double b1 = state.beta1, b2 = state.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step_count));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step_count));
  const double lr_t = state.learning_rate * std::sqrt(c2) / c1;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i]->data();
    const auto g = grads[i]->data();
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double gj = static_cast<double>(g[j]);
      const double mj = b1 * static_cast<double>(m[j]) + (1.0 - b1) * gj;
      const double vj = b2 * static_cast<double>(v[j]) + (1.0 - b2) * gj * gj;
      m[j] = static_cast<T>(mj);
      v[j] = static_cast<T>(vj);
      p[j] = static_cast<T>(static_cast<double>(p[j]) - lr_t * mj / (std::sqrt(vj) + state.epsilon));
    }
  }
}

/// Convenience overload over graph leaves: uses and then clears their gradients.
template <class T>
void adam_step(std::vector<Var<T>>& params, AdamState<T>& state) {
  std::vector<Tensor<T>*> values;
  std::vector<const Tensor<T>*> grads;
  for (auto& p : params) {
    values.push_back(&p.value());
    grads.push_back(&p.grad());
  }
  adam_step(values, grads, state);
  for (auto& p : params) p.zero_grad();
}

}  // namespace latentwave
