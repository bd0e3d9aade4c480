#include "laguna/optimizer.hpp"

#include <cmath>
#include <numbers>

#include "laguna/error.hpp"

namespace laguna {

double CosineSchedule::lr_at(std::size_t step) const {
  if (total_steps == 0 || step >= total_steps) return 0.0;
  const double progress = static_cast<double>(step) / static_cast<double>(total_steps);
  return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

void optimizer_step(std::span<Parameter* const> params, OptimizerState& state) {
  if (params.empty()) throw Error(ErrorCode::EmptyParameterList, "nothing to optimize");
  if (state.first_moment.empty()) {
    for (const Parameter* p : params) {
      state.first_moment.emplace_back(p->value.rows(), p->value.cols());
      state.second_moment.emplace_back(p->value.rows(), p->value.cols());
    }
  }
  if (state.first_moment.size() != params.size()) {
    throw Error(ErrorCode::ShapeMismatch, "parameter list changed between steps");
  }

  const double lr = state.schedule.lr_at(state.step);
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bias1 = 1.0 - std::pow(state.beta1, t);
  const double bias2 = 1.0 - std::pow(state.beta2, t);

  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = *params[k];
    if (p.grad.size() != p.value.size()) p.zero_grad();
    auto value = p.value.data();
    auto grad = p.grad.data();
    auto m = state.first_moment[k].data();
    auto v = state.second_moment[k].data();
    if (m.size() != value.size()) throw Error(ErrorCode::ShapeMismatch, "moment shape drifted");
    for (std::size_t i = 0; i < value.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * grad[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * grad[i] * grad[i];
      value[i] *= 1.0 - lr * state.weight_decay;
      value[i] -= lr * (m[i] / bias1) / (std::sqrt(v[i] / bias2) + state.epsilon);
    }
    p.zero_grad();
  }
}

}  // namespace laguna
