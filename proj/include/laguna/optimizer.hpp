#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "laguna/autodiff.hpp"

namespace laguna {

// lr(k) = base * (1 + cos(pi * k / total)) / 2 for update k = 0, 1, ...;
// reaches exactly 0 at k = total and stays there.
struct CosineSchedule {
  double base_lr = 1e-4;
  std::size_t total_steps = 1;

  double lr_at(std::size_t step) const;
};

// AdamW with decoupled weight decay. Moments are created on the first step
// and must keep matching the parameter shapes afterwards.
struct OptimizerState {
  CosineSchedule schedule;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.01;

  std::size_t step = 0;
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;
};

// One update over every parameter, then zeroes their gradients.
void optimizer_step(std::span<Parameter* const> params, OptimizerState& state);

}  // namespace laguna
