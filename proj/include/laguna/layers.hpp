#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "laguna/autodiff.hpp"

namespace laguna {

// y = x W + b with W: in x out, b: 1 x out.
struct Affine {
  Parameter weight;
  Parameter bias;

  Var forward(Tape& tape, Var x);
  Matrix infer(const Matrix& x) const;
};

// in -> hidden -> out with tanh between the two affine maps.
struct Mlp {
  Affine first;
  Affine second;

  std::size_t in_dim() const { return first.weight.value.rows(); }
  std::size_t hidden_dim() const { return first.weight.value.cols(); }
  std::size_t out_dim() const { return second.weight.value.cols(); }

  Var forward(Tape& tape, Var x);
  Matrix infer(const Matrix& x) const;

  void collect(std::vector<Parameter*>& out);
  void collect(std::vector<const Parameter*>& out) const;
};

// N(0, 1/fan_in) weights, zero bias.
Affine make_affine(const std::string& name, std::size_t in, std::size_t out, std::mt19937_64& rng);
Mlp make_mlp(const std::string& name, std::size_t in, std::size_t hidden, std::size_t out,
             std::mt19937_64& rng);

// Rectangular identity plus N(0, noise^2) perturbation.
Matrix near_identity(std::size_t rows, std::size_t cols, double noise, std::mt19937_64& rng);

}  // namespace laguna
