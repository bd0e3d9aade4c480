#include "laguna/layers.hpp"

#include <cmath>

namespace laguna {

Var Affine::forward(Tape& tape, Var x) {
  return ad::add_row(ad::matmul(x, tape.leaf(weight)), tape.leaf(bias));
}

Matrix Affine::infer(const Matrix& x) const {
  Matrix y = matmul(x, weight.value);
  for (std::size_t r = 0; r < y.rows(); ++r) {
    auto row = y.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += bias.value(0, c);
  }
  return y;
}

Var Mlp::forward(Tape& tape, Var x) { return second.forward(tape, ad::tanh(first.forward(tape, x))); }

Matrix Mlp::infer(const Matrix& x) const {
  Matrix h = first.infer(x);
  for (double& v : h.data()) v = std::tanh(v);
  return second.infer(h);
}

void Mlp::collect(std::vector<Parameter*>& out) {
  out.insert(out.end(), {&first.weight, &first.bias, &second.weight, &second.bias});
}

void Mlp::collect(std::vector<const Parameter*>& out) const {
  out.insert(out.end(), {&first.weight, &first.bias, &second.weight, &second.bias});
}

Affine make_affine(const std::string& name, std::size_t in, std::size_t out, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(in)));
  Matrix w(in, out);
  for (double& v : w.data()) v = normal(rng);
  return {Parameter(name + ".weight", std::move(w)), Parameter(name + ".bias", Matrix(1, out))};
}

Mlp make_mlp(const std::string& name, std::size_t in, std::size_t hidden, std::size_t out,
             std::mt19937_64& rng) {
  Affine first = make_affine(name + ".0", in, hidden, rng);
  Affine second = make_affine(name + ".1", hidden, out, rng);
  return {std::move(first), std::move(second)};
}

Matrix near_identity(std::size_t rows, std::size_t cols, double noise, std::mt19937_64& rng) {
  Matrix m(rows, cols);
  if (noise > 0.0) {
    std::normal_distribution<double> normal(0.0, noise);
    for (double& v : m.data()) v = normal(rng);
  }
  for (std::size_t i = 0; i < std::min(rows, cols); ++i) m(i, i) += 1.0;
  return m;
}

}  // namespace laguna
