#include <doctest.h>

#include <random>
#include <vector>

#include "fd.hpp"
#include "laguna/autodiff.hpp"
#include "laguna/losses.hpp"

using namespace laguna;
using laguna::testing::away_from_zero;
using laguna::testing::contract;
using laguna::testing::gradient_error;
using laguna::testing::random_matrix;
using laguna::testing::ScalarGraph;
using laguna::testing::throws_code;

namespace {

constexpr int kTrials = 20;
constexpr double kTolerance = 1e-4;

void check_op(const char* name, const std::function<std::vector<Matrix>(std::mt19937_64&)>& inputs,
              const ScalarGraph& f) {
  std::mt19937_64 rng(0x5EED);
  for (int trial = 0; trial < kTrials; ++trial) {
    const double err = gradient_error(f, inputs(rng));
    INFO(name << " trial " << trial << " rel err " << err);
    CHECK(err <= kTolerance);
  }
}

}  // namespace

TEST_CASE("backward examples") {
  Tape tape;
  Var w = tape.variable(Matrix{{1, -2, 3}, {0.5, 4, -1}});
  tape.backward(ad::sum(w));
  CHECK(w.grad() == Matrix(2, 3, 1.0));

  Tape tape2;
  const Matrix wv{{1, -2, 3}, {0.5, 4, -1}};
  Var w2 = tape2.variable(wv);
  tape2.backward(ad::sum(ad::hadamard(w2, w2)));
  for (std::size_t i = 0; i < wv.size(); ++i) CHECK(w2.grad().data()[i] == 2.0 * wv.data()[i]);

  Tape tape3;
  Var m = tape3.variable(Matrix(2, 2, 1.0));
  CHECK(throws_code([&] { tape3.backward(m); }, ErrorCode::NonScalarLoss));
}

TEST_CASE("parameter leaves accumulate into Parameter::grad") {
  Parameter p("p", Matrix{{1, 2}});
  Tape tape;
  Var a = tape.leaf(p);
  Var b = tape.leaf(p);
  CHECK(a.id() == b.id());
  tape.backward(ad::sum(ad::add(a, b)));
  CHECK(p.grad == Matrix{{2, 2}});
}

TEST_CASE("gradient check: elementary ops") {
  check_op("matmul", [](auto& rng) { return std::vector{random_matrix(3, 4, rng), random_matrix(4, 2, rng)}; },
           [](Tape& t, const std::vector<Var>& v) { return contract(t, ad::matmul(v[0], v[1]), 1); });
  check_op("transpose", [](auto& rng) { return std::vector{random_matrix(3, 4, rng)}; },
           [](Tape& t, const std::vector<Var>& v) { return contract(t, ad::transpose(v[0]), 2); });
  check_op("add", [](auto& rng) { return std::vector{random_matrix(2, 3, rng), random_matrix(2, 3, rng)}; },
           [](Tape& t, const std::vector<Var>& v) { return contract(t, ad::add(v[0], v[1]), 3); });
  check_op("sub", [](auto& rng) { return std::vector{random_matrix(2, 3, rng), random_matrix(2, 3, rng)}; },
           [](Tape& t, const std::vector<Var>& v) { return contract(t, ad::sub(v[0], v[1]), 4); });
  check_op("hadamard", [](auto& rng) { return std::vector{random_matrix(2, 3, rng), random_matrix(2, 3, rng)}; },
           [](Tape& t, const std::vector<Var>& v) { return contract(t, ad::hadamard(v[0], v[1]), 5); });
  check_op("scale", [](auto& rng) { return std::vector{random_matrix(2, 3, rng)}; },
           [](Tape& t, const std::vector<Var>& v) { return contract(t, ad::scale(v[0], -1.7), 6); });
  check_op("add_row", [](auto& rng) { return std::vector{random_matrix(4, 3, rng), random_matrix(1, 3, rng)}; },
           [](Tape& t, const std::vector<Var>& v) { return contract(t, ad::add_row(v[0], v[1]), 7); });
  check_op("tanh", [](auto& rng) { return std::vector{random_matrix(3, 3, rng, -2.0, 2.0)}; },
           [](Tape& t, const std::vector<Var>& v) { return contract(t, ad::tanh(v[0]), 8); });
  check_op("abs", [](auto& rng) { return std::vector{away_from_zero(3, 3, rng)}; },
           [](Tape& t, const std::vector<Var>& v) { return contract(t, ad::abs(v[0]), 9); });
  check_op("mean", [](auto& rng) { return std::vector{random_matrix(3, 5, rng)}; },
           [](Tape& t, const std::vector<Var>& v) { return ad::mean(ad::hadamard(v[0], v[0])); });
  check_op("row_sums", [](auto& rng) { return std::vector{random_matrix(3, 5, rng)}; },
           [](Tape& t, const std::vector<Var>& v) { return contract(t, ad::row_sums(v[0]), 10); });
  check_op("hconcat", [](auto& rng) { return std::vector{random_matrix(3, 2, rng), random_matrix(3, 4, rng)}; },
           [](Tape& t, const std::vector<Var>& v) {
             const std::vector<Var> parts{v[0], v[1], v[0]};
             return contract(t, ad::hconcat(parts), 11);
           });
  check_op("gather_rows", [](auto& rng) { return std::vector{random_matrix(4, 3, rng)}; },
           [](Tape& t, const std::vector<Var>& v) {
             const std::vector<std::size_t> idx{2, 0, 2, 3};
             return contract(t, ad::gather_rows(v[0], idx), 12);
           });
}

TEST_CASE("gradient check: normalizations and losses") {
  check_op("softmax_rows", [](auto& rng) { return std::vector{random_matrix(3, 4, rng, -3.0, 3.0)}; },
           [](Tape& t, const std::vector<Var>& v) { return contract(t, ad::softmax_rows(v[0], 0.7), 13); });
  check_op("l2_normalize_rows", [](auto& rng) { return std::vector{away_from_zero(3, 4, rng)}; },
           [](Tape& t, const std::vector<Var>& v) { return contract(t, ad::l2_normalize_rows(v[0]), 14); });
  check_op("cross_entropy_rows", [](auto& rng) { return std::vector{random_matrix(4, 5, rng, -3.0, 3.0)}; },
           [](Tape&, const std::vector<Var>& v) {
             const std::vector<std::size_t> labels{0, 4, 2, 2};
             return ad::cross_entropy_rows(v[0], labels);
           });
  check_op("cosine_rows", [](auto& rng) { return std::vector{away_from_zero(3, 5, rng), away_from_zero(4, 5, rng)}; },
           [](Tape& t, const std::vector<Var>& v) { return contract(t, ad::cosine_rows(v[0], v[1]), 15); });
  // logdet through a symmetric parametrization so perturbations stay symmetric
  check_op("logdet", [](auto& rng) { return std::vector{random_matrix(4, 6, rng)}; },
           [](Tape&, const std::vector<Var>& v) { return ad::logdet(ad::matmul(v[0], ad::transpose(v[0]))); });
  check_op("logdet(policy)", [](auto& rng) { return std::vector{random_matrix(3, 5, rng)}; },
           [](Tape&, const std::vector<Var>& v) {
             return ad::logdet(ad::matmul(v[0], ad::transpose(v[0])), JitterPolicy{});
           });
  check_op("structure_loss", [](auto& rng) { return std::vector{random_matrix(3, 4, rng)}; },
           [](Tape&, const std::vector<Var>& v) {
             // |pred - target| >= 0.5 everywhere, with both signs present
             Matrix target(3, 4);
             for (std::size_t i = 0; i < target.size(); ++i) target.data()[i] = i % 3 == 0 ? 1.5 : -1.5;
             return ad::structure_loss(v[0], target);
           });
  check_op("absolute_alignment_loss",
           [](auto& rng) { return std::vector{away_from_zero(3, 4, rng), away_from_zero(3, 4, rng)}; },
           [](Tape&, const std::vector<Var>& v) { return ad::absolute_alignment_loss(v[0], v[1]); });
  check_op("volume_regularizer", [](auto& rng) { return std::vector{random_matrix(3, 5, rng), random_matrix(3, 5, rng)}; },
           [](Tape&, const std::vector<Var>& v) {
             Var gs = ad::matmul(v[0], ad::transpose(v[0]));
             Var gt = ad::matmul(v[1], ad::transpose(v[1]));
             return ad::volume_regularizer(gs, gt, -8.0, JitterPolicy{});
           });
}

TEST_CASE("op shape errors") {
  Tape t;
  Var a = t.constant(Matrix(2, 3));
  Var b = t.constant(Matrix(3, 2));
  CHECK(throws_code([&] { ad::add(a, b); }, ErrorCode::ShapeMismatch));
  CHECK(throws_code([&] { ad::matmul(a, a); }, ErrorCode::ShapeMismatch));
  const std::vector<std::size_t> bad{5};
  CHECK(throws_code([&] { ad::cross_entropy_rows(t.constant(Matrix(1, 3)), bad); }, ErrorCode::LabelOutOfRange));
  CHECK(throws_code([&] { ad::cosine_rows(a, b); }, ErrorCode::DimMismatch));
}
