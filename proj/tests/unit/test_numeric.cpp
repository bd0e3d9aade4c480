#include <doctest.h>

#include <cmath>
#include <random>

#include "fd.hpp"
#include "laguna/linalg.hpp"
#include "laguna/matrix.hpp"

using namespace laguna;
using laguna::testing::random_matrix;
using laguna::testing::throws_code;

namespace {

double cofactor_det(const Matrix& m) {
  const std::size_t n = m.rows();
  if (n == 1) return m(0, 0);
  double det = 0.0;
  for (std::size_t c = 0; c < n; ++c) {
    Matrix minor(n - 1, n - 1);
    for (std::size_t r = 1; r < n; ++r) {
      for (std::size_t k = 0, kk = 0; k < n; ++k) {
        if (k == c) continue;
        minor(r - 1, kk++) = m(r, k);
      }
    }
    det += (c % 2 == 0 ? 1.0 : -1.0) * m(0, c) * cofactor_det(minor);
  }
  return det;
}

Matrix random_spd(std::size_t n, std::mt19937_64& rng) {
  const Matrix a = random_matrix(n, n, rng);
  Matrix m = matmul_transposed(a, a);
  for (std::size_t i = 0; i < n; ++i) m(i, i) += 0.5;
  return m;
}

}  // namespace

TEST_CASE("matmul examples") {
  const Matrix m{{1, 2}, {3, 4}};
  CHECK(matmul(Matrix::identity(2), m) == m);
  CHECK(matmul(m, Matrix{{1}, {1}}) == Matrix{{3}, {7}});
  CHECK(throws_code([] { matmul(Matrix(1, 0), Matrix(0, 1)); }, ErrorCode::ShapeMismatch));
  CHECK(throws_code([&] { matmul(m, Matrix(3, 1)); }, ErrorCode::ShapeMismatch));
}

TEST_CASE("matrix rejects non-finite data") {
  CHECK(throws_code([] { Matrix(1, 2, std::vector<double>{1.0, NAN}); }, ErrorCode::NonFinite));
  CHECK(throws_code([] { Matrix(1, 2, std::vector<double>{1.0}); }, ErrorCode::ShapeMismatch));
}

TEST_CASE("softmax_rows") {
  const Matrix half = softmax_rows(Matrix{{0, 0}});
  CHECK(half(0, 0) == doctest::Approx(0.5));
  const Matrix p = softmax_rows(Matrix{{1, 0}});
  CHECK(p(0, 0) == doctest::Approx(0.73106).epsilon(1e-5));
  CHECK(p(0, 1) == doctest::Approx(0.26894).epsilon(1e-5));
  CHECK(throws_code([] { softmax_rows(Matrix{{1, 0}}, 0.0); }, ErrorCode::NonPositiveTemperature));
  CHECK(throws_code([] { softmax_rows(Matrix{{1, 0}}, -1.0); }, ErrorCode::NonPositiveTemperature));

  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    Matrix m = random_matrix(3, 5, rng, -30.0, 30.0);
    for (double tau : {0.05, 1.0, 7.0}) {
      const Matrix s = softmax_rows(m, tau);
      for (std::size_t r = 0; r < 3; ++r) {
        double sum = 0.0;
        std::size_t in_best = 0, out_best = 0;
        for (std::size_t c = 0; c < 5; ++c) {
          sum += s(r, c);
          CHECK(s(r, c) >= 0.0);
          if (m(r, c) > m(r, in_best)) in_best = c;
          if (s(r, c) > s(r, out_best)) out_best = c;
        }
        CHECK(std::abs(sum - 1.0) <= 1e-12);
        CHECK(in_best == out_best);
      }
      Matrix shifted = m;
      for (double& v : shifted.row(1)) v += 123.0;
      const Matrix s2 = softmax_rows(shifted, tau);
      for (std::size_t c = 0; c < 5; ++c) CHECK(s2(1, c) == doctest::Approx(s(1, c)).epsilon(1e-12));
    }
  }
}

TEST_CASE("l2_normalize_rows") {
  const Matrix n = l2_normalize_rows(Matrix{{3, 4}, {0, 0}, {1, 0}});
  CHECK(n(0, 0) == doctest::Approx(0.6));
  CHECK(n(0, 1) == doctest::Approx(0.8));
  CHECK(n(1, 0) == 0.0);
  CHECK(n(1, 1) == 0.0);
  CHECK(n(2, 0) == 1.0);
}

TEST_CASE("cholesky_logdet examples") {
  CHECK(cholesky_logdet(Matrix::identity(4)) == doctest::Approx(0.0));
  CHECK(cholesky_logdet(Matrix{{4, 0}, {0, 9}}) == doctest::Approx(3.58352).epsilon(1e-5));
  CHECK(throws_code([] { cholesky_logdet(Matrix{{1, 1}, {1, 1}}); }, ErrorCode::NotPositiveDefinite));
  CHECK(throws_code([] { cholesky_logdet(Matrix{{2, 1}, {0, 2}}); }, ErrorCode::NotSymmetric));
  CHECK(throws_code([] { cholesky_logdet(Matrix(2, 3, 1.0)); }, ErrorCode::ShapeMismatch));
  // jitter shifts the spectrum
  CHECK(cholesky_logdet(Matrix{{1, 1}, {1, 1}}, 1.0) == doctest::Approx(std::log(3.0)));
}

TEST_CASE("jitter policy escalates, then gives up") {
  const Matrix singular{{1, 1}, {1, 1}};
  const LogDetResult r = logdet_with_policy(singular);
  CHECK(r.jitter > 0.0);
  CHECK(r.value == doctest::Approx(std::log(r.jitter * (2.0 + r.jitter))));
  CHECK(logdet_with_policy(Matrix::identity(3)).jitter == 0.0);
  const Matrix negative{{-1, 0}, {0, 1}};
  CHECK(throws_code([&] { logdet_with_policy(negative); }, ErrorCode::NotPositiveDefinite));
}

TEST_CASE("cholesky_logdet matches the cofactor determinant up to 6x6") {
  std::mt19937_64 rng(2024);
  for (std::size_t n = 1; n <= 6; ++n) {
    for (int trial = 0; trial < 20; ++trial) {
      const Matrix m = random_spd(n, rng);
      CHECK(std::abs(cholesky_logdet(m) - std::log(cofactor_det(m))) < 1e-8);
    }
  }
}

TEST_CASE("logdet gradient equals the inverse") {
  std::mt19937_64 rng(77);
  for (std::size_t n = 1; n <= 6; ++n) {
    for (int trial = 0; trial < 20; ++trial) {
      const Matrix m = random_spd(n, rng);
      Tape tape;
      Var x = tape.variable(m);
      tape.backward(ad::logdet(x));
      const Matrix inv = cholesky_inverse(*cholesky(m));
      const Matrix prod = matmul(m, inv);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          CHECK(std::abs(x.grad()(i, j) - inv(i, j)) < 1e-6);
          CHECK(std::abs(prod(i, j) - (i == j ? 1.0 : 0.0)) < 1e-9);
        }
      }
    }
  }
}
