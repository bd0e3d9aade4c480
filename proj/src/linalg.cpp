#include "laguna/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "laguna/error.hpp"

namespace laguna {

namespace {

void require_square(const Matrix& m) {
  if (m.rows() != m.cols() || m.empty()) {
    throw Error(ErrorCode::ShapeMismatch, "expected a non-empty square matrix");
  }
}

Matrix with_jitter(const Matrix& m, double jitter) {
  Matrix out = m;
  for (std::size_t i = 0; i < m.rows(); ++i) out(i, i) += jitter;
  return out;
}

double logdet_from_factor(const Matrix& lower) {
  double s = 0.0;
  for (std::size_t i = 0; i < lower.rows(); ++i) s += std::log(lower(i, i));
  return 2.0 * s;
}

}  // namespace

std::optional<Matrix> cholesky(const Matrix& m) {
  require_square(m);
  const std::size_t n = m.rows();
  Matrix lower(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double diag = m(j, j);
    for (std::size_t k = 0; k < j; ++k) diag -= lower(j, k) * lower(j, k);
    if (!(diag > 0.0) || !std::isfinite(diag)) return std::nullopt;
    const double pivot = std::sqrt(diag);
    lower(j, j) = pivot;
    for (std::size_t i = j + 1; i < n; ++i) {
      double v = m(i, j);
      for (std::size_t k = 0; k < j; ++k) v -= lower(i, k) * lower(j, k);
      lower(i, j) = v / pivot;
    }
  }
  return lower;
}

Matrix cholesky_inverse(const Matrix& lower) {
  const std::size_t n = lower.rows();
  // Solve L L^T X = I column by column.
  Matrix inv(n, n);
  std::vector<double> y(n);
  for (std::size_t col = 0; col < n; ++col) {
    for (std::size_t i = 0; i < n; ++i) {
      double v = (i == col) ? 1.0 : 0.0;
      for (std::size_t k = 0; k < i; ++k) v -= lower(i, k) * y[k];
      y[i] = v / lower(i, i);
    }
    for (std::size_t ii = n; ii-- > 0;) {
      double v = y[ii];
      for (std::size_t k = ii + 1; k < n; ++k) v -= lower(k, ii) * inv(k, col);
      inv(ii, col) = v / lower(ii, ii);
    }
  }
  // Symmetrize away rounding asymmetry.
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double avg = 0.5 * (inv(i, j) + inv(j, i));
      inv(i, j) = avg;
      inv(j, i) = avg;
    }
  return inv;
}

void require_symmetric(const Matrix& m, double tolerance) {
  require_square(m);
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = i + 1; j < m.cols(); ++j) {
      const double scale = std::max({1.0, std::abs(m(i, j)), std::abs(m(j, i))});
      if (std::abs(m(i, j) - m(j, i)) > tolerance * scale) {
        throw Error(ErrorCode::NotSymmetric, "entry (" + std::to_string(i) + "," +
                                                 std::to_string(j) + ") differs from its mirror");
      }
    }
}

double cholesky_logdet(const Matrix& m, double jitter) {
  require_symmetric(m);
  if (jitter < 0.0) throw Error(ErrorCode::InvalidConfig, "jitter must be nonnegative");
  auto lower = cholesky(with_jitter(m, jitter));
  if (!lower) throw Error(ErrorCode::NotPositiveDefinite, "Cholesky factorization failed");
  return logdet_from_factor(*lower);
}

LogDetResult logdet_with_policy(const Matrix& m, const JitterPolicy& policy) {
  require_symmetric(m);
  for (double jitter : policy.ladder) {
    if (auto lower = cholesky(with_jitter(m, jitter))) {
      return {logdet_from_factor(*lower), jitter, cholesky_inverse(*lower)};
    }
  }
  throw Error(ErrorCode::NotPositiveDefinite,
              "Gram matrix not factorizable at jitter " + std::to_string(policy.ladder.back()));
}

}  // namespace laguna
