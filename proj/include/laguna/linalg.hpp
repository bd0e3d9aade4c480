#pragma once

#include <array>
#include <optional>

#include "laguna/matrix.hpp"

namespace laguna {

// Lower-triangular Cholesky factor of m, or nullopt when a pivot is not
// strictly positive. Only the lower triangle of m is read.
std::optional<Matrix> cholesky(const Matrix& m);

// Inverse of an SPD matrix from its Cholesky factor.
Matrix cholesky_inverse(const Matrix& lower);

// Throws NotSymmetric if |m_ij - m_ji| exceeds tolerance * max(1, |m_ij|, |m_ji|).
void require_symmetric(const Matrix& m, double tolerance = 1e-10);

// log det(m + jitter * I) = 2 * sum(log diag(L)). Strict: the factorization is
// attempted once, at exactly the requested jitter.
double cholesky_logdet(const Matrix& m, double jitter = 0.0);

// Escalating diagonal jitter for Gram matrices that drift toward singularity.
struct JitterPolicy {
  std::array<double, 4> ladder{0.0, 1e-8, 1e-6, 1e-4};
};

struct LogDetResult {
  double value = 0.0;
  double jitter = 0.0;
  Matrix inverse;  // (m + jitter * I)^-1
};

// Tries each rung of the ladder in order; NotPositiveDefinite after the last.
LogDetResult logdet_with_policy(const Matrix& m, const JitterPolicy& policy = {});

}  // namespace laguna
