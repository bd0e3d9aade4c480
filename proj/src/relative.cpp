#include "laguna/relative.hpp"

#include <cmath>
#include <random>
#include <string>

#include "laguna/error.hpp"
#include "laguna/linalg.hpp"

namespace laguna {

void AnchorSet::validate() const {
  if (anchors.rows() == 0 || anchors.cols() == 0) {
    throw Error(ErrorCode::ShapeMismatch, "anchor set is empty");
  }
  for (std::size_t i = 0; i < anchors.rows(); ++i) {
    if (norm2(anchors.row(i)) < kCosineEpsilon) {
      throw Error(ErrorCode::ZeroVector, "anchor " + std::to_string(i) + " has zero norm");
    }
  }
}

AnchorSet make_reference_anchors(Matrix anchors) {
  AnchorSet set{std::move(anchors), false, AnchorDomain::reference};
  set.validate();
  return set;
}

RelativeEncoding rel(std::span<const double> v, const AnchorSet& anchors) {
  if (v.size() != anchors.dim()) {
    throw Error(ErrorCode::DimMismatch, "vector dim " + std::to_string(v.size()) +
                                            " vs anchor dim " + std::to_string(anchors.dim()));
  }
  const double vn = norm2(v);
  if (vn < kCosineEpsilon) throw Error(ErrorCode::ZeroVector, "query vector has zero norm");
  RelativeEncoding out;
  out.values.reserve(anchors.size());
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    const auto a = anchors.anchors.row(i);
    const double denom = std::max(vn, kCosineEpsilon) * std::max(norm2(a), kCosineEpsilon);
    out.values.push_back(std::clamp(dot(v, a) / denom, -1.0, 1.0));
  }
  return out;
}

Matrix rel_rows(const Matrix& vectors, const AnchorSet& anchors) {
  if (vectors.cols() != anchors.dim()) {
    throw Error(ErrorCode::DimMismatch, "vector dim " + std::to_string(vectors.cols()) +
                                            " vs anchor dim " + std::to_string(anchors.dim()));
  }
  for (std::size_t r = 0; r < vectors.rows(); ++r) {
    if (norm2(vectors.row(r)) < kCosineEpsilon) {
      throw Error(ErrorCode::ZeroVector, "row " + std::to_string(r) + " has zero norm");
    }
  }
  Matrix out = matmul_transposed(l2_normalize_rows(vectors, kCosineEpsilon),
                                 l2_normalize_rows(anchors.anchors, kCosineEpsilon));
  for (double& v : out.data()) v = std::clamp(v, -1.0, 1.0);
  return out;
}

Matrix reference_affinities(const AnchorSet& anchors) {
  anchors.validate();
  Matrix out = rel_rows(anchors.anchors, anchors);
  // Self-cosine is exactly one; symmetrize the rounding of the off-diagonal.
  for (std::size_t i = 0; i < out.rows(); ++i) {
    out(i, i) = 1.0;
    for (std::size_t j = i + 1; j < out.cols(); ++j) out(j, i) = out(i, j);
  }
  return out;
}

double gram_logdet(const Matrix& anchors) {
  return logdet_with_policy(matmul_transposed(anchors, anchors)).value;
}

AnchorSet init_learnable_anchors(std::size_t n_classes, std::size_t dim, const AnchorSet& reference,
                                 std::uint64_t seed, AnchorDomain domain) {
  if (dim < n_classes) {
    throw Error(ErrorCode::DimTooSmall, "anchor dim " + std::to_string(dim) + " < " +
                                            std::to_string(n_classes) +
                                            " classes: the Gram matrix would be singular");
  }
  if (reference.size() != n_classes) {
    throw Error(ErrorCode::ClassCountMismatch, "reference anchors do not match class count");
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix raw(n_classes, dim);
  for (double& v : raw.data()) v = normal(rng);

  // logdet((cA)(cA)^T) = logdet(A A^T) + 2 n log c.
  const double target = gram_logdet(reference.anchors);
  const double current = cholesky_logdet(matmul_transposed(raw, raw));
  const double c = std::exp((target - current) / (2.0 * static_cast<double>(n_classes)));
  for (double& v : raw.data()) v *= c;

  AnchorSet out{std::move(raw), true, domain};
  out.validate();
  return out;
}

std::size_t argmax(std::span<const double> values) {
  if (values.empty()) throw Error(ErrorCode::LengthMismatch, "argmax of empty vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

RelativeClassification classify_by_relative(const RelativeEncoding& r, double temperature) {
  const Matrix probs = softmax_rows(Matrix::row_vector(r.values), temperature);
  RelativeClassification out;
  out.probabilities.assign(probs.data().begin(), probs.data().end());
  out.label = argmax(r.values);
  return out;
}

}  // namespace laguna
