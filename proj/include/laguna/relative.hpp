#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "laguna/matrix.hpp"

namespace laguna {

inline constexpr double kCosineEpsilon = 1e-12;

enum class AnchorDomain { reference, source, target };

// One anchor row per class. Reference anchors are used exactly as loaded:
// their row norms feed the Gram log-determinant.
struct AnchorSet {
  Matrix anchors;
  bool learnable = false;
  AnchorDomain domain = AnchorDomain::reference;

  std::size_t size() const { return anchors.rows(); }
  std::size_t dim() const { return anchors.cols(); }

  // Throws ZeroVector if any row has norm below kCosineEpsilon.
  void validate() const;
};

AnchorSet make_reference_anchors(Matrix anchors);

// Cosine similarity of a vector against every anchor.
struct RelativeEncoding {
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
};

RelativeEncoding rel(std::span<const double> v, const AnchorSet& anchors);

// Batched rel over the rows of `vectors`. Rows with norm below kCosineEpsilon
// throw ZeroVector.
Matrix rel_rows(const Matrix& vectors, const AnchorSet& anchors);

// Row i = rel(anchors[i], anchors); unit diagonal, symmetric.
Matrix reference_affinities(const AnchorSet& anchors);

// Seeded standard-normal rows, rescaled by one constant so the Gram
// log-determinant equals the reference's. Requires dim >= n_classes.
AnchorSet init_learnable_anchors(std::size_t n_classes, std::size_t dim, const AnchorSet& reference,
                                 std::uint64_t seed, AnchorDomain domain = AnchorDomain::source);

// log det(A A^T) under the default jitter policy.
double gram_logdet(const Matrix& anchors);

struct RelativeClassification {
  std::vector<double> probabilities;
  std::size_t label = 0;
};

// softmax(r / temperature); label is the argmax with lowest-index tie-break.
RelativeClassification classify_by_relative(const RelativeEncoding& r, double temperature = 1.0);

// Lowest index of the maximum.
std::size_t argmax(std::span<const double> values);

}  // namespace laguna
