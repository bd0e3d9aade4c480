#pragma once

#include <cstddef>
#include <optional>
#include <span>

#include "laguna/autodiff.hpp"
#include "laguna/linalg.hpp"
#include "laguna/relative.hpp"

namespace laguna {

struct LossWeights {
  double lambda1 = 1.0;    // classification
  double lambda2 = 0.1;    // structure
  double lambda3 = 0.001;  // volume regularization

  void validate() const;
};

struct GramTriple {
  Matrix gamma_ref;
  Matrix gamma_s;
  Matrix gamma_t;
};

GramTriple gram_triple(const Matrix& reference, const Matrix& source, const Matrix& target);

// Mean absolute difference over the components. Values in [0, 2] for
// cosine encodings.
double structure_loss(const RelativeEncoding& pred, const RelativeEncoding& target);
// -log softmax(logits)[label] in log-sum-exp form.
double cross_entropy(std::span<const double> logits, std::size_t label);
// |logdet(gamma_t) - logdet(gamma)| + |logdet(gamma_s) - logdet(gamma)|.
double volume_regularizer(const GramTriple& g, const JitterPolicy& policy = {});
// lambda1 * CE(softmax(r_pred / temperature), label) + lambda2 * L_S(r_pred, r_anchor).
double supervisor_objective(const RelativeEncoding& r_pred, std::size_t label,
                            const RelativeEncoding& r_anchor, const LossWeights& w,
                            double temperature = 1.0);
double classifier_objective(double ce, double ls, double reg, const LossWeights& w);
// 1 - cos(g, anchor).
double absolute_alignment_loss(std::span<const double> g, std::span<const double> anchor);

namespace ad {

// Mean over all entries of |pred - target|; target is a constant.
Var structure_loss(Var pred_rows, const Matrix& target_rows);
// Mean over rows of 1 - cos(x_i, anchors_i).
Var absolute_alignment_loss(Var x_rows, Var anchor_rows);
// Differentiable in the learnable Grams; the reference logdet is a constant.
Var volume_regularizer(Var gamma_s, Var gamma_t, double reference_logdet,
                       const JitterPolicy& policy = {});
// Batched stage-two objective on relative encodings against fixed anchors.
Var supervisor_objective(Var relative_rows, std::span<const std::size_t> labels,
                         const Matrix& anchor_relative_rows, const LossWeights& w,
                         double temperature = 1.0);
// lambda-weighted sum; absent terms contribute nothing.
Var classifier_objective(Var ce, std::optional<Var> ls, std::optional<Var> reg,
                         const LossWeights& w);

}  // namespace ad

}  // namespace laguna
