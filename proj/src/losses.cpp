#include "laguna/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "laguna/error.hpp"

namespace laguna {

void LossWeights::validate() const {
  if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0) || !(lambda3 >= 0.0)) {
    throw Error(ErrorCode::InvalidConfig, "loss weights must be nonnegative");
  }
}

GramTriple gram_triple(const Matrix& reference, const Matrix& source, const Matrix& target) {
  return {matmul_transposed(reference, reference), matmul_transposed(source, source),
          matmul_transposed(target, target)};
}

double structure_loss(const RelativeEncoding& pred, const RelativeEncoding& target) {
  if (pred.size() != target.size() || pred.size() == 0) {
    throw Error(ErrorCode::LengthMismatch, "encodings differ in length");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += std::abs(pred.values[i] - target.values[i]);
  return s / static_cast<double>(pred.size());
}

double cross_entropy(std::span<const double> logits, std::size_t label) {
  if (label >= logits.size()) {
    throw Error(ErrorCode::LabelOutOfRange, "label " + std::to_string(label) + " >= " +
                                                std::to_string(logits.size()));
  }
  const double peak = *std::max_element(logits.begin(), logits.end());
  double lse = 0.0;
  for (double v : logits) lse += std::exp(v - peak);
  return peak + std::log(lse) - logits[label];
}

double volume_regularizer(const GramTriple& g, const JitterPolicy& policy) {
  const double ref = logdet_with_policy(g.gamma_ref, policy).value;
  const double s = logdet_with_policy(g.gamma_s, policy).value;
  const double t = logdet_with_policy(g.gamma_t, policy).value;
  return std::abs(t - ref) + std::abs(s - ref);
}

double supervisor_objective(const RelativeEncoding& r_pred, std::size_t label,
                            const RelativeEncoding& r_anchor, const LossWeights& w,
                            double temperature) {
  if (!(temperature > 0.0)) throw Error(ErrorCode::NonPositiveTemperature, "temperature must be > 0");
  std::vector<double> logits = r_pred.values;
  for (double& v : logits) v /= temperature;
  return w.lambda1 * cross_entropy(logits, label) + w.lambda2 * structure_loss(r_pred, r_anchor);
}

double classifier_objective(double ce, double ls, double reg, const LossWeights& w) {
  return w.lambda1 * ce + w.lambda2 * ls + w.lambda3 * reg;
}

double absolute_alignment_loss(std::span<const double> g, std::span<const double> anchor) {
  if (g.size() != anchor.size()) {
    throw Error(ErrorCode::DimMismatch, "absolute alignment needs equal dims");
  }
  const double denom = std::max(norm2(g), kCosineEpsilon) * std::max(norm2(anchor), kCosineEpsilon);
  return 1.0 - dot(g, anchor) / denom;
}

namespace ad {

Var structure_loss(Var pred_rows, const Matrix& target_rows) {
  if (pred_rows.rows() != target_rows.rows() || pred_rows.cols() != target_rows.cols()) {
    throw Error(ErrorCode::LengthMismatch, "structure target shape differs from prediction");
  }
  return mean(abs(sub(pred_rows, pred_rows.tape()->constant(target_rows))));
}

Var absolute_alignment_loss(Var x_rows, Var anchor_rows) {
  if (x_rows.cols() != anchor_rows.cols()) {
    throw Error(ErrorCode::DimMismatch, "absolute alignment needs D_v == D_l");
  }
  Var cos = row_sums(hadamard(l2_normalize_rows(x_rows, kCosineEpsilon),
                              l2_normalize_rows(anchor_rows, kCosineEpsilon)));
  Tape& t = *x_rows.tape();
  return sub(t.constant(Matrix(1, 1, 1.0)), mean(cos));
}

Var volume_regularizer(Var gamma_s, Var gamma_t, double reference_logdet,
                       const JitterPolicy& policy) {
  Tape& t = *gamma_s.tape();
  Var ref = t.constant(Matrix(1, 1, reference_logdet));
  return add(abs(sub(logdet(gamma_t, policy), ref)), abs(sub(logdet(gamma_s, policy), ref)));
}

Var supervisor_objective(Var relative_rows, std::span<const std::size_t> labels,
                         const Matrix& anchor_relative_rows, const LossWeights& w,
                         double temperature) {
  if (!(temperature > 0.0)) throw Error(ErrorCode::NonPositiveTemperature, "temperature must be > 0");
  Var ce = cross_entropy_rows(scale(relative_rows, 1.0 / temperature), labels);
  Var ls = structure_loss(relative_rows, anchor_relative_rows);
  return add(scale(ce, w.lambda1), scale(ls, w.lambda2));
}

Var classifier_objective(Var ce, std::optional<Var> ls, std::optional<Var> reg,
                         const LossWeights& w) {
  Var total = scale(ce, w.lambda1);
  if (ls) total = add(total, scale(*ls, w.lambda2));
  if (reg) total = add(total, scale(*reg, w.lambda3));
  return total;
}

}  // namespace ad

}  // namespace laguna
