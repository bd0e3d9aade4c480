#include "laguna/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "laguna/error.hpp"

namespace laguna {

Parameter::Parameter(std::string name_, Matrix value_)
    : name(std::move(name_)), value(std::move(value_)), grad(value.rows(), value.cols()) {}

void Parameter::zero_grad() {
  if (grad.rows() != value.rows() || grad.cols() != value.cols()) {
    grad = Matrix(value.rows(), value.cols());
  } else {
    std::fill(grad.data().begin(), grad.data().end(), 0.0);
  }
}

const Matrix& Var::value() const { return tape_->value(id_); }
const Matrix& Var::grad() const { return tape_->grad(id_); }

Var Tape::push(Node node) {
  node.grad = Matrix(node.value.rows(), node.value.cols());
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Matrix value) { return push(Node{std::move(value), {}, {}, nullptr, false}); }

Var Tape::variable(Matrix value) { return push(Node{std::move(value), {}, {}, nullptr, true}); }

Var Tape::leaf(Parameter& param) {
  if (auto it = leaves_.find(&param); it != leaves_.end()) return Var(this, it->second);
  Var v = push(Node{param.value, {}, {}, &param, true});
  leaves_.emplace(&param, v.id());
  return v;
}

Var Tape::record(Matrix value, std::span<const Var> parents, BackwardFn backward) {
  bool needs = false;
  for (const Var& p : parents) {
    if (p.tape() != this) throw Error(ErrorCode::InvalidConfig, "operands live on different tapes");
    needs = needs || nodes_[p.id()].requires_grad;
  }
  return push(Node{std::move(value), {}, needs ? std::move(backward) : BackwardFn{}, nullptr, needs});
}

void Tape::backward(Var loss) {
  if (loss.tape() != this) throw Error(ErrorCode::InvalidConfig, "loss lives on another tape");
  if (!value(loss.id()).is_scalar()) {
    throw Error(ErrorCode::NonScalarLoss, "backward() needs a 1x1 loss");
  }
  nodes_[loss.id()].grad(0, 0) += 1.0;
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    Node& node = nodes_[id];
    if (node.requires_grad && node.backward) node.backward(*this, id);
  }
  for (Node& node : nodes_) {
    if (node.param == nullptr) continue;
    Parameter& p = *node.param;
    if (p.grad.rows() != p.value.rows() || p.grad.cols() != p.value.cols()) p.zero_grad();
    auto dst = p.grad.data();
    auto src = node.grad.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }
}

namespace ad {

namespace {

std::string shape(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw Error(ErrorCode::ShapeMismatch, std::string(op) + ": " + shape(a) + " vs " + shape(b));
  }
}

// grad[id] += scale * g
void accumulate(Tape& t, std::size_t id, const Matrix& g, double factor = 1.0) {
  if (!t.requires_grad(id)) return;
  auto dst = t.grad_mut(id).data();
  auto src = g.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += factor * src[i];
}

template <typename F>
Var unary_elementwise(Var a, F value_fn, std::function<double(double x, double y)> deriv) {
  Matrix out = a.value();
  for (double& v : out.data()) v = value_fn(v);
  const std::size_t pa = a.id();
  Var parents[] = {a};
  return a.tape()->record(std::move(out), parents, [pa, deriv](Tape& t, std::size_t self) {
    if (!t.requires_grad(pa)) return;
    auto x = t.value(pa).data();
    auto y = t.value(self).data();
    auto g = t.grad(self).data();
    auto dst = t.grad_mut(pa).data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i] * deriv(x[i], y[i]);
  });
}

}  // namespace

Var matmul(Var a, Var b) {
  Matrix out = laguna::matmul(a.value(), b.value());
  const std::size_t pa = a.id(), pb = b.id();
  Var parents[] = {a, b};
  return a.tape()->record(std::move(out), parents, [pa, pb](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    if (t.requires_grad(pa)) accumulate(t, pa, matmul_transposed(g, t.value(pb)));
    if (t.requires_grad(pb)) accumulate(t, pb, laguna::matmul(t.value(pa).transpose(), g));
  });
}

Var transpose(Var a) {
  const std::size_t pa = a.id();
  Var parents[] = {a};
  return a.tape()->record(a.value().transpose(), parents, [pa](Tape& t, std::size_t self) {
    accumulate(t, pa, t.grad(self).transpose());
  });
}

Var add(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "add");
  Matrix out = a.value();
  auto bv = b.value().data();
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += bv[i];
  const std::size_t pa = a.id(), pb = b.id();
  Var parents[] = {a, b};
  return a.tape()->record(std::move(out), parents, [pa, pb](Tape& t, std::size_t self) {
    accumulate(t, pa, t.grad(self));
    accumulate(t, pb, t.grad(self));
  });
}

Var sub(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "sub");
  Matrix out = a.value();
  auto bv = b.value().data();
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] -= bv[i];
  const std::size_t pa = a.id(), pb = b.id();
  Var parents[] = {a, b};
  return a.tape()->record(std::move(out), parents, [pa, pb](Tape& t, std::size_t self) {
    accumulate(t, pa, t.grad(self));
    accumulate(t, pb, t.grad(self), -1.0);
  });
}

Var hadamard(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "hadamard");
  Matrix out = a.value();
  auto bv = b.value().data();
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] *= bv[i];
  const std::size_t pa = a.id(), pb = b.id();
  Var parents[] = {a, b};
  return a.tape()->record(std::move(out), parents, [pa, pb](Tape& t, std::size_t self) {
    auto g = t.grad(self).data();
    if (t.requires_grad(pa)) {
      auto other = t.value(pb).data();
      auto dst = t.grad_mut(pa).data();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i] * other[i];
    }
    if (t.requires_grad(pb)) {
      auto other = t.value(pa).data();
      auto dst = t.grad_mut(pb).data();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i] * other[i];
    }
  });
}

Var scale(Var a, double factor) {
  Matrix out = a.value();
  for (double& v : out.data()) v *= factor;
  const std::size_t pa = a.id();
  Var parents[] = {a};
  return a.tape()->record(std::move(out), parents, [pa, factor](Tape& t, std::size_t self) {
    accumulate(t, pa, t.grad(self), factor);
  });
}

Var add_row(Var a, Var row) {
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw Error(ErrorCode::ShapeMismatch, "add_row: " + shape(a.value()) + " + " + shape(row.value()));
  }
  Matrix out = a.value();
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto o = out.row(r);
    auto b = row.value().row(0);
    for (std::size_t c = 0; c < o.size(); ++c) o[c] += b[c];
  }
  const std::size_t pa = a.id(), pb = row.id();
  Var parents[] = {a, row};
  return a.tape()->record(std::move(out), parents, [pa, pb](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    accumulate(t, pa, g);
    if (t.requires_grad(pb)) {
      auto dst = t.grad_mut(pb).row(0);
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) dst[c] += g(r, c);
    }
  });
}

Var tanh(Var a) {
  return unary_elementwise(
      a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var abs(Var a) {
  return unary_elementwise(
      a, [](double x) { return std::abs(x); },
      [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  const std::size_t pa = a.id();
  Var parents[] = {a};
  return a.tape()->record(Matrix(1, 1, s), parents, [pa](Tape& t, std::size_t self) {
    if (!t.requires_grad(pa)) return;
    const double g = t.grad(self)(0, 0);
    for (double& d : t.grad_mut(pa).data()) d += g;
  });
}

Var mean(Var a) {
  if (a.value().empty()) throw Error(ErrorCode::ShapeMismatch, "mean of empty matrix");
  return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

Var row_sums(Var a) {
  Matrix out(a.rows(), 1);
  for (std::size_t r = 0; r < a.rows(); ++r) {
    double s = 0.0;
    for (double v : a.value().row(r)) s += v;
    out(r, 0) = s;
  }
  const std::size_t pa = a.id();
  Var parents[] = {a};
  return a.tape()->record(std::move(out), parents, [pa](Tape& t, std::size_t self) {
    if (!t.requires_grad(pa)) return;
    Matrix& dst = t.grad_mut(pa);
    const Matrix& g = t.grad(self);
    for (std::size_t r = 0; r < dst.rows(); ++r)
      for (double& d : dst.row(r)) d += g(r, 0);
  });
}

Var hconcat(std::span<const Var> parts) {
  if (parts.empty()) throw Error(ErrorCode::ShapeMismatch, "hconcat of nothing");
  const std::size_t rows = parts.front().rows();
  std::size_t cols = 0;
  std::vector<std::size_t> ids;
  std::vector<std::size_t> offsets;
  for (const Var& p : parts) {
    if (p.rows() != rows) throw Error(ErrorCode::ShapeMismatch, "hconcat row counts differ");
    offsets.push_back(cols);
    ids.push_back(p.id());
    cols += p.cols();
  }
  Matrix out(rows, cols);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Matrix& v = parts[k].value();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(v.row(r).begin(), v.cols(), out.row(r).begin() + static_cast<long>(offsets[k]));
  }
  return parts.front().tape()->record(
      std::move(out), parts, [ids, offsets](Tape& t, std::size_t self) {
        const Matrix& g = t.grad(self);
        for (std::size_t k = 0; k < ids.size(); ++k) {
          if (!t.requires_grad(ids[k])) continue;
          Matrix& dst = t.grad_mut(ids[k]);
          for (std::size_t r = 0; r < dst.rows(); ++r)
            for (std::size_t c = 0; c < dst.cols(); ++c) dst(r, c) += g(r, offsets[k] + c);
        }
      });
}

Var gather_rows(Var a, std::span<const std::size_t> indices) {
  Matrix out = laguna::gather_rows(a.value(), indices);
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  const std::size_t pa = a.id();
  Var parents[] = {a};
  return a.tape()->record(std::move(out), parents, [pa, idx](Tape& t, std::size_t self) {
    if (!t.requires_grad(pa)) return;
    const Matrix& g = t.grad(self);
    Matrix& dst = t.grad_mut(pa);
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t c = 0; c < g.cols(); ++c) dst(idx[i], c) += g(i, c);
  });
}

Var softmax_rows(Var a, double temperature) {
  Matrix out = laguna::softmax_rows(a.value(), temperature);
  const std::size_t pa = a.id();
  Var parents[] = {a};
  return a.tape()->record(std::move(out), parents, [pa, temperature](Tape& t, std::size_t self) {
    if (!t.requires_grad(pa)) return;
    const Matrix& y = t.value(self);
    const Matrix& g = t.grad(self);
    Matrix& dst = t.grad_mut(pa);
    for (std::size_t r = 0; r < y.rows(); ++r) {
      const double inner = dot(g.row(r), y.row(r));
      for (std::size_t c = 0; c < y.cols(); ++c) {
        dst(r, c) += y(r, c) * (g(r, c) - inner) / temperature;
      }
    }
  });
}

Var l2_normalize_rows(Var a, double epsilon) {
  const Matrix& x = a.value();
  std::vector<double> norms(x.rows());
  Matrix out = x;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    norms[r] = norm2(x.row(r));
    const double n = std::max(norms[r], epsilon);
    for (double& v : out.row(r)) v /= n;
  }
  const std::size_t pa = a.id();
  Var parents[] = {a};
  return a.tape()->record(std::move(out), parents,
                          [pa, norms, epsilon](Tape& t, std::size_t self) {
                            if (!t.requires_grad(pa)) return;
                            const Matrix& y = t.value(self);
                            const Matrix& g = t.grad(self);
                            Matrix& dst = t.grad_mut(pa);
                            for (std::size_t r = 0; r < y.rows(); ++r) {
                              if (norms[r] > epsilon) {
                                const double inner = dot(g.row(r), y.row(r));
                                for (std::size_t c = 0; c < y.cols(); ++c)
                                  dst(r, c) += (g(r, c) - y(r, c) * inner) / norms[r];
                              } else {
                                for (std::size_t c = 0; c < y.cols(); ++c)
                                  dst(r, c) += g(r, c) / epsilon;
                              }
                            }
                          });
}

Var cross_entropy_rows(Var logits, std::span<const std::size_t> labels) {
  const Matrix& z = logits.value();
  if (labels.size() != z.rows() || z.rows() == 0) {
    throw Error(ErrorCode::LengthMismatch, "one label per logit row required");
  }
  Matrix probs = laguna::softmax_rows(z, 1.0);
  double total = 0.0;
  for (std::size_t r = 0; r < z.rows(); ++r) {
    if (labels[r] >= z.cols()) {
      throw Error(ErrorCode::LabelOutOfRange, "label " + std::to_string(labels[r]) +
                                                  " >= " + std::to_string(z.cols()));
    }
    auto row = z.row(r);
    const double peak = *std::max_element(row.begin(), row.end());
    double lse = 0.0;
    for (double v : row) lse += std::exp(v - peak);
    total += peak + std::log(lse) - row[labels[r]];
  }
  const double n = static_cast<double>(z.rows());
  std::vector<std::size_t> lab(labels.begin(), labels.end());
  const std::size_t pa = logits.id();
  Var parents[] = {logits};
  return logits.tape()->record(
      Matrix(1, 1, total / n), parents,
      [pa, lab, probs = std::move(probs), n](Tape& t, std::size_t self) {
        if (!t.requires_grad(pa)) return;
        const double g = t.grad(self)(0, 0) / n;
        Matrix& dst = t.grad_mut(pa);
        for (std::size_t r = 0; r < probs.rows(); ++r)
          for (std::size_t c = 0; c < probs.cols(); ++c)
            dst(r, c) += g * (probs(r, c) - (c == lab[r] ? 1.0 : 0.0));
      });
}

namespace {

Var logdet_node(Var m, LogDetResult result) {
  const std::size_t pa = m.id();
  Var parents[] = {m};
  return m.tape()->record(Matrix(1, 1, result.value), parents,
                          [pa, inv = std::move(result.inverse)](Tape& t, std::size_t self) {
                            accumulate(t, pa, inv, t.grad(self)(0, 0));
                          });
}

}  // namespace

Var logdet(Var m, double jitter) {
  JitterPolicy strict;
  strict.ladder.fill(jitter);
  return logdet_node(m, logdet_with_policy(m.value(), strict));
}

Var logdet(Var m, const JitterPolicy& policy) {
  return logdet_node(m, logdet_with_policy(m.value(), policy));
}

Var cosine_rows(Var x, Var anchors, double epsilon) {
  if (x.cols() != anchors.cols()) {
    throw Error(ErrorCode::DimMismatch, "cosine_rows: " + shape(x.value()) + " vs anchors " +
                                            shape(anchors.value()));
  }
  return matmul(l2_normalize_rows(x, epsilon), transpose(l2_normalize_rows(anchors, epsilon)));
}

}  // namespace ad

}  // namespace laguna
