#include <doctest.h>

#include <cmath>
#include <random>

#include "fd.hpp"
#include "laguna/linalg.hpp"
#include "laguna/losses.hpp"
#include "laguna/relative.hpp"

using namespace laguna;
using laguna::testing::gradient_error;
using laguna::testing::random_matrix;
using laguna::testing::throws_code;

namespace {

Matrix random_orthogonal(std::size_t n, std::mt19937_64& rng) {
  Matrix q = random_matrix(n, n, rng);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      const double p = dot(q.row(i), q.row(j));
      for (std::size_t k = 0; k < n; ++k) q(i, k) -= p * q(j, k);
    }
    const double nrm = norm2(q.row(i));
    for (double& v : q.row(i)) v /= nrm;
  }
  return q;
}

AnchorSet anchors_of(Matrix m) { return make_reference_anchors(std::move(m)); }

}  // namespace

TEST_CASE("rel examples") {
  const AnchorSet a = anchors_of(Matrix{{1, 0}, {0, 1}});
  const std::vector<double> e1{1, 0};
  const auto r1 = rel(e1, a);
  CHECK(r1.values[0] == doctest::Approx(1.0));
  CHECK(r1.values[1] == 0.0);
  const std::vector<double> diag{1, 1};
  const auto r = rel(diag, a);
  CHECK(r.values[0] == doctest::Approx(0.70711).epsilon(1e-5));
  CHECK(r.values[1] == doctest::Approx(0.70711).epsilon(1e-5));
  const std::vector<double> three{1, 2, 3};
  CHECK(throws_code([&] { rel(three, a); }, ErrorCode::DimMismatch));
  const std::vector<double> zero{0, 0};
  CHECK(throws_code([&] { rel(zero, a); }, ErrorCode::ZeroVector));
  CHECK(throws_code([] { anchors_of(Matrix{{1, 0}, {0, 0}}); }, ErrorCode::ZeroVector));
}

TEST_CASE("rel invariances and oracle") {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> pos(0.01, 50.0);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + trial % 5;
    const std::size_t dim = 2 + trial % 7;
    const Matrix am = random_matrix(n, dim, rng, -3.0, 3.0);
    const AnchorSet a = anchors_of(am);
    const Matrix vm = random_matrix(1, dim, rng, -3.0, 3.0);
    const auto r = rel(vm.row(0), a);

    const Matrix q = random_orthogonal(dim, rng);
    const auto rq = rel(matmul_transposed(vm, q).row(0), anchors_of(matmul_transposed(am, q)));
    std::vector<double> scaled(vm.row(0).begin(), vm.row(0).end());
    const double c = pos(rng);
    for (double& x : scaled) x *= c;
    const auto rs = rel(scaled, a);
    Matrix am_scaled = am;
    for (std::size_t i = 0; i < n; ++i) {
      const double s = pos(rng);
      for (double& x : am_scaled.row(i)) x *= s;
    }
    const auto ra = rel(vm.row(0), anchors_of(am_scaled));

    for (std::size_t i = 0; i < n; ++i) {
      double d = 0.0, na = 0.0, nv = 0.0;
      for (std::size_t k = 0; k < dim; ++k) {
        d += vm(0, k) * am(i, k);
        na += am(i, k) * am(i, k);
        nv += vm(0, k) * vm(0, k);
      }
      CHECK(std::abs(r.values[i] - d / (std::sqrt(na) * std::sqrt(nv))) <= 1e-12);
      CHECK(std::abs(r.values[i] - rq.values[i]) <= 1e-10);
      CHECK(rs.values[i] == doctest::Approx(r.values[i]).epsilon(1e-12));
      CHECK(r.values[i] >= -1.0);
      CHECK(r.values[i] <= 1.0);
    }
    CHECK(classify_by_relative(ra).label == classify_by_relative(r).label);
    const Matrix batched = rel_rows(vm, a);
    for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(batched(0, i) - r.values[i]) <= 1e-14);
  }
}

TEST_CASE("reference_affinities") {
  const Matrix id = reference_affinities(anchors_of(Matrix::identity(3)));
  CHECK(id == Matrix::identity(3));
  const Matrix two = reference_affinities(anchors_of(Matrix{{1, 0}, {1, 1}}));
  CHECK(two(0, 1) == doctest::Approx(0.70711).epsilon(1e-5));
  CHECK(two(1, 0) == two(0, 1));
  std::mt19937_64 rng(1);
  const Matrix r = reference_affinities(anchors_of(random_matrix(6, 4, rng)));
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(r(i, i) == 1.0);
    for (std::size_t j = 0; j < 6; ++j) CHECK(r(i, j) == r(j, i));
  }
}

TEST_CASE("init_learnable_anchors") {
  std::mt19937_64 rng(8);
  const AnchorSet ref = anchors_of(random_matrix(5, 7, rng));
  const AnchorSet a = init_learnable_anchors(5, 9, ref, 123);
  CHECK(a.learnable);
  CHECK(std::abs(gram_logdet(a.anchors) - gram_logdet(ref.anchors)) < 1e-6);
  CHECK(init_learnable_anchors(5, 9, ref, 123).anchors == a.anchors);
  CHECK_FALSE(init_learnable_anchors(5, 9, ref, 124).anchors == a.anchors);
  CHECK(throws_code([&] { init_learnable_anchors(5, 4, ref, 1); }, ErrorCode::DimTooSmall));
}

TEST_CASE("classify_by_relative") {
  CHECK(classify_by_relative({{1, 0, 0}}).label == 0);
  const auto tie = classify_by_relative({{0, 0}});
  CHECK(tie.label == 0);
  CHECK(tie.probabilities[0] == doctest::Approx(0.5));
  const RelativeEncoding r{{0.1, 0.7, -0.3, 0.69}};
  for (double tau : {0.01, 0.5, 1.0, 20.0}) CHECK(classify_by_relative(r, tau).label == 1);
  CHECK(throws_code([&] { classify_by_relative(r, 0.0); }, ErrorCode::NonPositiveTemperature));
}

TEST_CASE("structure loss") {
  CHECK(structure_loss({{0.3, -0.2}}, {{0.3, -0.2}}) == 0.0);
  CHECK(structure_loss({{1, 0}}, {{0, 1}}) == doctest::Approx(1.0));
  CHECK(structure_loss({{1, -1}}, {{-1, 1}}) == doctest::Approx(2.0));
  CHECK(throws_code([] { structure_loss({{1, 0}}, {{1}}); }, ErrorCode::LengthMismatch));
  std::mt19937_64 rng(4);
  for (int t = 0; t < 20; ++t) {
    const Matrix a = random_matrix(1, 5, rng), b = random_matrix(1, 5, rng);
    const RelativeEncoding ra{{a.data().begin(), a.data().end()}};
    const RelativeEncoding rb{{b.data().begin(), b.data().end()}};
    CHECK(structure_loss(ra, rb) == structure_loss(rb, ra));
    CHECK(structure_loss(ra, rb) >= 0.0);
    CHECK(structure_loss(ra, rb) <= 2.0);
  }
}

TEST_CASE("cross entropy") {
  const std::vector<double> uniform{0.3, 0.3, 0.3, 0.3};
  CHECK(cross_entropy(uniform, 2) == doctest::Approx(std::log(4.0)));
  const std::vector<double> peaked{10, -10};
  CHECK(cross_entropy(peaked, 0) == doctest::Approx(2.06e-9).epsilon(1e-3));
  CHECK(cross_entropy(peaked, 1) >= 0.0);
  CHECK(throws_code([&] { cross_entropy(peaked, 2); }, ErrorCode::LabelOutOfRange));
  const std::vector<double> huge{1000, -1000, 999};
  CHECK(std::isfinite(cross_entropy(huge, 1)));
}

TEST_CASE("volume regularizer") {
  const Matrix g{{2, 0.5}, {0.5, 1}};
  CHECK(volume_regularizer({g, g, g}) == doctest::Approx(0.0));
  CHECK(volume_regularizer({Matrix::identity(2), Matrix{{4, 0}, {0, 9}}, Matrix::identity(2)}) ==
        doctest::Approx(3.58352).epsilon(1e-5));
  std::mt19937_64 rng(6);
  const Matrix a = random_matrix(3, 5, rng);
  const Matrix gamma = matmul_transposed(a, a);
  for (double c : {0.3, 2.0, 5.0}) {
    Matrix ac = a;
    for (double& v : ac.data()) v *= c;
    const double r = volume_regularizer({gamma, matmul_transposed(ac, ac), gamma});
    CHECK(r == doctest::Approx(2.0 * 3.0 * std::abs(std::log(c))).epsilon(1e-10));
  }
}

TEST_CASE("regularizer gradient flips sign at the volume-matching scale") {
  std::mt19937_64 rng(10);
  const AnchorSet ref = anchors_of(random_matrix(4, 6, rng));
  const double ld_ref = gram_logdet(ref.anchors);
  const Matrix a0 = random_matrix(4, 6, rng);
  const double c_star = std::exp((ld_ref - gram_logdet(a0)) / 8.0);
  auto slope = [&](double c) {
    Tape tape;
    Var cv = tape.variable(Matrix{{c}});
    Var base = tape.constant(a0);
    // A_s(c) = c * A0 as a 1x1 times the matrix via outer product with ones
    Var scaled = ad::matmul(ad::matmul(tape.constant(Matrix(4, 1, 1.0)), cv), tape.constant(Matrix(1, 6, 1.0)));
    Var as = ad::hadamard(scaled, base);
    Var gs = ad::matmul(as, ad::transpose(as));
    Var gt = tape.constant(matmul_transposed(ref.anchors, ref.anchors));
    tape.backward(ad::volume_regularizer(gs, gt, ld_ref, JitterPolicy{}));
    return cv.grad()(0, 0);
  };
  int flips = 0;
  double prev = slope(c_star * 0.2);
  for (double f = 0.25; f <= 5.0; f += 0.05) {
    const double s = slope(c_star * f);
    if ((prev < 0) != (s < 0)) {
      ++flips;
      CHECK(f == doctest::Approx(1.0).epsilon(0.06));
    }
    prev = s;
  }
  CHECK(flips == 1);
  CHECK(slope(c_star * 0.9) < 0.0);
  CHECK(slope(c_star * 1.1) > 0.0);
}

TEST_CASE("objectives recompose from parts") {
  std::mt19937_64 rng(12);
  const LossWeights w{0.7, 0.3, 0.05};
  for (int t = 0; t < 20; ++t) {
    const Matrix p = random_matrix(1, 4, rng), q = random_matrix(1, 4, rng);
    const RelativeEncoding rp{{p.data().begin(), p.data().end()}};
    const RelativeEncoding rq{{q.data().begin(), q.data().end()}};
    const std::size_t label = t % 4;
    const double want = 0.7 * cross_entropy(p.data(), label) + 0.3 * structure_loss(rp, rq);
    CHECK(supervisor_objective(rp, label, rq, w, 1.0) == doctest::Approx(want).epsilon(1e-12));
    CHECK(supervisor_objective(rp, label, rq, {0.7, 0.0, 0.0}, 1.0) ==
          doctest::Approx(0.7 * cross_entropy(p.data(), label)).epsilon(1e-12));
  }
  CHECK(classifier_objective(0.0, 0.0, 0.0, {}) == 0.0);
  CHECK(classifier_objective(0.0, 0.0, 1.0, {}) == doctest::Approx(0.001));
  const std::vector<double> perfect{1, 0};
  CHECK(supervisor_objective({perfect}, 0, {perfect}, {1.0, 0.1, 0.0}, 1e-3) < 1e-12);
  CHECK(throws_code([] { LossWeights{-1.0, 0.1, 0.0}.validate(); }, ErrorCode::InvalidConfig));
}

TEST_CASE("absolute alignment loss") {
  const std::vector<double> a{1, 2}, par{2, 4}, orth{-2, 1}, anti{-1, -2};
  CHECK(absolute_alignment_loss(par, a) == doctest::Approx(0.0));
  CHECK(absolute_alignment_loss(orth, a) == doctest::Approx(1.0));
  CHECK(absolute_alignment_loss(anti, a) == doctest::Approx(2.0));
  const std::vector<double> three{1, 2, 3};
  CHECK(throws_code([&] { absolute_alignment_loss(three, a); }, ErrorCode::DimMismatch));
}

TEST_CASE("gradient of the weighted objective is the weighted sum of part gradients") {
  std::mt19937_64 rng(13);
  for (int t = 0; t < 20; ++t) {
    const Matrix x = random_matrix(2, 3, rng);
    const LossWeights w{0.8, 0.4, 0.2};
    auto grad_of = [&](int which) {
      Tape tape;
      Var v = tape.variable(x);
      const std::vector<std::size_t> labels{0, 2};
      Var ce = ad::cross_entropy_rows(v, labels);
      Var ls = ad::structure_loss(v, Matrix(2, 3, 3.0));
      Var reg = ad::mean(ad::hadamard(v, v));
      Var out = which == 0   ? ad::classifier_objective(ce, ls, reg, w)
                : which == 1 ? ce
                : which == 2 ? ls
                             : reg;
      tape.backward(out);
      return v.grad();
    };
    const Matrix total = grad_of(0), gce = grad_of(1), gls = grad_of(2), greg = grad_of(3);
    for (std::size_t i = 0; i < total.size(); ++i) {
      CHECK(total.data()[i] ==
            doctest::Approx(0.8 * gce.data()[i] + 0.4 * gls.data()[i] + 0.2 * greg.data()[i]).epsilon(1e-12));
    }
    const double err = gradient_error(
        [&](Tape&, const std::vector<Var>& v) {
          const std::vector<std::size_t> labels{0, 2};
          return ad::classifier_objective(ad::cross_entropy_rows(v[0], labels),
                                          ad::structure_loss(v[0], Matrix(2, 3, 3.0)),
                                          ad::mean(ad::hadamard(v[0], v[0])), w);
        },
        {x});
    CHECK(err <= 1e-4);
  }
}
