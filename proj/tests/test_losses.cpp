#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>

#include "oracles.hpp"
#include "rewrite_lab/losses.hpp"

using namespace rewrite_lab;
using MatD = Matrix<double>;

namespace {

MatD RandomDistributions(std::mt19937& gen, int rows, int cols) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  MatD p(rows, cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) p(r, c) = u(gen);
    p.row(r) /= p.row(r).sum();
  }
  return p;
}

MatD RandomVectors(std::mt19937& gen, int rows, int cols) {
  std::normal_distribution<double> n(0.0, 1.0);
  MatD x(rows, cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) x(r, c) = n(gen);
  }
  return x;
}

std::vector<oracle::Vec> Rows(const MatD& m) {
  std::vector<oracle::Vec> out;
  for (int r = 0; r < m.rows(); ++r) out.emplace_back(m.row(r).data(), m.row(r).data() + m.cols());
  return out;
}

// Central differences of f with respect to every entry of x, compared
// against `analytic`.
void CheckGradient(MatD& x, const MatD& analytic, const std::function<double()>& f) {
  const double h = 1e-6;
  for (int r = 0; r < x.rows(); ++r) {
    for (int c = 0; c < x.cols(); ++c) {
      const double keep = x(r, c);
      x(r, c) = keep + h;
      const double up = f();
      x(r, c) = keep - h;
      const double down = f();
      x(r, c) = keep;
      const double numeric = (up - down) / (2 * h);
      const double scale = std::max({std::abs(numeric), std::abs(analytic(r, c)), 1e-3});
      CHECK(std::abs(numeric - analytic(r, c)) / scale <= 1e-4);
    }
  }
}

// Unit vectors whose cosines with the anchor (1, 0) are the given values.
MatD WithCosine(std::initializer_list<double> cosines) {
  MatD out(static_cast<int>(cosines.size()), 2);
  int r = 0;
  for (double c : cosines) {
    out(r, 0) = c;
    out(r, 1) = std::sqrt(1 - c * c);
    ++r;
  }
  return out;
}

}  // namespace

TEST_CASE("matrix loss hand values") {
  const ClassWeights unit = {1, 1, 1};
  const MatD uniform = MatD::Constant(4, 3, 1.0 / 3);
  const std::vector<int> gold = {0, 1, 2, 1};
  CHECK(LossMat(uniform, gold, unit) == doctest::Approx(std::log(3.0)).epsilon(1e-12));

  MatD onehot = MatD::Zero(4, 3);
  for (int c = 0; c < 4; ++c) onehot(c, gold[c]) = 1;
  CHECK(LossMat(onehot, gold, {1, 5, 5}) == 0.0);

  MatD p(2, 3);
  p << 0.7, 0.2, 0.1, 0.1, 0.8, 0.1;
  const double expected = (-std::log(0.7) + 5 * -std::log(0.8)) / 6;
  CHECK(std::abs(LossMat(p, std::vector<int>{0, 1}, {1, 5, 5}) - expected) <= 1e-12);

  MatD zero = MatD::Zero(1, 3);
  zero(0, 0) = 1;
  const double clamped = LossMat(zero, std::vector<int>{1}, unit);
  CHECK(std::isfinite(clamped));
  CHECK(clamped == doctest::Approx(-std::log(kProbFloor)));
}

TEST_CASE("equal class weights give the plain mean cross-entropy") {
  std::mt19937 gen(1);
  for (int trial = 0; trial < 20; ++trial) {
    const MatD p = RandomDistributions(gen, 12, 3);
    std::vector<int> gold(12);
    double plain = 0;
    for (int c = 0; c < 12; ++c) {
      gold[c] = gen() % 3;
      plain += -std::log(p(c, gold[c]));
    }
    plain /= 12;
    CHECK(std::abs(LossMat(p, gold, {2.5, 2.5, 2.5}) - plain) <= 1e-12);
  }
}

TEST_CASE("detection loss hand values") {
  CHECK(LossDet<double>(MatD::Constant(5, 2, 0.5), std::vector<int>{0, 1, 1, 0, 0}) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));
  MatD p(2, 2);
  p << 0.9, 0.1, 0.3, 0.7;
  const double v = LossDet(p, std::vector<int>{0, 1});
  CHECK(std::abs(v - (-std::log(0.9) - std::log(0.7)) / 2) <= 1e-12);
  CHECK(v == doctest::Approx(0.2310).epsilon(1e-3));
  MatD perfect(2, 2);
  perfect << 1, 0, 0, 1;
  CHECK(LossDet(perfect, std::vector<int>{0, 1}) == 0.0);
}

TEST_CASE("shape mismatches are rejected") {
  CHECK_THROWS_AS(LossMat<double>(MatD::Constant(2, 3, 1.0 / 3), std::vector<int>{0}, {1, 1, 1}), Error);
  CHECK_THROWS_AS(LossDet<double>(MatD::Constant(2, 3, 1.0 / 3), std::vector<int>{0, 1}), Error);
  const std::vector<double> a = {0.5, 0.5}, b = {1.0};
  CHECK_THROWS_AS(BiKl<double>(a, b), Error);
  CHECK_THROWS_AS(LossPcon<double>(MatD::Constant(2, 2, .5), MatD::Constant(3, 2, .5),
                           MatD::Constant(1, 3, 1. / 3), MatD::Constant(1, 3, 1. / 3)),
                  Error);
}

TEST_CASE("bi-kl properties") {
  const std::vector<double> p = {0.8, 0.2}, q = {0.2, 0.8};
  CHECK(std::abs(BiKl<double>(p, q) - 1.2 * std::log(4.0)) <= 1e-9);
  CHECK(BiKl<double>(p, p) == 0.0);

  std::mt19937 gen(2);
  for (int trial = 0; trial < 1000; ++trial) {
    const MatD d = RandomDistributions(gen, 2, 2 + trial % 5);
    const std::span<const double> a(d.row(0).data(), d.cols()), b(d.row(1).data(), d.cols());
    const double ab = BiKl(a, b), ba = BiKl(b, a);
    CHECK(ab >= 0);
    CHECK(std::abs(ab - ba) <= 1e-12);
    CHECK(std::abs(BiKl(a, a)) <= 1e-9);
  }
}

TEST_CASE("twin consistency loss") {
  std::mt19937 gen(3);
  const MatD det = RandomDistributions(gen, 5, 2);
  const MatD mat = RandomDistributions(gen, 6, 3);
  CHECK(LossPcon(det, det, mat, mat) == 0.0);

  MatD d1(1, 2), d2(1, 2);
  d1 << 0.8, 0.2;
  d2 << 0.2, 0.8;
  MatD m1(1, 3), m2(1, 3);
  m1 << 0.7, 0.2, 0.1;
  m2 << 0.1, 0.8, 0.1;
  const std::vector<double> a = {0.7, 0.2, 0.1}, b = {0.1, 0.8, 0.1};
  double kl_mat = 0;
  for (int k = 0; k < 3; ++k) kl_mat += (a[k] - b[k]) * std::log(a[k] / b[k]);
  CHECK(std::abs(LossPcon(d1, d2, m1, m2) - 0.5 * (1.2 * std::log(4.0) + kl_mat)) <= 1e-12);

  for (int trial = 0; trial < 50; ++trial) {
    CHECK(LossPcon(RandomDistributions(gen, 3, 2), RandomDistributions(gen, 3, 2),
                   RandomDistributions(gen, 4, 3), RandomDistributions(gen, 4, 3)) >= 0);
  }
}

TEST_CASE("nt-xent closed forms") {
  const MatD anchor = WithCosine({1.0});
  CHECK(std::abs(LossIcon(anchor, WithCosine({0.3}), WithCosine({0.3}), 0.5) - std::log(2.0)) <=
        1e-6);
  const double v = LossIcon(anchor, WithCosine({0.9}), WithCosine({0.1}), 0.5);
  CHECK(std::abs(v - std::log(1 + std::exp(-1.6))) <= 1e-6);
  CHECK(v == doctest::Approx(0.1839).epsilon(1e-3));
}

TEST_CASE("nt-xent matches the direct formula") {
  std::mt19937 gen(4);
  for (int B : {1, 2, 4, 8}) {
    for (int trial = 0; trial < 15; ++trial) {
      const MatD a = RandomVectors(gen, B, 6), p = RandomVectors(gen, B, 6),
                 n = RandomVectors(gen, B, 6);
      for (double tau : {0.1, 0.5, 1.0}) {
        const double ours = LossIcon(a, p, n, tau);
        CHECK(std::abs(ours - oracle::NtXent(Rows(a), Rows(p), Rows(n), tau)) <= 1e-6);
        CHECK(ours >= 0);
        CHECK(std::abs(LossIcon<double>(a * 3.7, p * 3.7, n * 3.7, tau) - ours) <= 1e-9);
      }
    }
  }
}

TEST_CASE("nt-xent decreases as the positive gets closer") {
  double last = 1e9;
  for (double c : {-0.5, 0.0, 0.3, 0.6, 0.9, 0.99}) {
    const double v = LossIcon(WithCosine({1.0}), WithCosine({c}), WithCosine({0.2}), 0.5);
    CHECK(v < last);
    last = v;
  }
}

TEST_CASE("nt-xent rejects zero vectors") {
  try {
    LossIcon<double>(MatD::Zero(1, 3), MatD::Ones(1, 3), MatD::Ones(1, 3), 0.5);
    FAIL("expected DegenerateVector");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kDegenerateVector);
  }
}

TEST_CASE("loss gradients match finite differences") {
  std::mt19937 gen(5);
  SUBCASE("matrix") {
    MatD p = RandomDistributions(gen, 6, 3);
    const std::vector<int> gold = {0, 1, 2, 0, 0, 1};
    MatD grad;
    LossMat(p, gold, {1, 5, 5}, &grad);
    CheckGradient(p, grad, [&] { return LossMat(p, gold, {1, 5, 5}); });
  }
  SUBCASE("detection") {
    MatD p = RandomDistributions(gen, 5, 2);
    const std::vector<int> gold = {0, 1, 1, 0, 1};
    MatD grad;
    LossDet(p, gold, &grad);
    CheckGradient(p, grad, [&] { return LossDet(p, gold); });
  }
  SUBCASE("twin consistency") {
    MatD d1 = RandomDistributions(gen, 3, 2), d2 = RandomDistributions(gen, 3, 2);
    MatD m1 = RandomDistributions(gen, 4, 3), m2 = RandomDistributions(gen, 4, 3);
    PconGrads<double> g;
    LossPcon(d1, d2, m1, m2, &g);
    auto f = [&] { return LossPcon(d1, d2, m1, m2); };
    CheckGradient(d1, g.det1, f);
    CheckGradient(d2, g.det2, f);
    CheckGradient(m1, g.mat1, f);
    CheckGradient(m2, g.mat2, f);
  }
  SUBCASE("intent contrast") {
    MatD a = RandomVectors(gen, 4, 5), p = RandomVectors(gen, 4, 5), n = RandomVectors(gen, 4, 5);
    IconGrads<double> g;
    LossIcon(a, p, n, 0.5, &g);
    auto f = [&] { return LossIcon(a, p, n, 0.5); };
    CheckGradient(a, g.anchors, f);
    CheckGradient(p, g.positives, f);
    CheckGradient(n, g.negatives, f);
  }
}

TEST_CASE("final loss assembly") {
  LossWeights w;
  w.alpha = 0.3;
  w.beta = 0.7;
  w.gamma = 1.9;
  std::mt19937 gen(6);
  std::uniform_real_distribution<double> u(0, 3);
  for (int trial = 0; trial < 100; ++trial) {
    LossBreakdown b;
    b.l_mat_cq1 = u(gen);
    b.l_mat_cq2 = u(gen);
    b.l_det_cq1 = u(gen);
    b.l_det_cq2 = u(gen);
    b.l_icon = u(gen);
    b.l_pcon = u(gen);
    const double expected = b.l_mat_cq1 + b.l_mat_cq2 + w.alpha * (b.l_det_cq1 + b.l_det_cq2) +
                            w.beta * b.l_icon + w.gamma * b.l_pcon;
    CHECK(std::abs(LossFinal(b, w).l_final - expected) <= 1e-9);

    LossWeights zero = w;
    zero.alpha = zero.beta = zero.gamma = 0;
    CHECK(LossFinal(b, zero).l_final == doctest::Approx(b.l_mat_cq1 + b.l_mat_cq2).epsilon(1e-15));
  }
  CHECK(LossFinal(LossBreakdown{}, w).l_final == 0.0);
}

TEST_CASE("loss weights validation") {
  LossWeights w;
  CHECK_NOTHROW(w.Validate());
  w.tau = 0;
  CHECK_THROWS_AS(w.Validate(), Error);
  w = LossWeights{};
  w.alpha = -1;
  CHECK_THROWS_AS(w.Validate(), Error);
  w = LossWeights{};
  w.class_weights[1] = 0;
  CHECK_THROWS_AS(w.Validate(), Error);
}
