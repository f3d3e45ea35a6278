#include <doctest.h>

#include <cmath>

#include "softlab/synth.hpp"
#include "softlab/theory.hpp"
#include "support.hpp"

using namespace softlab;

namespace {

MaxEntInstance random_instance(std::uint64_t seed, std::size_t m, std::size_t d) {
  Rng rng = Rng::stream(seed, 0);
  MaxEntInstance inst;
  inst.w = Matrix::gaussian(m, d, rng);
  inst.p_star = sample_dirichlet(1.0, m, rng);
  return inst;
}

}  // namespace

TEST_SUITE("theory") {

TEST_CASE("equal word embeddings force the uniform model") {
  MaxEntInstance inst;
  inst.w = Matrix(5, 1, 0.7);  // all rows identical
  Rng rng(1);
  inst.p_star = sample_dirichlet(0.5, 5, rng);
  const auto dual = min_cross_entropy(inst);
  CHECK(dual.value == doctest::Approx(std::log(5.0)).epsilon(1e-10));
  const auto primal = max_entropy_primal(inst);
  CHECK(primal.value == doctest::Approx(std::log(5.0)).epsilon(1e-8));
}

TEST_CASE("no constraints (d = 0) solves to the uniform entropy") {
  MaxEntInstance inst;
  inst.w = Matrix(6, 0);
  Rng rng(2);
  inst.p_star = sample_dirichlet(1.0, 6, rng);
  const auto report = duality_gap(inst);
  CHECK(report.min_ce == doctest::Approx(std::log(6.0)).epsilon(1e-10));
  CHECK(report.max_ent == doctest::Approx(std::log(6.0)).epsilon(1e-10));
}

TEST_CASE("identity word matrix pins the polytope to p_star") {
  Rng rng(3);
  const std::size_t m = 6;
  MaxEntInstance inst;
  inst.w = Matrix::identity(m);
  inst.p_star = sample_dirichlet(2.0, m, rng);
  const double h_star = entropy(inst.p_star);
  const auto report = duality_gap(inst);
  CHECK(std::abs(report.min_ce - h_star) <= 1e-6);
  CHECK(std::abs(report.max_ent - h_star) <= 1e-6);
  CHECK(report.gap <= 1e-6);
  for (std::size_t i = 0; i < m; ++i)
    CHECK(report.argmax_r[i] == doctest::Approx(inst.p_star[i]).epsilon(1e-5));
}

TEST_CASE("gibbs inequality holds on random instances") {
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    const auto inst = random_instance(900 + seed, 2 + seed % 7, 1 + seed % 3);
    const auto dual = min_cross_entropy(inst);
    CHECK(dual.value >= entropy(inst.p_star) - 1e-9);
  }
}

TEST_CASE("primal maximizer has exponential-family form") {
  const auto inst = random_instance(42, 6, 2);
  const auto primal = max_entropy_primal(inst);
  // log r_i - <w_i, lambda> must be constant; recover lambda by least squares
  // against the centered design, then check the residual spread.
  const std::size_t m = 6, d = 2;
  std::vector<double> y(m);
  for (std::size_t i = 0; i < m; ++i) y[i] = std::log(primal.r[i]);
  // normal equations for [w | 1] lambda_aug = y
  Matrix design(m, d + 1, 1.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < d; ++j) design(i, j) = inst.w(i, j);
  Matrix gram(d + 1, d + 1);
  std::vector<double> rhs(d + 1, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t a = 0; a <= d; ++a) {
      rhs[a] += design(i, a) * y[i];
      for (std::size_t b = 0; b <= d; ++b) gram(a, b) += design(i, a) * design(i, b);
    }
  // tiny system: solve by Gaussian elimination
  for (std::size_t col = 0; col <= d; ++col) {
    std::size_t piv = col;
    for (std::size_t r2 = col + 1; r2 <= d; ++r2)
      if (std::abs(gram(r2, col)) > std::abs(gram(piv, col))) piv = r2;
    for (std::size_t c2 = 0; c2 <= d; ++c2) std::swap(gram(col, c2), gram(piv, c2));
    std::swap(rhs[col], rhs[piv]);
    for (std::size_t r2 = 0; r2 <= d; ++r2) {
      if (r2 == col) continue;
      const double f = gram(r2, col) / gram(col, col);
      for (std::size_t c2 = 0; c2 <= d; ++c2) gram(r2, c2) -= f * gram(col, c2);
      rhs[r2] -= f * rhs[col];
    }
  }
  std::vector<double> lambda(d + 1);
  for (std::size_t a = 0; a <= d; ++a) lambda[a] = rhs[a] / gram(a, a);
  double worst = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    double fitted = lambda[d];
    for (std::size_t j = 0; j < d; ++j) fitted += lambda[j] * inst.w(i, j);
    worst = std::max(worst, std::abs(y[i] - fitted));
  }
  CHECK(worst <= 1e-4);
}

TEST_CASE("independent solvers agree across 50 random instances") {
  double max_gap = 0.0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto inst = random_instance(1000 + seed, 2 + seed % 7, 1 + seed % 3);
    const auto report = duality_gap(inst);
    CHECK(report.min_ce >= entropy(inst.p_star) - 1e-9);
    CHECK(report.max_ent <= report.min_ce + 1e-6);  // weak duality
    max_gap = std::max(max_gap, report.gap);
  }
  CHECK(max_gap <= 1e-4);
}

TEST_CASE("one-hot target is reported as a boundary case") {
  MaxEntInstance inst;
  inst.w = Matrix::identity(3);
  inst.p_star = {1.0, 0.0, 0.0};
  const auto dual = min_cross_entropy(inst);
  CHECK_FALSE(dual.attained);
  CHECK(dual.value >= 0.0);  // best value found still obeys Gibbs (H(p*) = 0)
}

TEST_CASE("appending an independent column never raises the max entropy") {
  Rng rng(5);
  for (int t = 0; t < 20; ++t) {
    const std::size_t m = 7;
    const Matrix w_full = Matrix::gaussian(m, 3, rng);
    const auto p_star = sample_dirichlet(1.5, m, rng);
    double previous = kInf;
    for (std::size_t d = 1; d <= 3; ++d) {
      Matrix w(m, d);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < d; ++j) w(i, j) = w_full(i, j);
      const auto primal = max_entropy_primal(MaxEntInstance{p_star, w});
      CHECK(primal.value <= previous + 1e-5);
      previous = primal.value;
    }
  }
}

TEST_CASE("eckart-young bound on a diagonal matrix") {
  Matrix a(3, 3);
  a(0, 0) = 3.0;
  a(1, 1) = 2.0;
  a(2, 2) = 1.0;
  CHECK(eckart_young_bound(a, 1) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(eckart_young_bound(a, 2) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("eckart-young bound is non-increasing in the embedding width") {
  Rng rng(6);
  const Matrix a = Matrix::gaussian(8, 12, rng);
  double previous = kInf;
  for (std::size_t d = 0; d < 8; ++d) {
    const double bound = eckart_young_bound(a, d);
    CHECK(bound <= previous + 1e-12);
    previous = bound;
  }
}

TEST_CASE("rank-structured targets are fit to near zero error") {
  Rng rng(7);
  const std::size_t m = 8, n = 10, d = 2;
  const Matrix w = Matrix::gaussian(m, d, rng);
  const Matrix h = Matrix::gaussian(n, d, rng);
  Matrix target = multiply_abt(w, h);
  for (std::size_t j = 0; j < n; ++j) {
    const double z = rng.normal();
    for (std::size_t i = 0; i < m; ++i) target(i, j) -= z;
  }
  const auto fit = mse_rank_fit(target, d);
  CHECK(fit.frobenius_error < 1e-9);
}

TEST_CASE("fitting never beats the spectral bound and stays near it") {
  // the forced all-ones column direction costs something on raw Gaussian
  // targets, where e_M is not aligned with the top singular vectors; the
  // structured optimum still interlaces below the next singular value
  Rng rng(8);
  for (int t = 0; t < 10; ++t) {
    const Matrix target = Matrix::gaussian(10, 12, rng);
    const std::size_t d = 2;
    const double bound = eckart_young_bound(target, d);
    const auto fit = mse_rank_fit(target, d);
    CHECK(fit.frobenius_error >= bound - 1e-6);
    CHECK(fit.frobenius_error <= eckart_young_bound(target, d - 1) + 1e-6);
  }
}

TEST_CASE("log-prob targets reach the truncated-svd residual within 5 percent") {
  const SyntheticTask task = build_task(SyntheticTaskSpec{1.0, 20, 30, 3, 55});
  Matrix target(20, 30);
  for (std::size_t j = 0; j < 30; ++j)
    for (std::size_t i = 0; i < 20; ++i) target(i, j) = std::log(task.p_star(j, i));
  const double bound = eckart_young_bound(target, 3);
  const auto fit = mse_rank_fit(target, 3);
  CHECK(fit.frobenius_error >= bound - 1e-6);
  CHECK(fit.frobenius_error <= 1.05 * bound);
  CHECK(fit.mse == doctest::Approx(fit.frobenius_error * fit.frobenius_error / 30.0));
}

}  // TEST_SUITE
