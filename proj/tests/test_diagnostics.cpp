#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <cmath>

#include "helpers.hpp"
#include "samo/diagnostics.hpp"
#include "samo/errors.hpp"
#include "samo/toy.hpp"

using namespace samo;

namespace {

LayeredParams v2(double a, double b) { return testing::lp({{a, b}}); }

}  // namespace

TEST_CASE("cosine matrix examples") {
  std::vector<LayeredParams> same{v2(1, 2), v2(1, 2)};
  CHECK(cosine_matrix(same).values[0][1] == doctest::Approx(1.0));
  std::vector<LayeredParams> orth{v2(1, 0), v2(0, 1)};
  CHECK(cosine_matrix(orth).values[0][1] == 0.0);
  std::vector<LayeredParams> opposed{v2(1, 0), v2(-1, 0)};
  const auto m = cosine_matrix(opposed);
  CHECK(m.values[1][0] == doctest::Approx(-1.0));
  CHECK(m.mean_off_diagonal() == doctest::Approx(-1.0));
  CHECK(m.values[0][0] == 1.0);
}

TEST_CASE("cosine matrix flags zero gradients and ignores scale") {
  std::vector<LayeredParams> g{v2(0, 0), v2(1, 1), v2(2, -1)};
  const auto m = cosine_matrix(g);
  CHECK(m.degenerate[0]);
  CHECK_FALSE(m.degenerate[1]);
  CHECK(m.values[0][1] == 0.0);
  std::vector<LayeredParams> scaled{v2(0, 0), v2(7, 7), v2(0.2, -0.1)};
  const auto s = cosine_matrix(scaled);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      CHECK(s.values[i][j] == doctest::Approx(m.values[i][j]).epsilon(1e-14));
      CHECK(s.values[i][j] == s.values[j][i]);
    }
  }
}

TEST_CASE("hvp on quadratics") {
  std::mt19937_64 gen(41);
  const Eigen::MatrixXd a = testing::random_spd(5, gen);
  QuadraticTask t;
  t.hessian = a;
  QuadraticProblem q({5}, {t});
  const auto theta = testing::random_params({5}, gen);
  const auto v = testing::random_params({5}, gen);
  const auto hv = hvp(q, theta, v, default_hvp_delta(theta));
  const auto vf = v.flat();
  const Eigen::VectorXd av = a * Eigen::Map<const Eigen::VectorXd>(vf.data(), 5);
  for (int i = 0; i < 5; ++i) CHECK(std::abs(hv.layer(0)[i] - av[i]) <= 1e-8);

  const auto hv2 = hvp(q, theta, scale(2.0, v), default_hvp_delta(theta));
  CHECK(testing::max_abs_diff(hv2, scale(2.0, hv)) <= 1e-8);

  const auto before = q.passes();
  hvp(q, theta, v, 1e-3);
  CHECK(q.passes() - before == PassCount{0, 2});

  auto lin = QuadraticProblem::linear({1.0, -3.0});
  CHECK(norm(hvp(*lin, v2(0.4, 0.1), v2(1, 2), 1e-4)) == 0.0);
  CHECK_THROWS_AS(hvp(q, theta, v, 0.0), ConfigError);
}

TEST_CASE("spectrum of a diagonal quadratic") {
  auto q = QuadraticProblem::diagonal({1, 3, 5, 2, 4});
  SpectrumOptions so;
  so.k = 5;
  const auto r = hessian_spectrum(*q, testing::lp({{0.1, 0.2, 0.3, 0.4, 0.5}}), so);
  REQUIRE(r.eigenvalues.size() == 5);
  for (int i = 0; i < 5; ++i) CHECK(std::abs(r.eigenvalues[i] - (5 - i)) <= 1e-6);
  REQUIRE(r.bulk_ratio);
  CHECK(*r.bulk_ratio == doctest::Approx(5.0).epsilon(1e-6));
  CHECK(r.lambda_max == r.eigenvalues[0]);
  for (double res : r.residuals) CHECK(res <= so.tol);
  CHECK_FALSE(r.approximate);
}

TEST_CASE("spectrum of the identity") {
  auto q = QuadraticProblem::isotropic(6);
  SpectrumOptions so;
  so.k = 3;
  const auto r = hessian_spectrum(*q, LayeredParams::zeros({6}), so);
  REQUIRE(r.eigenvalues.size() == 3);
  for (double e : r.eigenvalues) CHECK(std::abs(e - 1.0) <= 1e-6);
  CHECK_FALSE(r.bulk_ratio);
}

TEST_CASE("spectrum matches a dense eigendecomposition") {
  std::mt19937_64 gen(42);
  for (std::size_t n : {7, 20}) {
    QuadraticTask t;
    t.hessian = testing::random_spd(n, gen);
    QuadraticProblem q({n}, {t});
    const Eigen::VectorXd dense = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(t.hessian).eigenvalues();
    SpectrumOptions so;
    so.k = 5;
    so.seed = n;
    const auto r = hessian_spectrum(q, testing::random_params({n}, gen), so);
    for (std::size_t i = 0; i < 5; ++i) {
      const double want = dense[static_cast<Eigen::Index>(n - 1 - i)];
      CHECK(std::abs(r.eigenvalues[i] - want) <= 1e-4 * std::abs(want));
    }
  }
}

TEST_CASE("toy f1 is flat at the origin") {
  ToyProblem toy;
  TaskSubsetProblem f1(toy, {0});
  SpectrumOptions so;
  so.k = 1;
  const auto r = hessian_spectrum(f1, ToyProblem::point(0, 0), so);
  CHECK(std::abs(r.lambda_max) <= 1e-6);
}

TEST_CASE("spectrum is deterministic and validates k") {
  std::mt19937_64 gen(43);
  auto q = testing::random_quadratic({10}, 2, gen);
  const auto theta = testing::random_params({10}, gen);
  SpectrumOptions so;
  so.k = 3;
  so.seed = 8;
  const auto a = hessian_spectrum(*q, theta, so), b = hessian_spectrum(*q, theta, so);
  CHECK(a.eigenvalues == b.eigenvalues);
  so.k = 11;
  CHECK_THROWS_AS(hessian_spectrum(*q, theta, so), ConfigError);
  so.k = 0;
  CHECK_THROWS_AS(hessian_spectrum(*q, theta, so), ConfigError);
}

TEST_CASE("spectrum flags truncated runs as approximate") {
  std::mt19937_64 gen(44);
  QuadraticTask t;
  t.hessian = testing::random_spd(30, gen);
  QuadraticProblem q({30}, {t});
  SpectrumOptions so;
  so.k = 3;
  so.iters = 4;
  so.tol = 1e-12;
  const auto r = hessian_spectrum(q, LayeredParams::zeros({30}), so);
  CHECK(r.approximate);
  CHECK(r.lanczos_steps == 4);
}

TEST_CASE("delta-m") {
  std::vector<MetricSpec> same{{"a", 3.0, 3.0, true}, {"b", 2.0, 2.0, false}};
  CHECK(delta_m(same) == 0.0);
  std::vector<MetricSpec> one{{"err", 10.0, 11.0, false}};
  CHECK(delta_m(one) == doctest::Approx(10.0));
  // Cityscapes: LS against the single-task reference
  std::vector<MetricSpec> city{{"miou", 74.01, 75.18, true},
                               {"pixacc", 93.16, 93.49, true},
                               {"abs_err", 0.0125, 0.0155, false},
                               {"rel_err", 27.77, 46.77, false}};
  CHECK(std::abs(delta_m(city) - 22.60) <= 0.1);
  std::vector<MetricSpec> zero{{"broken", 0.0, 1.0, false}};
  CHECK_THROWS_WITH_AS(delta_m(zero), doctest::Contains("broken"), ConfigError);
}
