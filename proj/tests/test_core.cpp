#include <doctest.h>

#include <cmath>
#include <limits>

#include "helpers.hpp"
#include "samo/csv.hpp"
#include "samo/errors.hpp"
#include "samo/problem.hpp"
#include "samo/quadratic.hpp"
#include "samo/rng.hpp"
#include "samo/toy.hpp"

using namespace samo;

TEST_CASE("axpy") {
  const LayeredParams x = testing::lp({{1.0, 2.0}});
  const LayeredParams y = testing::lp({{3.0, 4.0}});
  CHECK(axpy(0.0, x, y) == y);
  CHECK(axpy(1.0, x, y) == testing::lp({{4.0, 6.0}}));
  CHECK(axpy(-1.0, y, y) == LayeredParams::zeros({2}));
  CHECK_THROWS_AS(axpy(1.0, x, testing::lp({{1.0}, {2.0}})), StructuralError);
}

TEST_CASE("norms") {
  CHECK(norm(testing::lp({{3.0, 4.0}})) == doctest::Approx(5.0));
  const LayeredParams two = testing::lp({{1.0, 0.0}, {0.0, 1.0}});
  CHECK(layer_norm(two, 0) == doctest::Approx(1.0));
  CHECK(norm(LayeredParams::zeros({3, 2})) == 0.0);
  CHECK_THROWS_AS(layer_norm(two, 2), StructuralError);
}

TEST_CASE("non-finite entries are rejected at construction") {
  CHECK_THROWS_AS(testing::lp({{1.0, std::nan("")}}), NumericError);
  CHECK_THROWS_AS(testing::lp({{std::numeric_limits<double>::infinity()}}), NumericError);
}

TEST_CASE("flat round trip and layer selection") {
  std::mt19937_64 rng(1);
  const LayerShape shape{3, 1, 4};
  const auto p = testing::random_params(shape, rng);
  const auto flat = p.flat();
  CHECK(LayeredParams::from_flat(shape, flat) == p);
  CHECK(p.shape() == shape);
  CHECK(p.size() == 8);

  const std::vector<std::size_t> pick{0, 2};
  const auto part = select_layers(p, pick);
  CHECK(part.shape() == LayerShape{3, 4});
  CHECK(scatter_layers(LayeredParams::zeros(shape), part, pick) == mask_layers(p, pick));
  CHECK(layer_norm(mask_layers(p, pick), 1) == 0.0);
}

TEST_CASE("substreams are reproducible and separated by purpose and index") {
  Rng a = substream(7, "spsa", {3, 1});
  Rng b = substream(7, "spsa", {3, 1});
  CHECK(a() == b());
  CHECK(substream_seed(7, "spsa", {3, 1}) != substream_seed(7, "spsa", {1, 3}));
  CHECK(substream_seed(7, "spsa", {3}) != substream_seed(7, "minibatch", {3}));
  CHECK(substream_seed(7, "spsa", {3}) != substream_seed(8, "spsa", {3}));
}

TEST_CASE("csv keeps full double precision") {
  CsvTable t{{"a", "b"}, {{0.1, 1.0 / 3.0}, {-1e-300, 12345678.123456789}}};
  const CsvTable back = parse_csv(to_csv(t));
  CHECK(back.header == t.header);
  CHECK(back.rows == t.rows);
  CHECK(back.column("b") == 1);
  CHECK_THROWS_AS(back.column("c"), ConfigError);
}

TEST_CASE("pass counters") {
  auto q = QuadraticProblem::isotropic(3);
  const auto theta = testing::lp({{1.0, 2.0, 3.0}});
  q->loss(0, theta);
  q->losses(theta);
  CHECK(q->passes() == PassCount{2, 0});
  q->grad(0, theta);
  q->avg_grad(theta);
  CHECK(q->passes() == PassCount{2, 2});
  CHECK_THROWS_AS(q->grad(1, theta), StructuralError);
  CHECK_THROWS_AS(q->grad(0, testing::lp({{1.0}})), StructuralError);
}

TEST_CASE("task subsets share the parent's counters") {
  std::mt19937_64 rng(3);
  auto q = testing::random_quadratic({4}, 3, rng);
  const auto theta = testing::random_params({4}, rng);
  TaskSubsetProblem sub(*q, {2, 0});
  CHECK(sub.num_tasks() == 2);
  CHECK(sub.loss(0, theta) == q->loss(2, theta));
  CHECK(q->passes().forwards == 2);
  CHECK_THROWS_AS(TaskSubsetProblem(*q, {3}), StructuralError);
}

TEST_CASE("gradient check: quadratic half squared norm") {
  auto q = QuadraticProblem::isotropic(6);
  std::mt19937_64 rng(5);
  const auto theta = testing::random_params({6}, rng);
  const auto report = check_gradients(*q, theta);
  REQUIRE(report.size() == 1);
  CHECK(report[0].max_rel_error <= 1e-6);
}

TEST_CASE("gradient check: affine loss is exact") {
  auto q = QuadraticProblem::linear({1.5, -2.0, 0.25, 3.0});
  const auto report = check_gradients(*q, testing::lp({{0.3, -1.0, 2.0, 0.7}}));
  CHECK(report[0].max_rel_error <= 1e-10);
}

TEST_CASE("gradient check: toy at the figure start point") {
  ToyProblem toy;
  for (const auto& r : check_gradients(toy, ToyProblem::point(-6.0, 1.0))) {
    CHECK(r.max_rel_error <= 1e-5);
  }
}
