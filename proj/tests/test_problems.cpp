#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "helpers.hpp"
#include "samo/diagnostics.hpp"
#include "samo/errors.hpp"
#include "samo/mlp.hpp"
#include "samo/toy.hpp"

using namespace samo;

TEST_CASE("toy losses at landmark points") {
  CHECK(toy_losses(0.0, 0.0).f1 == 0.0);
  CHECK(toy_losses(-4.0, 0.0).f2 == 0.0);
  // (-4)^4 / 10 = 25.6
  CHECK(toy_losses(-4.0, 0.0).f1 == doctest::Approx(1.0 - 1.0 / 26.6).epsilon(1e-14));
  CHECK(toy_losses(-4.0, 0.0).f1 == doctest::Approx(0.962406).epsilon(1e-6));
}

TEST_CASE("toy gradients") {
  const auto origin = toy_grads(0.0, 0.0);
  CHECK(norm(origin.per_task[0]) == 0.0);
  // f2's partials at the origin carry a factor exp(-32), zero only to rounding
  CHECK(norm(origin.per_task[1]) <= 1e-12);
  const auto f2min = toy_grads(-4.0, 0.0);
  CHECK(norm(f2min.per_task[1]) == 0.0);

  // central differences on the problem's losses, which are not clamped at the box edge
  ToyProblem toy;
  const double h = 1e-6;
  const auto g = toy_grads(-6.0, 1.0);
  auto fd = [&](int task, int axis) {
    const double dx = axis == 0 ? h : 0.0, dy = axis == 1 ? h : 0.0;
    return (toy.loss(task, ToyProblem::point(-6.0 + dx, 1.0 + dy)) -
            toy.loss(task, ToyProblem::point(-6.0 - dx, 1.0 - dy))) /
           (2 * h);
  };
  for (int task = 0; task < 2; ++task) {
    for (int axis = 0; axis < 2; ++axis) {
      CHECK(g.per_task[task].layer(0)[axis] == doctest::Approx(fd(task, axis)).epsilon(1e-6));
    }
  }
}

TEST_CASE("toy problem projects onto the box") {
  ToyProblem toy;
  CHECK(toy.project(ToyProblem::point(-7.0, 3.5)) == ToyProblem::point(-6.0, 3.0));
  CHECK(toy.project(ToyProblem::point(1.0, -1.0)) == ToyProblem::point(1.0, -1.0));
}

TEST_CASE("toy pareto grid") {
  const auto corners = toy_pareto_grid(2);
  REQUIRE(corners.size() == 4);
  CHECK(corners.front().x1 == -6.0);
  CHECK(corners.front().x2 == -3.0);
  CHECK(corners.back().x1 == 6.0);
  CHECK(corners.back().x2 == 3.0);

  // x1 step 0.5 and x2 step 0.25 put a node on (-4, 0)
  const auto grid = toy_pareto_grid(25);
  bool found = false;
  for (const auto& r : grid) {
    CHECK(r.f1 >= 0.0);
    CHECK(r.f1 < 1.0);
    CHECK(r.f2 >= 0.0);
    // f2 < 1 in exact arithmetic; exp(-q) underflows against 1 far from (-4, 0)
    CHECK(r.f2 <= 1.0);
    if (r.x1 == -4.0 && r.x2 == 0.0) {
      found = true;
      CHECK(r.f2 == 0.0);
    }
  }
  CHECK(found);
  CHECK_THROWS_AS(toy_pareto_grid(1), ConfigError);
}

namespace {

MlpConfig mlp_config(std::size_t tasks, double angle, std::uint64_t seed = 0) {
  MlpConfig c;
  c.tasks = tasks;
  c.conflict_angle = angle;
  c.seed = seed;
  c.samples = 64;
  return c;
}

double cosine(std::span<const double> a, std::span<const double> b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return ab / std::sqrt(aa * bb);
}

}  // namespace

TEST_CASE("mlp: identical teachers give identical task losses") {
  auto p = make_mlp_problem(mlp_config(2, 0.0));
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 3; ++trial) {
    auto theta = testing::random_params(p->shape(), rng, 0.3);
    // tie the two heads so the networks coincide
    const auto shape = p->shape();
    auto h0 = theta.layer(shape.size() - 2);
    auto h1 = theta.layer(shape.size() - 1);
    std::copy(h0.begin(), h0.end(), h1.begin());
    const auto l = p->losses(theta);
    CHECK(l[0] == l[1]);
  }
}

TEST_CASE("mlp: opposed teachers conflict through the trunk at init") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto p = make_mlp_problem(mlp_config(2, 180.0, seed));
    const auto theta = p->initial_params(seed);
    const auto shared = shared_layers(*p);
    const auto g0 = select_layers(p->grad(0, theta), shared).flat();
    const auto g1 = select_layers(p->grad(1, theta), shared).flat();
    CHECK(cosine(g0, g1) <= 0.0);
  }
}

TEST_CASE("mlp: teacher Gram matches the conflict angle") {
  auto p = make_mlp_problem(mlp_config(3, 90.0));
  const auto& w = p->teachers();
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = i + 1; j < 3; ++j) CHECK(std::abs(cosine(w[i], w[j])) <= 1e-10);
  }
  auto q = make_mlp_problem(mlp_config(3, 120.0));
  CHECK(q->teacher_gram_deviation() <= 1e-10);
  CHECK(cosine(q->teachers()[0], q->teachers()[2]) == doctest::Approx(-0.5).epsilon(1e-10));
}

TEST_CASE("mlp: layer layout") {
  auto p = make_mlp_problem(mlp_config(3, 90.0));
  // trunk 8->16->8: two trunk layers plus three heads
  CHECK(p->shape() == LayerShape{8 * 16 + 16, 16 * 8 + 8, 9, 9, 9});
  CHECK(shared_layers(*p) == std::vector<std::size_t>{0, 1});
  CHECK(p->layer_owner(3) == 1);
}

TEST_CASE("mlp: analytic gradients match finite differences") {
  auto p = make_mlp_problem(mlp_config(3, 120.0, 4));
  const auto theta = p->initial_params(4);
  for (const auto& r : check_gradients(*p, theta)) CHECK(r.max_rel_error <= 1e-5);
  const auto exact = exact_gradients(*p, theta);
  CHECK(testing::max_abs_diff(p->avg_grad(theta), exact.average) <= 1e-12);
}

TEST_CASE("mlp: invalid generator settings") {
  CHECK_THROWS_AS(make_mlp_problem(mlp_config(1, 90.0)), ConfigError);
  CHECK_THROWS_AS(make_mlp_problem(mlp_config(3, 200.0)), ConfigError);
  // three unit vectors cannot be pairwise at 180 degrees
  CHECK_THROWS_AS(make_mlp_problem(mlp_config(3, 180.0)), ConfigError);
  MlpConfig wide = mlp_config(9, 90.0);
  CHECK_THROWS_AS(make_mlp_problem(wide), ConfigError);
}

TEST_CASE("mlp: dataset csv round trip") {
  auto p = make_mlp_problem(mlp_config(3, 60.0, 9));
  const auto path = std::filesystem::temp_directory_path() / "samo_dataset_roundtrip.csv";
  write_dataset_csv(path, p->train_data());
  const MlpDataset back = read_dataset_csv(path);
  CHECK(back.input_dim == 8);
  CHECK(back.tasks == 3);
  CHECK(back.features == p->train_data().features);
  CHECK(back.targets == p->train_data().targets);
  std::filesystem::remove(path);
}

TEST_CASE("mlp: minibatches are seeded by step") {
  MlpConfig c = mlp_config(2, 90.0, 1);
  c.batch_size = 16;
  auto p = make_mlp_problem(c);
  const auto theta = p->initial_params(1);
  const auto a = p->minibatch(3), b = p->minibatch(3), other = p->minibatch(4);
  REQUIRE(a);
  const auto la = a->losses(theta);
  CHECK(la == b->losses(theta));
  CHECK(la != other->losses(theta));
  // views charge the parent's counters
  CHECK(p->passes().forwards == 3);
  CHECK(make_mlp_problem(mlp_config(2, 90.0))->minibatch(0) == nullptr);
}
