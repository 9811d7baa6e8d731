#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "samo/errors.hpp"
#include "samo/mlp.hpp"
#include "samo/rng.hpp"
#include "samo/sam.hpp"
#include "samo/toy.hpp"

using namespace samo;

namespace {

LayeredParams v2(double a, double b) { return testing::lp({{a, b}}); }

// c·θ on a two-layer vector, remembering every point it was asked about.
class RecordingLinear final : public MultiTaskProblem {
 public:
  explicit RecordingLinear(LayeredParams c) : c_(std::move(c)) {}
  std::size_t num_tasks() const override { return 1; }
  LayerShape shape() const override { return c_.shape(); }
  mutable std::vector<LayeredParams> queried;

 protected:
  double eval_loss(std::size_t, const LayeredParams& theta) const override {
    queried.push_back(theta);
    return dot(c_, theta) + 0.75;
  }
  LayeredParams eval_grad(std::size_t, const LayeredParams&) const override { return c_; }

 private:
  LayeredParams c_;
};

class Constant final : public MultiTaskProblem {
 public:
  std::size_t num_tasks() const override { return 1; }
  LayerShape shape() const override { return {3}; }

 protected:
  double eval_loss(std::size_t, const LayeredParams&) const override { return 2.5; }
  LayeredParams eval_grad(std::size_t, const LayeredParams&) const override {
    return LayeredParams::zeros({3});
  }
};

class Exploding final : public MultiTaskProblem {
 public:
  std::size_t num_tasks() const override { return 2; }
  LayerShape shape() const override { return {2}; }

 protected:
  double eval_loss(std::size_t task, const LayeredParams&) const override {
    return task == 1 ? INFINITY : 0.0;
  }
  LayeredParams eval_grad(std::size_t, const LayeredParams&) const override { return v2(1, 1); }
};

double cosine(const LayeredParams& a, const LayeredParams& b) {
  return dot(a, b) / (norm(a) * norm(b));
}

}  // namespace

TEST_CASE("sam perturbation") {
  auto p = sam_perturbation(v2(3, 4), 1.0);
  CHECK(p.value.layer(0)[0] == doctest::Approx(0.6));
  CHECK(p.value.layer(0)[1] == doctest::Approx(0.8));
  CHECK_FALSE(p.degenerate);
  auto z = sam_perturbation(v2(0, 0), 0.3);
  CHECK(z.degenerate);
  CHECK(norm(z.value) == 0.0);
  for (double c : {1e-6, 0.5, 7.0, 1e8}) {
    CHECK(testing::max_abs_diff(sam_perturbation(v2(3 * c, 4 * c), 1.0).value, v2(0.6, 0.8)) <=
          1e-15);
  }
}

TEST_CASE("spsa is exact on affine losses") {
  std::mt19937_64 gen(21);
  const auto c = testing::random_params({3, 2}, gen);
  RecordingLinear problem(c);
  const auto theta = testing::random_params({3, 2}, gen);
  const double mu = 0.01;
  for (std::uint64_t s = 0; s < 10; ++s) {
    Rng rng = substream(s, "spsa", {0, 0});
    problem.queried.clear();
    const auto est = spsa_estimate(problem, 0, theta, mu, rng);
    REQUIRE(problem.queried.size() == 2);
    const auto z = scale(1.0 / mu, axpy(-1.0, theta, problem.queried[0]));
    CHECK(testing::max_abs_diff(est, scale(dot(c, z), z)) <= 1e-10);
  }
}

TEST_CASE("spsa on constant and symmetric losses") {
  Constant flat;
  Rng rng(3);
  CHECK(norm(spsa_estimate(flat, 0, testing::lp({{1.0, 2.0, 3.0}}), 0.01, rng)) == 0.0);
  auto q = QuadraticProblem::isotropic(4);
  CHECK(norm(spsa_estimate(*q, 0, LayeredParams::zeros({4}), 0.01, rng)) == 0.0);
}

TEST_CASE("spsa only perturbs the requested layers") {
  std::mt19937_64 gen(22);
  auto q = testing::random_quadratic({2, 3}, 1, gen);
  const auto theta = testing::random_params({2, 3}, gen);
  Rng rng(4);
  const std::vector<std::size_t> first{0};
  const auto est = spsa_estimate(*q, 0, theta, 0.01, rng, first);
  CHECK(layer_norm(est, 1) == 0.0);
  CHECK(layer_norm(est, 0) > 0.0);
}

TEST_CASE("spsa average points along the true gradient") {
  std::mt19937_64 gen(23);
  auto q = testing::random_quadratic({8}, 1, gen);
  const auto theta = testing::random_params({8}, gen);
  Rng rng = substream(0, "spsa", {0, 0});
  LayeredParams sum = LayeredParams::zeros({8});
  for (int i = 0; i < 10000; ++i) sum = axpy(1.0, spsa_estimate(*q, 0, theta, 0.01, rng), sum);
  CHECK(cosine(sum, q->grad(0, theta)) >= 0.95);
}

TEST_CASE("layerwise normalization") {
  const LayeredParams est = testing::lp({{2.0, 0.0}});
  CHECK(layerwise_normalize(est, testing::lp({{0.0, 4.0}})) == testing::lp({{4.0, 0.0}}));
  CHECK(layerwise_normalize(est, est) == est);

  const LayeredParams two = testing::lp({{1.0, 0.0}, {0.0, 10.0}});
  const LayeredParams ref = testing::lp({{3.0, 4.0}, {5.0, 0.0}});
  const auto out = layerwise_normalize(two, ref);
  CHECK(out == testing::lp({{5.0, 0.0}, {0.0, 5.0}}));
  CHECK(layer_norm(out, 0) == doctest::Approx(5.0).epsilon(1e-12));
  CHECK(layer_norm(out, 1) == doctest::Approx(5.0).epsilon(1e-12));

  // degenerate layer stays zero
  const auto zero_layer = layerwise_normalize(testing::lp({{0.0, 0.0}, {1.0, 1.0}}), ref);
  CHECK(layer_norm(zero_layer, 0) == 0.0);
}

TEST_CASE("global normalization differs from layerwise on unequal ratios") {
  const LayeredParams est = testing::lp({{2.0}});
  CHECK(global_normalize(est, testing::lp({{4.0}})).value == testing::lp({{4.0}}));
  CHECK(global_normalize(est, est).value == est);

  const LayeredParams two = testing::lp({{1.0}, {10.0}});
  const LayeredParams ref = testing::lp({{5.0}, {5.0}});
  const auto g = global_normalize(two, ref).value;
  CHECK(norm(g) == doctest::Approx(norm(ref)).epsilon(1e-12));
  CHECK(std::abs(layer_norm(g, 0) - 5.0) > 1.0);
  CHECK(global_normalize(LayeredParams::zeros({1, 1}), ref).degenerate);
}

TEST_CASE("joint perturbation") {
  const auto g0 = v2(0.3, -2.0), local = v2(1.5, 0.25);
  CHECK(joint_perturbation(g0, local, 0.7, 1.0).value == sam_perturbation(g0, 0.7).value);
  CHECK(joint_perturbation(g0, local, 0.7, 0.0).value == sam_perturbation(local, 0.7).value);
  const auto half = joint_perturbation(v2(1, 0), v2(0, 1), 1.0, 0.5).value;
  CHECK(testing::max_abs_diff(half, v2(1 / std::sqrt(2.0), 1 / std::sqrt(2.0))) <= 1e-15);
  CHECK(joint_perturbation(v2(1, 0), v2(-1, 0), 1.0, 0.5).degenerate);
  CHECK_THROWS_AS(joint_perturbation(g0, local, 1.0, 1.5), ConfigError);
}

TEST_CASE("config validation") {
  SamConfig c;
  c.alpha = 1.3;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.rho = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.mu = -1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.spsa_samples = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK(parse_sam_mode("joint") == SamMode::joint);
  CHECK_THROWS_AS(parse_estimator("adam"), ConfigError);
  CHECK(to_string(Normalization::layerwise) == "layerwise");
}

TEST_CASE("global mode shares one perturbation") {
  std::mt19937_64 gen(24);
  auto q = testing::random_quadratic({3, 2}, 3, gen);
  const auto theta = testing::random_params({3, 2}, gen);
  SamConfig c;
  c.mode = SamMode::global;
  c.rho = 0.05;
  const auto r = samo_gradients(*q, theta, c, 0, 0);
  const auto eps = sam_perturbation(q->avg_grad(theta), 0.05).value;
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(r.perturbations[i].value == eps);
    CHECK(r.gradients.per_task[i] == q->grad(i, axpy(1.0, eps, theta)));
  }
}

TEST_CASE("tiny radius recovers the plain gradients on the toy") {
  ToyProblem toy;
  const auto theta = ToyProblem::point(-2.0, 0.7);
  for (SamMode mode : {SamMode::global, SamMode::local, SamMode::joint}) {
    SamConfig c;
    c.mode = mode;
    c.rho = 1e-8;
    const auto r = samo_gradients(toy, theta, c, 1, 0);
    for (std::size_t i = 0; i < 2; ++i) {
      CHECK(testing::max_abs_diff(r.gradients.per_task[i], toy.grad(i, theta)) <= 1e-5);
    }
  }
}

TEST_CASE("pass ledger per mode") {
  std::mt19937_64 gen(25);
  auto q = testing::random_quadratic({4}, 4, gen);
  const auto theta = testing::random_params({4}, gen);
  auto cost = [&](SamMode mode, Estimator est) {
    SamConfig c;
    c.mode = mode;
    c.estimator = est;
    const auto before = q->passes();
    samo_gradients(*q, theta, c, 0, 0);
    return q->passes() - before;
  };
  CHECK(cost(SamMode::joint, Estimator::spsa) == PassCount{8, 5});
  CHECK(cost(SamMode::global, Estimator::spsa) == PassCount{0, 5});
  CHECK(cost(SamMode::local, Estimator::exact) == PassCount{0, 8});
  CHECK(cost(SamMode::joint, Estimator::exact) == PassCount{0, 9});
}

TEST_CASE("perturbation norms equal rho") {
  std::mt19937_64 gen(26);
  auto q = testing::random_quadratic({3, 4, 2}, 3, gen);
  for (int trial = 0; trial < 10; ++trial) {
    const auto theta = testing::random_params({3, 4, 2}, gen);
    for (SamMode mode : {SamMode::global, SamMode::local, SamMode::joint}) {
      for (Normalization n : {Normalization::layerwise, Normalization::global, Normalization::none}) {
        SamConfig c;
        c.mode = mode;
        c.normalization = n;
        c.rho = 0.3;
        for (const auto& p : samo_gradients(*q, theta, c, trial, trial).perturbations) {
          REQUIRE_FALSE(p.degenerate);
          CHECK(std::abs(norm(p.value) - 0.3) <= 1e-10);
        }
      }
    }
  }
}

TEST_CASE("reduction identities hold bit for bit") {
  std::mt19937_64 gen(27);
  auto q = testing::random_quadratic({3, 2}, 3, gen);
  for (int trial = 0; trial < 10; ++trial) {
    const auto theta = testing::random_params({3, 2}, gen);
    SamConfig joint;
    joint.alpha = 1.0;
    SamConfig global = joint;
    global.mode = SamMode::global;
    const auto a = samo_gradients(*q, theta, joint, trial, 0);
    const auto b = samo_gradients(*q, theta, global, trial, 0);
    CHECK(a.gradients.per_task == b.gradients.per_task);

    joint.alpha = 0.0;
    joint.estimator = Estimator::exact;
    SamConfig local = joint;
    local.mode = SamMode::local;
    const auto c = samo_gradients(*q, theta, joint, trial, 0);
    const auto d = samo_gradients(*q, theta, local, trial, 0);
    CHECK(c.gradients.per_task == d.gradients.per_task);
  }
}

TEST_CASE("parallel task branches match sequential ones") {
  MlpConfig m;
  m.samples = 32;
  auto p = make_mlp_problem(m);
  const auto theta = p->initial_params(0);
  const auto shared = shared_layers(*p);
  SamConfig c;
  const auto seq = samo_gradients(*p, theta, c, shared, 9, 4);
  c.parallel = true;
  const auto par = samo_gradients(*p, theta, c, shared, 9, 4);
  CHECK(seq.gradients.per_task == par.gradients.per_task);
  CHECK(seq.gradients.average == par.gradients.average);
  // heads are untouched by the perturbation
  for (const auto& e : seq.perturbations) CHECK(layer_norm(e.value, 2) == 0.0);
}

TEST_CASE("numeric failures name the task") {
  Exploding bad;
  SamConfig c;
  try {
    samo_gradients(bad, v2(0, 0), c, 0, 0);
    FAIL("expected a numeric error");
  } catch (const NumericError& e) {
    REQUIRE(e.task().has_value());
    CHECK(*e.task() == 1);
  }
}
