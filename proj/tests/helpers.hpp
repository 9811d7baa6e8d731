#pragma once

#include <Eigen/Dense>
#include <memory>
#include <random>

#include "samo/layered.hpp"
#include "samo/quadratic.hpp"

namespace samo::testing {

inline LayeredParams lp(std::vector<std::vector<double>> layers) {
  return LayeredParams(std::move(layers));
}

inline LayeredParams random_params(const LayerShape& shape, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> n(0.0, sd);
  LayeredParams p = LayeredParams::zeros(shape);
  for (std::size_t d = 0; d < p.num_layers(); ++d) {
    for (double& v : p.layer(d)) v = n(rng);
  }
  return p;
}

inline Eigen::MatrixXd random_spd(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::MatrixXd a(n, n);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = g(rng);
  return a * a.transpose() / static_cast<double>(n) + Eigen::MatrixXd::Identity(n, n) * 0.1;
}

// K random convex quadratics on a layered parameter vector.
inline std::unique_ptr<QuadraticProblem> random_quadratic(const LayerShape& shape, std::size_t K,
                                                         std::mt19937_64& rng) {
  std::size_t n = 0;
  for (auto s : shape) n += s;
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<QuadraticTask> tasks;
  for (std::size_t k = 0; k < K; ++k) {
    QuadraticTask t;
    t.hessian = random_spd(n, rng);
    t.linear = Eigen::VectorXd(n);
    for (Eigen::Index i = 0; i < t.linear.size(); ++i) t.linear[i] = g(rng);
    t.offset = g(rng);
    tasks.push_back(std::move(t));
  }
  return std::make_unique<QuadraticProblem>(shape, std::move(tasks));
}

inline double max_abs_diff(const LayeredParams& a, const LayeredParams& b) {
  const auto fa = a.flat(), fb = b.flat();
  double m = 0.0;
  for (std::size_t i = 0; i < fa.size(); ++i) m = std::max(m, std::abs(fa[i] - fb[i]));
  return m;
}

}  // namespace samo::testing
