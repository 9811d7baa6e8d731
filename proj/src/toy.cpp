#include "samo/toy.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iostream>

#include "samo/errors.hpp"

namespace samo {

namespace {

std::atomic<bool> warned_clamp{false};

struct Point {
  double x1;
  double x2;
};

Point clamp_to_box(double x1, double x2) {
  Point p{std::clamp(x1, ToyProblem::kX1Min, ToyProblem::kX1Max),
          std::clamp(x2, ToyProblem::kX2Min, ToyProblem::kX2Max)};
  if ((p.x1 != x1 || p.x2 != x2) && !warned_clamp.exchange(true)) {
    std::cerr << "warning: toy point (" << x1 << ", " << x2 << ") clamped onto the box\n";
  }
  return p;
}

double f1(Point p) {
  const double s = 1.0 + (std::pow(p.x1, 4) + std::pow(p.x2, 4)) / 10.0;
  return 1.0 - 1.0 / s;
}

double f2(Point p) {
  const double u = p.x1 + 4.0;
  return 1.0 - std::exp(-2.0 * u * u - 2.0 * p.x2 * p.x2);
}

std::vector<double> grad_f1(Point p) {
  const double s = 1.0 + (std::pow(p.x1, 4) + std::pow(p.x2, 4)) / 10.0;
  const double s2 = s * s;
  return {0.4 * std::pow(p.x1, 3) / s2, 0.4 * std::pow(p.x2, 3) / s2};
}

std::vector<double> grad_f2(Point p) {
  const double u = p.x1 + 4.0;
  const double e = std::exp(-2.0 * u * u - 2.0 * p.x2 * p.x2);
  return {4.0 * u * e, 4.0 * p.x2 * e};
}

// The formulas are defined on all of R^2; the problem evaluates them unclamped
// so SAM probes and finite differences may step outside the box.
Point unpack(const LayeredParams& theta) {
  auto xs = theta.layer(0);
  return {xs[0], xs[1]};
}

}  // namespace

LayeredParams ToyProblem::point(double x1, double x2) { return LayeredParams({{x1, x2}}); }

LayeredParams ToyProblem::project(const LayeredParams& theta) const {
  auto xs = theta.layer(0);
  return point(std::clamp(xs[0], kX1Min, kX1Max), std::clamp(xs[1], kX2Min, kX2Max));
}

double ToyProblem::eval_loss(std::size_t task, const LayeredParams& theta) const {
  const Point p = unpack(theta);
  return task == 0 ? f1(p) : f2(p);
}

std::vector<double> ToyProblem::eval_losses(const LayeredParams& theta) const {
  const Point p = unpack(theta);
  return {f1(p), f2(p)};
}

LayeredParams ToyProblem::eval_grad(std::size_t task, const LayeredParams& theta) const {
  const Point p = unpack(theta);
  return LayeredParams({task == 0 ? grad_f1(p) : grad_f2(p)});
}

ToyValues toy_losses(double x1, double x2) {
  const Point p = clamp_to_box(x1, x2);
  return {f1(p), f2(p)};
}

GradientSet toy_grads(double x1, double x2) {
  const Point p = clamp_to_box(x1, x2);
  GradientSet out;
  out.per_task = {LayeredParams({grad_f1(p)}), LayeredParams({grad_f2(p)})};
  out.average = mean(out.per_task);
  return out;
}

std::vector<ToyGridRow> toy_pareto_grid(std::size_t resolution) {
  if (resolution < 2) throw ConfigError("toy grid resolution must be at least 2");
  std::vector<ToyGridRow> rows;
  rows.reserve(resolution * resolution);
  const double n = static_cast<double>(resolution - 1);
  for (std::size_t r = 0; r < resolution; ++r) {
    const double x2 = ToyProblem::kX2Min + (ToyProblem::kX2Max - ToyProblem::kX2Min) * r / n;
    for (std::size_t c = 0; c < resolution; ++c) {
      const double x1 = ToyProblem::kX1Min + (ToyProblem::kX1Max - ToyProblem::kX1Min) * c / n;
      const ToyValues v = toy_losses(x1, x2);
      rows.push_back({x1, x2, v.f1, v.f2});
    }
  }
  return rows;
}

}  // namespace samo
