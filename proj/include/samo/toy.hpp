#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "samo/problem.hpp"

namespace samo {

/// Two-objective synthetic landscape over (x1, x2) in [-6, 6] x [-3, 3]:
///   f1 = 1 - 1 / (1 + (x1^4 + x2^4) / 10)      (flat quartic basin at the origin)
///   f2 = 1 - exp(-2 (x1 + 4)^2 - 2 x2^2)        (narrow Gaussian well at (-4, 0))
/// Parameters are a single layer of length 2.
class ToyProblem final : public MultiTaskProblem {
 public:
  static constexpr double kX1Min = -6.0, kX1Max = 6.0;
  static constexpr double kX2Min = -3.0, kX2Max = 3.0;

  std::size_t num_tasks() const override { return 2; }
  LayerShape shape() const override { return {2}; }
  LayeredParams project(const LayeredParams& theta) const override;

  static LayeredParams point(double x1, double x2);

 protected:
  double eval_loss(std::size_t task, const LayeredParams& theta) const override;
  LayeredParams eval_grad(std::size_t task, const LayeredParams& theta) const override;
  std::vector<double> eval_losses(const LayeredParams& theta) const override;
};

struct ToyValues {
  double f1 = 0.0;
  double f2 = 0.0;
};

/// Both objectives at (x1, x2). Points outside the box are clamped onto it
/// (with a one-time warning on stderr).
ToyValues toy_losses(double x1, double x2);

/// Analytic gradients of both objectives; `average` is their mean.
GradientSet toy_grads(double x1, double x2);

struct ToyGridRow {
  double x1 = 0.0;
  double x2 = 0.0;
  double f1 = 0.0;
  double f2 = 0.0;
};

/// resolution x resolution evaluation of the box, row-major with x2 the slow
/// axis (x2 from -3 up to 3, x1 from -6 up to 6 within each row).
std::vector<ToyGridRow> toy_pareto_grid(std::size_t resolution);

}  // namespace samo
