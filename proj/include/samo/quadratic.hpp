#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "samo/problem.hpp"

namespace samo {

/// One quadratic task l(theta) = 0.5 theta^T A theta + b^T theta + c over the
/// flattened parameter vector. A must be symmetric.
struct QuadraticTask {
  Eigen::MatrixXd hessian;
  Eigen::VectorXd linear;
  double offset = 0.0;
};

/// Multi-task problem whose tasks are quadratics (affine when A = 0). Handy as
/// an analytic reference: the Hessian of the averaged loss is the mean of A_i.
class QuadraticProblem final : public MultiTaskProblem {
 public:
  QuadraticProblem(LayerShape shape, std::vector<QuadraticTask> tasks);

  /// Single-task 0.5 ||theta||^2 on one layer of length n.
  static std::unique_ptr<QuadraticProblem> isotropic(std::size_t n);
  /// Single-task 0.5 sum_j c_j theta_j^2.
  static std::unique_ptr<QuadraticProblem> diagonal(const std::vector<double>& curvatures);
  /// Single-task c^T theta.
  static std::unique_ptr<QuadraticProblem> linear(const std::vector<double>& c);

  std::size_t num_tasks() const override { return tasks_.size(); }
  LayerShape shape() const override { return shape_; }

  const QuadraticTask& task(std::size_t i) const { return tasks_.at(i); }
  /// Exact Hessian of the averaged loss.
  Eigen::MatrixXd average_hessian() const;

 protected:
  double eval_loss(std::size_t task, const LayeredParams& theta) const override;
  LayeredParams eval_grad(std::size_t task, const LayeredParams& theta) const override;

 private:
  LayerShape shape_;
  std::vector<QuadraticTask> tasks_;
};

}  // namespace samo
