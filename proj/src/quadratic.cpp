#include "samo/quadratic.hpp"

#include "samo/errors.hpp"

namespace samo {

namespace {

Eigen::VectorXd to_eigen(const LayeredParams& theta) {
  const std::vector<double> flat = theta.flat();
  return Eigen::Map<const Eigen::VectorXd>(flat.data(), static_cast<Eigen::Index>(flat.size()));
}

}  // namespace

QuadraticProblem::QuadraticProblem(LayerShape shape, std::vector<QuadraticTask> tasks)
    : shape_(std::move(shape)), tasks_(std::move(tasks)) {
  std::size_t m = 0;
  for (std::size_t n : shape_) m += n;
  if (m == 0) throw ConfigError("quadratic problem needs a positive dimension");
  if (tasks_.empty()) throw ConfigError("quadratic problem needs at least one task");
  const auto dim = static_cast<Eigen::Index>(m);
  for (auto& t : tasks_) {
    if (t.hessian.size() == 0) t.hessian = Eigen::MatrixXd::Zero(dim, dim);
    if (t.linear.size() == 0) t.linear = Eigen::VectorXd::Zero(dim);
    if (t.hessian.rows() != dim || t.hessian.cols() != dim || t.linear.size() != dim) {
      throw StructuralError("quadratic task dimensions do not match the layer shape");
    }
    if (!t.hessian.isApprox(t.hessian.transpose(), 1e-14)) {
      throw ConfigError("quadratic task Hessian must be symmetric");
    }
  }
}

std::unique_ptr<QuadraticProblem> QuadraticProblem::isotropic(std::size_t n) {
  QuadraticTask t;
  t.hessian = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  return std::make_unique<QuadraticProblem>(LayerShape{n}, std::vector<QuadraticTask>{t});
}

std::unique_ptr<QuadraticProblem> QuadraticProblem::diagonal(const std::vector<double>& curvatures) {
  QuadraticTask t;
  t.hessian = Eigen::Map<const Eigen::VectorXd>(curvatures.data(),
                                                static_cast<Eigen::Index>(curvatures.size()))
                  .asDiagonal();
  return std::make_unique<QuadraticProblem>(LayerShape{curvatures.size()},
                                            std::vector<QuadraticTask>{t});
}

std::unique_ptr<QuadraticProblem> QuadraticProblem::linear(const std::vector<double>& c) {
  QuadraticTask t;
  t.linear = Eigen::Map<const Eigen::VectorXd>(c.data(), static_cast<Eigen::Index>(c.size()));
  return std::make_unique<QuadraticProblem>(LayerShape{c.size()}, std::vector<QuadraticTask>{t});
}

Eigen::MatrixXd QuadraticProblem::average_hessian() const {
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(tasks_[0].hessian.rows(), tasks_[0].hessian.cols());
  for (const auto& t : tasks_) h += t.hessian;
  return h / static_cast<double>(tasks_.size());
}

double QuadraticProblem::eval_loss(std::size_t task, const LayeredParams& theta) const {
  const auto& t = tasks_[task];
  const Eigen::VectorXd x = to_eigen(theta);
  return 0.5 * x.dot(t.hessian * x) + t.linear.dot(x) + t.offset;
}

LayeredParams QuadraticProblem::eval_grad(std::size_t task, const LayeredParams& theta) const {
  const auto& t = tasks_[task];
  const Eigen::VectorXd g = t.hessian * to_eigen(theta) + t.linear;
  return LayeredParams::from_flat(shape_, std::span<const double>(g.data(), g.size()));
}

}  // namespace samo
