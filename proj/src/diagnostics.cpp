#include "samo/diagnostics.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "samo/errors.hpp"
#include "samo/rng.hpp"
#include "samo/sam.hpp"

namespace samo {

double CosineMatrix::mean_off_diagonal() const {
  const std::size_t K = values.size();
  if (K < 2) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < K; ++i) {
    for (std::size_t j = 0; j < K; ++j) {
      if (i != j) sum += values[i][j];
    }
  }
  return sum / static_cast<double>(K * (K - 1));
}

CosineMatrix cosine_matrix(std::span<const LayeredParams> gradients) {
  const std::size_t K = gradients.size();
  if (K < 2) throw ConfigError("cosine_matrix needs at least 2 gradients");
  std::vector<double> norms(K);
  CosineMatrix out;
  out.values.assign(K, std::vector<double>(K, 0.0));
  out.degenerate.assign(K, false);
  for (std::size_t i = 0; i < K; ++i) {
    norms[i] = norm(gradients[i]);
    out.degenerate[i] = norms[i] < kDegenerateNorm;
    out.values[i][i] = out.degenerate[i] ? 0.0 : 1.0;
  }
  for (std::size_t i = 0; i < K; ++i) {
    for (std::size_t j = i + 1; j < K; ++j) {
      double c = 0.0;
      if (!out.degenerate[i] && !out.degenerate[j]) {
        c = std::clamp(dot(gradients[i], gradients[j]) / (norms[i] * norms[j]), -1.0, 1.0);
      }
      out.values[i][j] = c;
      out.values[j][i] = c;
    }
  }
  return out;
}

double default_hvp_delta(const LayeredParams& theta) { return 1e-4 * (1.0 + norm(theta)); }

LayeredParams hvp(const MultiTaskProblem& problem, const LayeredParams& theta,
                  const LayeredParams& v, double delta) {
  if (!(delta > 0.0)) throw ConfigError("hvp: delta must be positive");
  const double vn = norm(v);
  if (vn == 0.0) return LayeredParams::zeros(v.shape());
  const LayeredParams u = scale(1.0 / vn, v);
  try {
    const LayeredParams plus = problem.avg_grad(axpy(delta, u, theta));
    const LayeredParams minus = problem.avg_grad(axpy(-delta, u, theta));
    return scale(vn / (2.0 * delta), axpy(-1.0, minus, plus));
  } catch (const NumericError& e) {
    throw NumericError(std::string("hvp: ") + e.what());
  }
}

namespace {

Eigen::VectorXd random_unit(std::size_t n, Rng& rng) {
  std::normal_distribution<double> gauss;
  Eigen::VectorXd v(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = gauss(rng);
  return v.normalized();
}

// Two passes of classical Gram-Schmidt against the first `cols` basis columns.
void orthogonalize(const Eigen::MatrixXd& basis, Eigen::Index cols, Eigen::VectorXd& w) {
  for (int pass = 0; pass < 2; ++pass) {
    const auto q = basis.leftCols(cols);
    w -= q * (q.transpose() * w);
  }
}

}  // namespace

SpectrumReport hessian_spectrum(const MultiTaskProblem& problem, const LayeredParams& theta,
                                const SpectrumOptions& options) {
  const std::size_t n = theta.size();
  if (options.k == 0) throw ConfigError("spectrum: k must be at least 1");
  if (n < options.k) throw ConfigError("spectrum: k exceeds the parameter dimension");
  const std::size_t max_steps = std::min(n, options.iters == 0 ? 20 * options.k : options.iters);
  if (max_steps < options.k) throw ConfigError("spectrum: iters must be at least k");
  const double delta = options.delta > 0.0 ? options.delta : default_hvp_delta(theta);
  const LayerShape shape = theta.shape();

  auto apply = [&](const Eigen::VectorXd& x) {
    const LayeredParams v =
        LayeredParams::from_flat(shape, std::span<const double>(x.data(), x.size()));
    const std::vector<double> hv = hvp(problem, theta, v, delta).flat();
    return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(hv.data(), x.size()));
  };

  Rng rng = substream(options.seed, "lanczos");
  const auto N = static_cast<Eigen::Index>(n);
  Eigen::MatrixXd basis(N, static_cast<Eigen::Index>(max_steps));
  std::vector<double> alphas;
  std::vector<double> betas;  // betas[j] couples steps j and j+1
  basis.col(0) = random_unit(n, rng);

  Eigen::VectorXd ritz_values;
  Eigen::MatrixXd ritz_vectors;
  std::size_t steps = 0;
  double scale_estimate = 0.0;
  for (std::size_t j = 0; j < max_steps; ++j) {
    const auto col = static_cast<Eigen::Index>(j);
    Eigen::VectorXd w = apply(basis.col(col));
    const double a = basis.col(col).dot(w);
    alphas.push_back(a);
    scale_estimate = std::max(scale_estimate, std::abs(a));
    orthogonalize(basis, col + 1, w);
    const double b = w.norm();
    steps = j + 1;

    const auto m = static_cast<Eigen::Index>(steps);
    Eigen::MatrixXd tri = Eigen::MatrixXd::Zero(m, m);
    for (Eigen::Index i = 0; i < m; ++i) {
      tri(i, i) = alphas[static_cast<std::size_t>(i)];
      if (i + 1 < m) {
        tri(i, i + 1) = betas[static_cast<std::size_t>(i)];
        tri(i + 1, i) = betas[static_cast<std::size_t>(i)];
      }
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(tri);
    ritz_values = eig.eigenvalues();
    ritz_vectors = eig.eigenvectors();

    if (steps == max_steps) break;
    const bool breakdown = b <= 1e-10 * std::max(1.0, scale_estimate);
    if (!breakdown && steps >= options.k) {
      // Ritz residual estimates beta_m |s_m| for the top-k pairs.
      bool converged = true;
      for (std::size_t r = 0; r < options.k; ++r) {
        const Eigen::Index idx = m - 1 - static_cast<Eigen::Index>(r);
        if (b * std::abs(ritz_vectors(m - 1, idx)) > 0.1 * options.tol) converged = false;
      }
      if (converged) break;
    }
    if (breakdown) {
      // Invariant subspace found; continue from a fresh orthogonal direction.
      Eigen::VectorXd fresh = random_unit(n, rng);
      orthogonalize(basis, col + 1, fresh);
      basis.col(col + 1) = fresh.normalized();
      betas.push_back(0.0);
    } else {
      basis.col(col + 1) = w / b;
      betas.push_back(b);
    }
  }

  const auto m = static_cast<Eigen::Index>(steps);
  SpectrumReport report;
  report.lanczos_steps = steps;
  for (std::size_t r = 0; r < options.k; ++r) {
    const Eigen::Index idx = m - 1 - static_cast<Eigen::Index>(r);
    const double lambda = ritz_values(idx);
    const Eigen::VectorXd y = basis.leftCols(m) * ritz_vectors.col(idx);
    const double residual = (apply(y) - lambda * y).norm() / y.norm();
    report.eigenvalues.push_back(lambda);
    report.residuals.push_back(residual);
    if (!(residual <= options.tol)) report.approximate = true;
  }
  report.lambda_max = report.eigenvalues.front();
  if (report.eigenvalues.size() >= 5) {
    report.bulk_ratio = report.eigenvalues[0] / report.eigenvalues[4];
  }
  return report;
}

double delta_m(std::span<const MetricSpec> metrics) {
  if (metrics.empty()) throw ConfigError("delta_m: no metrics");
  double sum = 0.0;
  for (const auto& m : metrics) {
    if (m.baseline == 0.0) {
      throw ConfigError("delta_m: metric '" + m.name + "' has a zero baseline");
    }
    const double sign = m.higher_is_better ? -1.0 : 1.0;
    sum += sign * (m.value - m.baseline) / m.baseline;
  }
  return 100.0 * sum / static_cast<double>(metrics.size());
}

}  // namespace samo
