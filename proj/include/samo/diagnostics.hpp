#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "samo/layered.hpp"
#include "samo/problem.hpp"

namespace samo {

struct CosineMatrix {
  /// K x K, row-major.
  std::vector<std::vector<double>> values;
  /// Gradients with norm below the degenerate threshold (their rows are 0 off-diagonal).
  std::vector<bool> degenerate;

  /// Mean over i != j.
  double mean_off_diagonal() const;
};

/// Pairwise cosine similarities among task gradients (K >= 2).
CosineMatrix cosine_matrix(std::span<const LayeredParams> gradients);

/// Central-difference Hessian-vector product of the averaged loss:
/// (grad l_0(theta + delta u) - grad l_0(theta - delta u)) ||v|| / (2 delta), u = v / ||v||.
LayeredParams hvp(const MultiTaskProblem& problem, const LayeredParams& theta,
                  const LayeredParams& v, double delta);

/// Default finite-difference step for Hessian probes at theta.
double default_hvp_delta(const LayeredParams& theta);

struct SpectrumOptions {
  std::size_t k = 5;
  /// Lanczos steps; 0 means 20 * k.
  std::size_t iters = 0;
  double tol = 1e-6;
  std::uint64_t seed = 0;
  /// Finite-difference step; 0 means default_hvp_delta(theta).
  double delta = 0.0;
};

struct SpectrumReport {
  /// Top-k eigenvalues, descending.
  std::vector<double> eigenvalues;
  double lambda_max = 0.0;
  /// lambda_max / lambda_5; only meaningful when eigenvalues.size() >= 5.
  std::optional<double> bulk_ratio;
  /// ||H v - lambda v|| / ||v|| per reported pair.
  std::vector<double> residuals;
  std::size_t lanczos_steps = 0;
  /// Some residual exceeded the tolerance.
  bool approximate = false;
};

/// Largest eigenvalues of the averaged-loss Hessian via Lanczos with full
/// reorthogonalization over finite-difference Hessian-vector products.
SpectrumReport hessian_spectrum(const MultiTaskProblem& problem, const LayeredParams& theta,
                                const SpectrumOptions& options = {});

struct MetricSpec {
  std::string name;
  double baseline = 0.0;
  double value = 0.0;
  bool higher_is_better = false;
};

/// Average signed relative change in percent versus the baselines:
/// (1/K) sum_k (-1)^{higher_is_better_k} (M_k - B_k) / B_k * 100. Lower is better.
double delta_m(std::span<const MetricSpec> metrics);

}  // namespace samo
