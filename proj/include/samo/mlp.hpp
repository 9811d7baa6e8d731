#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <vector>

#include "samo/problem.hpp"

namespace samo {

/// Row-major regression data: `features` is n x input_dim, `targets` is n x tasks.
struct MlpDataset {
  std::size_t input_dim = 0;
  std::size_t tasks = 0;
  std::vector<double> features;
  std::vector<double> targets;

  std::size_t samples() const { return input_dim == 0 ? 0 : features.size() / input_dim; }
};

/// CSV with header x_1..x_d,target_task_1..target_task_K.
void write_dataset_csv(const std::filesystem::path& path, const MlpDataset& data);
MlpDataset read_dataset_csv(const std::filesystem::path& path);

struct MlpConfig {
  std::uint64_t seed = 0;
  std::size_t tasks = 3;
  /// Trunk widths; the first entry is the input dimension.
  std::vector<std::size_t> trunk{8, 16, 8};
  std::size_t samples = 128;
  /// Held-out samples drawn from the same teachers (0 disables).
  std::size_t test_samples = 0;
  /// Pairwise angle between planted teacher directions, in degrees.
  double conflict_angle = 90.0;
  /// Standard deviation of additive target noise.
  double noise = 0.0;
  /// Mini-batch size per optimizer step; 0 means full batch.
  std::size_t batch_size = 0;
};

/// Shared tanh trunk followed by K linear scalar heads, one mean-squared-error
/// loss per task. Layers are ordered trunk layer 0..L-1 then head 0..K-1; each
/// layer block holds its weight matrix (out x in, row-major) then its bias.
class MlpMultiTaskProblem final : public MultiTaskProblem {
 public:
  MlpMultiTaskProblem(std::vector<std::size_t> trunk, MlpDataset train, MlpDataset test = {},
                      std::size_t batch_size = 0, std::uint64_t seed = 0);

  std::size_t num_tasks() const override { return data_->tasks; }
  LayerShape shape() const override;
  std::optional<std::size_t> layer_owner(std::size_t d) const override;
  std::shared_ptr<const MultiTaskProblem> minibatch(std::uint64_t step) const override;

  /// Deterministic scaled-Gaussian initialization (biases zero).
  LayeredParams initial_params(std::uint64_t seed) const;

  /// Per-task losses on the held-out split. Not counted as a training pass.
  std::vector<double> test_losses(const LayeredParams& theta) const;

  const MlpDataset& train_data() const { return *data_; }
  const MlpDataset& test_data() const { return *test_; }
  const std::vector<std::size_t>& trunk() const { return trunk_; }

  /// Teacher directions used to generate the data (empty for imported data).
  const std::vector<std::vector<double>>& teachers() const { return teachers_; }
  /// Largest |cos(w_i, w_j) - cos(psi)| over planted teacher pairs.
  double teacher_gram_deviation() const { return gram_deviation_; }

 protected:
  double eval_loss(std::size_t task, const LayeredParams& theta) const override;
  LayeredParams eval_grad(std::size_t task, const LayeredParams& theta) const override;
  std::vector<double> eval_losses(const LayeredParams& theta) const override;
  LayeredParams eval_avg_grad(const LayeredParams& theta) const override;

 private:
  friend std::unique_ptr<MlpMultiTaskProblem> make_mlp_problem(const MlpConfig& config);
  class BatchView;

  std::vector<double> forward_losses(const LayeredParams& theta, const MlpDataset& data,
                                     std::span<const std::size_t> rows) const;
  LayeredParams backward(const LayeredParams& theta, std::span<const double> task_weights,
                         std::span<const std::size_t> rows) const;
  std::span<const std::size_t> all_rows() const { return all_rows_; }

  std::vector<std::size_t> trunk_;
  std::shared_ptr<const MlpDataset> data_;
  std::shared_ptr<const MlpDataset> test_;
  std::vector<std::size_t> all_rows_;
  std::size_t batch_size_ = 0;
  std::uint64_t seed_ = 0;
  std::vector<std::vector<double>> teachers_;
  double gram_deviation_ = 0.0;
};

/// Synthetic problem with K unit teacher directions whose pairwise cosine is
/// cos(conflict_angle); targets are y_k = w_k . x + noise. Throws ConfigError
/// when K < 2, the angle is outside [0, 180], K exceeds the input dimension,
/// or the equal-angle Gram matrix is not positive semidefinite.
std::unique_ptr<MlpMultiTaskProblem> make_mlp_problem(const MlpConfig& config);

}  // namespace samo
