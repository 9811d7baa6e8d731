#include "samo/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

#include <Eigen/Dense>

#include "samo/csv.hpp"
#include "samo/errors.hpp"
#include "samo/rng.hpp"

namespace samo {

namespace {

void validate_dataset(const MlpDataset& data, const char* what) {
  if (data.input_dim == 0 || data.tasks == 0) {
    throw ConfigError(std::string(what) + ": empty dataset layout");
  }
  if (data.features.size() % data.input_dim != 0 ||
      data.targets.size() != data.samples() * data.tasks) {
    throw StructuralError(std::string(what) + ": feature/target sizes disagree");
  }
  if (!all_finite(data.features) || !all_finite(data.targets)) {
    throw NumericError(std::string(what) + ": non-finite data");
  }
}

// Exact values at the angles where floating-point cos/sin would leave residue.
double cos_deg(double deg) {
  if (deg == 0.0) return 1.0;
  if (deg == 90.0) return 0.0;
  if (deg == 180.0) return -1.0;
  return std::cos(deg * std::numbers::pi / 180.0);
}

double sin_deg(double deg) {
  if (deg == 0.0 || deg == 180.0) return 0.0;
  if (deg == 90.0) return 1.0;
  return std::sin(deg * std::numbers::pi / 180.0);
}

}  // namespace

void write_dataset_csv(const std::filesystem::path& path, const MlpDataset& data) {
  std::vector<std::string> header;
  for (std::size_t j = 0; j < data.input_dim; ++j) header.push_back("x_" + std::to_string(j + 1));
  for (std::size_t k = 0; k < data.tasks; ++k) {
    header.push_back("target_task_" + std::to_string(k + 1));
  }
  CsvTable table{header, {}};
  for (std::size_t s = 0; s < data.samples(); ++s) {
    std::vector<double> row(data.features.begin() + s * data.input_dim,
                            data.features.begin() + (s + 1) * data.input_dim);
    row.insert(row.end(), data.targets.begin() + s * data.tasks,
               data.targets.begin() + (s + 1) * data.tasks);
    table.rows.push_back(std::move(row));
  }
  write_csv(path, table);
}

MlpDataset read_dataset_csv(const std::filesystem::path& path) {
  const CsvTable table = read_csv(path);
  MlpDataset data;
  for (const auto& name : table.header) {
    if (name.rfind("x_", 0) == 0) {
      if (data.tasks != 0) throw ConfigError(path.string() + ": feature column after targets");
      ++data.input_dim;
    } else if (name.rfind("target_task_", 0) == 0) {
      ++data.tasks;
    } else {
      throw ConfigError(path.string() + ": unexpected column '" + name + "'");
    }
  }
  for (const auto& row : table.rows) {
    data.features.insert(data.features.end(), row.begin(), row.begin() + data.input_dim);
    data.targets.insert(data.targets.end(), row.begin() + data.input_dim, row.end());
  }
  validate_dataset(data, path.string().c_str());
  return data;
}

class MlpMultiTaskProblem::BatchView final : public MultiTaskProblem {
 public:
  BatchView(const MlpMultiTaskProblem& parent, std::vector<std::size_t> rows)
      : MultiTaskProblem(parent.counters()), parent_(parent), rows_(std::move(rows)) {}

  std::size_t num_tasks() const override { return parent_.num_tasks(); }
  LayerShape shape() const override { return parent_.shape(); }
  std::optional<std::size_t> layer_owner(std::size_t d) const override {
    return parent_.layer_owner(d);
  }

 protected:
  double eval_loss(std::size_t task, const LayeredParams& theta) const override {
    return parent_.forward_losses(theta, *parent_.data_, rows_)[task];
  }
  std::vector<double> eval_losses(const LayeredParams& theta) const override {
    return parent_.forward_losses(theta, *parent_.data_, rows_);
  }
  LayeredParams eval_grad(std::size_t task, const LayeredParams& theta) const override {
    std::vector<double> w(num_tasks(), 0.0);
    w[task] = 1.0;
    return parent_.backward(theta, w, rows_);
  }
  LayeredParams eval_avg_grad(const LayeredParams& theta) const override {
    std::vector<double> w(num_tasks(), 1.0 / static_cast<double>(num_tasks()));
    return parent_.backward(theta, w, rows_);
  }

 private:
  const MlpMultiTaskProblem& parent_;
  std::vector<std::size_t> rows_;
};

MlpMultiTaskProblem::MlpMultiTaskProblem(std::vector<std::size_t> trunk, MlpDataset train,
                                         MlpDataset test, std::size_t batch_size,
                                         std::uint64_t seed)
    : trunk_(std::move(trunk)), batch_size_(batch_size), seed_(seed) {
  if (trunk_.size() < 2) throw ConfigError("mlp trunk needs at least an input and one layer");
  if (std::find(trunk_.begin(), trunk_.end(), std::size_t{0}) != trunk_.end()) {
    throw ConfigError("mlp trunk widths must be positive");
  }
  validate_dataset(train, "train data");
  if (train.input_dim != trunk_.front()) {
    throw ConfigError("dataset input dimension does not match trunk input width");
  }
  if (train.samples() == 0) throw ConfigError("training data is empty");
  if (test.input_dim == 0) {
    test.input_dim = train.input_dim;
    test.tasks = train.tasks;
  } else {
    validate_dataset(test, "test data");
    if (test.input_dim != train.input_dim || test.tasks != train.tasks) {
      throw ConfigError("test data layout differs from training data");
    }
  }
  if (batch_size_ > train.samples()) throw ConfigError("batch_size exceeds the sample count");
  all_rows_.resize(train.samples());
  std::iota(all_rows_.begin(), all_rows_.end(), std::size_t{0});
  data_ = std::make_shared<const MlpDataset>(std::move(train));
  test_ = std::make_shared<const MlpDataset>(std::move(test));
}

LayerShape MlpMultiTaskProblem::shape() const {
  LayerShape s;
  for (std::size_t j = 0; j + 1 < trunk_.size(); ++j) {
    s.push_back(trunk_[j + 1] * trunk_[j] + trunk_[j + 1]);
  }
  for (std::size_t k = 0; k < data_->tasks; ++k) s.push_back(trunk_.back() + 1);
  return s;
}

std::optional<std::size_t> MlpMultiTaskProblem::layer_owner(std::size_t d) const {
  const std::size_t trunk_layers = trunk_.size() - 1;
  if (d < trunk_layers) return std::nullopt;
  return d - trunk_layers;
}

std::shared_ptr<const MultiTaskProblem> MlpMultiTaskProblem::minibatch(std::uint64_t step) const {
  if (batch_size_ == 0 || batch_size_ == data_->samples()) return nullptr;
  std::vector<std::size_t> rows = all_rows_;
  Rng rng = substream(seed_, "minibatch", {step});
  std::shuffle(rows.begin(), rows.end(), rng);
  rows.resize(batch_size_);
  std::sort(rows.begin(), rows.end());
  return std::make_shared<BatchView>(*this, std::move(rows));
}

LayeredParams MlpMultiTaskProblem::initial_params(std::uint64_t seed) const {
  Rng rng = substream(seed, "mlp-init");
  std::normal_distribution<double> gauss;
  std::vector<std::vector<double>> layers;
  auto make_layer = [&](std::size_t in, std::size_t out) {
    std::vector<double> block(out * in + out, 0.0);
    const double s = 1.0 / std::sqrt(static_cast<double>(in));
    for (std::size_t j = 0; j < out * in; ++j) block[j] = s * gauss(rng);
    layers.push_back(std::move(block));
  };
  for (std::size_t j = 0; j + 1 < trunk_.size(); ++j) make_layer(trunk_[j], trunk_[j + 1]);
  // Every head starts from the same draw, so tasks differ only through their targets.
  make_layer(trunk_.back(), 1);
  for (std::size_t k = 1; k < data_->tasks; ++k) layers.push_back(layers.back());
  return LayeredParams(std::move(layers));
}

std::vector<double> MlpMultiTaskProblem::test_losses(const LayeredParams& theta) const {
  if (test_->samples() == 0) throw ConfigError("problem has no held-out data");
  std::vector<std::size_t> rows(test_->samples());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return forward_losses(theta, *test_, rows);
}

namespace {

// Activations of every trunk layer for one sample; acts[0] is the input.
void trunk_forward(const LayeredParams& theta, const std::vector<std::size_t>& trunk,
                   std::span<const double> x, std::vector<std::vector<double>>& acts) {
  acts.resize(trunk.size());
  acts[0].assign(x.begin(), x.end());
  for (std::size_t j = 0; j + 1 < trunk.size(); ++j) {
    const std::size_t in = trunk[j];
    const std::size_t out = trunk[j + 1];
    auto block = theta.layer(j);
    acts[j + 1].resize(out);
    for (std::size_t r = 0; r < out; ++r) {
      double z = block[out * in + r];
      const double* w = block.data() + r * in;
      for (std::size_t c = 0; c < in; ++c) z += w[c] * acts[j][c];
      acts[j + 1][r] = std::tanh(z);
    }
  }
}

double head_output(const LayeredParams& theta, std::size_t head_layer, std::span<const double> h) {
  auto block = theta.layer(head_layer);
  double y = block[h.size()];
  for (std::size_t c = 0; c < h.size(); ++c) y += block[c] * h[c];
  return y;
}

}  // namespace

std::vector<double> MlpMultiTaskProblem::forward_losses(const LayeredParams& theta,
                                                        const MlpDataset& data,
                                                        std::span<const std::size_t> rows) const {
  const std::size_t K = data.tasks;
  const std::size_t trunk_layers = trunk_.size() - 1;
  std::vector<double> out(K, 0.0);
  std::vector<std::vector<double>> acts;
  for (std::size_t s : rows) {
    trunk_forward(theta, trunk_, std::span(data.features).subspan(s * data.input_dim, data.input_dim),
                  acts);
    for (std::size_t k = 0; k < K; ++k) {
      const double r = head_output(theta, trunk_layers + k, acts.back()) - data.targets[s * K + k];
      out[k] += r * r;
    }
  }
  const double inv = 1.0 / static_cast<double>(rows.size());
  for (double& v : out) v *= inv;
  if (!all_finite(out)) throw NumericError("mlp forward produced a non-finite loss");
  return out;
}

LayeredParams MlpMultiTaskProblem::backward(const LayeredParams& theta,
                                            std::span<const double> task_weights,
                                            std::span<const std::size_t> rows) const {
  const MlpDataset& data = *data_;
  const std::size_t K = data.tasks;
  const std::size_t trunk_layers = trunk_.size() - 1;
  const std::size_t width = trunk_.back();
  std::vector<std::vector<double>> grads;
  for (std::size_t n : shape()) grads.emplace_back(n, 0.0);

  const double inv = 1.0 / static_cast<double>(rows.size());
  std::vector<std::vector<double>> acts;
  std::vector<double> upstream;
  std::vector<double> next;
  for (std::size_t s : rows) {
    trunk_forward(theta, trunk_, std::span(data.features).subspan(s * data.input_dim, data.input_dim),
                  acts);
    const std::vector<double>& h = acts.back();
    upstream.assign(width, 0.0);
    for (std::size_t k = 0; k < K; ++k) {
      if (task_weights[k] == 0.0) continue;
      const std::size_t layer = trunk_layers + k;
      const double residual = head_output(theta, layer, h) - data.targets[s * K + k];
      const double delta = task_weights[k] * 2.0 * residual * inv;
      auto w = theta.layer(layer);
      auto& g = grads[layer];
      for (std::size_t c = 0; c < width; ++c) {
        g[c] += delta * h[c];
        upstream[c] += delta * w[c];
      }
      g[width] += delta;
    }
    for (std::size_t j = trunk_layers; j-- > 0;) {
      const std::size_t in = trunk_[j];
      const std::size_t out = trunk_[j + 1];
      auto block = theta.layer(j);
      auto& g = grads[j];
      next.assign(in, 0.0);
      for (std::size_t r = 0; r < out; ++r) {
        const double a = acts[j + 1][r];
        const double dz = upstream[r] * (1.0 - a * a);
        if (dz == 0.0) continue;
        const double* w = block.data() + r * in;
        double* gw = g.data() + r * in;
        for (std::size_t c = 0; c < in; ++c) {
          gw[c] += dz * acts[j][c];
          next[c] += dz * w[c];
        }
        g[out * in + r] += dz;
      }
      upstream.swap(next);
    }
  }
  return LayeredParams(std::move(grads));
}

double MlpMultiTaskProblem::eval_loss(std::size_t task, const LayeredParams& theta) const {
  return forward_losses(theta, *data_, all_rows())[task];
}

std::vector<double> MlpMultiTaskProblem::eval_losses(const LayeredParams& theta) const {
  return forward_losses(theta, *data_, all_rows());
}

LayeredParams MlpMultiTaskProblem::eval_grad(std::size_t task, const LayeredParams& theta) const {
  std::vector<double> w(num_tasks(), 0.0);
  w[task] = 1.0;
  return backward(theta, w, all_rows());
}

LayeredParams MlpMultiTaskProblem::eval_avg_grad(const LayeredParams& theta) const {
  std::vector<double> w(num_tasks(), 1.0 / static_cast<double>(num_tasks()));
  return backward(theta, w, all_rows());
}

std::unique_ptr<MlpMultiTaskProblem> make_mlp_problem(const MlpConfig& config) {
  const std::size_t K = config.tasks;
  if (K < 2) throw ConfigError("mlp problem needs at least 2 tasks");
  if (!(config.conflict_angle >= 0.0 && config.conflict_angle <= 180.0)) {
    throw ConfigError("conflict_angle must lie in [0, 180] degrees");
  }
  if (config.trunk.empty()) throw ConfigError("mlp trunk must not be empty");
  const std::size_t d = config.trunk.front();
  if (K > d) throw ConfigError("number of tasks exceeds the input dimension");
  if (config.samples == 0) throw ConfigError("samples must be positive");
  if (!(config.noise >= 0.0)) throw ConfigError("noise must be non-negative");

  // K unit vectors with pairwise cosine c, as rows of `coords` (K x K).
  const double c = cos_deg(config.conflict_angle);
  Eigen::MatrixXd coords = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(K),
                                                 static_cast<Eigen::Index>(K));
  if (K == 2) {
    coords(0, 0) = 1.0;
    coords(1, 0) = c;
    coords(1, 1) = sin_deg(config.conflict_angle);
  } else {
    const auto n = static_cast<Eigen::Index>(K);
    Eigen::MatrixXd gram = Eigen::MatrixXd::Constant(n, n, c);
    gram.diagonal().setOnes();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
    if (eig.eigenvalues().minCoeff() < -1e-12) {
      throw ConfigError("no " + std::to_string(K) + " directions have pairwise angle " +
                        std::to_string(config.conflict_angle) + " degrees");
    }
    const Eigen::VectorXd root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    coords = eig.eigenvectors() * root.asDiagonal();
  }

  // Random orthonormal embedding of the K-dim coordinates into the input space.
  Rng rng = substream(config.seed, "mlp-teachers");
  std::normal_distribution<double> gauss;
  Eigen::MatrixXd raw(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(K));
  for (Eigen::Index j = 0; j < raw.cols(); ++j) {
    for (Eigen::Index i = 0; i < raw.rows(); ++i) raw(i, j) = gauss(rng);
  }
  const Eigen::MatrixXd basis = Eigen::HouseholderQR<Eigen::MatrixXd>(raw).householderQ() *
                                Eigen::MatrixXd::Identity(raw.rows(), raw.cols());
  std::vector<std::vector<double>> teachers(K, std::vector<double>(d));
  for (std::size_t k = 0; k < K; ++k) {
    const Eigen::VectorXd w = basis * coords.row(static_cast<Eigen::Index>(k)).transpose();
    for (std::size_t j = 0; j < d; ++j) teachers[k][j] = w(static_cast<Eigen::Index>(j));
  }

  double deviation = 0.0;
  for (std::size_t a = 0; a < K; ++a) {
    for (std::size_t b = a + 1; b < K; ++b) {
      double ab = 0.0, aa = 0.0, bb = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        ab += teachers[a][j] * teachers[b][j];
        aa += teachers[a][j] * teachers[a][j];
        bb += teachers[b][j] * teachers[b][j];
      }
      deviation = std::max(deviation, std::abs(ab / std::sqrt(aa * bb) - c));
    }
  }

  auto sample = [&](std::size_t n, std::string_view purpose) {
    MlpDataset data{d, K, std::vector<double>(n * d), std::vector<double>(n * K)};
    Rng r = substream(config.seed, purpose);
    for (std::size_t s = 0; s < n; ++s) {
      for (std::size_t j = 0; j < d; ++j) data.features[s * d + j] = gauss(r);
    }
    for (std::size_t s = 0; s < n; ++s) {
      for (std::size_t k = 0; k < K; ++k) {
        double y = 0.0;
        for (std::size_t j = 0; j < d; ++j) y += teachers[k][j] * data.features[s * d + j];
        data.targets[s * K + k] = y;
      }
    }
    if (config.noise > 0.0) {
      for (double& y : data.targets) y += config.noise * gauss(r);
    }
    return data;
  };

  MlpDataset train = sample(config.samples, "mlp-train");
  MlpDataset test = config.test_samples > 0 ? sample(config.test_samples, "mlp-test") : MlpDataset{};
  auto problem = std::make_unique<MlpMultiTaskProblem>(config.trunk, std::move(train),
                                                       std::move(test), config.batch_size,
                                                       config.seed);
  problem->teachers_ = std::move(teachers);
  problem->gram_deviation_ = deviation;
  return problem;
}

}  // namespace samo
