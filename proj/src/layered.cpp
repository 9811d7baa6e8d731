#include "samo/layered.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "samo/errors.hpp"

namespace samo {

namespace {

void require_same_shape(const LayeredParams& x, const LayeredParams& y, const char* op) {
  if (!x.same_shape(y)) {
    throw StructuralError(std::string(op) + ": layer structure mismatch");
  }
}

void require_finite(const std::vector<double>& v, const char* op) {
  if (!all_finite(v)) {
    throw NumericError(std::string(op) + ": non-finite entry");
  }
}

}  // namespace

bool all_finite(std::span<const double> xs) {
  return std::all_of(xs.begin(), xs.end(), [](double v) { return std::isfinite(v); });
}

LayeredParams::LayeredParams(std::vector<std::vector<double>> layers) : layers_(std::move(layers)) {
  for (const auto& layer : layers_) {
    require_finite(layer, "LayeredParams");
    size_ += layer.size();
  }
}

LayeredParams LayeredParams::zeros(const LayerShape& shape) {
  std::vector<std::vector<double>> layers;
  layers.reserve(shape.size());
  for (std::size_t n : shape) layers.emplace_back(n, 0.0);
  return LayeredParams(std::move(layers));
}

LayeredParams LayeredParams::from_flat(const LayerShape& shape, std::span<const double> flat) {
  std::size_t total = 0;
  for (std::size_t n : shape) total += n;
  if (total != flat.size()) {
    throw StructuralError("from_flat: expected " + std::to_string(total) + " entries, got " +
                          std::to_string(flat.size()));
  }
  std::vector<std::vector<double>> layers;
  layers.reserve(shape.size());
  std::size_t offset = 0;
  for (std::size_t n : shape) {
    layers.emplace_back(flat.begin() + offset, flat.begin() + offset + n);
    offset += n;
  }
  return LayeredParams(std::move(layers));
}

LayerShape LayeredParams::shape() const {
  LayerShape s;
  s.reserve(layers_.size());
  for (const auto& layer : layers_) s.push_back(layer.size());
  return s;
}

std::span<const double> LayeredParams::layer(std::size_t d) const {
  if (d >= layers_.size()) {
    throw StructuralError("layer index " + std::to_string(d) + " out of range");
  }
  return layers_[d];
}

std::span<double> LayeredParams::layer(std::size_t d) {
  if (d >= layers_.size()) {
    throw StructuralError("layer index " + std::to_string(d) + " out of range");
  }
  return layers_[d];
}

std::vector<double> LayeredParams::flat() const {
  std::vector<double> out;
  out.reserve(size_);
  for (const auto& layer : layers_) out.insert(out.end(), layer.begin(), layer.end());
  return out;
}

bool LayeredParams::same_shape(const LayeredParams& other) const {
  if (layers_.size() != other.layers_.size()) return false;
  for (std::size_t d = 0; d < layers_.size(); ++d) {
    if (layers_[d].size() != other.layers_[d].size()) return false;
  }
  return true;
}

LayeredParams axpy(double a, const LayeredParams& x, const LayeredParams& y) {
  require_same_shape(x, y, "axpy");
  std::vector<std::vector<double>> out(x.num_layers());
  for (std::size_t d = 0; d < x.num_layers(); ++d) {
    auto xs = x.layer(d);
    auto ys = y.layer(d);
    out[d].resize(xs.size());
    for (std::size_t j = 0; j < xs.size(); ++j) out[d][j] = a * xs[j] + ys[j];
  }
  return LayeredParams(std::move(out));
}

LayeredParams scale(double a, const LayeredParams& x) {
  std::vector<std::vector<double>> out(x.num_layers());
  for (std::size_t d = 0; d < x.num_layers(); ++d) {
    auto xs = x.layer(d);
    out[d].resize(xs.size());
    for (std::size_t j = 0; j < xs.size(); ++j) out[d][j] = a * xs[j];
  }
  return LayeredParams(std::move(out));
}

double dot(const LayeredParams& x, const LayeredParams& y) {
  require_same_shape(x, y, "dot");
  double sum = 0.0;
  for (std::size_t d = 0; d < x.num_layers(); ++d) {
    auto xs = x.layer(d);
    auto ys = y.layer(d);
    for (std::size_t j = 0; j < xs.size(); ++j) sum += xs[j] * ys[j];
  }
  return sum;
}

double norm(const LayeredParams& x) { return std::sqrt(dot(x, x)); }

double layer_norm(const LayeredParams& x, std::size_t d) {
  double sum = 0.0;
  for (double v : x.layer(d)) sum += v * v;
  return std::sqrt(sum);
}

LayeredParams mean(std::span<const LayeredParams> xs) {
  if (xs.empty()) throw StructuralError("mean: empty input");
  std::vector<std::vector<double>> out(xs[0].num_layers());
  for (std::size_t d = 0; d < out.size(); ++d) out[d].assign(xs[0].layer(d).size(), 0.0);
  for (const auto& x : xs) {
    require_same_shape(xs[0], x, "mean");
    for (std::size_t d = 0; d < out.size(); ++d) {
      auto src = x.layer(d);
      for (std::size_t j = 0; j < src.size(); ++j) out[d][j] += src[j];
    }
  }
  const double inv = 1.0 / static_cast<double>(xs.size());
  for (auto& layer : out) {
    for (double& v : layer) v *= inv;
  }
  return LayeredParams(std::move(out));
}

LayeredParams mask_layers(const LayeredParams& x, std::span<const std::size_t> keep) {
  LayeredParams out = LayeredParams::zeros(x.shape());
  for (std::size_t d : keep) {
    auto src = x.layer(d);
    std::copy(src.begin(), src.end(), out.layer(d).begin());
  }
  return out;
}

LayeredParams select_layers(const LayeredParams& x, std::span<const std::size_t> layers) {
  std::vector<std::vector<double>> out;
  out.reserve(layers.size());
  for (std::size_t d : layers) {
    auto src = x.layer(d);
    out.emplace_back(src.begin(), src.end());
  }
  return LayeredParams(std::move(out));
}

LayeredParams scatter_layers(const LayeredParams& base, const LayeredParams& part,
                             std::span<const std::size_t> layers) {
  if (part.num_layers() != layers.size()) {
    throw StructuralError("scatter_layers: part has wrong layer count");
  }
  LayeredParams out = base;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    auto src = part.layer(i);
    auto dst = out.layer(layers[i]);
    if (src.size() != dst.size()) throw StructuralError("scatter_layers: layer length mismatch");
    std::copy(src.begin(), src.end(), dst.begin());
  }
  return out;
}

}  // namespace samo
