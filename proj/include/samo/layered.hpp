#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace samo {

/// Per-layer lengths of a LayeredParams; the value that must match for arithmetic.
using LayerShape = std::vector<std::size_t>;

/// Model parameters (or a gradient over them) stored as an ordered list of dense
/// per-layer blocks. The layer layout is fixed at construction and every entry is
/// finite; any operation that would break either throws.
class LayeredParams {
 public:
  LayeredParams() = default;
  explicit LayeredParams(std::vector<std::vector<double>> layers);

  static LayeredParams zeros(const LayerShape& shape);
  static LayeredParams from_flat(const LayerShape& shape, std::span<const double> flat);

  std::size_t num_layers() const { return layers_.size(); }
  std::size_t size() const { return size_; }
  LayerShape shape() const;

  std::span<const double> layer(std::size_t d) const;
  std::span<double> layer(std::size_t d);

  /// Concatenation of all layers in order.
  std::vector<double> flat() const;

  bool same_shape(const LayeredParams& other) const;

  friend bool operator==(const LayeredParams&, const LayeredParams&) = default;

 private:
  std::vector<std::vector<double>> layers_;
  std::size_t size_ = 0;
};

/// a*x + y.
LayeredParams axpy(double a, const LayeredParams& x, const LayeredParams& y);
LayeredParams scale(double a, const LayeredParams& x);
double dot(const LayeredParams& x, const LayeredParams& y);

/// Euclidean norm over every entry.
double norm(const LayeredParams& x);
/// Euclidean norm over layer `d` only.
double layer_norm(const LayeredParams& x, std::size_t d);

/// Arithmetic mean of a non-empty list of same-shaped containers.
LayeredParams mean(std::span<const LayeredParams> xs);

/// Copy of `x` keeping only the listed layers; all others are zeroed.
LayeredParams mask_layers(const LayeredParams& x, std::span<const std::size_t> keep);

/// Sub-container made of the listed layers, in the listed order.
LayeredParams select_layers(const LayeredParams& x, std::span<const std::size_t> layers);
/// Inverse of select_layers: writes `part`'s layers into a copy of `base`.
LayeredParams scatter_layers(const LayeredParams& base, const LayeredParams& part,
                             std::span<const std::size_t> layers);

bool all_finite(std::span<const double> xs);

}  // namespace samo
