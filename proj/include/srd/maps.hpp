#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace srd {

// Row-major H x W grid of reals. Tag gives each use its own type.
template <typename Tag>
class SpatialMap {
 public:
  SpatialMap() = default;
  SpatialMap(int h, int w, double fill = 0.0) : h_(h), w_(w), values_(checked_size(h, w), fill) {}
  SpatialMap(int h, int w, std::vector<double> values) : h_(h), w_(w), values_(std::move(values)) {
    if (values_.size() != checked_size(h, w))
      throw std::invalid_argument("map of " + std::to_string(h) + "x" + std::to_string(w) + " given " +
                                  std::to_string(values_.size()) + " values");
  }

  int height() const { return h_; }
  int width() const { return w_; }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  double& operator()(int i, int j) { return values_[static_cast<std::size_t>(i) * w_ + j]; }
  double operator()(int i, int j) const { return values_[static_cast<std::size_t>(i) * w_ + j]; }
  double& operator[](std::size_t k) { return values_[k]; }
  double operator[](std::size_t k) const { return values_[k]; }

  const std::vector<double>& values() const { return values_; }
  std::vector<double>& values() { return values_; }

  // Values all lie in [0, 1] and are finite.
  bool is_unit_range() const {
    for (double v : values_)
      if (!(v >= 0.0 && v <= 1.0)) return false;
    return true;
  }

  template <typename Other>
  SpatialMap<Other> retag() const {
    return SpatialMap<Other>(h_, w_, values_);
  }

  friend bool operator==(const SpatialMap& a, const SpatialMap& b) {
    return a.h_ == b.h_ && a.w_ == b.w_ && a.values_ == b.values_;
  }

 private:
  static std::size_t checked_size(int h, int w) {
    if (h < 1 || w < 1) throw std::invalid_argument("map dimensions must be positive");
    return static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
  }

  int h_ = 0, w_ = 0;
  std::vector<double> values_;
};

struct FlawMapTag {};
struct MeanFlawMapTag {};

// Per-image saliency in [0, 1] for the "fake" class.
using FlawActivationMap = SpatialMap<FlawMapTag>;
// Batch-mean of flaw maps, or any drop-in guidance map with the same contract.
using MeanFam = SpatialMap<MeanFlawMapTag>;

// Throws unless every value is finite and in [0, 1].
template <typename Tag>
void require_unit_range(const SpatialMap<Tag>& m, const char* what) {
  if (!m.is_unit_range()) throw std::invalid_argument(std::string(what) + ": values must lie in [0, 1]");
}

}  // namespace srd
