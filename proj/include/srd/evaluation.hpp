#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "srd/highlighter.hpp"
#include "srd/nn/tensor.hpp"

namespace srd {

using FeatureRows = std::vector<std::vector<double>>;
// Maps an image batch [B,C,H,W] to one feature row per image.
using Embedder = std::function<FeatureRows(const nn::Tensor<float>&)>;

struct GaussianStats {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;  // unbiased (n - 1)
};

GaussianStats feature_stats(const FeatureRows& rows);

// ||mu1 - mu2||^2 + Tr(S1 + S2 - 2 (S1 S2)^{1/2}); the trace term uses the
// symmetric form S1^{1/2} S2 S1^{1/2}. Eigenvalues below -1e-8 are rejected,
// smaller negatives clamp to zero. Evaluated in both argument orders and averaged.
double frechet_distance(const Eigen::VectorXd& mu1, const Eigen::MatrixXd& cov1, const Eigen::VectorXd& mu2,
                        const Eigen::MatrixXd& cov2);

// Last-stage GAP features of a trained highlighter.
Embedder highlighter_embedder(const HighlighterModel& model);

// Projection of flattened pixels onto the leading principal axes of a reference set.
class PixelPcaEmbedder {
 public:
  PixelPcaEmbedder(const nn::Tensor<float>& reference, int components);
  FeatureRows operator()(const nn::Tensor<float>& images) const;
  int components() const { return static_cast<int>(basis_.cols()); }

 private:
  Eigen::VectorXd mean_;
  Eigen::MatrixXd basis_;  // [D, k]
};

// Frechet distance between embedded real and generated sets.
double desk_fid(const nn::Tensor<float>& real, const nn::Tensor<float>& generated, const Embedder& embedder);

inline constexpr double kPsnrIdentical = std::numeric_limits<double>::infinity();

// 10 log10(range^2 / MSE); identical inputs give +inf.
double psnr(const nn::Tensor<float>& a, const nn::Tensor<float>& b, double data_range = 2.0);

// Mean SSIM over valid 11x11 Gaussian windows (sigma 1.5), averaged over
// images and channels. Inputs are [B,C,H,W] or [C,H,W].
double ssim(const nn::Tensor<float>& a, const nn::Tensor<float>& b, double data_range = 2.0);

inline constexpr const char* kPerceptualLabel = "highlighter-perceptual distance";

// Per stage: unit-normalize each pixel's channel vector, take the squared
// difference summed over channels and averaged over pixels; then average
// over stages and images.
double perceptual_distance(const nn::Tensor<float>& a, const nn::Tensor<float>& b, const HighlighterModel& model);

struct MetricRow {
  std::string metric;
  std::string split;
  double value = 0;
  std::uint64_t seed = 0;
};

std::string format_metric_value(double v);
// Overwrites `path` with a header line and the rows.
void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricRow>& rows);
// One JSON object per line with keys metric, split, value, seed.
void write_metrics_jsonl(const std::filesystem::path& path, const std::vector<MetricRow>& rows);

}  // namespace srd
