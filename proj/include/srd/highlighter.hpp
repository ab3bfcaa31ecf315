#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "srd/maps.hpp"
#include "srd/nn/layers.hpp"
#include "srd/rng.hpp"

namespace srd {

inline constexpr int kRealClass = 0;
inline constexpr int kFakeClass = 1;

struct HighlighterConfig {
  int image_size = 16;
  int in_channels = 1;
  std::vector<int> stage_channels{8, 16, 32};  // one 3x3 conv + ReLU per stage, 2x2 avg-pool between stages
  int train_steps = 300;
  int batch_size = 32;
  double learning_rate = 2e-3;
  double holdout_fraction = 0.2;
  std::uint64_t seed = 0;

  void validate() const;
  // Spatial size of the last stage's feature maps.
  int feature_size() const { return image_size >> (static_cast<int>(stage_channels.size()) - 1); }
};

// Real-vs-fake CNN: conv stages, global average pooling, linear head to
// logits [real, fake]. The last stage's maps are the CAM features.
class HighlighterModel {
 public:
  HighlighterModel(const HighlighterConfig& config, std::uint64_t seed);
  HighlighterModel(HighlighterModel&&) noexcept = default;
  HighlighterModel& operator=(HighlighterModel&&) noexcept = default;
  HighlighterModel clone() const;

  const HighlighterConfig& config() const { return config_; }
  nn::ParameterSet<float>& parameters() { return *params_; }
  const nn::ParameterSet<float>& parameters() const { return *params_; }

  bool trained() const { return trained_; }
  // For models whose weights were set by hand or restored from disk.
  void mark_trained() { trained_ = true; }

  // Logits [B, 2]. When `stages` is given it receives each stage's post-ReLU
  // activations. With frozen=true parameters enter the graph as constants.
  nn::Var<float> forward(nn::Graph<float>& g, nn::Var<float> x, bool frozen,
                         std::vector<nn::Var<float>>* stages = nullptr) const;

  nn::Tensor<float> logits(const nn::Tensor<float>& images) const;
  // P(fake) per image.
  std::vector<double> fake_probability(const nn::Tensor<float>& images) const;
  // GAP of the last stage, [B, C_last] row-major.
  std::vector<std::vector<double>> embed(const nn::Tensor<float>& images) const;
  // Post-ReLU activations of every stage.
  std::vector<nn::Tensor<float>> stage_features(const nn::Tensor<float>& images) const;

  // Head weights [2, C_last] (row = class).
  const nn::Tensor<float>& head_weight() const { return head_.weight->value; }

 private:
  HighlighterConfig config_;
  std::unique_ptr<nn::ParameterSet<float>> params_;
  std::vector<nn::Conv2d<float>> convs_;
  nn::Linear<float> head_;
  bool trained_ = false;
};

struct ClassifierMetrics {
  double accuracy = 0;
  double f1 = 0;
  std::optional<double> roc_auc;  // absent when only one class is present
};

// Accuracy and F1 (positive = label 1) at threshold 0.5; ROC-AUC by the rank
// statistic with ties counted as one half.
ClassifierMetrics classifier_metrics(std::span<const int> labels, std::span<const double> scores);

struct HighlighterTraining {
  HighlighterModel model;
  double holdout_accuracy = 0;
  ClassifierMetrics holdout_metrics;
  int holdout_count = 0;
};

// Trains on a class-stratified split and evaluates on the held-out part.
// Deterministic in config.seed.
HighlighterTraining train_highlighter(const nn::Tensor<float>& real, const nn::Tensor<float>& fake,
                                      const HighlighterConfig& config);

// Per-image min-max to [0, 1]; a constant map becomes all zeros.
FlawActivationMap normalize_map(int h, int w, std::vector<double> values);

// Bilinear resize with half-pixel centers.
std::vector<double> resize_bilinear(const std::vector<double>& src, int sh, int sw, int dh, int dw);

// Grad-CAM: channel weights are the spatial mean of d logit_target / d A^k,
// map = ReLU(sum_k w_k A^k), upsampled to the image and normalized.
// Constant images get an all-zero map.
std::vector<FlawActivationMap> grad_cam(const HighlighterModel& model, const nn::Tensor<float>& images, int target);
FlawActivationMap grad_cam_one(const HighlighterModel& model, const nn::Tensor<float>& image, int target);

// Vanilla CAM using the head weights directly.
std::vector<FlawActivationMap> cam(const HighlighterModel& model, const nn::Tensor<float>& images, int target);

// Elementwise mean, no renormalization.
MeanFam mean_fam(std::span<const FlawActivationMap> fams);

}  // namespace srd
