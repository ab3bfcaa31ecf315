#pragma once

#include "srd/maps.hpp"
#include "srd/nn/tensor.hpp"

namespace srd {

// Gaussian bump centred at ((h-1)/2, (w-1)/2) with sigma = sigma_frac * min(h, w),
// min-max scaled so the centre is 1 and the far corners are 0.
MeanFam center_gaussian_map(int h, int w, double sigma_frac = 0.25);

// 1 - center_gaussian_map.
MeanFam inverted_gaussian_map(int h, int w, double sigma_frac = 0.25);

struct EdgeParams {
  double low = 0.1;   // hysteresis thresholds on gradient magnitude of [0,1] luminance
  double high = 0.2;
  double blur_sigma = 1.0;  // 0 disables smoothing
};

// Canny-style binary edge map of one image ([C,H,W] or [1,C,H,W], values in
// [-1,1]). Three channels are reduced with 0.299/0.587/0.114 weights.
MeanFam edge_map(const nn::Tensor<float>& image, const EdgeParams& params = {});

// Per-image edge maps averaged over a batch [B,C,H,W].
MeanFam mean_edge_map(const nn::Tensor<float>& images, const EdgeParams& params = {});

}  // namespace srd
