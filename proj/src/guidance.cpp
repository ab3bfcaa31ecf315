#include "srd/guidance.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <stdexcept>
#include <string>
#include <vector>

namespace srd {

namespace {

void check_map_args(int h, int w, double sigma_frac) {
  if (h < 2 || w < 2) throw std::invalid_argument("guidance map needs h, w >= 2");
  if (!(sigma_frac > 0)) throw std::invalid_argument("sigma_frac must be positive");
}

using Plane = std::vector<double>;

double clamped(const Plane& p, int h, int w, int i, int j) {
  i = std::clamp(i, 0, h - 1);
  j = std::clamp(j, 0, w - 1);
  return p[static_cast<std::size_t>(i) * w + j];
}

Plane gaussian_blur(const Plane& src, int h, int w, double sigma) {
  if (sigma <= 0) return src;
  const int r = static_cast<int>(std::ceil(3 * sigma));
  std::vector<double> k(static_cast<std::size_t>(2 * r + 1));
  double total = 0;
  for (int i = -r; i <= r; ++i) total += k[static_cast<std::size_t>(i + r)] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (double& v : k) v /= total;
  Plane tmp(src.size()), out(src.size());
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      double s = 0;
      for (int d = -r; d <= r; ++d) s += k[static_cast<std::size_t>(d + r)] * clamped(src, h, w, i, j + d);
      tmp[static_cast<std::size_t>(i) * w + j] = s;
    }
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      double s = 0;
      for (int d = -r; d <= r; ++d) s += k[static_cast<std::size_t>(d + r)] * clamped(tmp, h, w, i + d, j);
      out[static_cast<std::size_t>(i) * w + j] = s;
    }
  return out;
}

}  // namespace

MeanFam center_gaussian_map(int h, int w, double sigma_frac) {
  check_map_args(h, w, sigma_frac);
  const double sigma = sigma_frac * std::min(h, w);
  const double ci = (h - 1) / 2.0, cj = (w - 1) / 2.0;
  std::vector<double> v(static_cast<std::size_t>(h) * w);
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      const double d2 = (i - ci) * (i - ci) + (j - cj) * (j - cj);
      v[static_cast<std::size_t>(i) * w + j] = std::exp(-d2 / (2 * sigma * sigma));
    }
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  const double mn = *lo, mx = *hi;
  if (!(mx > mn)) throw std::invalid_argument("center_gaussian_map: sigma too large for a " + std::to_string(h) + "x" +
                                              std::to_string(w) + " grid");
  for (double& x : v) x = (x - mn) / (mx - mn);
  return MeanFam(h, w, std::move(v));
}

MeanFam inverted_gaussian_map(int h, int w, double sigma_frac) {
  MeanFam m = center_gaussian_map(h, w, sigma_frac);
  for (double& x : m.values()) x = 1.0 - x;
  return m;
}

MeanFam edge_map(const nn::Tensor<float>& image, const EdgeParams& params) {
  if (!(params.low >= 0 && params.low < params.high))
    throw std::invalid_argument("edge_map: thresholds must satisfy 0 <= low < high");
  if (params.blur_sigma < 0) throw std::invalid_argument("edge_map: blur_sigma must be >= 0");
  nn::Tensor<float> img = image;
  if (img.rank() == 4) {
    if (img.dim(0) != 1) throw std::invalid_argument("edge_map: expects a single image");
    img = img.reshaped({img.dim(1), img.dim(2), img.dim(3)});
  }
  if (img.rank() != 3) throw std::invalid_argument("edge_map: expected [C,H,W]");
  const int C = img.dim(0), h = img.dim(1), w = img.dim(2);
  if (C != 1 && C != 3) throw std::invalid_argument("edge_map: expected 1 or 3 channels");
  const std::size_t hw = static_cast<std::size_t>(h) * w;

  Plane lum(hw);
  for (std::size_t k = 0; k < hw; ++k) {
    const double y = C == 1 ? img[k] : 0.299 * img[k] + 0.587 * img[hw + k] + 0.114 * img[2 * hw + k];
    lum[k] = (y + 1.0) / 2.0;
  }
  const Plane s = gaussian_blur(lum, h, w, params.blur_sigma);

  Plane mag(hw), gx(hw), gy(hw);
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      auto p = [&](int di, int dj) { return clamped(s, h, w, i + di, j + dj); };
      const double dx = (p(-1, 1) + 2 * p(0, 1) + p(1, 1)) - (p(-1, -1) + 2 * p(0, -1) + p(1, -1));
      const double dy = (p(1, -1) + 2 * p(1, 0) + p(1, 1)) - (p(-1, -1) + 2 * p(-1, 0) + p(-1, 1));
      const std::size_t k = static_cast<std::size_t>(i) * w + j;
      gx[k] = dx;
      gy[k] = dy;
      mag[k] = std::hypot(dx, dy);
    }

  // Non-maximum suppression along the quantized gradient direction.
  Plane thin(hw, 0.0);
  auto m_at = [&](int i, int j) {
    return (i < 0 || j < 0 || i >= h || j >= w) ? 0.0 : mag[static_cast<std::size_t>(i) * w + j];
  };
  constexpr double kPi = 3.14159265358979323846;
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      const std::size_t k = static_cast<std::size_t>(i) * w + j;
      if (mag[k] <= 0) continue;
      double ang = std::atan2(gy[k], gx[k]) * 180.0 / kPi;
      if (ang < 0) ang += 180.0;
      int di, dj;
      if (ang < 22.5 || ang >= 157.5) di = 0, dj = 1;
      else if (ang < 67.5) di = 1, dj = 1;
      else if (ang < 112.5) di = 1, dj = 0;
      else di = 1, dj = -1;
      if (mag[k] >= m_at(i + di, j + dj) && mag[k] >= m_at(i - di, j - dj)) thin[k] = mag[k];
    }

  // Hysteresis: weak pixels survive when 8-connected to a strong one.
  std::vector<double> out(hw, 0.0);
  std::deque<std::size_t> queue;
  for (std::size_t k = 0; k < hw; ++k)
    if (thin[k] >= params.high) {
      out[k] = 1.0;
      queue.push_back(k);
    }
  while (!queue.empty()) {
    const std::size_t k = queue.front();
    queue.pop_front();
    const int i = static_cast<int>(k) / w, j = static_cast<int>(k) % w;
    for (int di = -1; di <= 1; ++di)
      for (int dj = -1; dj <= 1; ++dj) {
        const int a = i + di, b = j + dj;
        if (a < 0 || b < 0 || a >= h || b >= w) continue;
        const std::size_t n = static_cast<std::size_t>(a) * w + b;
        if (out[n] == 0.0 && thin[n] >= params.low) {
          out[n] = 1.0;
          queue.push_back(n);
        }
      }
  }
  return MeanFam(h, w, std::move(out));
}

MeanFam mean_edge_map(const nn::Tensor<float>& images, const EdgeParams& params) {
  if (images.rank() != 4 || images.dim(0) < 1) throw std::invalid_argument("mean_edge_map: expected [B,C,H,W]");
  const int B = images.dim(0);
  const std::size_t per = images.size() / static_cast<std::size_t>(B);
  std::vector<double> acc;
  int h = 0, w = 0;
  for (int n = 0; n < B; ++n) {
    nn::Tensor<float> one({images.dim(1), images.dim(2), images.dim(3)});
    std::copy_n(images.data() + static_cast<std::size_t>(n) * per, per, one.data());
    const MeanFam e = edge_map(one, params);
    if (acc.empty()) {
      acc.assign(e.size(), 0.0);
      h = e.height();
      w = e.width();
    }
    for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += e[k];
  }
  for (double& v : acc) v /= B;
  return MeanFam(h, w, std::move(acc));
}

}  // namespace srd
