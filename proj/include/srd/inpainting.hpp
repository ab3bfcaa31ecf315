#pragma once

#include <string>
#include <vector>

#include "srd/diffusion.hpp"

namespace srd {

struct MaskTag {};
// 1 = known pixel, 0 = pixel to fill.
using Mask = SpatialMap<MaskTag>;

enum class MaskKind { Wide, Narrow, AlternatingLines };

std::string mask_kind_name(MaskKind kind);
MaskKind parse_mask_kind(const std::string& name);  // "wide" | "narrow" | "alternating"

// Wide: a few thick strokes covering 30-50% of the image; Narrow: thin strokes
// covering 5-15%; AlternatingLines: odd rows unknown. h, w >= 8.
Mask make_mask(MaskKind kind, int h, int w, Rng& rng);

double unknown_fraction(const Mask& m);

// Visiting order of timesteps for resampled inpainting, ending with -1 (clean
// image). Every jump_len steps below T - jump_len the chain goes back up
// jump_len steps, jump_n times. jump_n = 0 is the plain descending order.
std::vector<int> repaint_schedule(int T, int jump_len, int jump_n);

template <typename T>
struct InpaintResult {
  ImageTensor<T> image;
  int denoise_steps = 0;
  int renoise_steps = 0;
};

// Known region drawn from q(x_{t-1} | x0), unknown region from the model's
// reverse step, composited by the mask at every step. The final composite
// copies known pixels from `known` exactly.
template <NoisePredictor M, typename T = typename M::scalar_type>
InpaintResult<T> repaint_sample(const M& model, const NoiseSchedule& sched, const ImageTensor<T>& known,
                                const Mask& mask, int jump_len, int jump_n, Rng& rng) {
  detail::require_image(known, "repaint_sample");
  const int H = known.dim(2), W = known.dim(3);
  if (mask.height() != H || mask.width() != W)
    throw std::invalid_argument("repaint_sample: mask is " + std::to_string(mask.height()) + "x" +
                                std::to_string(mask.width()) + ", image is " + std::to_string(H) + "x" +
                                std::to_string(W));
  for (double v : mask.values())
    if (v != 0.0 && v != 1.0) throw std::invalid_argument("repaint_sample: mask must be binary");
  if (jump_len < 1 || jump_n < 0) throw std::invalid_argument("repaint_sample: jump_len >= 1 and jump_n >= 0 required");

  const std::size_t HW = static_cast<std::size_t>(H) * W;
  auto composite = [&](const ImageTensor<T>& kn, const ImageTensor<T>& unk) {
    ImageTensor<T> out(kn.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = mask[i % HW] == 1.0 ? kn[i] : unk[i];
    return out;
  };

  const auto order = repaint_schedule(sched.steps(), jump_len, jump_n);
  InpaintResult<T> res;
  ImageTensor<T> x = gaussian_like<T>(known.shape(), rng);
  for (std::size_t k = 0; k + 1 < order.size(); ++k) {
    const int from = order[k], to = order[k + 1];
    if (to < from) {
      const ImageTensor<T> unk = reverse_step(model, x, from, sched, rng);
      if (to < 0) {
        x = composite(known, unk);
      } else {
        const auto eps = gaussian_like<T>(known.shape(), rng);
        x = composite(forward_sample(known, to, eps, sched), unk);
      }
      ++res.denoise_steps;
    } else {
      // q(x_to | x_from), one step up the chain.
      const T a = static_cast<T>(std::sqrt(sched.alpha(to))), s = static_cast<T>(std::sqrt(sched.beta(to)));
      const auto z = gaussian_like<T>(x.shape(), rng);
      for (std::size_t i = 0; i < x.size(); ++i) x[i] = a * x[i] + s * z[i];
      ++res.renoise_steps;
    }
  }
  res.image = std::move(x);
  return res;
}

}  // namespace srd
