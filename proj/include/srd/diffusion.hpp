#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "srd/maps.hpp"
#include "srd/nn/ops.hpp"
#include "srd/rng.hpp"
#include "srd/schedule.hpp"

namespace srd {

template <typename T>
using ImageTensor = nn::Tensor<T>;  // [B,C,H,W], model range [-1, 1]
template <typename T>
using NoiseTensor = nn::Tensor<T>;  // same shape as the image it perturbs

// A noise predictor eps_theta(x_t, t) whose attention may be modulated by an mFAM.
template <typename M>
concept NoisePredictor = requires(const M& m, nn::Graph<typename M::scalar_type>& g,
                                  nn::Var<typename M::scalar_type> x, std::span<const int> t, const MeanFam* f,
                                  double lambda) {
  { m.forward(g, x, t, f, lambda) } -> std::same_as<nn::Var<typename M::scalar_type>>;
};

// Raised when a loss or prediction stops being finite.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

template <typename T>
void require_same_shape(const nn::Tensor<T>& a, const nn::Tensor<T>& b, const char* what) {
  if (a.shape() != b.shape())
    throw std::invalid_argument(std::string(what) + ": shape mismatch " + nn::shape_string(a.shape()) + " vs " +
                                nn::shape_string(b.shape()));
}

template <typename T>
void require_image(const nn::Tensor<T>& x, const char* what) {
  if (x.rank() != 4) throw std::invalid_argument(std::string(what) + ": expected [B,C,H,W], got " + nn::shape_string(x.shape()));
}

}  // namespace detail

// sqrt(alpha_bar) * x0 + sqrt(1 - alpha_bar) * eps for a given cumulative coefficient.
template <typename T>
ImageTensor<T> forward_mix(const ImageTensor<T>& x0, const NoiseTensor<T>& eps, double alpha_bar) {
  detail::require_same_shape(x0, eps, "forward_sample");
  const T a = static_cast<T>(std::sqrt(alpha_bar));
  const T s = static_cast<T>(std::sqrt(1.0 - alpha_bar));
  ImageTensor<T> out(x0.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * x0[i] + s * eps[i];
  return out;
}

// Closed-form marginal q(x_t | x_0) evaluated with the supplied noise.
template <typename T>
ImageTensor<T> forward_sample(const ImageTensor<T>& x0, int t, const NoiseTensor<T>& eps, const NoiseSchedule& sched) {
  sched.check_timestep(t);
  return forward_mix(x0, eps, sched.alpha_bar(t));
}

// Per-batch-element timesteps.
template <typename T>
ImageTensor<T> forward_sample(const ImageTensor<T>& x0, std::span<const int> t, const NoiseTensor<T>& eps,
                              const NoiseSchedule& sched) {
  detail::require_image(x0, "forward_sample");
  detail::require_same_shape(x0, eps, "forward_sample");
  const int B = x0.dim(0);
  if (t.size() != static_cast<std::size_t>(B)) throw std::invalid_argument("forward_sample: one timestep per image");
  const std::size_t per = x0.size() / static_cast<std::size_t>(B);
  ImageTensor<T> out(x0.shape());
  for (int b = 0; b < B; ++b) {
    const int tb = t[static_cast<std::size_t>(b)];
    sched.check_timestep(tb);
    const T a = static_cast<T>(std::sqrt(sched.alpha_bar(tb)));
    const T s = static_cast<T>(std::sqrt(1.0 - sched.alpha_bar(tb)));
    for (std::size_t i = b * per; i < (b + 1) * per; ++i) out[i] = a * x0[i] + s * eps[i];
  }
  return out;
}

// eps + lambda * mfam, broadcast over batch and channels.
template <typename T>
NoiseTensor<T> sr_noise(const NoiseTensor<T>& eps, const MeanFam& mfam, double lambda_fwd) {
  if (lambda_fwd < 0) throw std::invalid_argument("sr_noise: lambda must be >= 0");
  detail::require_image(eps, "sr_noise");
  const int H = eps.dim(2), W = eps.dim(3);
  if (mfam.height() != H || mfam.width() != W)
    throw std::invalid_argument("sr_noise: mFAM is " + std::to_string(mfam.height()) + "x" +
                                std::to_string(mfam.width()) + ", noise is " + std::to_string(H) + "x" +
                                std::to_string(W));
  require_unit_range(mfam, "sr_noise");
  if (lambda_fwd == 0.0) return eps;
  NoiseTensor<T> out = eps;
  const std::size_t HW = static_cast<std::size_t>(H) * W;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += static_cast<T>(lambda_fwd * mfam[i % HW]);
  return out;
}

template <typename T>
ImageTensor<T> sr_forward_sample(const ImageTensor<T>& x0, int t, const NoiseTensor<T>& eps, const MeanFam& mfam,
                                 double lambda_fwd, const NoiseSchedule& sched) {
  return forward_sample(x0, t, sr_noise(eps, mfam, lambda_fwd), sched);
}

template <typename T>
ImageTensor<T> sr_forward_sample(const ImageTensor<T>& x0, std::span<const int> t, const NoiseTensor<T>& eps,
                                 const MeanFam& mfam, double lambda_fwd, const NoiseSchedule& sched) {
  return forward_sample(x0, t, sr_noise(eps, mfam, lambda_fwd), sched);
}

// Records mean ||eps_sr - eps_theta(x~_t, t)||^2 on `g` and returns the scalar
// node. Without an mFAM both lambdas are inert and this is the plain DDPM loss.
template <NoisePredictor M, typename T = typename M::scalar_type>
nn::Var<T> sr_loss(nn::Graph<T>& g, const M& model, const ImageTensor<T>& x0, std::span<const int> t,
                   const NoiseTensor<T>& eps, const MeanFam* mfam, double lambda_fwd, double lambda_rev,
                   const NoiseSchedule& sched) {
  if (lambda_rev < 0) throw std::invalid_argument("sr_loss: lambda_rev must be >= 0");
  NoiseTensor<T> target = mfam ? sr_noise(eps, *mfam, lambda_fwd) : eps;
  ImageTensor<T> x_t = forward_sample(x0, t, target, sched);
  auto pred = model.forward(g, g.constant(std::move(x_t)), t, mfam, lambda_rev);
  auto loss = nn::mse(pred, g.constant(std::move(target)));
  const double v = static_cast<double>(loss.value()[0]);
  if (!std::isfinite(v)) throw DivergenceError("sr_loss is not finite (" + std::to_string(v) + ")");
  return loss;
}

template <NoisePredictor M, typename T = typename M::scalar_type>
double sr_loss_value(const M& model, const ImageTensor<T>& x0, std::span<const int> t, const NoiseTensor<T>& eps,
                     const MeanFam* mfam, double lambda_fwd, double lambda_rev, const NoiseSchedule& sched) {
  nn::Graph<T> g(false);
  return static_cast<double>(sr_loss(g, model, x0, t, eps, mfam, lambda_fwd, lambda_rev, sched).value()[0]);
}

template <typename T>
NoiseTensor<T> gaussian_like(const nn::Shape& shape, Rng& rng) {
  NoiseTensor<T> z(shape);
  for (auto& v : z.storage()) v = static_cast<T>(rng.normal());
  return z;
}

// Posterior mean step from a given noise prediction; sigma_t^2 = beta_t, no noise at t = 0.
template <typename T>
ImageTensor<T> reverse_step_from_prediction(const ImageTensor<T>& x_t, const NoiseTensor<T>& eps_pred, int t,
                                            const NoiseSchedule& sched, const NoiseTensor<T>* z) {
  sched.check_timestep(t);
  detail::require_same_shape(x_t, eps_pred, "reverse_step");
  const T inv_sqrt_alpha = static_cast<T>(1.0 / std::sqrt(sched.alpha(t)));
  const T eps_coef = static_cast<T>(sched.beta(t) / std::sqrt(1.0 - sched.alpha_bar(t)));
  const T sigma = static_cast<T>(std::sqrt(sched.beta(t)));
  ImageTensor<T> out(x_t.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = inv_sqrt_alpha * (x_t[i] - eps_coef * eps_pred[i]);
    if (t > 0 && z) out[i] += sigma * (*z)[i];
  }
  return out;
}

// One ancestral step x_t -> x_{t-1}. Never consumes an mFAM.
template <NoisePredictor M, typename T = typename M::scalar_type>
ImageTensor<T> reverse_step(const M& model, const ImageTensor<T>& x_t, int t, const NoiseSchedule& sched, Rng& rng) {
  sched.check_timestep(t);
  detail::require_image(x_t, "reverse_step");
  std::vector<int> ts(static_cast<std::size_t>(x_t.dim(0)), t);
  nn::Graph<T> g(false);
  const auto eps = model.forward(g, g.constant(x_t), ts, nullptr, 0.0).value();
  for (T v : eps.storage())
    if (!std::isfinite(static_cast<double>(v)))
      throw DivergenceError("non-finite noise prediction at t=" + std::to_string(t));
  if (t == 0) return reverse_step_from_prediction<T>(x_t, eps, t, sched, nullptr);
  const auto z = gaussian_like<T>(x_t.shape(), rng);
  return reverse_step_from_prediction<T>(x_t, eps, t, sched, &z);
}

inline constexpr int kSampleChunk = 64;

// Draws `count` images from pure noise at t = T-1 down to t = 0, in chunks of
// kSampleChunk images; the result is a pure function of (model, sched, rng state, count).
template <NoisePredictor M, typename T = typename M::scalar_type>
ImageTensor<T> sample(const M& model, const NoiseSchedule& sched, int channels, int height, int width, Rng& rng,
                      int count) {
  if (count < 1) throw std::invalid_argument("sample: count must be >= 1");
  ImageTensor<T> out({count, channels, height, width});
  const std::size_t per = static_cast<std::size_t>(channels) * height * width;
  for (int start = 0; start < count; start += kSampleChunk) {
    const int n = std::min(kSampleChunk, count - start);
    auto x = gaussian_like<T>({n, channels, height, width}, rng);
    for (int t = sched.steps() - 1; t >= 0; --t) x = reverse_step(model, x, t, sched, rng);
    std::copy(x.storage().begin(), x.storage().end(), out.storage().begin() + static_cast<std::ptrdiff_t>(start * per));
  }
  return out;
}

// Evenly spaced subsequence of `steps` timesteps from 0 to T-1 (ascending).
inline std::vector<int> respaced_timesteps(const NoiseSchedule& sched, int steps) {
  const int T = sched.steps();
  if (steps < 1) throw std::invalid_argument("respaced_timesteps: steps must be >= 1");
  if (steps >= T) {
    std::vector<int> all(static_cast<std::size_t>(T));
    for (int t = 0; t < T; ++t) all[static_cast<std::size_t>(t)] = t;
    return all;
  }
  std::vector<int> ts;
  for (int i = 0; i < steps; ++i) {
    const int t = steps == 1 ? T - 1 : static_cast<int>(std::lround(static_cast<double>(i) * (T - 1) / (steps - 1)));
    if (ts.empty() || ts.back() != t) ts.push_back(t);
  }
  return ts;
}

// Ancestral sampling on a shortened chain. The skipped transitions are merged
// into beta'_i = 1 - alpha_bar[t_i] / alpha_bar[t_{i-1}], so the chain keeps the
// original marginals at the visited timesteps. steps >= T is plain sample().
template <NoisePredictor M, typename T = typename M::scalar_type>
ImageTensor<T> sample_respaced(const M& model, const NoiseSchedule& sched, int steps, int channels, int height,
                               int width, Rng& rng, int count) {
  if (steps >= sched.steps()) return sample(model, sched, channels, height, width, rng, count);
  if (count < 1) throw std::invalid_argument("sample: count must be >= 1");
  const auto ts = respaced_timesteps(sched, steps);
  std::vector<double> betas;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const double prev = i == 0 ? 1.0 : sched.alpha_bar(ts[i - 1]);
    betas.push_back(std::clamp(1.0 - sched.alpha_bar(ts[i]) / prev, 1e-12, 0.999));
  }
  const auto local = NoiseSchedule::from_betas(std::move(betas));
  ImageTensor<T> out({count, channels, height, width});
  const std::size_t per = static_cast<std::size_t>(channels) * height * width;
  for (int start = 0; start < count; start += kSampleChunk) {
    const int n = std::min(kSampleChunk, count - start);
    auto x = gaussian_like<T>({n, channels, height, width}, rng);
    for (int i = static_cast<int>(ts.size()) - 1; i >= 0; --i) {
      std::vector<int> model_t(static_cast<std::size_t>(n), ts[static_cast<std::size_t>(i)]);
      nn::Graph<T> g(false);
      const auto eps = model.forward(g, g.constant(x), model_t, nullptr, 0.0).value();
      if (i == 0) {
        x = reverse_step_from_prediction<T>(x, eps, i, local, nullptr);
      } else {
        const auto z = gaussian_like<T>(x.shape(), rng);
        x = reverse_step_from_prediction<T>(x, eps, i, local, &z);
      }
    }
    std::copy(x.storage().begin(), x.storage().end(), out.storage().begin() + static_cast<std::ptrdiff_t>(start * per));
  }
  return out;
}

}  // namespace srd
