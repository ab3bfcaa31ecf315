#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "srd/nn/ops.hpp"
#include "srd/rng.hpp"

namespace srd::nn {

// Uniform(-bound, bound) with bound = gain * sqrt(3 / fan_in).
template <typename T>
void init_uniform_fan_in(Tensor<T>& w, int fan_in, Rng& rng, double gain = 1.0) {
  const double bound = gain * std::sqrt(3.0 / fan_in);
  for (auto& v : w.storage()) v = static_cast<T>((2.0 * rng.uniform() - 1.0) * bound);
}

template <typename T>
struct Conv2d {
  Parameter<T>* weight = nullptr;
  Parameter<T>* bias = nullptr;
  int pad = 0;

  Conv2d() = default;
  Conv2d(ParameterSet<T>& params, const std::string& name, int in_ch, int out_ch, int kernel, Rng& rng,
         double gain = 1.0)
      : pad(kernel / 2) {
    weight = &params.add(name + ".weight", {out_ch, in_ch, kernel, kernel});
    bias = &params.add(name + ".bias", {out_ch});
    init_uniform_fan_in(weight->value, in_ch * kernel * kernel, rng, gain);
  }

  Var<T> operator()(Graph<T>& g, Var<T> x) const {
    return conv2d(x, g.parameter(*weight), g.parameter(*bias), pad);
  }
};

template <typename T>
struct Linear {
  Parameter<T>* weight = nullptr;
  Parameter<T>* bias = nullptr;

  Linear() = default;
  Linear(ParameterSet<T>& params, const std::string& name, int in_features, int out_features, Rng& rng,
         double gain = 1.0) {
    weight = &params.add(name + ".weight", {out_features, in_features});
    bias = &params.add(name + ".bias", {out_features});
    init_uniform_fan_in(weight->value, in_features, rng, gain);
  }

  Var<T> operator()(Graph<T>& g, Var<T> x) const { return linear(x, g.parameter(*weight), g.parameter(*bias)); }
};

template <typename T>
struct GroupNorm {
  Parameter<T>* gamma = nullptr;
  Parameter<T>* beta = nullptr;
  int groups = 1;

  GroupNorm() = default;
  GroupNorm(ParameterSet<T>& params, const std::string& name, int channels, int max_groups) {
    groups = std::gcd(channels, std::max(1, max_groups));
    gamma = &params.add(name + ".gamma", {channels});
    beta = &params.add(name + ".beta", {channels});
    gamma->value.fill(T(1));
  }

  Var<T> operator()(Graph<T>& g, Var<T> x) const {
    return group_norm(x, g.parameter(*gamma), g.parameter(*beta), groups);
  }
};

// Adam with bias correction and a fixed learning rate.
template <typename T>
class Adam {
 public:
  struct Options {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double grad_clip = 1.0;  // global L2 norm; <= 0 disables
  };

  Adam() = default;
  Adam(ParameterSet<T>& params, Options options) : options_(options) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_.emplace_back(params[i].value.shape());
      v_.emplace_back(params[i].value.shape());
    }
  }

  void step(ParameterSet<T>& params) {
    ++t_;
    double scale_factor = 1.0;
    if (options_.grad_clip > 0) {
      double sq = 0;
      for (std::size_t i = 0; i < params.size(); ++i)
        for (T gv : params[i].grad.storage()) sq += static_cast<double>(gv) * gv;
      const double norm = std::sqrt(sq);
      if (norm > options_.grad_clip) scale_factor = options_.grad_clip / norm;
    }
    const T b1 = static_cast<T>(options_.beta1), b2 = static_cast<T>(options_.beta2);
    const T c1 = static_cast<T>(1.0 - std::pow(options_.beta1, t_));
    const T c2 = static_cast<T>(1.0 - std::pow(options_.beta2, t_));
    const T lr = static_cast<T>(options_.learning_rate), eps = static_cast<T>(options_.epsilon);
    const T sf = static_cast<T>(scale_factor);
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& w = params[i].value.storage();
      const auto& gr = params[i].grad.storage();
      auto& m = m_[i].storage();
      auto& v = v_[i].storage();
      for (std::size_t k = 0; k < w.size(); ++k) {
        const T gk = gr[k] * sf;
        m[k] = b1 * m[k] + (T(1) - b1) * gk;
        v[k] = b2 * v[k] + (T(1) - b2) * gk * gk;
        w[k] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + eps);
      }
    }
  }

  long step_count() const { return t_; }
  void set_step_count(long t) { t_ = t; }
  std::vector<Tensor<T>>& first_moments() { return m_; }
  std::vector<Tensor<T>>& second_moments() { return v_; }
  const std::vector<Tensor<T>>& first_moments() const { return m_; }
  const std::vector<Tensor<T>>& second_moments() const { return v_; }
  const Options& options() const { return options_; }
  void set_options(const Options& o) { options_ = o; }

 private:
  Options options_;
  long t_ = 0;
  std::vector<Tensor<T>> m_, v_;
};

}  // namespace srd::nn
