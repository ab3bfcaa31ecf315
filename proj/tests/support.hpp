#pragma once

#include <atomic>
#include <cmath>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <unistd.h>

#include "srd/nn/graph.hpp"
#include "srd/rng.hpp"

namespace srd::test {

template <typename T>
nn::Tensor<T> random_tensor(const nn::Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  nn::Tensor<T> t(shape);
  for (auto& v : t.storage()) v = static_cast<T>(lo + (hi - lo) * rng.uniform());
  return t;
}

// Fresh, empty scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& tag) {
  static std::atomic<int> counter{0};
  auto p = std::filesystem::temp_directory_path() /
           ("srd_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

// Max relative error between the tape gradient of sum(f(x) * r) with respect
// to every input and central differences. f receives the graph and the inputs.
inline double gradcheck(const std::function<nn::Var<double>(nn::Graph<double>&, std::vector<nn::Var<double>>&)>& f,
                        std::vector<nn::Tensor<double>> inputs, Rng& rng, double h = 1e-5) {
  nn::Tensor<double> r;
  auto eval = [&](const std::vector<nn::Tensor<double>>& xs, std::vector<nn::Tensor<double>>* grads) {
    nn::Graph<double> g(grads != nullptr);
    std::vector<nn::Var<double>> vars;
    for (const auto& x : xs) vars.push_back(grads ? g.input(x) : g.constant(x));
    auto y = f(g, vars);
    if (r.empty()) r = random_tensor<double>(y.shape(), rng);
    double s = 0;
    for (std::size_t i = 0; i < r.size(); ++i) s += y.value()[i] * r[i];
    if (grads) {
      g.backward(y, r);
      for (auto& v : vars) grads->push_back(v.grad());
    }
    return s;
  };
  std::vector<nn::Tensor<double>> grads;
  eval(inputs, &grads);
  double worst = 0;
  for (std::size_t k = 0; k < inputs.size(); ++k)
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      auto plus = inputs, minus = inputs;
      plus[k][i] += h;
      minus[k][i] -= h;
      const double num = (eval(plus, nullptr) - eval(minus, nullptr)) / (2 * h);
      const double ana = grads[k][i];
      const double err = std::abs(num - ana) / std::max(1e-6, std::abs(num) + std::abs(ana));
      worst = std::max(worst, err);
    }
  return worst;
}

}  // namespace srd::test

#include "srd/diffusion.hpp"

namespace srd::test {

// Exact noise predictor for a dataset concentrated on one image `c`:
// eps = (x_t - sqrt(alpha_bar_t) c) / sqrt(1 - alpha_bar_t).
template <typename T>
struct PointMassModel {
  using scalar_type = T;
  nn::Tensor<T> c;  // [1,C,H,W]
  NoiseSchedule sched;

  nn::Var<T> forward(nn::Graph<T>& g, nn::Var<T> x, std::span<const int> t, const MeanFam*, double) const {
    const auto& xv = x.value();
    nn::Tensor<T> out(xv.shape());
    const std::size_t per = c.size();
    for (std::size_t i = 0; i < out.size(); ++i) {
      const double ab = sched.alpha_bar(t[i / per]);
      out[i] = static_cast<T>((xv[i] - std::sqrt(ab) * c[i % per]) / std::sqrt(1 - ab));
    }
    return g.constant(std::move(out));
  }
};

// Predicts zero noise everywhere.
template <typename T>
struct ZeroModel {
  using scalar_type = T;
  nn::Var<T> forward(nn::Graph<T>& g, nn::Var<T> x, std::span<const int>, const MeanFam*, double) const {
    return g.constant(nn::Tensor<T>(x.shape()));
  }
};

}  // namespace srd::test
