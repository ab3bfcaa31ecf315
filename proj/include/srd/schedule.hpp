#pragma once

#include <vector>

namespace srd {

// Per-timestep noise coefficients, 0-based: index t in [0, T).
class NoiseSchedule {
 public:
  // beta linearly interpolated from beta_start to beta_end inclusive.
  static NoiseSchedule linear(int steps, double beta_start = 1e-4, double beta_end = 0.02);
  static NoiseSchedule from_betas(std::vector<double> betas);

  int steps() const { return static_cast<int>(beta_.size()); }
  double beta(int t) const { return beta_.at(static_cast<std::size_t>(t)); }
  double alpha(int t) const { return alpha_.at(static_cast<std::size_t>(t)); }
  double alpha_bar(int t) const { return alpha_bar_.at(static_cast<std::size_t>(t)); }

  const std::vector<double>& betas() const { return beta_; }
  const std::vector<double>& alpha_bars() const { return alpha_bar_; }

  // Throws std::out_of_range for t outside [0, T).
  void check_timestep(int t) const;

 private:
  std::vector<double> beta_, alpha_, alpha_bar_;
};

}  // namespace srd
