#include "srd/schedule.hpp"

#include <stdexcept>
#include <string>

namespace srd {

NoiseSchedule NoiseSchedule::linear(int steps, double beta_start, double beta_end) {
  if (steps < 1) throw std::invalid_argument("schedule needs T >= 1, got " + std::to_string(steps));
  if (!(beta_start > 0.0 && beta_end < 1.0 && beta_start <= beta_end))
    throw std::invalid_argument("schedule endpoints must satisfy 0 < beta_start <= beta_end < 1");
  std::vector<double> betas(static_cast<std::size_t>(steps));
  for (int t = 0; t < steps; ++t)
    betas[static_cast<std::size_t>(t)] =
        steps == 1 ? beta_start : beta_start + (beta_end - beta_start) * t / static_cast<double>(steps - 1);
  return from_betas(std::move(betas));
}

NoiseSchedule NoiseSchedule::from_betas(std::vector<double> betas) {
  if (betas.empty()) throw std::invalid_argument("schedule needs at least one beta");
  NoiseSchedule s;
  double running = 1.0;
  for (double b : betas) {
    if (!(b > 0.0 && b < 1.0)) throw std::invalid_argument("every beta must lie in (0, 1)");
    s.alpha_.push_back(1.0 - b);
    running *= 1.0 - b;
    s.alpha_bar_.push_back(running);
  }
  s.beta_ = std::move(betas);
  return s;
}

void NoiseSchedule::check_timestep(int t) const {
  if (t < 0 || t >= steps())
    throw std::out_of_range("timestep " + std::to_string(t) + " outside [0, " + std::to_string(steps()) + ")");
}

}  // namespace srd
