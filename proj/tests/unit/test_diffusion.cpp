#include <doctest.h>

#include "../support.hpp"
#include "srd/diffusion.hpp"
#include "srd/guidance.hpp"

using namespace srd;
using nn::Tensor;

TEST_SUITE("diffusion") {
  TEST_CASE("schedule from explicit betas") {
    const auto s1 = NoiseSchedule::from_betas({0.1});
    CHECK(s1.alpha_bar(0) == doctest::Approx(0.9).epsilon(1e-15));
    const auto s2 = NoiseSchedule::from_betas({0.1, 0.2});
    CHECK(s2.alpha_bar(0) == doctest::Approx(0.9).epsilon(1e-15));
    CHECK(s2.alpha_bar(1) == doctest::Approx(0.72).epsilon(1e-15));
    CHECK(s2.alpha(1) == doctest::Approx(0.8).epsilon(1e-15));
  }

  TEST_CASE("linear schedule endpoints and cumulative products") {
    const auto s = NoiseSchedule::linear(200, 1e-4, 0.02);
    CHECK(s.steps() == 200);
    CHECK(s.beta(0) == doctest::Approx(1e-4).epsilon(1e-14));
    CHECK(s.beta(199) == doctest::Approx(0.02).epsilon(1e-14));
    // numpy: cumprod(1 - linspace(1e-4, 0.02, 200))
    CHECK(s.alpha_bar(0) == doctest::Approx(0.99990000000000001).epsilon(1e-13));
    CHECK(s.alpha_bar(99) == doctest::Approx(0.60248030530770547).epsilon(1e-12));
    CHECK(s.alpha_bar(199) == doctest::Approx(0.13218275425061793).epsilon(1e-12));
    double run = 1;
    for (int t = 0; t < 200; ++t) {
      run *= 1 - s.beta(t);
      CHECK(s.alpha_bar(t) == doctest::Approx(run).epsilon(1e-14));
      if (t > 0) CHECK(s.alpha_bar(t) < s.alpha_bar(t - 1));
    }
  }

  TEST_CASE("schedule rejects bad arguments") {
    CHECK_THROWS(NoiseSchedule::linear(0));
    CHECK_THROWS(NoiseSchedule::linear(10, 0.0, 0.1));
    CHECK_THROWS(NoiseSchedule::linear(10, 0.2, 0.1));
    CHECK_THROWS(NoiseSchedule::linear(10, 0.1, 1.0));
    CHECK_THROWS_AS(NoiseSchedule::linear(10).check_timestep(10), std::out_of_range);
  }

  TEST_CASE("forward_sample closed form") {
    const auto s = NoiseSchedule::linear(50);
    Rng rng(1);
    const auto x0 = test::random_tensor<double>({2, 1, 4, 4}, rng);
    const Tensor<double> zero(x0.shape());
    const auto xt = forward_sample(x0, 30, zero, s);
    for (std::size_t i = 0; i < xt.size(); ++i) CHECK(xt[i] == doctest::Approx(std::sqrt(s.alpha_bar(30)) * x0[i]));
    const auto eps = gaussian_like<double>(x0.shape(), rng);
    const auto xt2 = forward_sample(x0, 7, eps, s);
    for (std::size_t i = 0; i < xt.size(); ++i)
      CHECK(xt2[i] == doctest::Approx(std::sqrt(s.alpha_bar(7)) * x0[i] + std::sqrt(1 - s.alpha_bar(7)) * eps[i]));
    // Zero-noise limit through a schedule with alpha_bar = 1 - 1e-300.
    const auto tiny = NoiseSchedule::from_betas({1e-300});
    const auto same = forward_sample(x0, 0, eps, tiny);
    for (std::size_t i = 0; i < x0.size(); ++i) CHECK(same[i] == doctest::Approx(x0[i]).epsilon(1e-12));
    CHECK_THROWS(forward_sample(x0, 50, eps, s));
    CHECK_THROWS(forward_sample(x0, -1, eps, s));
    CHECK_THROWS(forward_sample(x0, 3, Tensor<double>({2, 1, 4, 5}), s));
  }

  TEST_CASE("forward_sample with per-element timesteps") {
    const auto s = NoiseSchedule::linear(20);
    Rng rng(2);
    const auto x0 = test::random_tensor<double>({3, 1, 2, 2}, rng);
    const auto eps = gaussian_like<double>(x0.shape(), rng);
    const std::vector<int> ts{0, 10, 19};
    const auto xt = forward_sample(x0, std::span<const int>(ts), eps, s);
    for (int b = 0; b < 3; ++b) {
      const double ab = s.alpha_bar(ts[static_cast<std::size_t>(b)]);
      for (int k = 0; k < 4; ++k) {
        const auto i = static_cast<std::size_t>(b * 4 + k);
        CHECK(xt[i] == doctest::Approx(std::sqrt(ab) * x0[i] + std::sqrt(1 - ab) * eps[i]));
      }
    }
  }

  TEST_CASE("sr_noise adds the broadcast map") {
    Rng rng(3);
    const auto eps = gaussian_like<double>({2, 3, 4, 4}, rng);
    const auto m = center_gaussian_map(4, 4);
    const auto same = sr_noise(eps, m, 0.0);
    CHECK(same.storage() == eps.storage());
    const auto out = sr_noise(eps, m, 0.1);
    for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == doctest::Approx(eps[i] + 0.1 * m[i % 16]));
    CHECK_THROWS(sr_noise(eps, m, -0.1));
    CHECK_THROWS(sr_noise(eps, center_gaussian_map(4, 5), 0.1));
    MeanFam bad(4, 4, 1.5);
    CHECK_THROWS(sr_noise(eps, bad, 0.1));
  }

  TEST_CASE("sr_loss without a map is the plain noise MSE") {
    const auto s = NoiseSchedule::linear(10);
    Rng rng(4);
    const auto x0 = test::random_tensor<double>({2, 1, 4, 4}, rng);
    const auto eps = gaussian_like<double>(x0.shape(), rng);
    const std::vector<int> t{3, 8};
    test::ZeroModel<double> zero;
    const double v = sr_loss_value(zero, x0, std::span<const int>(t), eps, nullptr, 0.5, 0.5, s);
    double ref = 0;
    for (double e : eps.storage()) ref += e * e;
    CHECK(v == doctest::Approx(ref / static_cast<double>(eps.size())).epsilon(1e-12));
    // With a map the target shifts by lambda * map.
    const auto m = center_gaussian_map(4, 4);
    const double v2 = sr_loss_value(zero, x0, std::span<const int>(t), eps, &m, 0.2, 0.0, s);
    double ref2 = 0;
    for (std::size_t i = 0; i < eps.size(); ++i) ref2 += std::pow(eps[i] + 0.2 * m[i % 16], 2);
    CHECK(v2 == doctest::Approx(ref2 / static_cast<double>(eps.size())).epsilon(1e-12));
  }

  TEST_CASE("exact predictor samples the point mass") {
    const auto s = NoiseSchedule::linear(60);
    Rng rng(5);
    test::PointMassModel<double> m{test::random_tensor<double>({1, 1, 3, 3}, rng), s};
    Rng srng(6);
    const auto out = sample(m, s, 1, 3, 3, srng, 4);
    for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == doctest::Approx(m.c[i % 9]).epsilon(1e-9));
    Rng srng2(6);
    const auto resp = sample_respaced(m, s, 7, 1, 3, 3, srng2, 4);
    for (std::size_t i = 0; i < resp.size(); ++i) CHECK(resp[i] == doctest::Approx(m.c[i % 9]).epsilon(1e-9));
  }

  TEST_CASE("respaced timesteps") {
    const auto s = NoiseSchedule::linear(200);
    const auto ts = respaced_timesteps(s, 5);
    CHECK(ts == std::vector<int>{0, 50, 100, 149, 199});
    CHECK(respaced_timesteps(s, 500).size() == 200);
    CHECK(respaced_timesteps(s, 1) == std::vector<int>{199});
  }

  TEST_CASE("sampling is a pure function of the rng state") {
    const auto s = NoiseSchedule::linear(20);
    test::ZeroModel<float> m;
    Rng a(9), b(9);
    CHECK(sample(m, s, 1, 4, 4, a, 3).storage() == sample(m, s, 1, 4, 4, b, 3).storage());
    CHECK(a == b);
  }
}
