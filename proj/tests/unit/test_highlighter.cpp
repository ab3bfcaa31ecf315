#include <doctest.h>

#include <cmath>

#include "../support.hpp"
#include "srd/highlighter.hpp"

using namespace srd;
using nn::Tensor;

namespace {

// Weights w[p][k] = 0.5 sin(1.3 k + 0.7 p + 0.2), shared with tests/oracles/gen_oracles.py.
HighlighterModel formula_model() {
  HighlighterConfig c;
  c.image_size = 8;
  c.stage_channels = {3, 4};
  HighlighterModel m(c, 0);
  for (std::size_t p = 0; p < m.parameters().size(); ++p) {
    auto& v = m.parameters()[p].value;
    for (std::size_t k = 0; k < v.size(); ++k)
      v[k] = static_cast<float>(0.5 * std::sin(1.3 * static_cast<double>(k) + 0.7 * static_cast<double>(p) + 0.2));
  }
  m.mark_trained();
  return m;
}

Tensor<float> formula_images() {
  Tensor<float> x({2, 1, 8, 8});
  for (int n = 0; n < 2; ++n)
    for (int y = 0; y < 8; ++y)
      for (int xx = 0; xx < 8; ++xx)
        x[static_cast<std::size_t>((n * 8 + y) * 8 + xx)] = static_cast<float>(0.8 * std::sin(0.9 * y + 0.4 * xx + n));
  return x;
}

// torch reference: conv/relu/avgpool/conv/relu/GAP/linear, Grad-CAM on logit 1,
// F.interpolate(bilinear, align_corners=False), min-max normalization.
const double kGradCam0[64] = {
    0, 0.00183122891, 0.00549368674, 0.00549368674, 0.00183122891, 0, 0, 0, 0.12167218, 0.10923514, 0.0843610582,
    0.0753990708, 0.0823491772, 0.100050597, 0.128503331, 0.142729698, 0.365016541, 0.324042961, 0.242095801,
    0.215209839, 0.243385074, 0.300151792, 0.385509992, 0.428189093, 0.375089369, 0.356894576, 0.320504991,
    0.325879465, 0.373017999, 0.413650669, 0.447777478, 0.464840882, 0.151890664, 0.207789985, 0.319588627,
    0.40740795, 0.471247952, 0.440547231, 0.315305788, 0.252685066, 0.190858094, 0.286371013, 0.477396852,
    0.586129144, 0.612567889, 0.532302325, 0.345332455, 0.251847519, 0.491991659, 0.592637661, 0.793929665,
    0.862043048, 0.796977809, 0.688915952, 0.537857479, 0.462328242, 0.642558442, 0.745770985, 0.952196072, 1,
    0.889182769, 0.767222766, 0.634119991, 0.567568603};
const double kGradCam1[64] = {
    0.111916247, 0.1148059, 0.120585206, 0.0857140403, 0.0101924035, 0, 0.0551368298, 0.0827052447, 0.132306126,
    0.120658104, 0.0973620617, 0.0826007225, 0.0763740869, 0.0896198898, 0.122338131, 0.138697252, 0.173085884,
    0.132362514, 0.0509157735, 0.0763740869, 0.208737454, 0.268859669, 0.256740734, 0.250681266, 0.142165286,
    0.122639887, 0.0835890875, 0.11677755, 0.222205275, 0.262107962, 0.236485614, 0.223674439, 0.0395443332,
    0.0914902234, 0.195382004, 0.203811113, 0.11677755, 0.0693647694, 0.0615727702, 0.0576767706, 0.212790374,
    0.288013198, 0.438458846, 0.430423663, 0.263907647, 0.148707806, 0.0848241379, 0.052882304, 0.661903409,
    0.712208811, 0.812819615, 0.796615201, 0.663595566, 0.500137072, 0.306239717, 0.209291039, 0.886459927,
    0.924306618, 1, 0.979710969, 0.863439526, 0.675851705, 0.416947506, 0.287495407};

}  // namespace

TEST_SUITE("highlighter") {
  TEST_CASE("logits match the reference network") {
    const auto m = formula_model();
    const auto z = m.logits(formula_images());
    CHECK(z[0] == doctest::Approx(-0.22806168837259289).epsilon(1e-5));
    CHECK(z[1] == doctest::Approx(-0.31509984492280335).epsilon(1e-5));
    CHECK(z[2] == doctest::Approx(-0.2344221920571333).epsilon(1e-5));
    CHECK(z[3] == doctest::Approx(-0.34035071603354533).epsilon(1e-5));
  }

  TEST_CASE("Grad-CAM matches the reference implementation") {
    const auto m = formula_model();
    const auto maps = grad_cam(m, formula_images(), kFakeClass);
    REQUIRE(maps.size() == 2);
    for (int i = 0; i < 64; ++i) {
      CHECK(std::abs(maps[0][static_cast<std::size_t>(i)] - kGradCam0[i]) < 2e-5);
      CHECK(std::abs(maps[1][static_cast<std::size_t>(i)] - kGradCam1[i]) < 2e-5);
    }
    // Extraction must not disturb parameter gradients.
    for (std::size_t p = 0; p < m.parameters().size(); ++p)
      for (float g : m.parameters()[p].grad.storage()) CHECK(g == 0.0f);
  }

  TEST_CASE("CAM equals Grad-CAM for a GAP head") {
    const auto m = formula_model();
    const auto a = grad_cam(m, formula_images(), kFakeClass);
    const auto b = cam(m, formula_images(), kFakeClass);
    for (std::size_t n = 0; n < 2; ++n)
      for (std::size_t i = 0; i < 64; ++i) CHECK(std::abs(a[n][i] - b[n][i]) <= 1e-5);
  }

  TEST_CASE("constant images give all-zero maps") {
    const auto m = formula_model();
    Tensor<float> flat({1, 1, 8, 8}, 0.3f);
    const auto a = grad_cam_one(m, flat, kFakeClass);
    const auto b = cam(m, flat, kFakeClass);
    for (double v : a.values()) CHECK(v == 0.0);
    for (double v : b[0].values()) CHECK(v == 0.0);
  }

  TEST_CASE("untrained highlighter is rejected") {
    HighlighterConfig c;
    HighlighterModel m(c, 1);
    CHECK_THROWS_AS(grad_cam(m, Tensor<float>({1, 1, 16, 16}), kFakeClass), std::logic_error);
    CHECK_THROWS(grad_cam(formula_model(), formula_images(), 2));
  }

  TEST_CASE("normalize_map and mean_fam") {
    const auto n = normalize_map(1, 3, {2.0, 4.0, 3.0});
    CHECK(n.values() == std::vector<double>{0.0, 1.0, 0.5});
    const auto flat = normalize_map(2, 2, {5, 5, 5, 5});
    for (double v : flat.values()) CHECK(v == 0.0);
    std::vector<FlawActivationMap> fams{FlawActivationMap(1, 2, std::vector<double>{0.0, 1.0}),
                                        FlawActivationMap(1, 2, std::vector<double>{0.5, 0.5})};
    CHECK(mean_fam(fams).values() == std::vector<double>{0.25, 0.75});
    CHECK_THROWS(mean_fam(std::span<const FlawActivationMap>()));
  }

  TEST_CASE("bilinear resize with half-pixel centers") {
    const std::vector<double> src{0, 1, 2, 3};
    CHECK(resize_bilinear(src, 2, 2, 2, 2) == src);
    const auto up = resize_bilinear(src, 1, 4, 1, 8);
    CHECK(up[0] == 0.0);
    CHECK(up[1] == doctest::Approx(0.25));
    CHECK(up[2] == doctest::Approx(0.75));
    CHECK(up[7] == 3.0);
  }

  TEST_CASE("classifier metrics") {
    const std::vector<int> labels{0, 1, 1, 0, 1, 0, 0, 1, 1, 0, 1, 0};
    const std::vector<double> scores{0.1, 0.4, 0.35, 0.8, 0.4, 0.4, 0.05, 0.9, 0.6, 0.6, 0.2, 0.3};
    const auto m = classifier_metrics(labels, scores);
    REQUIRE(m.roc_auc);
    CHECK(*m.roc_auc == doctest::Approx(0.625).epsilon(1e-12));  // sklearn roc_auc_score
    // predictions (>= 0.5): 0 0 0 1 0 0 0 1 1 1 0 0 -> tp 2, fp 2, fn 4, tn 4
    CHECK(m.accuracy == doctest::Approx(6.0 / 12));
    CHECK(m.f1 == doctest::Approx(2.0 * 2 / (2.0 * 2 + 2 + 4)));
    const std::vector<int> one{1, 1};
    const std::vector<double> s2{0.2, 0.9};
    CHECK_FALSE(classifier_metrics(one, s2).roc_auc.has_value());
  }

  TEST_CASE("training separates an easy pair of classes") {
    Rng rng(4);
    Tensor<float> real({64, 1, 16, 16}), fake({64, 1, 16, 16});
    for (auto& v : real.storage()) v = static_cast<float>(-0.5 + 0.2 * rng.normal());
    for (std::size_t i = 0; i < fake.size(); ++i) {
      const int x = static_cast<int>(i % 16);
      fake[i] = static_cast<float>((x < 8 ? -0.5 : 0.5) + 0.2 * rng.normal());
    }
    HighlighterConfig c;
    c.train_steps = 120;
    c.seed = 3;
    const auto t = train_highlighter(real, fake, c);
    CHECK(t.model.trained());
    CHECK(t.holdout_count > 0);
    CHECK(t.holdout_accuracy >= 0.95);
    // Deterministic in the seed.
    const auto t2 = train_highlighter(real, fake, c);
    CHECK(t2.model.logits(real).storage() == t.model.logits(real).storage());
  }
}
