#include "srd/highlighter.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace srd {

namespace {

using Tensor = nn::Tensor<float>;

void require_images(const Tensor& x, const HighlighterConfig& c, const char* what) {
  if (x.rank() != 4) throw std::invalid_argument(std::string(what) + ": expected [B,C,H,W], got " + nn::shape_string(x.shape()));
  if (x.dim(1) != c.in_channels || x.dim(2) != c.image_size || x.dim(3) != c.image_size)
    throw std::invalid_argument(std::string(what) + ": images " + nn::shape_string(x.shape()) +
                                " do not match the highlighter resolution " + std::to_string(c.in_channels) + "x" +
                                std::to_string(c.image_size) + "x" + std::to_string(c.image_size));
}

Tensor gather(const Tensor& src, std::span<const std::size_t> idx) {
  nn::Shape s = src.shape();
  s[0] = static_cast<int>(idx.size());
  Tensor out(s);
  const std::size_t per = src.size() / static_cast<std::size_t>(src.dim(0));
  for (std::size_t i = 0; i < idx.size(); ++i)
    std::copy_n(src.data() + idx[i] * per, per, out.data() + i * per);
  return out;
}

Tensor concat_batch(const Tensor& a, const Tensor& b) {
  nn::Shape s = a.shape();
  s[0] += b.dim(0);
  Tensor out(s);
  std::copy(a.storage().begin(), a.storage().end(), out.storage().begin());
  std::copy(b.storage().begin(), b.storage().end(), out.storage().begin() + static_cast<std::ptrdiff_t>(a.size()));
  return out;
}

void require_trained(const HighlighterModel& m, const char* what) {
  if (!m.trained()) throw std::logic_error(std::string(what) + ": highlighter is untrained");
}

void require_target(int target) {
  if (target != kRealClass && target != kFakeClass) throw std::invalid_argument("target class must be 0 (real) or 1 (fake)");
}

// Weighted channel sum per image, ReLU, upsample, normalize.
std::vector<FlawActivationMap> weighted_maps(const Tensor& feats, const std::vector<std::vector<double>>& weights,
                                             int out_h, int out_w) {
  const int B = feats.dim(0), C = feats.dim(1), h = feats.dim(2), w = feats.dim(3);
  std::vector<FlawActivationMap> maps;
  maps.reserve(static_cast<std::size_t>(B));
  for (int n = 0; n < B; ++n) {
    std::vector<double> m(static_cast<std::size_t>(h) * w, 0.0);
    for (int c = 0; c < C; ++c) {
      const double wc = weights[static_cast<std::size_t>(n)][static_cast<std::size_t>(c)];
      const float* a = feats.data() + (static_cast<std::size_t>(n) * C + c) * h * w;
      for (std::size_t k = 0; k < m.size(); ++k) m[k] += wc * a[k];
    }
    for (double& v : m) v = std::max(v, 0.0);
    maps.push_back(normalize_map(out_h, out_w, resize_bilinear(m, h, w, out_h, out_w)));
  }
  return maps;
}

}  // namespace

void HighlighterConfig::validate() const {
  if (image_size < 1 || in_channels < 1) throw std::invalid_argument("highlighter dimensions must be positive");
  if (stage_channels.size() < 2) throw std::invalid_argument("highlighter needs at least two conv stages");
  for (int c : stage_channels)
    if (c < 1) throw std::invalid_argument("highlighter stage channels must be positive");
  if (image_size % (1 << (stage_channels.size() - 1)))
    throw std::invalid_argument("image_size must be divisible by 2^(stages-1)");
  if (train_steps < 0 || batch_size < 2 || learning_rate <= 0)
    throw std::invalid_argument("highlighter training settings must be positive");
  if (!(holdout_fraction >= 0 && holdout_fraction < 1)) throw std::invalid_argument("holdout_fraction must be in [0, 1)");
}

HighlighterModel::HighlighterModel(const HighlighterConfig& config, std::uint64_t seed)
    : config_(config), params_(std::make_unique<nn::ParameterSet<float>>()) {
  config_.validate();
  Rng rng(seed);
  int in = config_.in_channels;
  for (std::size_t s = 0; s < config_.stage_channels.size(); ++s) {
    convs_.emplace_back(*params_, "stage" + std::to_string(s), in, config_.stage_channels[s], 3, rng, std::sqrt(2.0));
    in = config_.stage_channels[s];
  }
  head_ = nn::Linear<float>(*params_, "head", in, 2, rng);
}

HighlighterModel HighlighterModel::clone() const {
  HighlighterModel copy(config_, 0);
  for (std::size_t i = 0; i < params_->size(); ++i) copy.params_->operator[](i).value = (*params_)[i].value;
  copy.trained_ = trained_;
  return copy;
}

nn::Var<float> HighlighterModel::forward(nn::Graph<float>& g, nn::Var<float> x, bool frozen,
                                         std::vector<nn::Var<float>>* stages) const {
  auto p = [&](nn::Parameter<float>* q) { return frozen ? g.constant(q->value) : g.parameter(*q); };
  nn::Var<float> h = x;
  for (std::size_t s = 0; s < convs_.size(); ++s) {
    if (s > 0) h = nn::avg_pool2(h);
    h = nn::relu(nn::conv2d(h, p(convs_[s].weight), p(convs_[s].bias), convs_[s].pad));
    if (stages) stages->push_back(h);
  }
  return nn::linear(nn::global_avg_pool(h), p(head_.weight), p(head_.bias));
}

Tensor HighlighterModel::logits(const Tensor& images) const {
  require_images(images, config_, "highlighter");
  nn::Graph<float> g(false);
  return forward(g, g.constant(images), true).value();
}

std::vector<double> HighlighterModel::fake_probability(const Tensor& images) const {
  const Tensor z = logits(images);
  std::vector<double> p(static_cast<std::size_t>(z.dim(0)));
  for (int n = 0; n < z.dim(0); ++n) {
    const double d = static_cast<double>(z[static_cast<std::size_t>(2 * n + 1)]) - z[static_cast<std::size_t>(2 * n)];
    p[static_cast<std::size_t>(n)] = 1.0 / (1.0 + std::exp(-d));
  }
  return p;
}

std::vector<Tensor> HighlighterModel::stage_features(const Tensor& images) const {
  require_images(images, config_, "highlighter");
  nn::Graph<float> g(false);
  std::vector<nn::Var<float>> st;
  forward(g, g.constant(images), true, &st);
  std::vector<Tensor> out;
  for (const auto& v : st) out.push_back(v.value());
  return out;
}

std::vector<std::vector<double>> HighlighterModel::embed(const Tensor& images) const {
  const Tensor last = stage_features(images).back();
  const int B = last.dim(0), C = last.dim(1);
  const std::size_t hw = static_cast<std::size_t>(last.dim(2)) * last.dim(3);
  std::vector<std::vector<double>> out(static_cast<std::size_t>(B), std::vector<double>(static_cast<std::size_t>(C)));
  for (int n = 0; n < B; ++n)
    for (int c = 0; c < C; ++c) {
      const float* a = last.data() + (static_cast<std::size_t>(n) * C + c) * hw;
      double s = 0;
      for (std::size_t k = 0; k < hw; ++k) s += a[k];
      out[static_cast<std::size_t>(n)][static_cast<std::size_t>(c)] = s / static_cast<double>(hw);
    }
  return out;
}

ClassifierMetrics classifier_metrics(std::span<const int> labels, std::span<const double> scores) {
  if (labels.size() != scores.size()) throw std::invalid_argument("classifier_metrics: labels and scores differ in length");
  if (labels.empty()) throw std::invalid_argument("classifier_metrics: no samples");
  std::size_t correct = 0, tp = 0, fp = 0, fn = 0, pos = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) throw std::invalid_argument("classifier_metrics: labels must be 0 or 1");
    const int pred = scores[i] >= 0.5 ? 1 : 0;
    correct += pred == labels[i];
    tp += pred == 1 && labels[i] == 1;
    fp += pred == 1 && labels[i] == 0;
    fn += pred == 0 && labels[i] == 1;
    pos += labels[i] == 1;
  }
  ClassifierMetrics m;
  m.accuracy = static_cast<double>(correct) / static_cast<double>(labels.size());
  m.f1 = tp == 0 ? 0.0 : 2.0 * tp / static_cast<double>(2 * tp + fp + fn);
  const std::size_t neg = labels.size() - pos;
  if (pos > 0 && neg > 0) {
    // Midranks over the pooled scores; AUC = (R_pos - pos(pos+1)/2) / (pos*neg).
    std::vector<std::size_t> order(labels.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    double rank_sum = 0;
    for (std::size_t i = 0; i < order.size();) {
      std::size_t j = i;
      while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
      const double midrank = 0.5 * static_cast<double>(i + 1 + j);
      for (std::size_t k = i; k < j; ++k)
        if (labels[order[k]] == 1) rank_sum += midrank;
      i = j;
    }
    const double p = static_cast<double>(pos), q = static_cast<double>(neg);
    m.roc_auc = (rank_sum - p * (p + 1) / 2) / (p * q);
  }
  return m;
}

HighlighterTraining train_highlighter(const Tensor& real, const Tensor& fake, const HighlighterConfig& config) {
  config.validate();
  if (real.rank() != 4 || fake.rank() != 4) throw std::invalid_argument("train_highlighter: expected [B,C,H,W] batches");
  if (real.dim(0) < 1 || fake.dim(0) < 1) throw std::invalid_argument("train_highlighter: both classes need images");
  if (real.shape()[1] != fake.shape()[1] || real.dim(2) != fake.dim(2) || real.dim(3) != fake.dim(3))
    throw std::invalid_argument("train_highlighter: real " + nn::shape_string(real.shape()) + " and fake " +
                                nn::shape_string(fake.shape()) + " differ in resolution");
  require_images(real, config, "train_highlighter");

  Rng rng(config.seed);
  HighlighterModel model(config, rng.next_u64());

  auto split = [&](int n, std::vector<std::size_t>& train, std::vector<std::size_t>& hold) {
    std::vector<std::size_t> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
    const auto h = static_cast<std::size_t>(std::floor(config.holdout_fraction * n));
    const std::size_t keep = std::max<std::size_t>(1, idx.size() - h);
    train.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(keep));
    hold.assign(idx.begin() + static_cast<std::ptrdiff_t>(keep), idx.end());
  };
  std::vector<std::size_t> real_train, real_hold, fake_train, fake_hold;
  split(real.dim(0), real_train, real_hold);
  split(fake.dim(0), fake_train, fake_hold);

  nn::Adam<float>::Options opt;
  opt.learning_rate = config.learning_rate;
  nn::Adam<float> adam(model.parameters(), opt);
  const int half = config.batch_size / 2;
  std::vector<int> labels(static_cast<std::size_t>(2 * half));
  std::fill(labels.begin() + half, labels.end(), kFakeClass);
  for (int step = 0; step < config.train_steps; ++step) {
    std::vector<std::size_t> ri(static_cast<std::size_t>(half)), fi(static_cast<std::size_t>(half));
    for (auto& v : ri) v = real_train[rng.below(real_train.size())];
    for (auto& v : fi) v = fake_train[rng.below(fake_train.size())];
    const Tensor batch = concat_batch(gather(real, ri), gather(fake, fi));
    nn::Graph<float> g;
    model.parameters().zero_grad();
    auto loss = nn::cross_entropy(model.forward(g, g.constant(batch), false), std::span<const int>(labels));
    g.backward(loss);
    adam.step(model.parameters());
  }
  model.mark_trained();

  // Evaluate on the held-out part, or on the training part when nothing was held out.
  const bool have_hold = !real_hold.empty() || !fake_hold.empty();
  const auto& re = have_hold ? real_hold : real_train;
  const auto& fe = have_hold ? fake_hold : fake_train;
  std::vector<int> eval_labels;
  std::vector<double> scores;
  if (!re.empty()) {
    for (double p : model.fake_probability(gather(real, re))) scores.push_back(p);
    eval_labels.insert(eval_labels.end(), re.size(), kRealClass);
  }
  if (!fe.empty()) {
    for (double p : model.fake_probability(gather(fake, fe))) scores.push_back(p);
    eval_labels.insert(eval_labels.end(), fe.size(), kFakeClass);
  }
  const ClassifierMetrics m = classifier_metrics(eval_labels, scores);
  return HighlighterTraining{std::move(model), m.accuracy, m, static_cast<int>(have_hold ? eval_labels.size() : 0)};
}

FlawActivationMap normalize_map(int h, int w, std::vector<double> values) {
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const double mn = *lo, mx = *hi;
  if (!std::isfinite(mn) || !std::isfinite(mx)) throw std::runtime_error("flaw map contains non-finite values");
  if (!(mx - mn > 1e-12 * std::max(1.0, std::abs(mx)))) return FlawActivationMap(h, w, 0.0);
  for (double& v : values) v = (v - mn) / (mx - mn);
  return FlawActivationMap(h, w, std::move(values));
}

std::vector<double> resize_bilinear(const std::vector<double>& src, int sh, int sw, int dh, int dw) {
  if (src.size() != static_cast<std::size_t>(sh) * sw) throw std::invalid_argument("resize_bilinear: size mismatch");
  std::vector<double> out(static_cast<std::size_t>(dh) * dw);
  auto coord = [](int d, int s_len, int d_len, int& i0, int& i1, double& f) {
    double x = (d + 0.5) * static_cast<double>(s_len) / d_len - 0.5;
    x = std::clamp(x, 0.0, static_cast<double>(s_len - 1));
    i0 = static_cast<int>(std::floor(x));
    i1 = std::min(i0 + 1, s_len - 1);
    f = x - i0;
  };
  for (int i = 0; i < dh; ++i) {
    int y0, y1;
    double fy;
    coord(i, sh, dh, y0, y1, fy);
    for (int j = 0; j < dw; ++j) {
      int x0, x1;
      double fx;
      coord(j, sw, dw, x0, x1, fx);
      const auto at = [&](int y, int x) { return src[static_cast<std::size_t>(y) * sw + x]; };
      const double top = at(y0, x0) * (1 - fx) + at(y0, x1) * fx;
      const double bot = at(y1, x0) * (1 - fx) + at(y1, x1) * fx;
      out[static_cast<std::size_t>(i) * dw + j] = top * (1 - fy) + bot * fy;
    }
  }
  return out;
}

// A featureless image has nothing to localize; its map is defined as zero.
static std::vector<FlawActivationMap> blank_flat_inputs(const Tensor& images, std::vector<FlawActivationMap> maps) {
  const std::size_t per = images.size() / static_cast<std::size_t>(images.dim(0));
  for (std::size_t n = 0; n < maps.size(); ++n) {
    const float* p = images.data() + n * per;
    if (std::all_of(p, p + per, [&](float v) { return v == p[0]; }))
      std::fill(maps[n].values().begin(), maps[n].values().end(), 0.0);
  }
  return maps;
}

std::vector<FlawActivationMap> grad_cam(const HighlighterModel& model, const Tensor& images, int target) {
  require_trained(model, "grad_cam");
  require_target(target);
  require_images(images, model.config(), "grad_cam");
  nn::Graph<float> g;
  std::vector<nn::Var<float>> stages;
  // The input is a tracked leaf so gradients reach the features without touching parameter grads.
  auto logits = model.forward(g, g.input(images), true, &stages);
  const int B = images.dim(0);
  Tensor seed(logits.shape());
  for (int n = 0; n < B; ++n) seed[static_cast<std::size_t>(2 * n + target)] = 1.0f;
  g.backward(logits, seed);
  const auto& A = stages.back();
  const Tensor& dA = A.grad();
  const int C = A.dim(1);
  const std::size_t hw = static_cast<std::size_t>(A.dim(2)) * A.dim(3);
  std::vector<std::vector<double>> weights(static_cast<std::size_t>(B), std::vector<double>(static_cast<std::size_t>(C)));
  for (int n = 0; n < B; ++n)
    for (int c = 0; c < C; ++c) {
      const float* d = dA.data() + (static_cast<std::size_t>(n) * C + c) * hw;
      double s = 0;
      for (std::size_t k = 0; k < hw; ++k) s += d[k];
      weights[static_cast<std::size_t>(n)][static_cast<std::size_t>(c)] = s / static_cast<double>(hw);
    }
  return blank_flat_inputs(images, weighted_maps(A.value(), weights, images.dim(2), images.dim(3)));
}

FlawActivationMap grad_cam_one(const HighlighterModel& model, const Tensor& image, int target) {
  if (image.rank() == 3) return grad_cam(model, image.reshaped({1, image.dim(0), image.dim(1), image.dim(2)}), target)[0];
  if (image.rank() != 4 || image.dim(0) != 1) throw std::invalid_argument("grad_cam_one: expected a single image");
  return grad_cam(model, image, target)[0];
}

std::vector<FlawActivationMap> cam(const HighlighterModel& model, const Tensor& images, int target) {
  require_trained(model, "cam");
  require_target(target);
  const Tensor A = model.stage_features(images).back();
  const int C = A.dim(1);
  std::vector<double> w(static_cast<std::size_t>(C));
  for (int c = 0; c < C; ++c) w[static_cast<std::size_t>(c)] = model.head_weight()[static_cast<std::size_t>(target * C + c)];
  return blank_flat_inputs(
      images, weighted_maps(A, std::vector<std::vector<double>>(static_cast<std::size_t>(images.dim(0)), w),
                            images.dim(2), images.dim(3)));
}

MeanFam mean_fam(std::span<const FlawActivationMap> fams) {
  if (fams.empty()) throw std::invalid_argument("mean_fam: no maps");
  const int h = fams[0].height(), w = fams[0].width();
  std::vector<double> acc(fams[0].size(), 0.0);
  for (const auto& f : fams) {
    if (f.height() != h || f.width() != w) throw std::invalid_argument("mean_fam: maps differ in size");
    for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += f[k];
  }
  for (double& v : acc) v = std::clamp(v / static_cast<double>(fams.size()), 0.0, 1.0);
  return MeanFam(h, w, std::move(acc));
}

}  // namespace srd
