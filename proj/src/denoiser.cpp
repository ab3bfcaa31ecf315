#include "srd/denoiser.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace srd {

void DenoiserConfig::validate() const {
  if (image_size < 1 || in_channels < 1 || base_channels < 1 || time_embed_dim < 2 || num_heads < 1)
    throw std::invalid_argument("denoiser dimensions must be positive");
  if (time_embed_dim % 2) throw std::invalid_argument("time_embed_dim must be even");
  if (channel_multipliers.empty()) throw std::invalid_argument("denoiser needs at least one level");
  for (int m : channel_multipliers)
    if (m < 1) throw std::invalid_argument("channel multipliers must be positive");
  if (image_size % (1 << (levels() - 1)))
    throw std::invalid_argument("image_size must be divisible by 2^(levels-1)");
  if (attention_resolutions.empty())
    throw std::invalid_argument("at least one attention resolution is required");
  for (int r : attention_resolutions) {
    bool found = false;
    for (int l = 0; l < levels(); ++l) found = found || resolution_at(l) == r;
    if (!found) throw std::invalid_argument("attention resolution " + std::to_string(r) + " is not a level resolution");
  }
  for (int l = 0; l < levels(); ++l)
    if ((base_channels * channel_multipliers[static_cast<std::size_t>(l)]) % num_heads)
      throw std::invalid_argument("num_heads must divide every level's channel count");
}

ModulationEmbedding embed_mfam(const MeanFam& mfam, int target_h, int target_w) {
  require_unit_range(mfam, "embed_mfam");
  const int H = mfam.height(), W = mfam.width();
  if (target_h < 1 || target_w < 1 || target_h > H || target_w > W)
    throw std::invalid_argument("embed_mfam: target " + std::to_string(target_h) + "x" + std::to_string(target_w) +
                                " exceeds map " + std::to_string(H) + "x" + std::to_string(W));
  ModulationEmbedding e{target_h, target_w, std::vector<double>(static_cast<std::size_t>(target_h) * target_w)};
  const double sy = static_cast<double>(H) / target_h, sx = static_cast<double>(W) / target_w;
  for (int i = 0; i < target_h; ++i)
    for (int j = 0; j < target_w; ++j) {
      const double y0 = i * sy, y1 = (i + 1) * sy, x0 = j * sx, x1 = (j + 1) * sx;
      double acc = 0, area = 0;
      for (int y = static_cast<int>(y0); y < static_cast<int>(std::ceil(y1)) && y < H; ++y) {
        const double wy = std::min<double>(y + 1, y1) - std::max<double>(y, y0);
        if (wy <= 0) continue;
        for (int x = static_cast<int>(x0); x < static_cast<int>(std::ceil(x1)) && x < W; ++x) {
          const double wx = std::min<double>(x + 1, x1) - std::max<double>(x, x0);
          if (wx <= 0) continue;
          acc += wy * wx * mfam(y, x);
          area += wy * wx;
        }
      }
      e.values[static_cast<std::size_t>(i) * target_w + j] = std::clamp(acc / area, 0.0, 1.0);
    }
  return e;
}

std::vector<double> timestep_embedding(int t, int dim) {
  if (dim < 2 || dim % 2) throw std::invalid_argument("timestep_embedding: dim must be even and >= 2");
  const int half = dim / 2;
  std::vector<double> e(static_cast<std::size_t>(dim));
  for (int i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * i / half);
    e[static_cast<std::size_t>(i)] = std::sin(t * freq);
    e[static_cast<std::size_t>(half + i)] = std::cos(t * freq);
  }
  return e;
}

template <typename T>
nn::Var<T> modulated_attention(nn::Var<T> q, nn::Var<T> k, nn::Var<T> v, const ModulationEmbedding* m_emb,
                               double lambda_rev, nn::Var<T>* weights_out) {
  if (lambda_rev < 0) throw std::invalid_argument("modulated_attention: lambda must be >= 0");
  if (q.shape() != k.shape() || k.shape() != v.shape())
    throw std::invalid_argument("modulated_attention: q, k, v must share a shape");
  const int N = q.dim(1), d = q.dim(2);
  if (m_emb && m_emb->values.size() != static_cast<std::size_t>(N))
    throw std::invalid_argument("modulated_attention: embedding has " + std::to_string(m_emb->values.size()) +
                                " entries for " + std::to_string(N) + " tokens");
  if (m_emb && lambda_rev > 0) {
    std::vector<T> factor(static_cast<std::size_t>(N));
    for (int n = 0; n < N; ++n)
      factor[static_cast<std::size_t>(n)] = static_cast<T>(1.0 + lambda_rev * m_emb->values[static_cast<std::size_t>(n)]);
    k = nn::scale_rows<T>(k, factor);
    v = nn::scale_rows<T>(v, factor);
  }
  auto logits = nn::scale(nn::bmm(q, k, true), static_cast<T>(1.0 / std::sqrt(static_cast<double>(d))));
  auto weights = nn::softmax_last(logits);
  if (weights_out) *weights_out = weights;
  return nn::bmm(weights, v, false);
}

template <typename T>
nn::Tensor<T> modulated_attention(const nn::Tensor<T>& q, const nn::Tensor<T>& k, const nn::Tensor<T>& v,
                                  const ModulationEmbedding* m_emb, double lambda_rev) {
  nn::Graph<T> g(false);
  return modulated_attention(g.constant(q), g.constant(k), g.constant(v), m_emb, lambda_rev).value();
}

template <typename T>
Denoiser<T>::Denoiser(const DenoiserConfig& config, std::uint64_t seed)
    : config_(config), seed_(seed), params_(std::make_unique<nn::ParameterSet<T>>()) {
  config_.validate();
  Rng rng(seed);
  auto& P = *params_;
  const int temb = config_.time_embed_dim;
  time1_ = nn::Linear<T>(P, "time.fc1", temb, temb, rng);
  time2_ = nn::Linear<T>(P, "time.fc2", temb, temb, rng);
  const auto ch = [&](int l) { return config_.base_channels * config_.channel_multipliers[static_cast<std::size_t>(l)]; };
  in_conv_ = nn::Conv2d<T>(P, "in_conv", config_.in_channels, ch(0), 3, rng);
  const auto has_attn = [&](int l) {
    const auto& a = config_.attention_resolutions;
    return std::find(a.begin(), a.end(), config_.resolution_at(l)) != a.end();
  };
  levels_.resize(static_cast<std::size_t>(config_.levels()));
  int prev = ch(0);
  for (int l = 0; l < config_.levels(); ++l) {
    auto& lv = levels_[static_cast<std::size_t>(l)];
    const std::string p = "down" + std::to_string(l);
    lv.down = make_res(p + ".res", prev, ch(l), rng);
    if (has_attn(l)) lv.down_attn = make_attn(p + ".attn", ch(l), config_.resolution_at(l), rng);
    prev = ch(l);
  }
  mid_ = make_res("mid.res", prev, prev, rng);
  for (int l = config_.levels() - 1; l >= 0; --l) {
    auto& lv = levels_[static_cast<std::size_t>(l)];
    const std::string p = "up" + std::to_string(l);
    lv.up = make_res(p + ".res", prev + ch(l), ch(l), rng);
    if (has_attn(l)) lv.up_attn = make_attn(p + ".attn", ch(l), config_.resolution_at(l), rng);
    prev = ch(l);
  }
  out_norm_ = nn::GroupNorm<T>(P, "out.norm", prev, config_.norm_groups);
  out_conv_ = nn::Conv2d<T>(P, "out.conv", prev, config_.in_channels, 3, rng, 0.1);
}

template <typename T>
Denoiser<T> Denoiser<T>::clone() const {
  Denoiser copy(config_, seed_);
  for (std::size_t i = 0; i < params_->size(); ++i) copy.params_->operator[](i).value = (*params_)[i].value;
  return copy;
}

template <typename T>
typename Denoiser<T>::ResBlock Denoiser<T>::make_res(const std::string& name, int in_ch, int out_ch, Rng& rng) {
  auto& P = *params_;
  ResBlock b;
  b.norm1 = nn::GroupNorm<T>(P, name + ".norm1", in_ch, config_.norm_groups);
  b.conv1 = nn::Conv2d<T>(P, name + ".conv1", in_ch, out_ch, 3, rng);
  b.time_proj = nn::Linear<T>(P, name + ".time", config_.time_embed_dim, out_ch, rng);
  b.norm2 = nn::GroupNorm<T>(P, name + ".norm2", out_ch, config_.norm_groups);
  b.conv2 = nn::Conv2d<T>(P, name + ".conv2", out_ch, out_ch, 3, rng, 0.5);
  if (in_ch != out_ch) b.skip = nn::Conv2d<T>(P, name + ".skip", in_ch, out_ch, 1, rng);
  return b;
}

template <typename T>
typename Denoiser<T>::AttnBlock Denoiser<T>::make_attn(const std::string& name, int ch, int resolution, Rng& rng) {
  auto& P = *params_;
  AttnBlock b;
  b.resolution = resolution;
  b.norm = nn::GroupNorm<T>(P, name + ".norm", ch, config_.norm_groups);
  b.q = nn::Linear<T>(P, name + ".q", ch, ch, rng);
  b.k = nn::Linear<T>(P, name + ".k", ch, ch, rng);
  b.v = nn::Linear<T>(P, name + ".v", ch, ch, rng);
  b.out = nn::Linear<T>(P, name + ".out", ch, ch, rng, 0.5);
  return b;
}

template <typename T>
nn::Var<T> Denoiser<T>::run_res(nn::Graph<T>& g, const ResBlock& b, nn::Var<T> x, nn::Var<T> temb) const {
  auto h = b.conv1(g, nn::silu(b.norm1(g, x)));
  h = nn::add_channel_bias(h, b.time_proj(g, temb));
  h = b.conv2(g, nn::silu(b.norm2(g, h)));
  return nn::add(h, b.skip ? (*b.skip)(g, x) : x);
}

template <typename T>
nn::Var<T> Denoiser<T>::run_attn(nn::Graph<T>& g, const AttnBlock& b, nn::Var<T> x, const MeanFam* mfam,
                                 double lambda_rev, DenoiserTrace<T>* trace) const {
  const int H = x.dim(2), W = x.dim(3), C = x.dim(1);
  auto tokens = nn::to_tokens(b.norm(g, x));
  auto q = b.q(g, tokens), k = b.k(g, tokens), v = b.v(g, tokens);

  std::optional<ModulationEmbedding> emb;
  if (mfam && lambda_rev > 0) emb = embed_mfam(*mfam, H, W);

  const int heads = config_.num_heads, d = C / heads;
  std::vector<nn::Var<T>> outs;
  nn::Var<T> weights;
  for (int h = 0; h < heads; ++h) {
    auto sl = [&](nn::Var<T> z) { return heads == 1 ? z : nn::slice_last(z, h * d, d); };
    outs.push_back(modulated_attention(sl(q), sl(k), sl(v), emb ? &*emb : nullptr, lambda_rev, &weights));
  }
  auto y = nn::add(x, nn::from_tokens(b.out(g, nn::concat_last(outs)), H, W));
  if (trace) {
    AttentionTrace<T> rec;
    rec.resolution = b.resolution;
    rec.input = x.value();
    rec.weights = weights.value();
    rec.output = y.value();
    if (emb)
      for (double m : emb->values) rec.modulation.push_back(1.0 + lambda_rev * m);
    trace->attention.push_back(std::move(rec));
  }
  return y;
}

template <typename T>
nn::Var<T> Denoiser<T>::forward(nn::Graph<T>& g, nn::Var<T> x, std::span<const int> t, const MeanFam* mfam,
                                double lambda_rev, DenoiserTrace<T>* trace) const {
  if (lambda_rev < 0) throw std::invalid_argument("lambda_rev must be >= 0");
  const auto& s = x.shape();
  if (s.size() != 4 || s[1] != config_.in_channels || s[2] != config_.image_size || s[3] != config_.image_size)
    throw std::invalid_argument("denoiser expects [B," + std::to_string(config_.in_channels) + "," +
                                std::to_string(config_.image_size) + "," + std::to_string(config_.image_size) +
                                "], got " + nn::shape_string(s));
  const int B = s[0];
  if (t.size() != static_cast<std::size_t>(B)) throw std::invalid_argument("one timestep per batch element required");
  if (mfam && (mfam->height() != config_.image_size || mfam->width() != config_.image_size))
    throw std::invalid_argument("mFAM spatial size must match the image size");

  const int temb_dim = config_.time_embed_dim;
  nn::Tensor<T> sinus({B, temb_dim});
  for (int b = 0; b < B; ++b) {
    const auto e = timestep_embedding(t[static_cast<std::size_t>(b)], temb_dim);
    for (int i = 0; i < temb_dim; ++i) sinus[static_cast<std::size_t>(b) * temb_dim + i] = static_cast<T>(e[static_cast<std::size_t>(i)]);
  }
  // Activated once here; every ResBlock projects the same vector.
  auto temb = nn::silu(time2_(g, nn::silu(time1_(g, g.constant(std::move(sinus))))));

  auto h = in_conv_(g, x);
  std::vector<nn::Var<T>> skips;
  for (int l = 0; l < config_.levels(); ++l) {
    const auto& lv = levels_[static_cast<std::size_t>(l)];
    h = run_res(g, lv.down, h, temb);
    if (lv.down_attn) h = run_attn(g, *lv.down_attn, h, mfam, lambda_rev, trace);
    skips.push_back(h);
    if (l + 1 < config_.levels()) h = nn::avg_pool2(h);
  }
  h = run_res(g, mid_, h, temb);
  for (int l = config_.levels() - 1; l >= 0; --l) {
    const auto& lv = levels_[static_cast<std::size_t>(l)];
    h = run_res(g, lv.up, nn::concat_channels(h, skips[static_cast<std::size_t>(l)]), temb);
    if (lv.up_attn) h = run_attn(g, *lv.up_attn, h, mfam, lambda_rev, trace);
    if (l > 0) h = nn::upsample_nearest2(h);
  }
  return out_conv_(g, nn::silu(out_norm_(g, h)));
}

template <typename T>
nn::Tensor<T> predict_noise(const Denoiser<T>& model, const nn::Tensor<T>& x_t, std::span<const int> t,
                            const MeanFam* mfam, double lambda_rev) {
  nn::Graph<T> g(false);
  auto out = model.forward(g, g.constant(x_t), t, mfam, lambda_rev).value();
  for (T v : out.storage())
    if (!std::isfinite(static_cast<double>(v)))
      throw std::runtime_error("denoiser produced non-finite activations (input shape " +
                               nn::shape_string(x_t.shape()) + ")");
  return out;
}

template <typename T>
nn::Tensor<T> predict_noise(const Denoiser<T>& model, const nn::Tensor<T>& x_t, int t, const MeanFam* mfam,
                            double lambda_rev) {
  std::vector<int> ts(static_cast<std::size_t>(x_t.dim(0)), t);
  return predict_noise(model, x_t, std::span<const int>(ts), mfam, lambda_rev);
}

template class Denoiser<float>;
template class Denoiser<double>;
template nn::Var<float> modulated_attention(nn::Var<float>, nn::Var<float>, nn::Var<float>, const ModulationEmbedding*,
                                            double, nn::Var<float>*);
template nn::Var<double> modulated_attention(nn::Var<double>, nn::Var<double>, nn::Var<double>,
                                             const ModulationEmbedding*, double, nn::Var<double>*);
template nn::Tensor<float> modulated_attention(const nn::Tensor<float>&, const nn::Tensor<float>&,
                                               const nn::Tensor<float>&, const ModulationEmbedding*, double);
template nn::Tensor<double> modulated_attention(const nn::Tensor<double>&, const nn::Tensor<double>&,
                                                const nn::Tensor<double>&, const ModulationEmbedding*, double);
template nn::Tensor<float> predict_noise(const Denoiser<float>&, const nn::Tensor<float>&, std::span<const int>,
                                         const MeanFam*, double);
template nn::Tensor<double> predict_noise(const Denoiser<double>&, const nn::Tensor<double>&, std::span<const int>,
                                          const MeanFam*, double);
template nn::Tensor<float> predict_noise(const Denoiser<float>&, const nn::Tensor<float>&, int, const MeanFam*, double);
template nn::Tensor<double> predict_noise(const Denoiser<double>&, const nn::Tensor<double>&, int, const MeanFam*,
                                          double);

}  // namespace srd
