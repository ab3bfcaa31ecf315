#pragma once

#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "srd/maps.hpp"
#include "srd/nn/layers.hpp"
#include "srd/rng.hpp"

namespace srd {

struct DenoiserConfig {
  int image_size = 16;
  int in_channels = 1;
  int base_channels = 16;
  std::vector<int> channel_multipliers{1, 2, 2};
  // Spatial sizes (one per level at most) that get an attention block.
  std::vector<int> attention_resolutions{4};
  int time_embed_dim = 32;
  int num_heads = 1;
  int norm_groups = 4;

  int levels() const { return static_cast<int>(channel_multipliers.size()); }
  int resolution_at(int level) const { return image_size >> level; }
  void validate() const;
};

// Flattened row-major per-token modulation values in [0, 1].
struct ModulationEmbedding {
  int height = 0;
  int width = 0;
  std::vector<double> values;
};

// Area-average pooling of `mfam` onto a target_h x target_w grid.
ModulationEmbedding embed_mfam(const MeanFam& mfam, int target_h, int target_w);

// Sinusoidal features: [sin(t f_0..f_{d/2-1}), cos(t f_0..)], f_i = 10000^(-i/(d/2)).
std::vector<double> timestep_embedding(int t, int dim);

// Scaled dot-product attention over q,k,v [B,N,d] with the key and value of
// token n scaled by (1 + lambda * m_emb[n]). Absent embedding or lambda == 0
// is plain attention. Optionally exposes the attention weights [B,N,N].
template <typename T>
nn::Var<T> modulated_attention(nn::Var<T> q, nn::Var<T> k, nn::Var<T> v, const ModulationEmbedding* m_emb,
                               double lambda_rev, nn::Var<T>* weights_out = nullptr);

// Tensor-level convenience wrapper (no gradients).
template <typename T>
nn::Tensor<T> modulated_attention(const nn::Tensor<T>& q, const nn::Tensor<T>& k, const nn::Tensor<T>& v,
                                  const ModulationEmbedding* m_emb, double lambda_rev);

// Per-attention-block record of one forward pass.
template <typename T>
struct AttentionTrace {
  int resolution = 0;
  nn::Tensor<T> input;     // block input [B,C,H,W]
  nn::Tensor<T> weights;   // last head's attention weights [B,N,N]
  nn::Tensor<T> output;    // block output [B,C,H,W]
  std::vector<double> modulation;  // per-token factor (1 + lambda * m), empty when unmodulated
};

template <typename T>
struct DenoiserTrace {
  std::vector<AttentionTrace<T>> attention;
};

// U-Net noise predictor with attention blocks that accept mFAM modulation.
template <typename T>
class Denoiser {
 public:
  using scalar_type = T;

  Denoiser(const DenoiserConfig& config, std::uint64_t seed);
  Denoiser(Denoiser&&) noexcept = default;
  Denoiser& operator=(Denoiser&&) noexcept = default;
  Denoiser(const Denoiser&) = delete;
  Denoiser& operator=(const Denoiser&) = delete;

  Denoiser clone() const;

  const DenoiserConfig& config() const { return config_; }
  nn::ParameterSet<T>& parameters() { return *params_; }
  const nn::ParameterSet<T>& parameters() const { return *params_; }

  // x[B,C,H,W], one timestep per batch element.
  nn::Var<T> forward(nn::Graph<T>& g, nn::Var<T> x, std::span<const int> t, const MeanFam* mfam, double lambda_rev,
                     DenoiserTrace<T>* trace = nullptr) const;

 private:
  struct ResBlock {
    nn::GroupNorm<T> norm1, norm2;
    nn::Conv2d<T> conv1, conv2;
    nn::Linear<T> time_proj;
    std::optional<nn::Conv2d<T>> skip;
  };
  struct AttnBlock {
    int resolution = 0;
    nn::GroupNorm<T> norm;
    nn::Linear<T> q, k, v, out;
  };
  struct Level {
    ResBlock down;
    std::optional<AttnBlock> down_attn;
    ResBlock up;
    std::optional<AttnBlock> up_attn;
  };

  ResBlock make_res(const std::string& name, int in_ch, int out_ch, Rng& rng);
  AttnBlock make_attn(const std::string& name, int ch, int resolution, Rng& rng);
  nn::Var<T> run_res(nn::Graph<T>& g, const ResBlock& b, nn::Var<T> x, nn::Var<T> temb) const;
  nn::Var<T> run_attn(nn::Graph<T>& g, const AttnBlock& b, nn::Var<T> x, const MeanFam* mfam, double lambda_rev,
                      DenoiserTrace<T>* trace) const;

  DenoiserConfig config_;
  std::uint64_t seed_;
  std::unique_ptr<nn::ParameterSet<T>> params_;
  nn::Linear<T> time1_, time2_;
  nn::Conv2d<T> in_conv_, out_conv_;
  nn::GroupNorm<T> out_norm_;
  std::vector<Level> levels_;
  ResBlock mid_;
};

// Single-shot evaluation of eps_theta without gradient tracking.
template <typename T>
nn::Tensor<T> predict_noise(const Denoiser<T>& model, const nn::Tensor<T>& x_t, std::span<const int> t,
                            const MeanFam* mfam, double lambda_rev);

template <typename T>
nn::Tensor<T> predict_noise(const Denoiser<T>& model, const nn::Tensor<T>& x_t, int t, const MeanFam* mfam,
                            double lambda_rev);

}  // namespace srd
