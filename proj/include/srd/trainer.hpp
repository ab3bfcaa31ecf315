#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "srd/denoiser.hpp"
#include "srd/diffusion.hpp"
#include "srd/guidance.hpp"
#include "srd/highlighter.hpp"

namespace srd {

enum class Phase { Base, Refine };
std::string phase_name(Phase p);

// Which map drives the refinement phase.
enum class GuidanceKind { Fam, CenterGaussian, InvertedGaussian, Edge };
std::string guidance_name(GuidanceKind g);
GuidanceKind parse_guidance(const std::string& name);  // "fam" | "center-gaussian" | "inverted-gaussian" | "edge"

struct TrainConfig {
  int total_steps = 40000;
  int base_steps = 20000;
  int cycle = 100;  // refinement steps between map refreshes
  double lambda_fwd = 0.01;
  double lambda_rev = 0.025;
  int batch_size = 16;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  int refresh_sample_count = 16;

  // Reverse steps per refresh sample; 0 runs the full chain.
  int refresh_sample_steps = 0;
  int diffusion_steps = 200;
  double beta_start = 1e-4;
  double beta_end = 0.02;
  double grad_clip = 1.0;

  std::string guidance = "fam";
  double guidance_sigma_frac = 0.25;
  double edge_low = 0.1;
  double edge_high = 0.2;
  double edge_blur_sigma = 1.0;

  int highlighter_steps = 300;
  int highlighter_sample_count = 256;  // fake images drawn at the phase boundary
  bool retrain_highlighter = false;    // also retrain before every refresh

  int checkpoint_every = 0;  // 0: only the final checkpoint
  std::string dataset = "toy";  // "toy" or a directory of PGM/PPM files
  int dataset_size = 2048;      // toy images generated
  std::uint64_t dataset_seed = 1234;

  DenoiserConfig denoiser;

  void validate() const;
  // True when base:(total-base) is 1:4, 1:1 or 4:1.
  bool phase_ratio_on_grid() const;
  NoiseSchedule schedule() const;
};

std::string config_to_json(const TrainConfig& cfg);
// Every key must be a TrainConfig field; unknown keys are rejected.
TrainConfig config_from_json(const std::string& text);
TrainConfig load_config(const std::filesystem::path& path);

// step in [0, total_steps).
Phase phase_of(int step, const TrainConfig& cfg);
bool refresh_due(int step, const TrainConfig& cfg);
// Steps at which the map is refreshed, ascending.
std::vector<int> refresh_schedule(const TrainConfig& cfg);

HighlighterConfig highlighter_config_for(const TrainConfig& cfg);

// Samples refresh_sample_count images from the model, extracts fake-class
// Grad-CAM maps and averages them. Stored values are rounded to float32.
MeanFam refresh_mfam(const Denoiser<float>& model, const HighlighterModel& highlighter, const TrainConfig& cfg,
                     Rng& rng);

// Samples used for refreshes and highlighter training.
nn::Tensor<float> draw_model_samples(const Denoiser<float>& model, const TrainConfig& cfg, int count, Rng& rng);

struct StepRecord {
  int step = 0;
  Phase phase = Phase::Base;
  double loss = 0;
  bool refreshed = false;
  int map_stamp = -1;  // step at which the map in use was produced; -1 in the base phase
};

// Complete training state; copyable through fork() so phases can be shared.
class Trainer {
 public:
  Trainer(const TrainConfig& cfg, nn::Tensor<float> dataset);

  // Restores the state saved by save_checkpoint. `cfg` may differ from the
  // stored config only in fields that do not change the model or optimizer layout.
  static Trainer resume(const std::filesystem::path& checkpoint, const TrainConfig& cfg, nn::Tensor<float> dataset);

  // Independent copy of the full state continuing under `cfg`.
  Trainer fork(const TrainConfig& cfg) const;

  // Runs steps until `until` (clamped to total_steps). `on_step` sees every record.
  void run(int until, const std::function<void(const StepRecord&)>& on_step = {});
  StepRecord step();

  void save_checkpoint(const std::filesystem::path& path) const;

  int next_step() const { return step_; }
  bool done() const { return step_ >= cfg_.total_steps; }
  const TrainConfig& config() const { return cfg_; }
  const Denoiser<float>& model() const { return model_; }
  const NoiseSchedule& schedule() const { return sched_; }
  const HighlighterModel* highlighter() const { return highlighter_ ? &*highlighter_ : nullptr; }
  double highlighter_accuracy() const { return highlighter_accuracy_; }
  const std::optional<MeanFam>& current_map() const { return map_; }
  int map_stamp() const { return map_stamp_; }
  const std::vector<StepRecord>& history() const { return history_; }

 private:
  Trainer(const TrainConfig& cfg, nn::Tensor<float> dataset, Denoiser<float> model);
  void train_highlighter_now();
  void refresh_map();

  TrainConfig cfg_;
  NoiseSchedule sched_;
  GuidanceKind guidance_;
  nn::Tensor<float> data_;
  Denoiser<float> model_;
  nn::Adam<float> adam_;
  Rng data_rng_, aux_rng_;
  std::optional<HighlighterModel> highlighter_;
  double highlighter_accuracy_ = 0;
  std::optional<MeanFam> map_;
  int map_stamp_ = -1;
  int step_ = 0;
  std::vector<StepRecord> history_;
};

// Builds the configured dataset (toy faces or a folder) at the denoiser resolution.
nn::Tensor<float> make_dataset(const TrainConfig& cfg);

struct TrainingOutputs {
  std::vector<std::filesystem::path> artifacts;
  double final_loss = 0;
};

// run_training: trains from scratch (or from `resume`) to total_steps, appending
// "step<TAB>phase<TAB>loss<TAB>refresh" lines to <out_dir>/metrics.log and
// writing periodic and final checkpoints.
TrainingOutputs run_training(const TrainConfig& cfg, const nn::Tensor<float>& dataset, const std::filesystem::path& out_dir,
                             const std::optional<std::filesystem::path>& resume = std::nullopt);

// Highlighter-only container ("highlighter" kind).
void save_highlighter(const std::filesystem::path& path, const HighlighterModel& model);
HighlighterModel load_highlighter(const std::filesystem::path& path);

// Denoiser weights plus the config needed to sample from them.
struct LoadedModel {
  TrainConfig config;
  Denoiser<float> model;
  std::optional<HighlighterModel> highlighter;
};
LoadedModel load_model(const std::filesystem::path& checkpoint);

}  // namespace srd
