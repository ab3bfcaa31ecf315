#include "srd/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "srd/checkpoint.hpp"
#include "srd/data.hpp"

namespace srd {

using json = nlohmann::ordered_json;

std::string phase_name(Phase p) { return p == Phase::Base ? "base" : "refine"; }

std::string guidance_name(GuidanceKind g) {
  switch (g) {
    case GuidanceKind::Fam: return "fam";
    case GuidanceKind::CenterGaussian: return "center-gaussian";
    case GuidanceKind::InvertedGaussian: return "inverted-gaussian";
    case GuidanceKind::Edge: return "edge";
  }
  return "?";
}

GuidanceKind parse_guidance(const std::string& name) {
  for (auto g : {GuidanceKind::Fam, GuidanceKind::CenterGaussian, GuidanceKind::InvertedGaussian, GuidanceKind::Edge})
    if (guidance_name(g) == name) return g;
  throw std::invalid_argument("unknown guidance '" + name + "' (expected fam, center-gaussian, inverted-gaussian or edge)");
}

// ---- config ----------------------------------------------------------------

void TrainConfig::validate() const {
  auto bad = [](const std::string& m) { throw std::invalid_argument("config: " + m); };
  if (total_steps < 1) bad("total_steps must be >= 1");
  if (base_steps < 0 || base_steps > total_steps) bad("base_steps must lie in [0, total_steps]");
  if (cycle < 1) bad("cycle must be >= 1");
  if (!(lambda_fwd >= 0) || !(lambda_rev >= 0)) bad("lambda_fwd and lambda_rev must be >= 0");
  if (batch_size < 1) bad("batch_size must be >= 1");
  if (!(learning_rate > 0)) bad("learning_rate must be > 0");
  if (refresh_sample_count < 1) bad("refresh_sample_count must be >= 1");
  if (refresh_sample_steps < 0) bad("refresh_sample_steps must be >= 0");
  if (diffusion_steps < 1) bad("diffusion_steps must be >= 1");
  if (highlighter_steps < 0 || highlighter_sample_count < 2) bad("highlighter_sample_count must be >= 2");
  if (checkpoint_every < 0) bad("checkpoint_every must be >= 0");
  if (dataset == "toy" && dataset_size < 1) bad("dataset_size must be >= 1");
  parse_guidance(guidance);
  EdgeParams ep{edge_low, edge_high, edge_blur_sigma};
  if (!(ep.low >= 0 && ep.low < ep.high)) bad("edge thresholds must satisfy 0 <= edge_low < edge_high");
  if (!(guidance_sigma_frac > 0)) bad("guidance_sigma_frac must be > 0");
  denoiser.validate();
  schedule();
}

bool TrainConfig::phase_ratio_on_grid() const {
  const long b = base_steps, r = static_cast<long>(total_steps) - base_steps;
  return b == r || b * 4 == r || b == 4 * r;
}

NoiseSchedule TrainConfig::schedule() const { return NoiseSchedule::linear(diffusion_steps, beta_start, beta_end); }

namespace {

json denoiser_to_json(const DenoiserConfig& d) {
  json j;
  j["image_size"] = d.image_size;
  j["in_channels"] = d.in_channels;
  j["base_channels"] = d.base_channels;
  j["channel_multipliers"] = d.channel_multipliers;
  j["attention_resolutions"] = d.attention_resolutions;
  j["time_embed_dim"] = d.time_embed_dim;
  j["num_heads"] = d.num_heads;
  j["norm_groups"] = d.norm_groups;
  return j;
}

template <typename V>
void read_key(const json& j, const std::string& key, V& out, const std::string& where) {
  try {
    out = j.at(key).get<V>();
  } catch (const json::exception& e) {
    throw std::invalid_argument(where + "key '" + key + "' has the wrong type");
  }
}

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw std::invalid_argument(where + "expected a JSON object");
  for (const auto& [k, v] : j.items())
    if (!known.count(k)) throw std::invalid_argument(where + "unknown key '" + k + "'");
}

DenoiserConfig denoiser_from_json(const json& j) {
  static const std::set<std::string> keys{"image_size", "in_channels", "base_channels", "channel_multipliers",
                                          "attention_resolutions", "time_embed_dim", "num_heads", "norm_groups"};
  reject_unknown(j, keys, "config.denoiser: ");
  DenoiserConfig d;
  const std::string w = "config.denoiser: ";
  if (j.contains("image_size")) read_key(j, "image_size", d.image_size, w);
  if (j.contains("in_channels")) read_key(j, "in_channels", d.in_channels, w);
  if (j.contains("base_channels")) read_key(j, "base_channels", d.base_channels, w);
  if (j.contains("channel_multipliers")) read_key(j, "channel_multipliers", d.channel_multipliers, w);
  if (j.contains("attention_resolutions")) read_key(j, "attention_resolutions", d.attention_resolutions, w);
  if (j.contains("time_embed_dim")) read_key(j, "time_embed_dim", d.time_embed_dim, w);
  if (j.contains("num_heads")) read_key(j, "num_heads", d.num_heads, w);
  if (j.contains("norm_groups")) read_key(j, "norm_groups", d.norm_groups, w);
  return d;
}

json config_json(const TrainConfig& c) {
  json j;
  j["total_steps"] = c.total_steps;
  j["base_steps"] = c.base_steps;
  j["cycle"] = c.cycle;
  j["lambda_fwd"] = c.lambda_fwd;
  j["lambda_rev"] = c.lambda_rev;
  j["batch_size"] = c.batch_size;
  j["learning_rate"] = c.learning_rate;
  j["seed"] = c.seed;
  j["refresh_sample_count"] = c.refresh_sample_count;
  j["refresh_sample_steps"] = c.refresh_sample_steps;
  j["diffusion_steps"] = c.diffusion_steps;
  j["beta_start"] = c.beta_start;
  j["beta_end"] = c.beta_end;
  j["grad_clip"] = c.grad_clip;
  j["guidance"] = c.guidance;
  j["guidance_sigma_frac"] = c.guidance_sigma_frac;
  j["edge_low"] = c.edge_low;
  j["edge_high"] = c.edge_high;
  j["edge_blur_sigma"] = c.edge_blur_sigma;
  j["highlighter_steps"] = c.highlighter_steps;
  j["highlighter_sample_count"] = c.highlighter_sample_count;
  j["retrain_highlighter"] = c.retrain_highlighter;
  j["checkpoint_every"] = c.checkpoint_every;
  j["dataset"] = c.dataset;
  j["dataset_size"] = c.dataset_size;
  j["dataset_seed"] = c.dataset_seed;
  j["denoiser"] = denoiser_to_json(c.denoiser);
  return j;
}

}  // namespace

std::string config_to_json(const TrainConfig& cfg) { return config_json(cfg).dump(2); }

TrainConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("config: not valid JSON (") + e.what() + ")");
  }
  const json defaults = config_json(TrainConfig{});
  std::set<std::string> known;
  for (const auto& [k, v] : defaults.items()) known.insert(k);
  reject_unknown(j, known, "config: ");

  TrainConfig c;
  const std::string w = "config: ";
#define SRD_READ(field) \
  if (j.contains(#field)) read_key(j, #field, c.field, w)
  SRD_READ(total_steps);
  SRD_READ(base_steps);
  SRD_READ(cycle);
  SRD_READ(lambda_fwd);
  SRD_READ(lambda_rev);
  SRD_READ(batch_size);
  SRD_READ(learning_rate);
  SRD_READ(seed);
  SRD_READ(refresh_sample_count);
  SRD_READ(refresh_sample_steps);
  SRD_READ(diffusion_steps);
  SRD_READ(beta_start);
  SRD_READ(beta_end);
  SRD_READ(grad_clip);
  SRD_READ(guidance);
  SRD_READ(guidance_sigma_frac);
  SRD_READ(edge_low);
  SRD_READ(edge_high);
  SRD_READ(edge_blur_sigma);
  SRD_READ(highlighter_steps);
  SRD_READ(highlighter_sample_count);
  SRD_READ(retrain_highlighter);
  SRD_READ(checkpoint_every);
  SRD_READ(dataset);
  SRD_READ(dataset_size);
  SRD_READ(dataset_seed);
#undef SRD_READ
  if (j.contains("denoiser")) c.denoiser = denoiser_from_json(j.at("denoiser"));
  c.validate();
  return c;
}

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return config_from_json(ss.str());
}

// ---- schedule --------------------------------------------------------------

Phase phase_of(int step, const TrainConfig& cfg) {
  if (step < 0 || step >= cfg.total_steps)
    throw std::out_of_range("step " + std::to_string(step) + " outside [0, " + std::to_string(cfg.total_steps) + ")");
  return step < cfg.base_steps ? Phase::Base : Phase::Refine;
}

bool refresh_due(int step, const TrainConfig& cfg) {
  return phase_of(step, cfg) == Phase::Refine && (step - cfg.base_steps) % cfg.cycle == 0;
}

std::vector<int> refresh_schedule(const TrainConfig& cfg) {
  std::vector<int> out;
  for (int s = cfg.base_steps; s < cfg.total_steps; s += cfg.cycle) out.push_back(s);
  return out;
}

// ---- refresh ---------------------------------------------------------------

HighlighterConfig highlighter_config_for(const TrainConfig& cfg) {
  HighlighterConfig h;
  h.image_size = cfg.denoiser.image_size;
  h.in_channels = cfg.denoiser.in_channels;
  h.train_steps = cfg.highlighter_steps;
  return h;
}

nn::Tensor<float> draw_model_samples(const Denoiser<float>& model, const TrainConfig& cfg, int count, Rng& rng) {
  const auto sched = cfg.schedule();
  const auto& d = model.config();
  const int steps = cfg.refresh_sample_steps > 0 ? cfg.refresh_sample_steps : sched.steps();
  return sample_respaced(model, sched, steps, d.in_channels, d.image_size, d.image_size, rng, count);
}

namespace {

MeanFam round_to_float(MeanFam m) {
  for (double& v : m.values()) v = static_cast<double>(static_cast<float>(v));
  return m;
}

}  // namespace

MeanFam refresh_mfam(const Denoiser<float>& model, const HighlighterModel& highlighter, const TrainConfig& cfg, Rng& rng) {
  if (!highlighter.trained()) throw std::logic_error("refresh_mfam: highlighter is untrained");
  const auto samples = draw_model_samples(model, cfg, cfg.refresh_sample_count, rng);
  const auto fams = grad_cam(highlighter, samples, kFakeClass);
  return round_to_float(mean_fam(fams));
}

// ---- trainer ---------------------------------------------------------------

namespace {

nn::Adam<float>::Options adam_options(const TrainConfig& cfg) {
  nn::Adam<float>::Options o;
  o.learning_rate = cfg.learning_rate;
  o.grad_clip = cfg.grad_clip;
  return o;
}

void check_dataset(const nn::Tensor<float>& data, const DenoiserConfig& d) {
  if (data.rank() != 4 || data.dim(0) < 1) throw std::invalid_argument("training data must be a non-empty [N,C,H,W] batch");
  if (data.dim(1) != d.in_channels || data.dim(2) != d.image_size || data.dim(3) != d.image_size)
    throw std::invalid_argument("training data " + nn::shape_string(data.shape()) + " does not match the denoiser (" +
                                std::to_string(d.in_channels) + "x" + std::to_string(d.image_size) + "x" +
                                std::to_string(d.image_size) + ")");
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

Trainer::Trainer(const TrainConfig& cfg, nn::Tensor<float> dataset)
    : Trainer(cfg, std::move(dataset), Denoiser<float>(cfg.denoiser, Rng(cfg.seed).fork(1).next_u64())) {}

Trainer::Trainer(const TrainConfig& cfg, nn::Tensor<float> dataset, Denoiser<float> model)
    : cfg_(cfg),
      sched_(cfg.schedule()),
      guidance_(parse_guidance(cfg.guidance)),
      data_(std::move(dataset)),
      model_(std::move(model)),
      adam_(model_.parameters(), adam_options(cfg)),
      data_rng_(Rng(cfg.seed).fork(2)),
      aux_rng_(Rng(cfg.seed).fork(3)) {
  cfg_.validate();
  check_dataset(data_, cfg_.denoiser);
}

Trainer Trainer::fork(const TrainConfig& cfg) const {
  if (denoiser_to_json(cfg.denoiser) != denoiser_to_json(cfg_.denoiser))
    throw std::invalid_argument("fork: denoiser configuration differs");
  Trainer t(cfg, data_, model_.clone());
  t.adam_ = adam_;
  t.adam_.set_options(adam_options(cfg));
  t.data_rng_ = data_rng_;
  t.aux_rng_ = aux_rng_;
  if (highlighter_) t.highlighter_ = highlighter_->clone();
  t.highlighter_accuracy_ = highlighter_accuracy_;
  t.map_ = map_;
  t.map_stamp_ = map_stamp_;
  t.step_ = step_;
  t.history_ = history_;
  return t;
}

void Trainer::train_highlighter_now() {
  const int n = cfg_.highlighter_sample_count;
  const auto fake = draw_model_samples(model_, cfg_, n, aux_rng_);
  const int N = data_.dim(0);
  nn::Shape s = data_.shape();
  s[0] = std::min(n, N);
  nn::Tensor<float> real(s);
  const std::size_t per = data_.size() / static_cast<std::size_t>(N);
  // Partial Fisher-Yates for a subset without repeats.
  std::vector<std::size_t> idx(static_cast<std::size_t>(N));
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  for (int i = 0; i < s[0]; ++i) {
    const std::size_t j = static_cast<std::size_t>(i) + aux_rng_.below(static_cast<std::uint64_t>(N - i));
    std::swap(idx[static_cast<std::size_t>(i)], idx[j]);
    std::copy_n(data_.data() + idx[static_cast<std::size_t>(i)] * per, per, real.data() + static_cast<std::size_t>(i) * per);
  }
  HighlighterConfig hc = highlighter_config_for(cfg_);
  hc.seed = aux_rng_.next_u64();
  auto trained = train_highlighter(real, fake, hc);
  highlighter_accuracy_ = trained.holdout_accuracy;
  highlighter_ = std::move(trained.model);
}

void Trainer::refresh_map() {
  const int H = cfg_.denoiser.image_size, W = H;
  switch (guidance_) {
    case GuidanceKind::Fam:
      map_ = refresh_mfam(model_, *highlighter_, cfg_, aux_rng_);
      break;
    case GuidanceKind::CenterGaussian:
      map_ = round_to_float(center_gaussian_map(H, W, cfg_.guidance_sigma_frac));
      break;
    case GuidanceKind::InvertedGaussian:
      map_ = round_to_float(inverted_gaussian_map(H, W, cfg_.guidance_sigma_frac));
      break;
    case GuidanceKind::Edge: {
      const auto samples = draw_model_samples(model_, cfg_, cfg_.refresh_sample_count, aux_rng_);
      map_ = round_to_float(mean_edge_map(samples, EdgeParams{cfg_.edge_low, cfg_.edge_high, cfg_.edge_blur_sigma}));
      break;
    }
  }
  map_stamp_ = step_;
}

StepRecord Trainer::step() {
  if (done()) throw std::logic_error("training already reached total_steps");
  StepRecord rec;
  rec.step = step_;
  rec.phase = phase_of(step_, cfg_);
  if (rec.phase == Phase::Refine) {
    if (!highlighter_) train_highlighter_now();
    if (refresh_due(step_, cfg_)) {
      if (cfg_.retrain_highlighter && map_) train_highlighter_now();
      refresh_map();
      rec.refreshed = true;
    }
    if (!map_) throw std::logic_error("refinement step without a guidance map");
    rec.map_stamp = map_stamp_;
  }

  const int B = cfg_.batch_size, N = data_.dim(0);
  nn::Shape s = data_.shape();
  s[0] = B;
  nn::Tensor<float> x0(s);
  const std::size_t per = data_.size() / static_cast<std::size_t>(N);
  for (int b = 0; b < B; ++b) {
    const auto i = data_rng_.below(static_cast<std::uint64_t>(N));
    std::copy_n(data_.data() + i * per, per, x0.data() + static_cast<std::size_t>(b) * per);
  }
  // Uniform on {1..T}, stored 0-based.
  std::vector<int> t(static_cast<std::size_t>(B));
  for (int& v : t) v = static_cast<int>(data_rng_.below(static_cast<std::uint64_t>(sched_.steps())));
  const auto eps = gaussian_like<float>(s, data_rng_);

  const bool refine = rec.phase == Phase::Refine;
  nn::Graph<float> g;
  model_.parameters().zero_grad();
  auto loss = sr_loss(g, model_, x0, t, eps, refine ? &*map_ : nullptr, refine ? cfg_.lambda_fwd : 0.0,
                      refine ? cfg_.lambda_rev : 0.0, sched_);
  g.backward(loss);
  adam_.step(model_.parameters());
  rec.loss = static_cast<double>(loss.value()[0]);
  ++step_;
  history_.push_back(rec);
  return rec;
}

void Trainer::run(int until, const std::function<void(const StepRecord&)>& on_step) {
  until = std::min(until, cfg_.total_steps);
  while (step_ < until) {
    const StepRecord r = step();
    if (on_step) on_step(r);
  }
}

void Trainer::save_checkpoint(const std::filesystem::path& path) const {
  Container c;
  c.kind = "trainer";
  c.meta["config"] = config_to_json(cfg_);
  c.meta["step"] = std::to_string(step_);
  c.meta["adam_step"] = std::to_string(adam_.step_count());
  c.meta["map_stamp"] = std::to_string(map_stamp_);
  c.meta["highlighter_accuracy"] = fmt_double(highlighter_accuracy_);
  put_parameters(c, "denoiser/", model_.parameters());
  for (std::size_t i = 0; i < model_.parameters().size(); ++i) {
    const auto& name = model_.parameters()[i].name;
    const auto& m = adam_.first_moments()[i];
    const auto& v = adam_.second_moments()[i];
    c.blobs["adam.m/" + name] = Blob{m.shape(), m.to_vector()};
    c.blobs["adam.v/" + name] = Blob{v.shape(), v.to_vector()};
  }
  if (highlighter_) {
    c.meta["highlighter_trained"] = highlighter_->trained() ? "1" : "0";
    put_parameters(c, "highlighter/", highlighter_->parameters());
  }
  if (map_) {
    Blob b{{map_->height(), map_->width()}, {}};
    for (double v : map_->values()) b.data.push_back(static_cast<float>(v));
    c.blobs["map"] = std::move(b);
  }
  c.rng["data"] = data_rng_.serialize();
  c.rng["aux"] = aux_rng_.serialize();
  save_container(path, c);
}

Trainer Trainer::resume(const std::filesystem::path& checkpoint, const TrainConfig& cfg, nn::Tensor<float> dataset) {
  const Container c = load_container(checkpoint);
  if (c.kind != "trainer") throw std::runtime_error(checkpoint.string() + ": expected a trainer checkpoint, found '" + c.kind + "'");
  const TrainConfig stored = config_from_json(c.meta_at("config"));
  if (denoiser_to_json(stored.denoiser) != denoiser_to_json(cfg.denoiser))
    throw std::runtime_error(checkpoint.string() + ": denoiser configuration differs from the checkpoint");
  if (stored.diffusion_steps != cfg.diffusion_steps || stored.beta_start != cfg.beta_start || stored.beta_end != cfg.beta_end)
    throw std::runtime_error(checkpoint.string() + ": noise schedule differs from the checkpoint");

  Denoiser<float> model(cfg.denoiser, 0);
  get_parameters(c, "denoiser/", model.parameters());
  Trainer t(cfg, std::move(dataset), std::move(model));
  t.step_ = std::stoi(c.meta_at("step"));
  if (t.step_ > cfg.total_steps)
    throw std::runtime_error(checkpoint.string() + ": checkpoint step " + std::to_string(t.step_) + " exceeds total_steps");
  t.adam_.set_step_count(std::stol(c.meta_at("adam_step")));
  for (std::size_t i = 0; i < t.model_.parameters().size(); ++i) {
    const auto& p = t.model_.parameters()[i];
    for (const char* kind : {"adam.m/", "adam.v/"}) {
      const Blob& b = c.blob_at(kind + p.name);
      if (b.shape != p.value.shape())
        throw std::runtime_error("shape mismatch for '" + std::string(kind) + p.name + "': checkpoint " +
                                 nn::shape_string(b.shape) + ", model " + nn::shape_string(p.value.shape()));
      auto& dst = std::string(kind) == "adam.m/" ? t.adam_.first_moments()[i] : t.adam_.second_moments()[i];
      dst = nn::Tensor<float>(b.shape, b.data);
    }
  }
  t.map_stamp_ = std::stoi(c.meta_at("map_stamp"));
  t.highlighter_accuracy_ = std::stod(c.meta_at("highlighter_accuracy"));
  if (c.meta.count("highlighter_trained")) {
    HighlighterModel h(highlighter_config_for(cfg), 0);
    get_parameters(c, "highlighter/", h.parameters());
    if (c.meta_at("highlighter_trained") == "1") h.mark_trained();
    t.highlighter_ = std::move(h);
  }
  if (c.blobs.count("map")) {
    const Blob& b = c.blob_at("map");
    if (b.shape.size() != 2) throw std::runtime_error("map blob must be 2-D");
    t.map_ = MeanFam(b.shape[0], b.shape[1], std::vector<double>(b.data.begin(), b.data.end()));
  }
  t.data_rng_ = Rng::deserialize(c.rng.at("data"));
  t.aux_rng_ = Rng::deserialize(c.rng.at("aux"));
  return t;
}

// ---- pipeline --------------------------------------------------------------

nn::Tensor<float> make_dataset(const TrainConfig& cfg) {
  if (cfg.dataset == "toy") return gen_toy_faces(cfg.dataset_size, cfg.denoiser.image_size, cfg.dataset_seed);
  return load_folder(cfg.dataset, cfg.denoiser.image_size, cfg.denoiser.in_channels).images;
}

TrainingOutputs run_training(const TrainConfig& cfg, const nn::Tensor<float>& dataset, const std::filesystem::path& out_dir,
                             const std::optional<std::filesystem::path>& resume) {
  cfg.validate();
  std::filesystem::create_directories(out_dir);
  Trainer trainer = resume ? Trainer::resume(*resume, cfg, dataset) : Trainer(cfg, dataset);
  TrainingOutputs out;
  const auto log_path = out_dir / "metrics.log";
  const bool fresh_log = !std::filesystem::exists(log_path);
  std::ofstream log(log_path, std::ios::app);
  if (!log) throw std::runtime_error("cannot write " + log_path.string());
  if (fresh_log) log << "step\tphase\tloss\trefresh\n";
  out.artifacts.push_back(log_path);

  std::optional<std::filesystem::path> last_good;
  try {
    trainer.run(cfg.total_steps, [&](const StepRecord& r) {
      char line[96];
      std::snprintf(line, sizeof line, "%d\t%s\t%.9g\t%d\n", r.step, phase_name(r.phase).c_str(), r.loss, r.refreshed ? 1 : 0);
      log << line;
      out.final_loss = r.loss;
      if (cfg.checkpoint_every > 0 && (r.step + 1) % cfg.checkpoint_every == 0 && r.step + 1 < cfg.total_steps) {
        const auto p = out_dir / ("checkpoint_" + std::to_string(r.step + 1) + ".srdf");
        log.flush();
        trainer.save_checkpoint(p);
        last_good = p;
        out.artifacts.push_back(p);
      }
    });
  } catch (const DivergenceError& e) {
    log.flush();
    throw DivergenceError(std::string(e.what()) + " at step " + std::to_string(trainer.next_step()) +
                          (last_good ? "; last good checkpoint " + last_good->string() : "; no checkpoint written"));
  }
  log.flush();
  const auto final_path = out_dir / "final.srdf";
  trainer.save_checkpoint(final_path);
  out.artifacts.push_back(final_path);
  if (trainer.highlighter()) {
    const auto hp = out_dir / "highlighter.srdf";
    save_highlighter(hp, *trainer.highlighter());
    out.artifacts.push_back(hp);
  }
  return out;
}

namespace {

json highlighter_config_json(const HighlighterConfig& h) {
  json j;
  j["image_size"] = h.image_size;
  j["in_channels"] = h.in_channels;
  j["stage_channels"] = h.stage_channels;
  return j;
}

}  // namespace

void save_highlighter(const std::filesystem::path& path, const HighlighterModel& model) {
  Container c;
  c.kind = "highlighter";
  c.meta["config"] = highlighter_config_json(model.config()).dump();
  c.meta["trained"] = model.trained() ? "1" : "0";
  put_parameters(c, "highlighter/", model.parameters());
  save_container(path, c);
}

HighlighterModel load_highlighter(const std::filesystem::path& path) {
  const Container c = load_container(path);
  HighlighterConfig hc;
  bool trained = false;
  std::string prefix = "highlighter/";
  if (c.kind == "highlighter") {
    const json j = json::parse(c.meta_at("config"));
    hc.image_size = j.at("image_size").get<int>();
    hc.in_channels = j.at("in_channels").get<int>();
    hc.stage_channels = j.at("stage_channels").get<std::vector<int>>();
    trained = c.meta_at("trained") == "1";
  } else if (c.kind == "trainer") {
    if (!c.meta.count("highlighter_trained"))
      throw std::runtime_error(path.string() + ": trainer checkpoint holds no highlighter (saved before the refinement phase)");
    hc = highlighter_config_for(config_from_json(c.meta_at("config")));
    trained = c.meta_at("highlighter_trained") == "1";
  } else {
    throw std::runtime_error(path.string() + ": expected a highlighter checkpoint, found '" + c.kind + "'");
  }
  HighlighterModel m(hc, 0);
  get_parameters(c, prefix, m.parameters());
  if (trained) m.mark_trained();
  return m;
}

LoadedModel load_model(const std::filesystem::path& checkpoint) {
  const Container c = load_container(checkpoint);
  if (c.kind != "trainer") throw std::runtime_error(checkpoint.string() + ": expected a trainer checkpoint, found '" + c.kind + "'");
  TrainConfig cfg = config_from_json(c.meta_at("config"));
  Denoiser<float> model(cfg.denoiser, 0);
  get_parameters(c, "denoiser/", model.parameters());
  std::optional<HighlighterModel> h;
  if (c.meta.count("highlighter_trained")) h = load_highlighter(checkpoint);
  return LoadedModel{std::move(cfg), std::move(model), std::move(h)};
}

}  // namespace srd
