#include "srd/cli.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <optional>
#include <sstream>
#include <stdexcept>

#include <CLI11.hpp>

#include "srd/evaluation.hpp"
#include "srd/highlighter.hpp"
#include "srd/inpainting.hpp"
#include "srd/map_io.hpp"
#include "srd/trainer.hpp"

namespace srd::cli {

namespace fs = std::filesystem;

std::array<std::uint8_t, 3> colormap(double v) {
  if (!(v >= 0)) v = 0;  // NaN lands here too
  v = std::min(v, 1.0);
  double r, g, b;
  if (v <= 0.5) {
    const double s = v / 0.5;
    r = 255 * s;
    g = 255 * s;
    b = 255 * (1 - s);
  } else {
    const double s = (v - 0.5) / 0.5;
    r = 255;
    g = 255 * (1 - s);
    b = 0;
  }
  auto q = [](double x) { return static_cast<std::uint8_t>(std::lround(std::clamp(x, 0.0, 255.0))); };
  return {q(r), q(g), q(b)};
}

RasterImage render_heatmap(const FlawActivationMap& fam) {
  RasterImage r{fam.width(), fam.height(), 3, {}};
  r.pixels.reserve(fam.size() * 3);
  for (double v : fam.values()) {
    const auto c = colormap(v);
    r.pixels.insert(r.pixels.end(), c.begin(), c.end());
  }
  return r;
}

RasterImage render_overlay(const nn::Tensor<float>& image, const FlawActivationMap& fam) {
  const nn::Tensor<float> one = image.rank() == 3 ? image.reshaped({1, image.dim(0), image.dim(1), image.dim(2)}) : image;
  if (one.rank() != 4 || one.dim(0) != 1) throw std::invalid_argument("render_overlay: expected a single image");
  if (one.dim(2) != fam.height() || one.dim(3) != fam.width())
    throw std::invalid_argument("render_overlay: image and map sizes differ");
  const RasterImage base = to_raster(one, 0);
  RasterImage r{base.width, base.height, 3, std::vector<std::uint8_t>(fam.size() * 3)};
  for (std::size_t p = 0; p < fam.size(); ++p) {
    const auto c = colormap(fam[p]);
    for (int ch = 0; ch < 3; ++ch) {
      const double img = base.channels == 1 ? base.pixels[p] : base.pixels[p * 3 + static_cast<std::size_t>(ch)];
      const double v = 0.6 * img + 0.4 * c[static_cast<std::size_t>(ch)];
      r.pixels[p * 3 + static_cast<std::size_t>(ch)] = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
    }
  }
  return r;
}

std::vector<GridCell> top_cells(const FlawActivationMap& fam, int grid, int k) {
  if (grid < 1 || grid > std::min(fam.height(), fam.width()))
    throw std::invalid_argument("top_cells: grid must lie in [1, min(H, W)]");
  if (k < 1) throw std::invalid_argument("top_cells: k must be >= 1");
  std::vector<GridCell> cells;
  for (int i = 0; i < grid; ++i)
    for (int j = 0; j < grid; ++j) {
      const int r0 = i * fam.height() / grid, r1 = (i + 1) * fam.height() / grid;
      const int c0 = j * fam.width() / grid, c1 = (j + 1) * fam.width() / grid;
      double s = 0;
      for (int y = r0; y < r1; ++y)
        for (int x = c0; x < c1; ++x) s += fam(y, x);
      cells.push_back({i, j, s / static_cast<double>((r1 - r0) * (c1 - c0))});
    }
  std::stable_sort(cells.begin(), cells.end(), [](const GridCell& a, const GridCell& b) { return a.score > b.score; });
  cells.resize(std::min<std::size_t>(cells.size(), static_cast<std::size_t>(k)));
  return cells;
}

namespace {

// Collects artifact paths in print order.
struct Output {
  std::ostream& out;
  std::ostream& err;
  void artifact(const fs::path& p) { out << p.string() << '\n'; }
  void note(const std::string& s) { err << s << '\n'; }
};

std::string one_line(std::string s) {
  for (char& c : s)
    if (c == '\n' || c == '\r') c = ' ';
  return s;
}

nn::Tensor<float> slice(const nn::Tensor<float>& batch, int start, int count) {
  nn::Shape s = batch.shape();
  s[0] = count;
  nn::Tensor<float> out(s);
  const std::size_t per = batch.size() / static_cast<std::size_t>(batch.dim(0));
  std::copy_n(batch.data() + static_cast<std::size_t>(start) * per, static_cast<std::size_t>(count) * per, out.data());
  return out;
}

int grid_cols(int n) { return std::max(1, static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n))))); }

std::string pnm_ext(int channels) { return channels == 1 ? ".pgm" : ".ppm"; }

nn::Tensor<float> generate(const Denoiser<float>& model, const NoiseSchedule& sched, int count, int steps, Rng& rng) {
  const auto& d = model.config();
  return sample_respaced(model, sched, steps > 0 ? steps : sched.steps(), d.in_channels, d.image_size, d.image_size,
                         rng, count);
}

void write_metrics(Output& o, const fs::path& dir, const std::string& stem, const std::vector<MetricRow>& rows) {
  const auto csv = dir / (stem + ".csv"), jsonl = dir / (stem + ".jsonl");
  write_metrics_csv(csv, rows);
  write_metrics_jsonl(jsonl, rows);
  o.artifact(csv);
  o.artifact(jsonl);
}

// ---- train -----------------------------------------------------------------

struct TrainArgs {
  std::string config, out_dir = "run", resume;
};

void cmd_train(const TrainArgs& a, Output& o) {
  const TrainConfig cfg = load_config(a.config);
  o.note("repro: srd train --config " + a.config + " --out-dir " + a.out_dir +
         (a.resume.empty() ? "" : " --resume " + a.resume) + " seed=" + std::to_string(cfg.seed));
  if (!cfg.phase_ratio_on_grid()) o.note("note: base:refine ratio is off the 1:4 / 1:1 / 4:1 grid");
  fs::create_directories(a.out_dir);
  const auto cfg_copy = fs::path(a.out_dir) / "config.json";
  {
    std::ofstream f(cfg_copy);
    f << config_to_json(cfg) << '\n';
    if (!f) throw std::runtime_error("cannot write " + cfg_copy.string());
  }
  o.artifact(cfg_copy);
  const auto data = make_dataset(cfg);
  std::optional<fs::path> resume;
  if (!a.resume.empty()) resume = a.resume;
  const auto res = run_training(cfg, data, a.out_dir, resume);
  for (const auto& p : res.artifacts) o.artifact(p);
}

// ---- sample ----------------------------------------------------------------

struct SampleArgs {
  std::string checkpoint, out_dir = "samples";
  int count = 16, steps = 0;
  std::uint64_t seed = 0;
};

void cmd_sample(const SampleArgs& a, Output& o) {
  if (a.count < 1) throw std::invalid_argument("--count must be >= 1");
  o.note("repro: srd sample --checkpoint " + a.checkpoint + " --count " + std::to_string(a.count) +
         " --steps " + std::to_string(a.steps) + " --out-dir " + a.out_dir + " seed=" + std::to_string(a.seed));
  const LoadedModel lm = load_model(a.checkpoint);
  Rng rng(a.seed);
  const auto images = generate(lm.model, lm.config.schedule(), a.count, a.steps, rng);
  const fs::path dir(a.out_dir);
  fs::create_directories(dir / "images");
  const std::string ext = pnm_ext(images.dim(1));
  const auto grid = dir / ("grid" + ext);
  write_pnm(grid, tile_grid(images, grid_cols(a.count)));
  o.artifact(grid);
  for (int b = 0; b < a.count; ++b) {
    std::ostringstream name;
    name << "sample_" << std::setw(4) << std::setfill('0') << b << ext;
    const auto p = dir / "images" / name.str();
    write_pnm(p, to_raster(images, b));
    o.artifact(p);
  }
}

// ---- fam -------------------------------------------------------------------

struct FamArgs {
  std::string highlighter, images, out_dir = "fam", method = "gradcam";
  int top_k = 3, grid = 3;
};

void cmd_fam(const FamArgs& a, Output& o) {
  o.note("repro: srd fam --highlighter " + a.highlighter + " --images " + a.images + " --method " + a.method +
         " --top-k " + std::to_string(a.top_k) + " --grid " + std::to_string(a.grid) + " --out-dir " + a.out_dir);
  if (a.method != "gradcam" && a.method != "cam") throw std::invalid_argument("--method must be gradcam or cam");
  const HighlighterModel model = load_highlighter(a.highlighter);
  const auto& hc = model.config();
  const FolderLoad in = load_folder(a.images, hc.image_size, hc.in_channels);
  for (const auto& e : in.errors) o.note("skipped: " + e);
  const auto fams = a.method == "cam" ? cam(model, in.images, kFakeClass) : grad_cam(model, in.images, kFakeClass);
  const fs::path dir(a.out_dir);
  fs::create_directories(dir);
  const auto report = dir / "grid_cells.csv";
  std::ofstream rep(report);
  rep << "file,rank,cell_row,cell_col,score\n";
  for (std::size_t n = 0; n < fams.size(); ++n) {
    const std::string stem = fs::path(in.files[n]).stem().string();
    const auto famp = dir / (stem + ".fam");
    write_map_file(famp, fams[n]);
    const auto heat = dir / (stem + "_heatmap.ppm");
    write_pnm(heat, render_heatmap(fams[n]));
    const auto over = dir / (stem + "_overlay.ppm");
    write_pnm(over, render_overlay(slice(in.images, static_cast<int>(n), 1), fams[n]));
    o.artifact(famp);
    o.artifact(heat);
    o.artifact(over);
    int rank = 1;
    for (const auto& c : top_cells(fams[n], a.grid, a.top_k))
      rep << fs::path(in.files[n]).filename().string() << ',' << rank++ << ',' << c.row << ',' << c.col << ','
          << format_metric_value(c.score) << '\n';
  }
  const auto mean = dir / "mean.fam";
  write_map_file(mean, mean_fam(fams));
  o.artifact(mean);
  rep.flush();
  if (!rep) throw std::runtime_error("cannot write " + report.string());
  o.artifact(report);
}

// ---- eval ------------------------------------------------------------------

struct EvalArgs {
  std::string real, generated, highlighter, out_dir = "eval";
  std::uint64_t seed = 0;
  int pca = 8;
};

void cmd_eval(const EvalArgs& a, Output& o) {
  o.note("repro: srd eval --real " + a.real + " --generated " + a.generated + " --highlighter " + a.highlighter +
         " --pca " + std::to_string(a.pca) + " --out-dir " + a.out_dir + " seed=" + std::to_string(a.seed));
  const HighlighterModel model = load_highlighter(a.highlighter);
  const auto& hc = model.config();
  const FolderLoad real = load_folder(a.real, hc.image_size, hc.in_channels);
  const FolderLoad gen = load_folder(a.generated, hc.image_size, hc.in_channels);
  for (const auto& e : real.errors) o.note("skipped: " + e);
  for (const auto& e : gen.errors) o.note("skipped: " + e);
  std::vector<MetricRow> rows;
  rows.push_back({"desk-FID", "highlighter", desk_fid(real.images, gen.images, highlighter_embedder(model)), a.seed});
  const PixelPcaEmbedder pca(real.images, a.pca);
  rows.push_back({"desk-FID", "pixel-pca", desk_fid(real.images, gen.images, std::cref(pca)), a.seed});
  const int n = std::min(real.images.dim(0), gen.images.dim(0));
  rows.push_back({kPerceptualLabel, "paired",
                  perceptual_distance(slice(real.images, 0, n), slice(gen.images, 0, n), model), a.seed});
  fs::create_directories(a.out_dir);
  write_metrics(o, a.out_dir, "metrics", rows);
}

// ---- inpaint ---------------------------------------------------------------

struct InpaintArgs {
  std::string checkpoint, images, out_dir = "inpaint", mask_kind = "all";
  std::vector<std::string> image_files;
  std::uint64_t seed = 0;
  int jump_len = 10, jump_n = 2;
};

nn::Tensor<float> load_inputs(const InpaintArgs& a, const DenoiserConfig& d, Output& o) {
  if (a.images.empty() == a.image_files.empty()) throw std::invalid_argument("give exactly one of --images or --image");
  if (!a.images.empty()) {
    const FolderLoad f = load_folder(a.images, d.image_size, d.in_channels);
    for (const auto& e : f.errors) o.note("skipped: " + e);
    return f.images;
  }
  // Stage single files through a scratch folder so they share the folder decoder.
  const fs::path tmp = fs::path(a.out_dir) / ".inputs";
  fs::remove_all(tmp);
  fs::create_directories(tmp);
  for (std::size_t i = 0; i < a.image_files.size(); ++i) {
    std::ostringstream name;
    name << std::setw(4) << std::setfill('0') << i << fs::path(a.image_files[i]).extension().string();
    fs::copy_file(a.image_files[i], tmp / name.str());
  }
  const FolderLoad f = load_folder(tmp, d.image_size, d.in_channels);
  fs::remove_all(tmp);
  if (!f.errors.empty()) throw std::runtime_error(f.errors.front());
  return f.images;
}

void cmd_inpaint(const InpaintArgs& a, Output& o) {
  o.note("repro: srd inpaint --checkpoint " + a.checkpoint + " --mask-kind " + a.mask_kind + " --jump-len " +
         std::to_string(a.jump_len) + " --jump-n " + std::to_string(a.jump_n) + " --out-dir " + a.out_dir +
         " seed=" + std::to_string(a.seed));
  std::vector<MaskKind> kinds;
  if (a.mask_kind == "all")
    kinds = {MaskKind::Wide, MaskKind::Narrow, MaskKind::AlternatingLines};
  else
    kinds = {parse_mask_kind(a.mask_kind)};
  const LoadedModel lm = load_model(a.checkpoint);
  fs::create_directories(a.out_dir);
  const nn::Tensor<float> truth = load_inputs(a, lm.model.config(), o);
  const int N = truth.dim(0), H = truth.dim(2), W = truth.dim(3);
  const auto sched = lm.config.schedule();
  const std::string ext = pnm_ext(truth.dim(1));

  Embedder embed;
  std::optional<PixelPcaEmbedder> pca;
  std::string embed_name;
  if (lm.highlighter) {
    embed = highlighter_embedder(*lm.highlighter);
    embed_name = "highlighter";
  } else if (N >= 3) {
    pca.emplace(truth, std::min(8, N - 1));
    embed = std::cref(*pca);
    embed_name = "pixel-pca";
  }

  if (embed) o.note("desk-FID embedder: " + embed_name);
  const fs::path dir(a.out_dir);
  const auto truth_path = dir / ("ground_truth" + ext);
  write_pnm(truth_path, tile_grid(truth, grid_cols(N)));
  o.artifact(truth_path);
  std::vector<MetricRow> rows;
  Rng root(a.seed);
  for (std::size_t k = 0; k < kinds.size(); ++k) {
    const std::string name = mask_kind_name(kinds[k]);
    Rng rng = root.fork(k + 1);
    nn::Tensor<float> masked(truth.shape()), result(truth.shape());
    const std::size_t per = truth.size() / static_cast<std::size_t>(N), HW = static_cast<std::size_t>(H) * W;
    for (int n = 0; n < N; ++n) {
      const Mask mask = make_mask(kinds[k], H, W, rng);
      const auto one = slice(truth, n, 1);
      const auto res = repaint_sample(lm.model, sched, one, mask, a.jump_len, a.jump_n, rng);
      for (std::size_t i = 0; i < per; ++i) {
        result[static_cast<std::size_t>(n) * per + i] = res.image[i];
        masked[static_cast<std::size_t>(n) * per + i] = mask[i % HW] == 1.0 ? one[i] : -1.0f;
      }
      std::ostringstream mname;
      mname << "mask_" << name << '_' << std::setw(4) << std::setfill('0') << n << ".fam";
      const auto mp = dir / mname.str();
      write_map_file(mp, mask, true);
      o.artifact(mp);
    }
    const auto mpath = dir / ("masked_" + name + ext), rpath = dir / ("result_" + name + ext);
    write_pnm(mpath, tile_grid(masked, grid_cols(N)));
    write_pnm(rpath, tile_grid(result, grid_cols(N)));
    o.artifact(mpath);
    o.artifact(rpath);
    rows.push_back({"PSNR", name, psnr(truth, result), a.seed});
    rows.push_back({"SSIM", name, ssim(truth, result), a.seed});
    if (embed) {
      rows.push_back({"desk-FID", name, desk_fid(truth, result, embed), a.seed});
    } else {
      o.note("note: desk-FID needs a highlighter or at least 3 images; reported as nan");
      rows.push_back({"desk-FID", name, std::nan(""), a.seed});
    }
  }
  write_metrics(o, dir, "metrics", rows);
}

// ---- compare-maps ----------------------------------------------------------

struct CompareArgs {
  std::string config, out_dir = "compare-maps";
  int total_steps = 0, eval_count = 256, sample_steps = 0;
};

void cmd_compare(const CompareArgs& a, Output& o) {
  TrainConfig cfg = load_config(a.config);
  if (a.total_steps > 0) {
    // Keep the phase ratio under a reduced budget.
    const double frac = static_cast<double>(cfg.base_steps) / cfg.total_steps;
    cfg.total_steps = a.total_steps;
    cfg.base_steps = static_cast<int>(std::lround(frac * a.total_steps));
  }
  cfg.validate();
  if (a.eval_count < 2) throw std::invalid_argument("--eval-count must be >= 2");
  o.note("repro: srd compare-maps --config " + a.config + " --total-steps " + std::to_string(cfg.total_steps) +
         " --eval-count " + std::to_string(a.eval_count) + " --sample-steps " + std::to_string(a.sample_steps) +
         " --out-dir " + a.out_dir + " seed=" + std::to_string(cfg.seed));
  const fs::path dir(a.out_dir);
  fs::create_directories(dir);
  const auto data = make_dataset(cfg);

  // The base phase does not depend on the guidance map, so it runs once and
  // each map continues from a copy of the boundary state.
  Trainer shared(cfg, data);
  shared.run(cfg.base_steps + 1);
  const HighlighterModel embedder_model = shared.highlighter()->clone();
  const Embedder embed = highlighter_embedder(embedder_model);

  Rng pick(Rng(cfg.seed).fork(20));
  const int n_real = std::min(a.eval_count, data.dim(0));
  nn::Shape rs = data.shape();
  rs[0] = n_real;
  nn::Tensor<float> real(rs);
  {
    std::vector<int> idx(static_cast<std::size_t>(data.dim(0)));
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
    const std::size_t per = data.size() / idx.size();
    for (int i = 0; i < n_real; ++i) {
      const auto j = static_cast<std::size_t>(i) + pick.below(idx.size() - static_cast<std::size_t>(i));
      std::swap(idx[static_cast<std::size_t>(i)], idx[j]);
      std::copy_n(data.data() + static_cast<std::size_t>(idx[static_cast<std::size_t>(i)]) * per, per,
                  real.data() + static_cast<std::size_t>(i) * per);
    }
  }

  std::vector<MetricRow> rows;
  for (const char* g : {"center-gaussian", "inverted-gaussian", "edge", "fam"}) {
    TrainConfig c = cfg;
    c.guidance = g;
    Trainer t = shared.fork(c);
    t.run(c.total_steps);
    Rng srng(Rng(cfg.seed).fork(21));
    const auto gen = generate(t.model(), t.schedule(), a.eval_count, a.sample_steps, srng);
    const auto ckpt = dir / (std::string(g) + ".srdf");
    t.save_checkpoint(ckpt);
    o.artifact(ckpt);
    const auto grid = dir / (std::string(g) + "_samples" + pnm_ext(gen.dim(1)));
    write_pnm(grid, tile_grid(slice(gen, 0, std::min(64, a.eval_count)), 8));
    o.artifact(grid);
    if (t.current_map()) {
      const auto mp = dir / (std::string(g) + "_map.fam");
      write_map_file(mp, *t.current_map());
      o.artifact(mp);
    }
    rows.push_back({"desk-FID", g, desk_fid(real, gen, embed), cfg.seed});
  }
  write_metrics(o, dir, "metrics", rows);

  std::vector<MetricRow> ranked = rows;
  std::stable_sort(ranked.begin(), ranked.end(), [](const MetricRow& x, const MetricRow& y) { return x.value < y.value; });
  const auto table = dir / "ranking.csv";
  std::ofstream f(table);
  f << "rank,guidance,desk_fid,seed\n";
  for (std::size_t i = 0; i < ranked.size(); ++i)
    f << i + 1 << ',' << ranked[i].split << ',' << format_metric_value(ranked[i].value) << ',' << ranked[i].seed << '\n';
  f.flush();
  if (!f) throw std::runtime_error("cannot write " + table.string());
  o.artifact(table);
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Self-refining diffusion at desk scale", "srd"};
  app.require_subcommand(1);

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Dual-phase training");
  train->add_option("--config", ta.config, "JSON config with TrainConfig keys")->required();
  train->add_option("--out-dir", ta.out_dir, "Output directory");
  train->add_option("--resume", ta.resume, "Trainer checkpoint to continue from");

  SampleArgs sa;
  auto* sample = app.add_subcommand("sample", "Draw samples from a checkpoint");
  sample->add_option("--checkpoint", sa.checkpoint, "Trainer checkpoint")->required();
  sample->add_option("--count", sa.count, "Number of samples");
  sample->add_option("--seed", sa.seed, "Sampling seed");
  sample->add_option("--steps", sa.steps, "Reverse steps (0 = full chain)");
  sample->add_option("--out-dir", sa.out_dir, "Output directory");

  FamArgs fa;
  auto* fam = app.add_subcommand("fam", "Flaw activation maps for a folder of images");
  fam->add_option("--highlighter", fa.highlighter, "Highlighter or trainer checkpoint")->required();
  fam->add_option("--images", fa.images, "Folder of PGM/PPM images")->required();
  fam->add_option("--out-dir", fa.out_dir, "Output directory");
  fam->add_option("--top-k", fa.top_k, "Grid cells reported per image");
  fam->add_option("--grid", fa.grid, "Grid partition size");
  fam->add_option("--method", fa.method, "gradcam or cam");

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "desk-FID and perceptual distance between two folders");
  eval->add_option("--real", ea.real, "Folder of real images")->required();
  eval->add_option("--generated", ea.generated, "Folder of generated images")->required();
  eval->add_option("--highlighter", ea.highlighter, "Highlighter or trainer checkpoint")->required();
  eval->add_option("--seed", ea.seed, "Seed recorded in the metrics rows");
  eval->add_option("--pca", ea.pca, "Pixel-PCA components");
  eval->add_option("--out-dir", ea.out_dir, "Output directory");

  InpaintArgs ia;
  auto* inpaint = app.add_subcommand("inpaint", "RePaint-style inpainting");
  inpaint->add_option("--checkpoint", ia.checkpoint, "Trainer checkpoint")->required();
  inpaint->add_option("--image", ia.image_files, "Input image (repeatable)");
  inpaint->add_option("--images", ia.images, "Folder of input images");
  inpaint->add_option("--mask-kind", ia.mask_kind, "wide, narrow, alternating or all");
  inpaint->add_option("--seed", ia.seed, "Mask and sampling seed");
  inpaint->add_option("--jump-len", ia.jump_len, "Resampling jump length");
  inpaint->add_option("--jump-n", ia.jump_n, "Extra resampling passes per jump point");
  inpaint->add_option("--out-dir", ia.out_dir, "Output directory");

  CompareArgs ca;
  auto* compare = app.add_subcommand("compare-maps", "Train one model per guidance map and rank by desk-FID");
  compare->add_option("--config", ca.config, "JSON config with TrainConfig keys")->required();
  compare->add_option("--total-steps", ca.total_steps, "Override total steps, keeping the phase ratio");
  compare->add_option("--eval-count", ca.eval_count, "Samples per model for desk-FID");
  compare->add_option("--sample-steps", ca.sample_steps, "Reverse steps for evaluation samples (0 = full chain)");
  compare->add_option("--out-dir", ca.out_dir, "Output directory");

  std::vector<const char*> argv{"srd"};
  for (const auto& s : args) argv.push_back(s.c_str());
  std::string command = args.empty() ? "srd" : args.front();
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << command << ": usage: " << one_line(e.what()) << '\n';
    return 2;
  }

  Output o{out, err};
  try {
    if (*train) cmd_train(ta, o);
    else if (*sample) cmd_sample(sa, o);
    else if (*fam) cmd_fam(fa, o);
    else if (*eval) cmd_eval(ea, o);
    else if (*inpaint) cmd_inpaint(ia, o);
    else if (*compare) cmd_compare(ca, o);
  } catch (const DivergenceError& e) {
    err << "error: " << command << ": diverged: " << one_line(e.what()) << '\n';
    return 3;
  } catch (const std::exception& e) {
    err << "error: " << command << ": " << one_line(e.what()) << '\n';
    return 1;
  }
  return 0;
}

}  // namespace srd::cli
