#include "srd/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "srd/rng.hpp"

namespace srd {

namespace {

struct Ellipse {
  double cy, cx, ry, rx;
  bool contains(double y, double x) const {
    const double a = (y - cy) / ry, b = (x - cx) / rx;
    return a * a + b * b <= 1.0;
  }
};

}  // namespace

nn::Tensor<float> gen_toy_faces(int n, int resolution, std::uint64_t seed) {
  if (resolution != 16 && resolution != 32)
    throw std::invalid_argument("gen_toy_faces: resolution must be 16 or 32, got " + std::to_string(resolution));
  if (n < 1) throw std::invalid_argument("gen_toy_faces: n must be >= 1");
  const int r = resolution;
  nn::Tensor<float> out({n, 1, r, r});
  Rng rng(seed);
  auto U = [&](double lo, double hi) { return lo + (hi - lo) * rng.uniform(); };
  constexpr int kSuper = 4;  // supersampling per axis
  for (int b = 0; b < n; ++b) {
    const double bg = U(0.38, 0.52);
    const double tex_amp = U(0.01, 0.04), tex_fy = U(0.5, 2.0), tex_fx = U(0.5, 2.0), tex_ph = U(0, 6.283);
    const double skin = U(0.68, 0.95);
    const Ellipse head{r / 2.0 + U(-0.06, 0.06) * r, r / 2.0 + U(-0.06, 0.06) * r, U(0.38, 0.44) * r,
                       U(0.30, 0.36) * r};
    const double eye_dark = U(0.0, 0.12), eye_r = U(0.085, 0.105) * r;
    const double eye_y = head.cy - U(0.28, 0.34) * head.ry, eye_dx = U(0.44, 0.52) * head.rx;
    const Ellipse eye_l{eye_y, head.cx - eye_dx, eye_r, eye_r}, eye_r_{eye_y, head.cx + eye_dx, eye_r, eye_r};
    const Ellipse mouth{head.cy + U(0.42, 0.52) * head.ry, head.cx, U(0.045, 0.07) * r, U(0.32, 0.45) * head.rx};
    const double mouth_dark = U(0.15, 0.32);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < r; ++j) {
        double acc = 0;
        for (int si = 0; si < kSuper; ++si)
          for (int sj = 0; sj < kSuper; ++sj) {
            const double y = i + (si + 0.5) / kSuper, x = j + (sj + 0.5) / kSuper;
            double v = bg + tex_amp * std::sin(tex_fy * y * 6.283 / r * 3 + tex_fx * x * 6.283 / r * 2 + tex_ph);
            if (head.contains(y, x)) v = skin;
            if (eye_l.contains(y, x) || eye_r_.contains(y, x)) v = eye_dark;
            if (mouth.contains(y, x)) v = mouth_dark;
            acc += v;
          }
        const double px = acc / (kSuper * kSuper) + U(-0.015, 0.015);
        out[(static_cast<std::size_t>(b) * r + i) * r + j] = static_cast<float>(std::clamp(2.0 * px - 1.0, -1.0, 1.0));
      }
  }
  return out;
}

float byte_to_unit(std::uint8_t b) { return std::min(1.0f, (static_cast<float>(b) - 127.0f) / 127.0f); }

std::uint8_t unit_to_byte(float x) {
  const float c = std::clamp(std::isfinite(x) ? x : 0.0f, -1.0f, 1.0f);
  return static_cast<std::uint8_t>(std::lround(c * 127.0f + 127.0f));
}

RasterImage read_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open");
  std::string magic;
  in >> magic;
  if (magic != "P5" && magic != "P6") throw std::runtime_error("not a binary PGM/PPM (magic '" + magic + "')");
  auto next_int = [&]() {
    for (;;) {
      in >> std::ws;
      if (in.peek() == '#') {
        std::string skip;
        std::getline(in, skip);
        continue;
      }
      long v = -1;
      if (!(in >> v)) throw std::runtime_error("truncated header");
      return v;
    }
  };
  const long w = next_int(), h = next_int(), maxval = next_int();
  if (w < 1 || h < 1 || w > 65536 || h > 65536) throw std::runtime_error("bad dimensions");
  if (maxval != 255) throw std::runtime_error("maxval must be 255, got " + std::to_string(maxval));
  in.get();  // single whitespace before the raster
  RasterImage img;
  img.width = static_cast<int>(w);
  img.height = static_cast<int>(h);
  img.channels = magic == "P5" ? 1 : 3;
  img.pixels.resize(static_cast<std::size_t>(w) * h * img.channels);
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.pixels.size())) throw std::runtime_error("truncated raster");
  return img;
}

void write_pnm(const std::filesystem::path& path, const RasterImage& image) {
  if (image.channels != 1 && image.channels != 3) throw std::invalid_argument("write_pnm: channels must be 1 or 3");
  if (image.pixels.size() != static_cast<std::size_t>(image.width) * image.height * image.channels)
    throw std::invalid_argument("write_pnm: pixel buffer size mismatch");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << (image.channels == 1 ? "P5" : "P6") << "\n" << image.width << " " << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()), static_cast<std::streamsize>(image.pixels.size()));
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

RasterImage to_raster(const nn::Tensor<float>& batch, int b) {
  if (batch.rank() != 4 || (batch.dim(1) != 1 && batch.dim(1) != 3))
    throw std::invalid_argument("to_raster: expected [B,1|3,H,W]");
  const int C = batch.dim(1), H = batch.dim(2), W = batch.dim(3);
  RasterImage img{W, H, C, std::vector<std::uint8_t>(static_cast<std::size_t>(W) * H * C)};
  const float* src = batch.data() + static_cast<std::size_t>(b) * C * H * W;
  for (int c = 0; c < C; ++c)
    for (int k = 0; k < H * W; ++k)
      img.pixels[static_cast<std::size_t>(k) * C + c] = unit_to_byte(src[static_cast<std::size_t>(c) * H * W + k]);
  return img;
}

RasterImage tile_grid(const nn::Tensor<float>& batch, int cols) {
  const int B = batch.dim(0), C = batch.dim(1), H = batch.dim(2), W = batch.dim(3);
  cols = std::max(1, std::min(cols, B));
  const int rows = (B + cols - 1) / cols;
  RasterImage grid{cols * (W + 1) - 1, rows * (H + 1) - 1, C, {}};
  grid.pixels.assign(static_cast<std::size_t>(grid.width) * grid.height * C, 0);
  for (int b = 0; b < B; ++b) {
    const RasterImage one = to_raster(batch, b);
    const int oy = (b / cols) * (H + 1), ox = (b % cols) * (W + 1);
    for (int i = 0; i < H; ++i)
      std::copy_n(one.pixels.data() + static_cast<std::size_t>(i) * W * C, static_cast<std::size_t>(W) * C,
                  grid.pixels.data() + (static_cast<std::size_t>(oy + i) * grid.width + ox) * C);
  }
  return grid;
}

std::vector<double> resize_area(const std::vector<double>& src, int sh, int sw, int dh, int dw) {
  if (src.size() != static_cast<std::size_t>(sh) * sw) throw std::invalid_argument("resize_area: size mismatch");
  std::vector<double> out(static_cast<std::size_t>(dh) * dw);
  const double fy = static_cast<double>(sh) / dh, fx = static_cast<double>(sw) / dw;
  for (int i = 0; i < dh; ++i)
    for (int j = 0; j < dw; ++j) {
      const double y0 = i * fy, y1 = (i + 1) * fy, x0 = j * fx, x1 = (j + 1) * fx;
      double acc = 0, area = 0;
      for (int y = static_cast<int>(y0); y < sh && y < y1; ++y) {
        const double wy = std::min<double>(y + 1, y1) - std::max<double>(y, y0);
        if (wy <= 0) continue;
        for (int x = static_cast<int>(x0); x < sw && x < x1; ++x) {
          const double wx = std::min<double>(x + 1, x1) - std::max<double>(x, x0);
          if (wx <= 0) continue;
          acc += wy * wx * src[static_cast<std::size_t>(y) * sw + x];
          area += wy * wx;
        }
      }
      out[static_cast<std::size_t>(i) * dw + j] = acc / area;
    }
  return out;
}

FolderLoad load_folder(const std::filesystem::path& dir, int resolution, int channels) {
  if (resolution < 1) throw std::invalid_argument("load_folder: resolution must be positive");
  if (channels != 1 && channels != 3) throw std::invalid_argument("load_folder: channels must be 1 or 3");
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec)) throw std::runtime_error("load_folder: not a directory: " + dir.string());
  std::vector<std::filesystem::path> paths;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (ext == ".pgm" || ext == ".ppm" || ext == ".pnm") paths.push_back(entry.path());
  }
  std::sort(paths.begin(), paths.end(), [](const auto& a, const auto& b) { return a.filename().string() < b.filename().string(); });

  FolderLoad result;
  std::vector<float> data;
  const std::size_t plane = static_cast<std::size_t>(resolution) * resolution;
  for (const auto& p : paths) {
    RasterImage img;
    try {
      img = read_pnm(p);
    } catch (const std::exception& e) {
      result.errors.push_back(p.filename().string() + ": " + e.what());
      continue;
    }
    const std::size_t n = static_cast<std::size_t>(img.width) * img.height;
    std::vector<std::vector<double>> planes(static_cast<std::size_t>(img.channels), std::vector<double>(n));
    for (std::size_t k = 0; k < n; ++k)
      for (int c = 0; c < img.channels; ++c)
        planes[static_cast<std::size_t>(c)][k] = byte_to_unit(img.pixels[k * img.channels + c]);
    if (channels == 1 && img.channels == 3) {
      std::vector<double> y(n);
      for (std::size_t k = 0; k < n; ++k) y[k] = 0.299 * planes[0][k] + 0.587 * planes[1][k] + 0.114 * planes[2][k];
      planes = {std::move(y)};
    } else if (channels == 3 && img.channels == 1) {
      planes = {planes[0], planes[0], planes[0]};
    }
    for (const auto& pl : planes) {
      const auto rs = (img.height == resolution && img.width == resolution)
                          ? pl
                          : resize_area(pl, img.height, img.width, resolution, resolution);
      for (std::size_t k = 0; k < plane; ++k) data.push_back(static_cast<float>(rs[k]));
    }
    result.files.push_back(p.filename().string());
  }
  if (result.files.empty()) {
    std::string msg = "load_folder: no loadable images in " + dir.string();
    if (!result.errors.empty()) msg += " (" + result.errors.front() + ")";
    throw std::runtime_error(msg);
  }
  result.images = nn::Tensor<float>({static_cast<int>(result.files.size()), channels, resolution, resolution}, std::move(data));
  return result;
}

}  // namespace srd
