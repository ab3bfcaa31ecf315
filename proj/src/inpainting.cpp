#include "srd/inpainting.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace srd {

std::string mask_kind_name(MaskKind kind) {
  switch (kind) {
    case MaskKind::Wide: return "wide";
    case MaskKind::Narrow: return "narrow";
    case MaskKind::AlternatingLines: return "alternating";
  }
  return "?";
}

MaskKind parse_mask_kind(const std::string& name) {
  if (name == "wide") return MaskKind::Wide;
  if (name == "narrow") return MaskKind::Narrow;
  if (name == "alternating" || name == "alternating-lines") return MaskKind::AlternatingLines;
  throw std::invalid_argument("unknown mask kind '" + name + "' (expected wide, narrow or alternating)");
}

double unknown_fraction(const Mask& m) {
  double unknown = 0;
  for (double v : m.values()) unknown += v == 0.0;
  return unknown / static_cast<double>(m.size());
}

namespace {

// Random polyline of 1-4 segments stamped with a disk of the given radius.
void stamp_stroke(Mask& m, double radius, Rng& rng) {
  const int h = m.height(), w = m.width();
  double y = rng.uniform() * h, x = rng.uniform() * w;
  const int segments = 1 + static_cast<int>(rng.below(4));
  double angle = rng.uniform() * 6.283185307179586;
  for (int s = 0; s < segments; ++s) {
    angle += (rng.uniform() - 0.5) * 2.0;
    const double len = (0.25 + 0.5 * rng.uniform()) * std::min(h, w);
    const double ny = y + len * std::sin(angle), nx = x + len * std::cos(angle);
    const int pts = std::max(2, static_cast<int>(std::ceil(len * 2)));
    for (int p = 0; p <= pts; ++p) {
      const double cy = y + (ny - y) * p / pts, cx = x + (nx - x) * p / pts;
      for (int i = std::max(0, static_cast<int>(cy - radius - 1)); i <= std::min(h - 1, static_cast<int>(cy + radius + 1)); ++i)
        for (int j = std::max(0, static_cast<int>(cx - radius - 1)); j <= std::min(w - 1, static_cast<int>(cx + radius + 1)); ++j)
          if ((i + 0.5 - cy) * (i + 0.5 - cy) + (j + 0.5 - cx) * (j + 0.5 - cx) <= radius * radius) m(i, j) = 0.0;
    }
    y = std::clamp(ny, 0.0, h - 1e-9);
    x = std::clamp(nx, 0.0, w - 1e-9);
  }
}

Mask stroke_mask(int h, int w, double lo, double hi, double min_radius, double max_radius, Rng& rng) {
  for (;;) {
    Mask m(h, w, 1.0);
    const double target = lo + (hi - lo) * (0.1 + 0.8 * rng.uniform());
    int rejected = 0;
    while (unknown_fraction(m) < target && rejected < 50) {
      Mask trial = m;
      stamp_stroke(trial, min_radius + (max_radius - min_radius) * rng.uniform(), rng);
      if (unknown_fraction(trial) <= hi) m = std::move(trial);
      else ++rejected;
    }
    const double f = unknown_fraction(m);
    if (f >= lo && f <= hi) return m;
  }
}

}  // namespace

Mask make_mask(MaskKind kind, int h, int w, Rng& rng) {
  if (h < 8 || w < 8) throw std::invalid_argument("make_mask: h and w must be >= 8");
  const double s = std::min(h, w);
  switch (kind) {
    case MaskKind::AlternatingLines: {
      Mask m(h, w, 1.0);
      for (int i = 1; i < h; i += 2)
        for (int j = 0; j < w; ++j) m(i, j) = 0.0;
      return m;
    }
    case MaskKind::Wide: return stroke_mask(h, w, 0.30, 0.50, 0.08 * s, 0.14 * s, rng);
    case MaskKind::Narrow: return stroke_mask(h, w, 0.05, 0.15, 0.5, std::max(0.75, 0.03 * s), rng);
  }
  throw std::invalid_argument("make_mask: unknown kind");
}

std::vector<int> repaint_schedule(int T, int jump_len, int jump_n) {
  if (T < 1 || jump_len < 1 || jump_n < 0) throw std::invalid_argument("repaint_schedule: invalid arguments");
  std::map<int, int> jumps;
  for (int j = 0; j < T - jump_len; j += jump_len) jumps[j] = jump_n;
  std::vector<int> ts{T - 1};
  int t = T - 1;
  while (t >= 0) {
    --t;
    ts.push_back(t);
    if (t >= 0) {
      auto it = jumps.find(t);
      if (it != jumps.end() && it->second > 0) {
        --it->second;
        for (int i = 0; i < jump_len; ++i) ts.push_back(++t);
      }
    }
  }
  return ts;
}

}  // namespace srd
