#pragma once

#include <array>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "srd/data.hpp"
#include "srd/maps.hpp"

namespace srd::cli {

// Piecewise-linear blue (0) -> yellow (0.5) -> red (1); inputs clamped to [0, 1].
std::array<std::uint8_t, 3> colormap(double v);

// RGB rendering of a map.
RasterImage render_heatmap(const FlawActivationMap& fam);

// 0.6 * image + 0.4 * colormap(fam), per channel, rounded and clamped.
// `image` is [C,H,W] or [1,C,H,W] with C = 1 (replicated to gray) or 3.
RasterImage render_overlay(const nn::Tensor<float>& image, const FlawActivationMap& fam);

struct GridCell {
  int row = 0;
  int col = 0;
  double score = 0;  // mean map value inside the cell
};

// Splits the map into grid x grid cells (boundaries floor(i * size / grid)) and
// returns the k highest-scoring cells; ties keep row-major order.
std::vector<GridCell> top_cells(const FlawActivationMap& fam, int grid, int k);

// Runs one command. args excludes the program name. Artifact paths go to
// `out`, one per line; failures produce a single "error: ..." line on `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace srd::cli
