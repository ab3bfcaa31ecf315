#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "srd/nn/tensor.hpp"

namespace srd {

// Face-like grayscale images [n,1,r,r] in [-1,1]: textured background, elliptic
// head, two dark eyes in the upper half and a mouth in the lower half.
nn::Tensor<float> gen_toy_faces(int n, int resolution, std::uint64_t seed);

// 8-bit raster <-> model range. Byte 127 is exactly 0; 0 and 254 are -1 and 1
// (255 decodes to 1 as well).
float byte_to_unit(std::uint8_t b);
std::uint8_t unit_to_byte(float x);

struct RasterImage {
  int width = 0;
  int height = 0;
  int channels = 0;  // 1 (P5) or 3 (P6)
  std::vector<std::uint8_t> pixels;  // row-major, interleaved channels
};

RasterImage read_pnm(const std::filesystem::path& path);
void write_pnm(const std::filesystem::path& path, const RasterImage& image);

// Converts image b of a [B,C,H,W] batch (C = 1 or 3) to a raster.
RasterImage to_raster(const nn::Tensor<float>& batch, int b);
// Tiles a batch into a grid raster with `cols` columns and a 1-pixel gap.
RasterImage tile_grid(const nn::Tensor<float>& batch, int cols);

// Area-average resize of a single-plane image.
std::vector<double> resize_area(const std::vector<double>& src, int sh, int sw, int dh, int dw);

struct FolderLoad {
  nn::Tensor<float> images;           // [n, channels, r, r]
  std::vector<std::string> files;     // accepted, lexicographic
  std::vector<std::string> errors;    // "<file>: <reason>" per rejected file
};

// Loads every .pgm/.ppm/.pnm file in lexicographic order, converting to the
// requested channel count and resizing to resolution x resolution.
// Throws only when no file could be loaded.
FolderLoad load_folder(const std::filesystem::path& dir, int resolution, int channels = 1);

}  // namespace srd
