#pragma once

#include <filesystem>
#include <vector>

#include "srd/maps.hpp"

namespace srd {

// On-disk map: magic "FAM1", u32 height, u32 width, u32 flags (bit 0 = binary),
// then height*width float32 values, all little-endian.
struct StoredMap {
  int height = 0;
  int width = 0;
  bool binary = false;
  std::vector<double> values;
};

void write_map_file(const std::filesystem::path& path, int height, int width, const std::vector<double>& values,
                    bool binary);
StoredMap read_map_file(const std::filesystem::path& path);

template <typename Tag>
void write_map_file(const std::filesystem::path& path, const SpatialMap<Tag>& m, bool binary = false) {
  write_map_file(path, m.height(), m.width(), m.values(), binary);
}

}  // namespace srd
