#include "srd/map_io.hpp"

#include <cmath>
#include <fstream>
#include <iterator>
#include <stdexcept>

#include "srd/binary_io.hpp"

namespace srd {

namespace bin {

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for " + path);
}

}  // namespace bin

namespace {
constexpr char kMagic[4] = {'F', 'A', 'M', '1'};
}

void write_map_file(const std::filesystem::path& path, int height, int width, const std::vector<double>& values,
                    bool binary) {
  if (height < 1 || width < 1 || values.size() != static_cast<std::size_t>(height) * width)
    throw std::invalid_argument("write_map_file: size mismatch");
  bin::Writer w;
  w.raw(kMagic, 4);
  w.u32(static_cast<std::uint32_t>(height));
  w.u32(static_cast<std::uint32_t>(width));
  w.u32(binary ? 1u : 0u);
  for (double v : values) {
    if (binary && v != 0.0 && v != 1.0) throw std::invalid_argument("write_map_file: binary map holds a non-binary value");
    w.f32(static_cast<float>(v));
  }
  bin::write_file(path.string(), w.bytes());
}

StoredMap read_map_file(const std::filesystem::path& path) {
  const auto bytes = bin::read_file(path.string());
  bin::Reader r(bytes.data(), bytes.size(), path.string());
  char magic[4];
  r.raw(magic, 4);
  if (std::string(magic, 4) != std::string(kMagic, 4)) r.fail("bad magic");
  StoredMap m;
  const std::uint32_t h = r.u32(), w = r.u32(), flags = r.u32();
  if (h < 1 || w < 1 || h > 1u << 15 || w > 1u << 15) r.fail("bad dimensions");
  if (flags > 1) r.fail("unknown flags");
  m.height = static_cast<int>(h);
  m.width = static_cast<int>(w);
  m.binary = flags & 1u;
  if (r.remaining() != static_cast<std::size_t>(h) * w * 4) r.fail("payload size does not match header");
  m.values.resize(static_cast<std::size_t>(h) * w);
  for (double& v : m.values) {
    v = r.f32();
    if (!std::isfinite(v)) r.fail("non-finite value");
    if (m.binary && v != 0.0 && v != 1.0) r.fail("binary map holds a non-binary value");
  }
  return m;
}

}  // namespace srd
