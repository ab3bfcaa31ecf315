#include "srd/checkpoint.hpp"

#include <stdexcept>

#include "srd/binary_io.hpp"

namespace srd {

namespace {

constexpr char kMagic[4] = {'S', 'R', 'D', 'F'};

std::uint64_t fnv1a(const std::uint8_t* p, std::size_t n) {
  std::uint64_t h = 1469598103934665603ull;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace

const std::string& Container::meta_at(const std::string& key) const {
  const auto it = meta.find(key);
  if (it == meta.end()) throw std::runtime_error(kind + " checkpoint has no '" + key + "' entry");
  return it->second;
}

const Blob& Container::blob_at(const std::string& name) const {
  const auto it = blobs.find(name);
  if (it == blobs.end()) throw std::runtime_error(kind + " checkpoint has no '" + name + "' blob");
  return it->second;
}

std::vector<std::uint8_t> encode_container(const Container& c) {
  bin::Writer w;
  w.raw(kMagic, 4);
  w.u32(kCheckpointVersion);
  w.str(c.kind);
  w.u32(static_cast<std::uint32_t>(c.meta.size()));
  for (const auto& [k, v] : c.meta) {
    w.str(k);
    w.str(v);
  }
  w.u32(static_cast<std::uint32_t>(c.blobs.size()));
  for (const auto& [name, b] : c.blobs) {
    if (b.data.size() != nn::shape_size(b.shape))
      throw std::invalid_argument("blob '" + name + "' holds " + std::to_string(b.data.size()) + " values for shape " +
                                  nn::shape_string(b.shape));
    w.str(name);
    w.u32(static_cast<std::uint32_t>(b.shape.size()));
    for (int d : b.shape) w.u32(static_cast<std::uint32_t>(d));
    for (float v : b.data) w.f32(v);
  }
  w.u32(static_cast<std::uint32_t>(c.rng.size()));
  for (const auto& [k, v] : c.rng) {
    w.str(k);
    w.str(v);
  }
  std::vector<std::uint8_t> bytes = w.bytes();
  bin::Writer tail;
  tail.u64(fnv1a(bytes.data(), bytes.size()));
  bytes.insert(bytes.end(), tail.bytes().begin(), tail.bytes().end());
  return bytes;
}

Container decode_container(const std::vector<std::uint8_t>& bytes, const std::string& context) {
  bin::Reader r(bytes.data(), bytes.size(), context);
  char magic[4];
  r.raw(magic, 4);
  if (std::string(magic, 4) != std::string(kMagic, 4)) r.fail("bad magic (not an SRDF checkpoint)");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    r.fail("unsupported format version " + std::to_string(version) + " (expected " + std::to_string(kCheckpointVersion) + ")");
  if (bytes.size() < 16) r.fail("file too short");
  bin::Reader hash_reader(bytes.data() + bytes.size() - 8, 8, context);
  if (hash_reader.u64() != fnv1a(bytes.data(), bytes.size() - 8)) r.fail("checksum mismatch (file is corrupted)");
  bin::Reader body(bytes.data(), bytes.size() - 8, context);
  body.raw(magic, 4);
  body.u32();
  Container c;
  c.kind = body.str();
  for (std::uint32_t n = body.u32(), i = 0; i < n; ++i) {
    std::string k = body.str();
    c.meta[k] = body.str(1u << 26);
  }
  for (std::uint32_t n = body.u32(), i = 0; i < n; ++i) {
    std::string name = body.str();
    Blob b;
    const std::uint32_t rank = body.u32();
    if (rank > 8) body.fail("blob '" + name + "' has rank " + std::to_string(rank));
    std::size_t count = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      const std::uint32_t v = body.u32();
      if (v < 1 || v > (1u << 28)) body.fail("blob '" + name + "' has a bad dimension");
      b.shape.push_back(static_cast<int>(v));
      count *= v;
    }
    if (count * 4 > body.remaining()) body.fail("blob '" + name + "' runs past the end of the file");
    b.data.resize(count);
    for (float& v : b.data) v = body.f32();
    c.blobs[name] = std::move(b);
  }
  for (std::uint32_t n = body.u32(), i = 0; i < n; ++i) {
    std::string k = body.str();
    c.rng[k] = body.str(1u << 24);
  }
  if (body.remaining() != 0) body.fail("trailing bytes after the rng section");
  return c;
}

void save_container(const std::filesystem::path& path, const Container& c) {
  // Write-then-rename so an interrupted save never clobbers the previous file.
  const auto tmp = path.string() + ".tmp";
  bin::write_file(tmp, encode_container(c));
  std::filesystem::rename(tmp, path);
}

Container load_container(const std::filesystem::path& path) {
  return decode_container(bin::read_file(path.string()), path.string());
}

}  // namespace srd
