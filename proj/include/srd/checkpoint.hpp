#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "srd/nn/graph.hpp"

namespace srd {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Blob {
  nn::Shape shape;
  std::vector<float> data;
};

// Versioned binary container, little-endian throughout:
//   "SRDF" | u32 version | str kind
//   u32 n_meta  { str key | str value }
//   u32 n_blobs { str name | u32 rank | u32 dim[rank] | f32 data[prod(dim)] }
//   u32 n_rng   { str name | str engine state }
//   u64 FNV-1a hash of every preceding byte
// where str is u32 length + bytes.
struct Container {
  std::string kind;
  std::map<std::string, std::string> meta;
  std::map<std::string, Blob> blobs;
  std::map<std::string, std::string> rng;

  const std::string& meta_at(const std::string& key) const;
  const Blob& blob_at(const std::string& name) const;
};

std::vector<std::uint8_t> encode_container(const Container& c);
Container decode_container(const std::vector<std::uint8_t>& bytes, const std::string& context = "checkpoint");

void save_container(const std::filesystem::path& path, const Container& c);
Container load_container(const std::filesystem::path& path);

// Stores every parameter as "<prefix><name>".
template <typename T>
void put_parameters(Container& c, const std::string& prefix, const nn::ParameterSet<T>& params) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    Blob b{params[i].value.shape(), {}};
    for (T v : params[i].value.storage()) b.data.push_back(static_cast<float>(v));
    c.blobs[prefix + params[i].name] = std::move(b);
  }
}

// Copies "<prefix><name>" into each parameter; missing blobs and shape
// differences are reported by name.
template <typename T>
void get_parameters(const Container& c, const std::string& prefix, nn::ParameterSet<T>& params) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    const auto it = c.blobs.find(prefix + p.name);
    if (it == c.blobs.end()) throw std::runtime_error("checkpoint is missing parameter '" + prefix + p.name + "'");
    if (it->second.shape != p.value.shape())
      throw std::runtime_error("shape mismatch for parameter '" + prefix + p.name + "': checkpoint " +
                               nn::shape_string(it->second.shape) + ", model " + nn::shape_string(p.value.shape()));
    for (std::size_t k = 0; k < it->second.data.size(); ++k) p.value[k] = static_cast<T>(it->second.data[k]);
  }
}

}  // namespace srd
