#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mimnet/tensor.hpp"

namespace mimnet {

inline constexpr char kCheckpointMagic[4] = {'M', 'I', 'M', 'N'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Named tensors plus the embedding dimension they were built for.
struct ModelBundle {
  std::uint32_t dim = 0;
  std::vector<std::pair<std::string, Tensor>> tensors;

  void put(std::string name, Tensor value);
  const Tensor* find(const std::string& name) const;
  const Tensor& get(const std::string& name) const;
};

// Layout, all integers and floats little-endian:
//   "MIMN" | u32 version | u32 dim | u32 tensor count
//   per tensor: u32 name length | name bytes | u32 rank | u64 extents...
//   then each tensor's values as row-major f64, in manifest order.
void save_checkpoint(const ModelBundle& bundle, const std::filesystem::path& path);

/// Throws FormatError on bad magic, unknown version, truncation, trailing
/// bytes, or when `expected_dim` is given and differs from the header.
ModelBundle load_checkpoint(const std::filesystem::path& path, std::optional<std::uint32_t> expected_dim = std::nullopt);

}  // namespace mimnet
