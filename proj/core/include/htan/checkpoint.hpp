#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "htan/tensor.hpp"

namespace htan {

/// Versioned container of named tensors.
///
/// Layout (all integers little-endian):
///   "HTANSPD" (7 bytes) | u32 format version | u32 tensor count |
///   per tensor: u32 name length, UTF-8 name, u32 rank, rank × u64 dims,
///               product(dims) × IEEE-754 binary64 values.
inline constexpr std::string_view kContainerMagic = "HTANSPD";
inline constexpr std::uint32_t kContainerVersion = 1;

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

using TensorBundle = std::vector<NamedTensor>;

void write_container(std::ostream& out, const TensorBundle& bundle);
/// Throws FormatError on a bad magic string, unknown version or truncation.
TensorBundle read_container(std::istream& in);

void save_container(const std::filesystem::path& path, const TensorBundle& bundle);
TensorBundle load_container(const std::filesystem::path& path);

/// Looks up a tensor by name; throws FormatError naming the missing field.
const Tensor& find_tensor(const TensorBundle& bundle, std::string_view name);

}  // namespace htan
