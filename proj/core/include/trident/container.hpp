#pragma once

// Binary container shared by model checkpoints and match indices:
//
//   <compact JSON header>\n<float32 little-endian blobs, in header order>
//
// The header always carries "format_version" and "tensors", a list of
// {"name", "shape": [rows, cols]} entries describing the blobs.

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "trident/autograd.hpp"

namespace trident {

inline constexpr int kContainerFormatVersion = 1;

struct NamedTensor {
  std::string name;
  ad::Matrix value;
};

struct Container {
  nlohmann::json header;  // without "tensors"; that list is derived
  std::vector<NamedTensor> tensors;

  const ad::Matrix& tensor(const std::string& name) const;  // throws if absent
};

void write_container(const std::filesystem::path& path, const Container& c);
Container read_container(const std::filesystem::path& path);

// Rounds every entry to the nearest float32, i.e. the precision a container
// stores.
ad::Matrix round_to_float(const ad::Matrix& m);

}  // namespace trident
