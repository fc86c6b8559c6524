// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "infillgen/tensor/tensor.hpp"

namespace infillgen::tensor {

/// Named tensors plus string metadata. Byte layout: docs/checkpoint_format.md.
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  std::map<std::string, std::string> metadata;
  std::vector<std::pair<std::string, Tensor>> tensors;

  /// nullptr when absent.
  const Tensor* find(const std::string& name) const;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
/// Throws DataError for missing files, bad magic, unknown versions, or a
/// payload checksum mismatch.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace infillgen::tensor
