// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "fairgen/tensor.hpp"

namespace fairgen {

// Single-file binary checkpoint. Layout (all integers little-endian):
//   "CFFE" | u32 version | u64 config_hash | u64 vocab_hash | u32 n_entries
//   then per entry: u32 name_len | name | u32 ndim | ndim x u64 dims
//   then the raw f64 payloads in entry order.
struct CheckpointMeta {
  std::uint32_t version = 1;
  std::uint64_t config_hash = 0;
  std::uint64_t vocab_hash = 0;
};

struct Checkpoint {
  CheckpointMeta meta;
  std::vector<std::pair<std::string, Tensor>> entries;

  const Tensor* find(const std::string& name) const;
  // ContractError when the entry is absent.
  const Tensor& at(const std::string& name) const;
  bool has(const std::string& name) const { return find(name) != nullptr; }
};

void save_checkpoint(const std::filesystem::path& path,
                     const CheckpointMeta& meta,
                     const std::vector<std::pair<std::string, Tensor>>& entries);

// ArtifactError for a missing, truncated, or foreign file.
Checkpoint load_checkpoint(const std::filesystem::path& path);

// ConfigError when the artifact was produced under a different model
// configuration or vocabulary than the one in hand.
void require_hashes(const Checkpoint& ckpt, std::uint64_t config_hash,
                    std::uint64_t vocab_hash);

}  // namespace fairgen
