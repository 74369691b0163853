// SPDX-FileCopyrightText: 2026 The PointForge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pointforge/tensor.hpp"

namespace pf::nn {

enum class DType : std::uint8_t { F32 = 0, F64 = 1 };

struct CheckpointTensor {
  std::string name;
  Shape shape;
  DType dtype = DType::F32;
  std::vector<double> values;  // widened; float payloads round-trip exactly
};

struct Checkpoint {
  std::vector<CheckpointTensor> tensors;
  std::uint64_t payload_checksum = 0;
};

// Layout ("PFCKPT v1"): magic line, u64 tensor count, then per tensor
// u32 name length + bytes, u32 rank, u64 extents, u8 dtype; then the raw
// little-endian payloads in manifest order; then the u64 FNV-1a checksum
// of the payload bytes.
std::uint64_t save_checkpoint(const std::filesystem::path& path, std::span<const CheckpointTensor> tensors);
Checkpoint load_checkpoint_file(const std::filesystem::path& path);

template <class T>
std::vector<CheckpointTensor> to_checkpoint(const std::vector<std::pair<std::string, Tensor<T>>>& state) {
  std::vector<CheckpointTensor> out;
  out.reserve(state.size());
  for (const auto& [name, t] : state) {
    CheckpointTensor c;
    c.name = name;
    c.shape = t.shape();
    c.dtype = sizeof(T) == 4 ? DType::F32 : DType::F64;
    c.values.assign(t.data().begin(), t.data().end());
    out.push_back(std::move(c));
  }
  return out;
}

struct LoadReport {
  std::vector<std::string> loaded;
  std::vector<std::string> skipped;  // in the file but not loaded
  std::vector<std::string> missing;  // in the model but absent or mismatched in the file
};

/// Copies matching name+shape pairs into `state`. Strict mode requires the
/// two name sets and every shape to agree and throws listing offenders.
template <class T>
LoadReport load_state(const std::vector<std::pair<std::string, Tensor<T>>>& state, const Checkpoint& ckpt,
                      bool strict);

extern template LoadReport load_state(const std::vector<std::pair<std::string, Tensor<float>>>&, const Checkpoint&,
                                      bool);
extern template LoadReport load_state(const std::vector<std::pair<std::string, Tensor<double>>>&, const Checkpoint&,
                                      bool);

}  // namespace pf::nn
