// Copyright 2026 The AFIU Authors
// SPDX-License-Identifier: Apache-2.0

// Single-file tensor container. Layout is described in docs/checkpoint-format.md.

#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "afiu/nn.hpp"

namespace afiu {

struct CheckpointMetadata {
  std::string stage = "scratch";  // sod-pretrained | dbd-finetuned | scratch
  int64_t epochs = 0;
  int64_t iterations = 0;
  uint64_t seed = 0;
  std::string config_digest;
  std::string created;  // UTC, ISO-8601
  /// One entry per completed stage, oldest first, e.g. "sod-pretrained:150:runs/sod/model.ckpt".
  std::vector<std::string> lineage;
  std::map<std::string, std::string> extra;
};

struct Checkpoint {
  CheckpointMetadata meta;
  std::vector<std::pair<std::string, Tensor<float>>> tensors;  // file order
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

std::string utc_timestamp();

/// Snapshot of all parameters and buffers of a registry.
template <typename T>
Checkpoint capture(const nn::Registry<T>& reg, CheckpointMetadata meta);

/// Replaces every registry tensor. The name sets must match exactly; the
/// error lists missing and unexpected names.
template <typename T>
void restore(nn::Registry<T>& reg, const Checkpoint& ckpt);

/// Replaces only the registry tensors whose names start with `prefix`.
template <typename T>
void restore_prefix(nn::Registry<T>& reg, const Checkpoint& ckpt, const std::string& prefix);

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const nn::Registry<T>& reg, CheckpointMetadata meta);

template <typename T>
CheckpointMetadata load_checkpoint(const std::filesystem::path& path, nn::Registry<T>& reg);

}  // namespace afiu
