// Copyright 2026 The AFIU Authors
// SPDX-License-Identifier: Apache-2.0

// Loss, optimiser and the stage/transfer training loops.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "afiu/checkpoint.hpp"
#include "afiu/data.hpp"
#include "afiu/network.hpp"

namespace afiu::training {

enum class Reduction { sum, mean };

inline constexpr double kBceEpsilon = 1e-7;

/// Pixelwise binary cross-entropy with predictions clamped to [eps, 1 - eps].
/// The clamp is straight-through: saturated predictions still receive the
/// gradient evaluated at the clamp boundary.
template <typename T>
Var<T> bce_loss(const Var<T>& pred, const Tensor<T>& gt, Reduction reduction);

struct OptimConfig {
  double learning_rate = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;
  int64_t batch_size = 8;
  int64_t epochs = 150;
  uint64_t seed = 0;

  void validate() const;
};

inline constexpr int64_t kPretrainEpochs = 150;
inline constexpr int64_t kFinetuneEpochs = 200;

template <typename T>
class Adam {
 public:
  Adam(std::vector<nn::NamedVar<T>> params, const OptimConfig& cfg);

  /// Applies one update from the gradients currently held by the parameters.
  /// Parameters without a gradient are left untouched.
  void step();

  int64_t steps() const { return steps_; }
  const std::vector<nn::NamedVar<T>>& params() const { return params_; }

  /// Moments as "adam.m.<name>" / "adam.v.<name>" tensors.
  void export_state(Checkpoint& out) const;
  void import_state(const Checkpoint& in, int64_t steps);

 private:
  std::vector<nn::NamedVar<T>> params_;
  std::vector<Tensor<T>> m_, v_;
  OptimConfig cfg_;
  int64_t steps_ = 0;
};

struct LossRecord {
  int64_t epoch = 0;      // 1-based
  int64_t iteration = 0;  // 1-based, counts optimiser steps
  double loss = 0.0;
};

std::string format_loss_row(const LossRecord& r);
void write_loss_log(const std::filesystem::path& path, const std::vector<LossRecord>& log);
/// Reports malformed lines as "<path>:<line>: ...".
std::vector<LossRecord> read_loss_log(const std::filesystem::path& path);

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct StageConfig {
  std::string stage_tag = "scratch";
  OptimConfig optim;
  data::AugmentConfig augment;
  /// Receives model.ckpt, loss.csv and state.ckpt.
  std::filesystem::path out_dir;
  /// Checkpoint to initialise every parameter and buffer from.
  std::optional<std::filesystem::path> init;
  /// state.ckpt of an interrupted run with the same configuration.
  std::optional<std::filesystem::path> resume;
  std::string config_digest;
  /// Extra key/value pairs stored in the checkpoint metadata.
  std::map<std::string, std::string> metadata;
  /// Stop after the first iteration whose loss is at most this (0 = off).
  /// Only the convergence measurements use it; budgets are otherwise fixed.
  double stop_below = 0.0;
  std::function<void(const LossRecord&)> on_iteration;
};

struct StageResult {
  std::filesystem::path checkpoint;
  CheckpointMetadata meta;
  std::vector<LossRecord> log;
};

/// Shuffled mini-batch Adam training on `corpus`. Writes the loss log and a
/// resumable state at the end of every epoch, and the final checkpoint.
StageResult train_stage(AfiuNet<float>& model, const std::vector<data::Sample>& corpus, const StageConfig& cfg);

/// Epoch e visits the corpus in this order.
std::vector<size_t> epoch_order(size_t n, uint64_t seed, int64_t epoch);

struct TransferConfig {
  StageConfig pretrain;  // tag forced to sod-pretrained, init ignored
  StageConfig finetune;  // tag forced to dbd-finetuned, init = pretrain output
};

struct TransferResult {
  StageResult pretrain;
  StageResult finetune;
};

/// Stage 1 on the SOD corpus from the model's current state, then stage 2 on
/// the DBD corpus initialised from the stage-1 checkpoint.
TransferResult two_stage_transfer(AfiuNet<float>& model, const std::vector<data::Sample>& sod,
                                  const std::vector<data::Sample>& dbd, TransferConfig cfg);

/// First iteration whose loss is <= threshold, if any.
std::optional<int64_t> iterations_to_reach(const std::vector<LossRecord>& log, double threshold);

}  // namespace afiu::training
