// Copyright 2026 The AFIU Authors
// SPDX-License-Identifier: Apache-2.0

// Run configuration: a flat `key = value` text format with dotted keys,
// merged from a file and command-line overrides, persisted next to every
// run's outputs and summarised by a digest stored in checkpoints.

#pragma once

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "afiu/data.hpp"
#include "afiu/network.hpp"
#include "afiu/training.hpp"

namespace afiu {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  std::string profile = "standard";  // standard | tiny
  AfiuConfig model = AfiuConfig::standard();
  bool dilated_auto = true;  // derive dilated levels from input size and depths
  training::OptimConfig optim;
  data::AugmentConfig augment;

  std::string corpus;
  std::string sod_corpus;
  std::string dbd_corpus;
  std::string image_dir = "images";
  std::string mask_dir = "masks";

  std::string init;
  int64_t pretrain_epochs = training::kPretrainEpochs;
  int64_t finetune_epochs = training::kFinetuneEpochs;
  int64_t scratch_epochs = training::kFinetuneEpochs;

  int64_t synth_count = 8;
  uint64_t synth_seed = 0;
  int64_t synth_size = 320;
  data::SynthStyle synth_style = data::SynthStyle::bokeh;

  std::string out;
  int threads = 0;  // 0 = library default

  /// Model with dilated levels resolved.
  AfiuConfig resolved_model() const;
  /// Augmentation targeting the model input size.
  data::AugmentConfig resolved_augment() const;

  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  static const std::vector<std::string>& keys();

  /// Every key in canonical order, one `key = value` line each.
  std::string to_text() const;
  /// 16 hex digits of FNV-1a over to_text() without the run.* keys.
  std::string digest() const;
  void validate() const;

  /// Model keys, as stored in checkpoint metadata.
  std::map<std::string, std::string> model_entries() const;
  static RunConfig from_model_entries(const std::map<std::string, std::string>& entries);

  static RunConfig parse(const std::string& text, const std::string& source = "<config>");
  static RunConfig load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
};

/// Parses `key=value`; used for --set overrides.
std::pair<std::string, std::string> split_assignment(const std::string& text);

uint64_t fnv1a(const std::string& bytes);

/// $AFIU_OUTPUT_ROOT if set and non-empty, else "runs".
std::filesystem::path default_output_root();

}  // namespace afiu
