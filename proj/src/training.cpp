// Copyright 2026 The AFIU Authors
// SPDX-License-Identifier: Apache-2.0

#include "afiu/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

namespace afiu::training {

namespace fs = std::filesystem;

template <typename T>
Var<T> bce_loss(const Var<T>& pred, const Tensor<T>& gt, Reduction reduction) {
  if (pred.shape() != gt.shape()) {
    throw std::invalid_argument("bce_loss: prediction shape " + shape_to_string(pred.shape()) +
                                " does not match mask shape " + shape_to_string(gt.shape()));
  }
  if (gt.numel() == 0) throw std::invalid_argument("bce_loss: empty input");
  for (int64_t i = 0; i < gt.numel(); ++i) {
    if (gt[i] != T(0) && gt[i] != T(1)) {
      throw std::invalid_argument("bce_loss: mask value " + std::to_string(static_cast<double>(gt[i])) +
                                  " at element " + std::to_string(i) + " is not 0 or 1");
    }
  }
  const double eps = kBceEpsilon;
  const double scale = reduction == Reduction::mean ? 1.0 / static_cast<double>(gt.numel()) : 1.0;
  const auto clamped = [eps](T p) {
    const double v = static_cast<double>(p);
    return v < eps ? eps : (v > 1.0 - eps ? 1.0 - eps : v);  // NaN stays NaN
  };

  double total = 0.0;
  for (int64_t i = 0; i < gt.numel(); ++i) {
    const double p = clamped(pred.value()[i]);
    total -= gt[i] == T(1) ? std::log(p) : std::log1p(-p);
  }
  Tensor<T> out(Shape{1}, static_cast<T>(total * scale));

  return make_result<T>(std::move(out), {pred}, [gt, scale, clamped](Node<T>& self) {
    Tensor<T>& g = self.inputs[0]->grad_buffer();
    const double upstream = static_cast<double>(self.grad[0]) * scale;
    for (int64_t i = 0; i < g.numel(); ++i) {
      const double p = clamped(self.inputs[0]->value[i]);
      g[i] += static_cast<T>(upstream * (p - static_cast<double>(gt[i])) / (p * (1.0 - p)));
    }
  });
}

void OptimConfig::validate() const {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning rate must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw std::invalid_argument("Adam betas must lie in [0, 1)");
  }
  if (!(epsilon > 0.0)) throw std::invalid_argument("Adam epsilon must be > 0");
  if (weight_decay < 0.0) throw std::invalid_argument("weight decay must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  if (epochs < 0) throw std::invalid_argument("epoch budget must be >= 0");
}

template <typename T>
Adam<T>::Adam(std::vector<nn::NamedVar<T>> params, const OptimConfig& cfg) : params_(std::move(params)), cfg_(cfg) {
  cfg_.validate();
  for (const auto& p : params_) {
    m_.emplace_back(p.var.shape());
    v_.emplace_back(p.var.shape());
  }
}

template <typename T>
void Adam<T>::step() {
  ++steps_;
  const double b1 = cfg_.beta1, b2 = cfg_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  for (size_t k = 0; k < params_.size(); ++k) {
    Var<T>& var = params_[k].var;
    if (!var.has_grad()) continue;
    const Tensor<T>& grad = var.grad();
    Tensor<T>& w = var.mutable_value();
    Tensor<T>& m = m_[k];
    Tensor<T>& v = v_[k];
    for (int64_t i = 0; i < w.numel(); ++i) {
      double g = static_cast<double>(grad[i]);
      if (cfg_.weight_decay > 0.0) g += cfg_.weight_decay * static_cast<double>(w[i]);
      const double mi = b1 * static_cast<double>(m[i]) + (1.0 - b1) * g;
      const double vi = b2 * static_cast<double>(v[i]) + (1.0 - b2) * g * g;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      const double update = cfg_.learning_rate * (mi / c1) / (std::sqrt(vi / c2) + cfg_.epsilon);
      w[i] = static_cast<T>(static_cast<double>(w[i]) - update);
    }
  }
}

template <typename T>
void Adam<T>::export_state(Checkpoint& out) const {
  for (size_t k = 0; k < params_.size(); ++k) {
    out.tensors.emplace_back("adam.m." + params_[k].name, m_[k].template cast<float>());
    out.tensors.emplace_back("adam.v." + params_[k].name, v_[k].template cast<float>());
  }
}

template <typename T>
void Adam<T>::import_state(const Checkpoint& in, int64_t steps) {
  std::map<std::string, const Tensor<float>*> by_name;
  for (const auto& [name, t] : in.tensors) by_name[name] = &t;
  std::vector<Tensor<T>> m, v;
  for (const auto& p : params_) {
    for (const char* which : {"adam.m.", "adam.v."}) {
      auto it = by_name.find(which + p.name);
      if (it == by_name.end()) throw CheckpointError(std::string("training state lacks ") + which + p.name);
      if (it->second->shape() != p.var.shape()) throw CheckpointError("training state shape mismatch for " + p.name);
      (which[5] == 'm' ? m : v).push_back(it->second->template cast<T>());
    }
  }
  m_ = std::move(m);
  v_ = std::move(v);
  steps_ = steps;
}

std::string format_loss_row(const LossRecord& r) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "%lld,%lld,%.6f", static_cast<long long>(r.epoch),
                static_cast<long long>(r.iteration), r.loss);
  return buf;
}

namespace {

constexpr const char* kLossHeader = "epoch,iteration,loss";

void append_rows(std::ofstream& out, const std::vector<LossRecord>& log, size_t from) {
  for (size_t i = from; i < log.size(); ++i) out << format_loss_row(log[i]) << '\n';
  out.flush();
  if (!out) throw std::runtime_error("failed writing loss log");
}

}  // namespace

void write_loss_log(const fs::path& path, const std::vector<LossRecord>& log) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << kLossHeader << '\n';
  append_rows(out, log, 0);
}

std::vector<LossRecord> read_loss_log(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kLossHeader) {
    throw std::runtime_error(path.string() + ":1: expected header '" + kLossHeader + "'");
  }
  std::vector<LossRecord> log;
  for (int64_t lineno = 2; std::getline(in, line); ++lineno) {
    if (line.empty()) continue;
    LossRecord r;
    long long e = 0, it = 0;
    int consumed = 0;
    if (std::sscanf(line.c_str(), "%lld,%lld,%lf%n", &e, &it, &r.loss, &consumed) != 3 ||
        consumed != static_cast<int>(line.size())) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": malformed row '" + line + "'");
    }
    r.epoch = e;
    r.iteration = it;
    log.push_back(r);
  }
  return log;
}

std::vector<size_t> epoch_order(size_t n, uint64_t seed, int64_t epoch) {
  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;
  std::mt19937_64 rng(data::split_seed(seed ^ 0x7368756666ull, static_cast<uint64_t>(epoch)));
  for (size_t i = n; i > 1; --i) {
    // Multiply-shift keeps the draw independent of library distribution code.
    const auto j = static_cast<size_t>((static_cast<unsigned __int128>(rng()) * i) >> 64);
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

namespace {

uint64_t augment_stream(uint64_t seed, int64_t epoch) {
  return data::split_seed(seed ^ 0x6175676dull, static_cast<uint64_t>(epoch));
}

struct ResumePoint {
  int64_t epochs_done = 0;
  std::vector<LossRecord> log;
  std::vector<std::string> lineage;
};

ResumePoint load_state(const fs::path& path, AfiuNet<float>& model, Adam<float>& adam, const StageConfig& cfg) {
  Checkpoint state = read_checkpoint(path);
  const auto field = [&](const std::string& key) -> int64_t {
    auto it = state.meta.extra.find(key);
    if (it == state.meta.extra.end()) throw CheckpointError(path.string() + ": training state lacks '" + key + "'");
    return std::stoll(it->second);
  };
  if (state.meta.seed != cfg.optim.seed) {
    throw std::invalid_argument("resume: state was trained with seed " + std::to_string(state.meta.seed) +
                                ", config has " + std::to_string(cfg.optim.seed));
  }
  if (state.meta.stage != cfg.stage_tag) {
    throw std::invalid_argument("resume: state belongs to stage " + state.meta.stage + ", not " + cfg.stage_tag);
  }
  ResumePoint rp;
  rp.epochs_done = field("epoch");
  const int64_t iterations = field("iteration");
  if (rp.epochs_done > cfg.optim.epochs) {
    throw std::invalid_argument("resume: state already has " + std::to_string(rp.epochs_done) +
                                " epochs, budget is " + std::to_string(cfg.optim.epochs));
  }
  Checkpoint weights;
  for (auto& [name, t] : state.tensors) {
    if (name.rfind("adam.", 0) != 0) weights.tensors.emplace_back(name, t);
  }
  adam.import_state(state, field("adam_steps"));
  restore(model.registry(), weights);

  rp.log = read_loss_log(path.parent_path() / "loss.csv");
  if (static_cast<int64_t>(rp.log.size()) < iterations) {
    throw CheckpointError("resume: loss log next to " + path.string() + " has " + std::to_string(rp.log.size()) +
                          " rows, state expects " + std::to_string(iterations));
  }
  rp.log.resize(static_cast<size_t>(iterations));
  rp.lineage = state.meta.lineage;
  return rp;
}

}  // namespace

StageResult train_stage(AfiuNet<float>& model, const std::vector<data::Sample>& corpus, const StageConfig& cfg) {
  if (corpus.empty()) throw std::invalid_argument("train_stage: corpus is empty");
  cfg.optim.validate();
  cfg.augment.validate();
  if (cfg.augment.target_height != model.config().input_height ||
      cfg.augment.target_width != model.config().input_width) {
    throw std::invalid_argument("train_stage: augmentation target size differs from the model input size");
  }
  if (cfg.out_dir.empty()) throw std::invalid_argument("train_stage: no output directory");
  fs::create_directories(cfg.out_dir);

  std::vector<std::string> lineage;
  if (cfg.init && !cfg.resume) {
    // restore() validates the full name set before it writes anything.
    const Checkpoint init = read_checkpoint(*cfg.init);
    restore(model.registry(), init);
    lineage = init.meta.lineage;
  }

  Adam<float> adam(model.registry().parameters(), cfg.optim);
  int64_t epoch0 = 0;
  std::vector<LossRecord> log;
  if (cfg.resume) {
    ResumePoint rp = load_state(*cfg.resume, model, adam, cfg);
    epoch0 = rp.epochs_done;
    log = std::move(rp.log);
    lineage = std::move(rp.lineage);
  }

  const fs::path log_path = cfg.out_dir / "loss.csv";
  const fs::path state_path = cfg.out_dir / "state.ckpt";
  const fs::path model_path = cfg.out_dir / "model.ckpt";
  write_loss_log(log_path, log);
  std::ofstream log_out(log_path, std::ios::app);

  CheckpointMetadata meta;
  meta.stage = cfg.stage_tag;
  meta.seed = cfg.optim.seed;
  meta.config_digest = cfg.config_digest;
  meta.lineage = lineage;

  const auto save_state = [&](int64_t epochs_done, double running) {
    meta.epochs = epochs_done;
    meta.iterations = static_cast<int64_t>(log.size());
    meta.created = utc_timestamp();
    Checkpoint state = capture(model.registry(), meta);
    state.meta.extra = {{"epoch", std::to_string(epochs_done)},
                        {"iteration", std::to_string(log.size())},
                        {"adam_steps", std::to_string(adam.steps())},
                        {"running_loss", std::to_string(running)}};
    adam.export_state(state);
    write_checkpoint(state_path, state);
  };

  model.set_training(true);
  const size_t n = corpus.size();
  const auto batch = static_cast<size_t>(cfg.optim.batch_size);
  int64_t epochs_done = epoch0;
  bool stopped = false;
  for (int64_t epoch = epoch0; epoch < cfg.optim.epochs && !stopped; ++epoch) {
    const std::vector<size_t> order = epoch_order(n, cfg.optim.seed, epoch);
    const size_t first_row = log.size();
    double epoch_sum = 0.0;
    for (size_t start = 0; start < n && !stopped; start += batch) {
      const std::vector<size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                    order.begin() + static_cast<std::ptrdiff_t>(std::min(n, start + batch)));
      const data::Batch b = data::make_batch(corpus, idx, cfg.augment, augment_stream(cfg.optim.seed, epoch));
      model.registry().zero_grad();
      const Var<float> loss = bce_loss(model.forward(Var<float>(b.images)), b.masks, Reduction::mean);
      const LossRecord rec{epoch + 1, static_cast<int64_t>(log.size()) + 1, static_cast<double>(loss.value()[0])};
      if (!std::isfinite(rec.loss)) {
        append_rows(log_out, log, first_row);
        throw TrainingDiverged("stage " + cfg.stage_tag + ": loss became " + std::to_string(rec.loss) +
                               " at epoch " + std::to_string(rec.epoch) + ", iteration " +
                               std::to_string(rec.iteration) + " (batch items " + std::to_string(idx.front()) +
                               "..); parameters left at the previous update");
      }
      backward(loss);
      adam.step();
      log.push_back(rec);
      epoch_sum += rec.loss;
      if (cfg.on_iteration) cfg.on_iteration(rec);
      if (cfg.stop_below > 0.0 && rec.loss <= cfg.stop_below) stopped = true;
    }
    append_rows(log_out, log, first_row);
    epochs_done = epoch + 1;
    save_state(epochs_done, epoch_sum / static_cast<double>(log.size() - first_row));
  }
  model.set_training(false);

  meta.epochs = epochs_done;
  meta.iterations = static_cast<int64_t>(log.size());
  meta.created = utc_timestamp();
  meta.extra = cfg.metadata;
  meta.lineage.push_back(cfg.stage_tag + ":" + std::to_string(epochs_done) + ":" + model_path.string());
  save_checkpoint(model_path, model.registry(), meta);
  return {model_path, meta, std::move(log)};
}

TransferResult two_stage_transfer(AfiuNet<float>& model, const std::vector<data::Sample>& sod,
                                  const std::vector<data::Sample>& dbd, TransferConfig cfg) {
  if (sod.empty() || dbd.empty()) throw std::invalid_argument("two_stage_transfer: both corpora must be non-empty");
  if (cfg.pretrain.out_dir == cfg.finetune.out_dir) {
    throw std::invalid_argument("two_stage_transfer: stages need distinct output directories");
  }
  cfg.pretrain.stage_tag = "sod-pretrained";
  cfg.pretrain.init.reset();
  TransferResult out;
  out.pretrain = train_stage(model, sod, cfg.pretrain);
  cfg.finetune.stage_tag = "dbd-finetuned";
  cfg.finetune.init = out.pretrain.checkpoint;
  out.finetune = train_stage(model, dbd, cfg.finetune);
  return out;
}

std::optional<int64_t> iterations_to_reach(const std::vector<LossRecord>& log, double threshold) {
  for (const auto& r : log) {
    if (r.loss <= threshold) return r.iteration;
  }
  return std::nullopt;
}

template Var<float> bce_loss(const Var<float>&, const Tensor<float>&, Reduction);
template Var<double> bce_loss(const Var<double>&, const Tensor<double>&, Reduction);
template class Adam<float>;
template class Adam<double>;

}  // namespace afiu::training
