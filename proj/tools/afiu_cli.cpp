// Copyright 2026 The AFIU Authors
// SPDX-License-Identifier: Apache-2.0

// afiu: synthesise corpora, train (pretrain / finetune / scratch / transfer),
// evaluate checkpoints and plot curves.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage error. Every command that
// owns an output directory writes config.txt there, and on failure a FAILED
// file holding a one-line diagnostic.

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "afiu/checkpoint.hpp"
#include "afiu/config.hpp"
#include "afiu/data.hpp"
#include "afiu/kernels.hpp"
#include "afiu/metrics.hpp"
#include "afiu/network.hpp"
#include "afiu/plot.hpp"
#include "afiu/training.hpp"

namespace fs = std::filesystem;
using namespace afiu;

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Options shared by every subcommand. Named flags are sugar for config keys;
// precedence is config file < named flags < --set.
struct Common {
  std::string config_file;
  std::vector<std::string> sets;
  std::vector<std::pair<std::string, std::string>> flags;
  std::string out;
  int threads = -1;
  bool quiet = false;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("-c,--config", c.config_file, "Config file of key = value lines")->check(CLI::ExistingFile);
  cmd->add_option("--set", c.sets, "Override a config key (key=value), repeatable");
  cmd->add_option("-o,--out", c.out, "Output directory (default: $AFIU_OUTPUT_ROOT/<command>, else runs/<command>)");
  cmd->add_option("--threads", c.threads, "Worker threads (0 = library default)")->check(CLI::NonNegativeNumber);
  cmd->add_flag("-q,--quiet", c.quiet, "Only print errors and the final summary");
}

// Flag bound to a config key; only applied when given.
void add_keyed(CLI::App* cmd, Common& c, const std::string& flag, const std::string& key, const std::string& help) {
  cmd->add_option_function<std::string>(
      flag, [&c, key](const std::string& v) { c.flags.emplace_back(key, v); }, help + " [" + key + "]");
}

void add_training_flags(CLI::App* cmd, Common& c) {
  add_keyed(cmd, c, "--profile", "model.profile", "Model size profile: standard | tiny");
  add_keyed(cmd, c, "--lr", "optim.learning_rate", "Adam learning rate");
  add_keyed(cmd, c, "--batch-size", "optim.batch_size", "Mini-batch size");
  add_keyed(cmd, c, "--seed", "optim.seed", "Shuffle and augmentation seed");
  add_keyed(cmd, c, "--init-seed", "model.init_seed", "Parameter initialisation seed");
}

RunConfig build_config(const Common& c, const std::string& command) {
  RunConfig cfg = c.config_file.empty() ? RunConfig{} : RunConfig::load(c.config_file);
  try {
    for (const auto& [k, v] : c.flags) cfg.set(k, v);
    for (const auto& s : c.sets) {
      const auto [k, v] = split_assignment(s);
      cfg.set(k, v);
    }
    if (!c.out.empty()) cfg.out = c.out;
    if (c.threads >= 0) cfg.threads = c.threads;
    if (cfg.out.empty()) cfg.out = (default_output_root() / command).string();
    cfg.validate();
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }
  return cfg;
}

void apply_threads(const RunConfig& cfg) {
  if (cfg.threads > 0) kernels::set_num_threads(cfg.threads);
}

fs::path prepare_out(const RunConfig& cfg) {
  const fs::path out = cfg.out;
  fs::create_directories(out);
  fs::remove(out / "FAILED");
  cfg.save(out / "config.txt");
  return out;
}

std::vector<data::Sample> load(const RunConfig& cfg, const std::string& root, const char* what) {
  if (root.empty()) throw UsageError(std::string("no ") + what + " corpus given");
  auto corpus = data::load_corpus({root, cfg.image_dir, cfg.mask_dir});
  if (corpus.empty()) throw std::runtime_error(std::string(what) + " corpus " + root + " holds no samples");
  return corpus;
}

training::StageConfig stage_config(const RunConfig& cfg, const fs::path& out, int64_t epochs, const std::string& tag,
                                   bool quiet, size_t corpus_size) {
  training::StageConfig sc;
  sc.stage_tag = tag;
  sc.optim = cfg.optim;
  sc.optim.epochs = epochs;
  sc.augment = cfg.resolved_augment();
  sc.out_dir = out;
  sc.config_digest = cfg.digest();
  sc.metadata = cfg.model_entries();
  if (!quiet) {
    const auto per_epoch = static_cast<int64_t>((corpus_size + sc.optim.batch_size - 1) / sc.optim.batch_size);
    auto sum = std::make_shared<double>(0.0);
    sc.on_iteration = [=](const training::LossRecord& r) {
      *sum += r.loss;
      if (r.iteration % per_epoch == 0) {
        std::fprintf(stderr, "[%s] epoch %lld/%lld  iter %lld  mean loss %.6f\n", tag.c_str(),
                     static_cast<long long>(r.epoch), static_cast<long long>(epochs),
                     static_cast<long long>(r.iteration), *sum / static_cast<double>(per_epoch));
        *sum = 0.0;
      }
    };
  }
  return sc;
}

void report_stage(const training::StageResult& r) {
  std::printf("%s: %lld epochs, %lld iterations, final loss %.6f -> %s\n", r.meta.stage.c_str(),
              static_cast<long long>(r.meta.epochs), static_cast<long long>(r.meta.iterations),
              r.log.empty() ? 0.0 : r.log.back().loss, r.checkpoint.string().c_str());
}

std::optional<fs::path> resume_path(bool resume, const fs::path& out) {
  if (!resume) return std::nullopt;
  const fs::path p = out / "state.ckpt";
  if (!fs::exists(p)) throw std::runtime_error("--resume: no " + p.string());
  return p;
}

// ------------------------------------------------------------------ commands

int cmd_synth(const RunConfig& cfg) {
  const fs::path out = prepare_out(cfg);
  const auto samples = data::synth_bokeh(cfg.synth_count, cfg.synth_seed, cfg.synth_size, cfg.synth_size,
                                         cfg.synth_style);
  data::write_corpus(samples, {out, cfg.image_dir, cfg.mask_dir});
  std::printf("wrote %lld %s samples (%lldx%lld) to %s\n", static_cast<long long>(samples.size()),
              data::to_string(cfg.synth_style).c_str(), static_cast<long long>(cfg.synth_size),
              static_cast<long long>(cfg.synth_size), out.string().c_str());
  return 0;
}

int cmd_train(const RunConfig& cfg, const std::string& tag, int64_t epochs, const std::string& corpus_root,
              bool resume, bool quiet) {
  const auto corpus = load(cfg, corpus_root, "training");
  const fs::path out = prepare_out(cfg);
  AfiuNet<float> model(cfg.resolved_model());
  auto sc = stage_config(cfg, out, epochs, tag, quiet, corpus.size());
  if (!cfg.init.empty()) sc.init = cfg.init;
  sc.resume = resume_path(resume, out);
  report_stage(training::train_stage(model, corpus, sc));
  return 0;
}

int cmd_transfer(const RunConfig& cfg, bool resume, bool quiet) {
  const auto sod = load(cfg, cfg.sod_corpus, "SOD");
  const auto dbd = load(cfg, cfg.dbd_corpus, "DBD");
  const fs::path out = prepare_out(cfg);
  AfiuNet<float> model(cfg.resolved_model());
  training::TransferConfig tc;
  tc.pretrain = stage_config(cfg, out / "pretrain", cfg.pretrain_epochs, "sod-pretrained", quiet, sod.size());
  tc.finetune = stage_config(cfg, out / "finetune", cfg.finetune_epochs, "dbd-finetuned", quiet, dbd.size());
  if (resume) {
    // Resume whichever stage was interrupted.
    if (fs::exists(out / "finetune" / "state.ckpt")) {
      tc.finetune.resume = out / "finetune" / "state.ckpt";
      tc.pretrain.resume = resume_path(true, out / "pretrain");
    } else {
      tc.pretrain.resume = resume_path(true, out / "pretrain");
    }
  }
  const auto r = training::two_stage_transfer(model, sod, dbd, tc);
  report_stage(r.pretrain);
  report_stage(r.finetune);
  return 0;
}

std::string dataset_name(const fs::path& root) {
  fs::path p = root.lexically_normal();
  if (p.filename().empty()) p = p.parent_path();
  return p.filename().string();
}

int cmd_eval(const RunConfig& cfg, const std::string& model_path, const std::vector<std::string>& corpora) {
  const Checkpoint ckpt = read_checkpoint(model_path);
  // Rebuild the network the checkpoint was trained with when it says so.
  std::map<std::string, std::string> model_keys;
  for (const auto& [k, v] : ckpt.meta.extra)
    if (k.rfind("model.", 0) == 0) model_keys[k] = v;
  const AfiuConfig mc =
      model_keys.empty() ? cfg.resolved_model() : RunConfig::from_model_entries(model_keys).resolved_model();
  // The weights come from the checkpoint, never from a backbone file.
  AfiuConfig build = mc;
  build.backbone_init = BackboneInit::random;
  AfiuNet<float> model(build);
  restore(model.registry(), ckpt);
  model.set_training(false);

  const fs::path out = prepare_out(cfg);
  const auto resize_only = data::AugmentConfig::none(mc.input_height, mc.input_width);
  std::vector<metrics::ReportRow> rows;
  std::set<std::string> names;
  for (const auto& root : corpora) {
    const std::string name = dataset_name(root);
    if (!names.insert(name).second) throw UsageError("two corpora share the name '" + name + "'");
    const auto corpus = load(cfg, root, "evaluation");
    const fs::path dir = out / name;
    fs::create_directories(dir / "predictions");

    std::vector<metrics::Plane> preds, masks;
    for (const auto& s : corpus) {
      auto prepared = data::preprocess(s, resize_only, 0);
      const Tensor<float> input = prepared.image.reshaped({1, 3, mc.input_height, mc.input_width});
      // Scores use the continuous map; the PNG is its 8-bit rendering.
      metrics::Plane mask = metrics::mask_plane(s.mask);
      metrics::Plane pred =
          metrics::resize_plane(metrics::prediction_plane(model.predict(input)), mask.dim(0), mask.dim(1));
      data::write_png(dir / "predictions" / (s.id + ".png"), metrics::quantize(pred));
      preds.push_back(std::move(pred));
      masks.push_back(std::move(mask));
    }
    const auto report = metrics::evaluate_corpus(preds, masks, name);
    metrics::write_curve_csv(dir / "curve.csv", report.curve);
    {
      std::ofstream per(dir / "per_image.csv");
      per << "id,mae\n";
      char buf[64];
      for (size_t i = 0; i < corpus.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.6f", report.mae_per_image[i]);
        per << corpus[i].id << ',' << buf << '\n';
      }
      if (!per) throw std::runtime_error("failed writing " + (dir / "per_image.csv").string());
    }
    rows.push_back(metrics::summary(report));
    std::printf("%-16s n=%-5lld MAE %.4f  maxF %.4f\n", name.c_str(), static_cast<long long>(report.count),
                report.mae, report.max_f_beta);
  }
  metrics::write_report_csv(out / "report.csv", rows);
  return 0;
}

// "label=path" or a bare path labelled by `fallback(path)`.
std::pair<std::string, fs::path> labelled(const std::string& arg, const std::string& fallback) {
  const auto eq = arg.find('=');
  if (eq != std::string::npos && eq > 0) return {arg.substr(0, eq), arg.substr(eq + 1)};
  return {fallback, arg};
}

int cmd_curves(const RunConfig& cfg, const std::vector<std::string>& curve_args,
               const std::vector<std::string>& loss_args) {
  if (curve_args.empty() && loss_args.empty()) throw UsageError("curves: give at least one --pr or --loss input");

  std::vector<std::pair<std::string, metrics::PrCurve>> curves;
  for (const auto& a : curve_args) {
    auto [label, path] = labelled(a, "");
    if (fs::is_directory(path)) {
      // An eval output directory: one curve per dataset subdirectory.
      std::vector<fs::path> found;
      for (const auto& e : fs::directory_iterator(path))
        if (fs::exists(e.path() / "curve.csv")) found.push_back(e.path());
      std::sort(found.begin(), found.end());
      if (found.empty()) throw std::runtime_error(path.string() + ": no <dataset>/curve.csv inside");
      for (const auto& d : found) {
        const std::string ds = d.filename().string();
        curves.emplace_back(label.empty() ? ds : label + " " + ds, metrics::read_curve_csv(d / "curve.csv"));
      }
    } else {
      if (label.empty()) label = path.parent_path().filename().string() + "/" + path.stem().string();
      curves.emplace_back(label, metrics::read_curve_csv(path));
    }
  }
  std::vector<std::pair<std::string, std::vector<training::LossRecord>>> losses;
  for (const auto& a : loss_args) {
    auto [label, path] = labelled(a, "");
    if (fs::is_directory(path)) path /= "loss.csv";
    if (label.empty()) label = path.parent_path().filename().string();
    losses.emplace_back(label, training::read_loss_log(path));
  }

  const fs::path out = prepare_out(cfg);
  char buf[160];
  if (!curves.empty()) {
    plot::Chart pr{"Precision-recall", "Recall", "Precision", std::pair{0.0, 1.0}, std::pair{0.0, 1.0}, {}};
    plot::Chart fm{"F-measure", "Threshold", "F-beta", std::pair{0.0, 255.0}, std::pair{0.0, 1.0}, {}};
    std::ofstream csv(out / "pr_curves.csv");
    csv << "series,threshold,precision,recall,f_beta\n";
    for (const auto& [label, c] : curves) {
      plot::Series p{label, {}, {}}, f{label, {}, {}};
      for (int t = 0; t < metrics::kThresholds; ++t) {
        p.x.push_back(c.recall[t]);
        p.y.push_back(c.precision[t]);
        f.x.push_back(t);
        f.y.push_back(c.f_beta[t]);
        std::snprintf(buf, sizeof buf, ",%d,%.6f,%.6f,%.6f\n", t, c.precision[t], c.recall[t], c.f_beta[t]);
        csv << label << buf;
      }
      pr.series.push_back(std::move(p));
      fm.series.push_back(std::move(f));
    }
    if (!csv) throw std::runtime_error("failed writing pr_curves.csv");
    plot::write_svg(out / "pr.svg", pr);
    plot::write_svg(out / "fmeasure.svg", fm);
  }
  if (!losses.empty()) {
    plot::Chart lc{"Training loss", "Iteration", "BCE loss", std::nullopt, std::nullopt, {}};
    double ymax = 0.0;
    std::ofstream csv(out / "loss_curves.csv");
    csv << "series,epoch,iteration,loss\n";
    for (const auto& [label, log] : losses) {
      plot::Series s{label, {}, {}};
      for (const auto& r : log) {
        s.x.push_back(static_cast<double>(r.iteration));
        s.y.push_back(r.loss);
        if (std::isfinite(r.loss)) ymax = std::max(ymax, r.loss);
        csv << label << ',' << training::format_loss_row(r) << '\n';
      }
      lc.series.push_back(std::move(s));
    }
    if (!csv) throw std::runtime_error("failed writing loss_curves.csv");
    lc.y_range = std::pair{0.0, ymax > 0.0 ? ymax * 1.05 : 1.0};
    plot::write_svg(out / "loss.svg", lc);
  }
  std::printf("wrote %zu PR curve(s) and %zu loss log(s) to %s\n", curves.size(), losses.size(),
              out.string().c_str());
  return 0;
}

void write_failed(const std::string& out, const std::string& message) {
  if (out.empty()) return;
  std::error_code ec;
  fs::create_directories(out, ec);
  std::ofstream f(fs::path(out) / "FAILED", std::ios::trunc);
  std::string line = message;
  for (char& ch : line)
    if (ch == '\n' || ch == '\r') ch = ' ';
  f << line << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Defocus blur detection: train, evaluate and plot AFIU models"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "afiu 1.0.0");

  Common common;
  bool resume = false;
  std::string model_path;
  std::vector<std::string> eval_corpora, pr_inputs, loss_inputs;

  auto* synth = app.add_subcommand("synth", "Write a synthetic corpus of sharp shapes over blurred backgrounds");
  add_common(synth, common);
  add_keyed(synth, common, "--count", "synth.count", "Number of samples");
  add_keyed(synth, common, "--seed", "synth.seed", "Generator seed");
  add_keyed(synth, common, "--size", "synth.size", "Side length in pixels");
  add_keyed(synth, common, "--style", "synth.style", "bokeh | salient");

  auto* pretrain = app.add_subcommand("pretrain", "Stage 1: train on a salient-object corpus");
  auto* finetune = app.add_subcommand("finetune", "Stage 2: train on a defocus corpus from a checkpoint");
  auto* scratch = app.add_subcommand("train-scratch", "Train on a defocus corpus from random initialisation");
  for (auto* cmd : {pretrain, finetune, scratch}) {
    add_common(cmd, common);
    add_training_flags(cmd, common);
    add_keyed(cmd, common, "--data", "data.corpus", "Corpus root holding images/ and masks/");
    cmd->add_flag("--resume", resume, "Continue from <out>/state.ckpt");
  }
  add_keyed(pretrain, common, "--epochs", "train.pretrain_epochs", "Epochs");
  add_keyed(finetune, common, "--epochs", "train.finetune_epochs", "Epochs");
  add_keyed(scratch, common, "--epochs", "train.scratch_epochs", "Epochs");
  add_keyed(finetune, common, "--init", "train.init", "Checkpoint to start from (required)");

  auto* transfer = app.add_subcommand("transfer", "Both stages: pretrain on SOD, then finetune on DBD");
  add_common(transfer, common);
  add_training_flags(transfer, common);
  add_keyed(transfer, common, "--sod", "data.sod_corpus", "Stage-1 corpus root");
  add_keyed(transfer, common, "--dbd", "data.dbd_corpus", "Stage-2 corpus root");
  add_keyed(transfer, common, "--pretrain-epochs", "train.pretrain_epochs", "Stage-1 epochs");
  add_keyed(transfer, common, "--finetune-epochs", "train.finetune_epochs", "Stage-2 epochs");
  transfer->add_flag("--resume", resume, "Continue the interrupted stage");

  auto* eval = app.add_subcommand("eval", "Predict, score (MAE, PR curve, max F-beta) and save maps");
  add_common(eval, common);
  eval->add_option("-m,--model", model_path, "Checkpoint to evaluate")->required()->check(CLI::ExistingFile);
  eval->add_option("--data", eval_corpora, "Corpus root, repeatable; named by its directory")
      ->required()
      ->check(CLI::ExistingDirectory);

  auto* curves = app.add_subcommand("curves", "Plot PR / F-measure / loss curves as SVG plus merged CSV");
  add_common(curves, common);
  curves->add_option("--pr", pr_inputs, "[label=]curve.csv or eval output directory, repeatable");
  curves->add_option("--loss", loss_inputs, "[label=]loss.csv or run directory, repeatable");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  CLI::App* cmd = app.get_subcommands().front();
  const std::string name = cmd->get_name();
  RunConfig cfg;
  try {
    cfg = build_config(common, name);
    if (name == "finetune" && cfg.init.empty()) throw UsageError("finetune requires --init <checkpoint>");
  } catch (const std::exception& e) {
    std::fprintf(stderr, "afiu %s: %s\n", name.c_str(), e.what());
    return 2;
  }

  try {
    apply_threads(cfg);
    if (name == "synth") return cmd_synth(cfg);
    if (name == "pretrain") return cmd_train(cfg, "sod-pretrained", cfg.pretrain_epochs, cfg.corpus, resume, common.quiet);
    if (name == "finetune") return cmd_train(cfg, "dbd-finetuned", cfg.finetune_epochs, cfg.corpus, resume, common.quiet);
    if (name == "train-scratch") return cmd_train(cfg, "scratch", cfg.scratch_epochs, cfg.corpus, resume, common.quiet);
    if (name == "transfer") return cmd_transfer(cfg, resume, common.quiet);
    if (name == "eval") return cmd_eval(cfg, model_path, eval_corpora);
    if (name == "curves") return cmd_curves(cfg, pr_inputs, loss_inputs);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "afiu %s: %s\n", name.c_str(), e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "afiu %s: error: %s\n", name.c_str(), e.what());
    write_failed(cfg.out, e.what());
    return 1;
  }
  return 2;
}
