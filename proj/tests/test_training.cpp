// Copyright 2026 The AFIU Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "afiu/kernels.hpp"
#include "afiu/training.hpp"
#include "test_util.hpp"

namespace afiu {
namespace {

using training::Reduction;

// Straight transcription of the pixel sum, kept apart from the library code.
double oracle_bce(const std::vector<double>& pred, const std::vector<double>& gt, bool mean) {
  const double eps = 1e-7;
  double s = 0.0;
  for (size_t i = 0; i < pred.size(); ++i) {
    const double p = std::min(1.0 - eps, std::max(eps, pred[i]));
    s += -(gt[i] * std::log(p) + (1.0 - gt[i]) * std::log(1.0 - p));
  }
  return mean ? s / static_cast<double>(pred.size()) : s;
}

Tensor<double> random_mask(const Shape& shape, std::mt19937_64& rng) {
  Tensor<double> t(shape);
  for (double& v : t.values()) v = static_cast<double>(rng() & 1u);
  return t;
}

Tensor<double> random_probabilities(const Shape& shape, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor<double> t(shape);
  for (double& v : t.values()) v = u(rng);
  return t;
}

double loss_value(const Tensor<double>& pred, const Tensor<double>& gt, Reduction r) {
  return training::bce_loss(Var<double>(pred), gt, r).value()[0];
}

TEST(BceLoss, UniformHalfSumIsFourLn2) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 16; ++trial) {
    const Tensor<double> gt = random_mask({1, 1, 2, 2}, rng);
    EXPECT_NEAR(loss_value(Tensor<double>({1, 1, 2, 2}, 0.5), gt, Reduction::sum), 4.0 * std::log(2.0), 1e-9);
    EXPECT_NEAR(loss_value(Tensor<double>({1, 1, 2, 2}, 0.5), gt, Reduction::mean), std::log(2.0), 1e-12);
  }
}

TEST(BceLoss, PerfectPredictionIsEffectivelyZero) {
  std::mt19937_64 rng(2);
  const Tensor<double> gt = random_mask({1, 1, 2, 2}, rng);
  const double loss = loss_value(gt, gt, Reduction::sum);
  EXPECT_GE(loss, 0.0);
  EXPECT_LE(loss, 4.0 * -std::log(1.0 - 1e-7) * (1.0 + 1e-6));
}

TEST(BceLoss, MatchesOracleAndIsSymmetricAndNonNegative) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const Shape shape{1 + static_cast<int64_t>(rng() % 3), 1, 1 + static_cast<int64_t>(rng() % 6),
                      1 + static_cast<int64_t>(rng() % 6)};
    // Include exact 0/1 predictions to exercise the clamp.
    Tensor<double> pred = random_probabilities(shape, rng, 0.0, 1.0);
    if (trial % 4 == 0) pred[0] = 0.0;
    if (trial % 4 == 1) pred[0] = 1.0;
    const Tensor<double> gt = random_mask(shape, rng);
    Tensor<double> flipped_pred(shape), flipped_gt(shape);
    for (int64_t i = 0; i < pred.numel(); ++i) {
      flipped_pred[i] = 1.0 - pred[i];
      flipped_gt[i] = 1.0 - gt[i];
    }
    const std::vector<double> p(pred.values().begin(), pred.values().end());
    const std::vector<double> g(gt.values().begin(), gt.values().end());
    for (const Reduction r : {Reduction::sum, Reduction::mean}) {
      const double loss = loss_value(pred, gt, r);
      ASSERT_TRUE(std::isfinite(loss));
      EXPECT_GE(loss, 0.0);
      EXPECT_NEAR(loss, oracle_bce(p, g, r == Reduction::mean), 1e-9 * std::max(1.0, loss));
      EXPECT_NEAR(loss_value(flipped_pred, flipped_gt, r), loss, 1e-9 * std::max(1.0, loss));
    }
  }
}

TEST(BceLoss, MeanGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(4);
  const double h = 1e-6;
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor<double> pred = random_probabilities({1, 1, 4, 4}, rng, 0.02, 0.98);
    const Tensor<double> gt = random_mask({1, 1, 4, 4}, rng);
    Var<double> p(pred, true);
    backward(training::bce_loss(p, gt, Reduction::mean));
    const std::vector<double> g(gt.values().begin(), gt.values().end());
    for (int64_t i = 0; i < pred.numel(); ++i) {
      std::vector<double> up(pred.values().begin(), pred.values().end()), down = up;
      up[static_cast<size_t>(i)] += h;
      down[static_cast<size_t>(i)] -= h;
      const double fd = (oracle_bce(up, g, true) - oracle_bce(down, g, true)) / (2.0 * h);
      EXPECT_NEAR(p.grad()[i], fd, 1e-6) << "trial " << trial << " element " << i;
    }
  }
}

TEST(BceLoss, RejectsBadInputs) {
  const Tensor<double> pred({1, 1, 2, 2}, 0.5);
  EXPECT_THROW(loss_value(pred, Tensor<double>({1, 1, 2, 3}), Reduction::sum), std::invalid_argument);
  Tensor<double> soft({1, 1, 2, 2}, 1.0);
  soft[2] = 0.5;
  try {
    loss_value(pred, soft, Reduction::mean);
    FAIL() << "expected a rejection of the non-binary mask";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("element 2"), std::string::npos) << e.what();
  }
}

TEST(BceLoss, NanPredictionIsNotHiddenByTheClamp) {
  Tensor<double> pred({1, 1, 2, 2}, 0.5);
  pred[1] = std::nan("");
  EXPECT_TRUE(std::isnan(loss_value(pred, Tensor<double>({1, 1, 2, 2}), Reduction::mean)));
}

// Adam written out for a single scalar parameter.
struct ScalarAdam {
  double lr, b1 = 0.9, b2 = 0.999, eps = 1e-8, m = 0, v = 0;
  int t = 0;
  double step(double w, double g) {
    ++t;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mh = m / (1 - std::pow(b1, t)), vh = v / (1 - std::pow(b2, t));
    return w - lr * mh / (std::sqrt(vh) + eps);
  }
};

TEST(Adam, MatchesScalarRecurrence) {
  Var<double> w(Tensor<double>({3}, 0.0), true);
  const std::vector<double> start{0.5, -1.0, 2.0};
  for (int i = 0; i < 3; ++i) w.mutable_value()[i] = start[static_cast<size_t>(i)];
  training::OptimConfig cfg;
  cfg.learning_rate = 0.01;
  training::Adam<double> adam({{"w", w}}, cfg);
  std::vector<ScalarAdam> ref(3, ScalarAdam{0.01});
  std::vector<double> expect = start;
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int step = 0; step < 20; ++step) {
    Tensor<double> g({3});
    for (double& v : g.values()) v = n(rng);
    w.zero_grad();
    w.node()->accumulate_grad(g);
    adam.step();
    for (size_t i = 0; i < 3; ++i) {
      expect[i] = ref[i].step(expect[i], g[static_cast<int64_t>(i)]);
      EXPECT_NEAR(w.value()[static_cast<int64_t>(i)], expect[i], 1e-12);
    }
  }
  EXPECT_EQ(adam.steps(), 20);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Var<double> w(Tensor<double>({2}, 1.0), true);
  training::OptimConfig cfg;
  training::Adam<double> adam({{"w", w}}, cfg);
  Tensor<double> g({2});
  g[0] = 3.0;
  g[1] = -0.02;
  w.node()->accumulate_grad(g);
  adam.step();
  EXPECT_NEAR(w.value()[0], 1.0 - 1e-5, 1e-12);
  EXPECT_NEAR(w.value()[1], 1.0 + 1e-5, 1e-11);
}

TEST(Adam, StateRoundTrip) {
  Var<float> w(Tensor<float>({4}, 1.0f), true);
  training::OptimConfig cfg;
  cfg.learning_rate = 0.1;
  training::Adam<float> a({{"w", w}}, cfg);
  for (int i = 0; i < 3; ++i) {
    w.zero_grad();
    w.node()->accumulate_grad(Tensor<float>({4}, static_cast<float>(i + 1)));
    a.step();
  }
  Checkpoint state;
  a.export_state(state);
  ASSERT_EQ(state.tensors.size(), 2u);

  Var<float> w2(w.value(), true);
  training::Adam<float> b({{"w", w2}}, cfg);
  b.import_state(state, a.steps());
  for (auto* v : {&w, &w2}) {
    v->zero_grad();
    v->node()->accumulate_grad(Tensor<float>({4}, -2.0f));
  }
  a.step();
  b.step();
  for (int64_t i = 0; i < 4; ++i) EXPECT_EQ(w.value()[i], w2.value()[i]);

  Checkpoint missing;
  EXPECT_THROW(b.import_state(missing, 1), CheckpointError);
}

TEST(OptimConfig, Validation) {
  training::OptimConfig ok;
  EXPECT_NO_THROW(ok.validate());
  EXPECT_DOUBLE_EQ(ok.learning_rate, 1e-5);
  EXPECT_EQ(ok.batch_size, 8);
  auto bad = ok;
  bad.learning_rate = 0.0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = ok;
  bad.batch_size = 0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = ok;
  bad.beta2 = 1.0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
}

TEST(LossLog, SixDecimalRowsRoundTrip) {
  testing::TempDir dir("losslog");
  const std::vector<training::LossRecord> log{{1, 1, 0.6931471805}, {1, 2, 0.5}, {2, 3, 1e-9}};
  training::write_loss_log(dir / "loss.csv", log);
  std::ifstream in(dir / "loss.csv");
  std::stringstream text;
  text << in.rdbuf();
  EXPECT_EQ(text.str(), "epoch,iteration,loss\n1,1,0.693147\n1,2,0.500000\n2,3,0.000000\n");
  const auto back = training::read_loss_log(dir / "loss.csv");
  ASSERT_EQ(back.size(), 3u);
  EXPECT_EQ(back[2].iteration, 3);
  EXPECT_DOUBLE_EQ(back[0].loss, 0.693147);

  std::ofstream(dir / "bad.csv") << "epoch,iteration,loss\n1,1,0.5\n1,2,oops\n";
  try {
    training::read_loss_log(dir / "bad.csv");
    FAIL() << "expected a parse error";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("bad.csv:3:"), std::string::npos) << e.what();
  }
}

TEST(EpochOrder, SeededPermutationPerEpoch) {
  const auto a = training::epoch_order(50, 9, 0);
  EXPECT_EQ(a, training::epoch_order(50, 9, 0));
  EXPECT_NE(a, training::epoch_order(50, 9, 1));
  EXPECT_NE(a, training::epoch_order(50, 10, 0));
  std::vector<size_t> sorted = a;
  std::sort(sorted.begin(), sorted.end());
  std::vector<size_t> iota(50);
  std::iota(iota.begin(), iota.end(), 0);
  EXPECT_EQ(sorted, iota);
}

TEST(IterationsToReach, FirstCrossing) {
  const std::vector<training::LossRecord> log{{1, 1, 0.5}, {1, 2, 0.2}, {2, 3, 0.15}, {2, 4, 0.1}};
  EXPECT_EQ(training::iterations_to_reach(log, 0.15), 3);
  EXPECT_EQ(training::iterations_to_reach(log, 0.3), 2);
  EXPECT_FALSE(training::iterations_to_reach(log, 0.01).has_value());
}

// ---- Stage training on the tiny profile ----

class StageTraining : public ::testing::Test {
 protected:
  static void SetUpTestSuite() { kernels::set_num_threads(1); }

  static training::StageConfig small_stage(const std::filesystem::path& out, int64_t epochs) {
    training::StageConfig cfg;
    cfg.optim.learning_rate = 1e-3;
    cfg.optim.batch_size = 4;
    cfg.optim.epochs = epochs;
    cfg.optim.seed = 21;
    cfg.augment.target_height = 64;
    cfg.augment.target_width = 64;
    cfg.out_dir = out;
    return cfg;
  }

  static std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
  }

  const std::vector<data::Sample> corpus_ = data::synth_bokeh(6, 3, 64, 64);
};

TEST_F(StageTraining, EmptyCorpusIsRejected) {
  testing::TempDir dir("empty");
  AfiuNet<float> net(AfiuConfig::tiny());
  EXPECT_THROW(training::train_stage(net, {}, small_stage(dir.path(), 1)), std::invalid_argument);
}

TEST_F(StageTraining, WritesArtifactsAndMetadata) {
  testing::TempDir dir("stage");
  AfiuNet<float> net(AfiuConfig::tiny());
  auto cfg = small_stage(dir.path(), 2);
  cfg.config_digest = "abc123";
  const auto result = training::train_stage(net, corpus_, cfg);
  ASSERT_EQ(result.log.size(), 4u);  // ceil(6 / 4) iterations per epoch
  EXPECT_EQ(result.log[1].epoch, 1);
  EXPECT_EQ(result.log[2].epoch, 2);
  EXPECT_EQ(result.log[3].iteration, 4);
  EXPECT_EQ(training::read_loss_log(dir / "loss.csv").size(), 4u);
  EXPECT_TRUE(std::filesystem::exists(dir / "state.ckpt"));

  const Checkpoint ckpt = read_checkpoint(result.checkpoint);
  EXPECT_EQ(ckpt.meta.stage, "scratch");
  EXPECT_EQ(ckpt.meta.epochs, 2);
  EXPECT_EQ(ckpt.meta.iterations, 4);
  EXPECT_EQ(ckpt.meta.seed, 21u);
  EXPECT_EQ(ckpt.meta.config_digest, "abc123");
  EXPECT_FALSE(ckpt.meta.created.empty());
  ASSERT_EQ(ckpt.meta.lineage.size(), 1u);
  EXPECT_EQ(ckpt.meta.lineage[0].rfind("scratch:2:", 0), 0u);
}

TEST_F(StageTraining, SeededRunsProduceIdenticalLogs) {
  testing::TempDir a("det_a"), b("det_b");
  AfiuNet<float> net_a(AfiuConfig::tiny()), net_b(AfiuConfig::tiny());
  training::train_stage(net_a, corpus_, small_stage(a.path(), 2));
  training::train_stage(net_b, corpus_, small_stage(b.path(), 2));
  EXPECT_EQ(slurp(a / "loss.csv"), slurp(b / "loss.csv"));
  const Checkpoint ca = read_checkpoint(a / "model.ckpt"), cb = read_checkpoint(b / "model.ckpt");
  ASSERT_EQ(ca.tensors.size(), cb.tensors.size());
  for (size_t i = 0; i < ca.tensors.size(); ++i) {
    EXPECT_TRUE(std::equal(ca.tensors[i].second.values().begin(), ca.tensors[i].second.values().end(),
                           cb.tensors[i].second.values().begin()))
        << ca.tensors[i].first;
  }
}

TEST_F(StageTraining, ResumeReproducesTheUninterruptedRun) {
  testing::TempDir full("resume_full"), part("resume_part");
  AfiuNet<float> net_full(AfiuConfig::tiny());
  training::train_stage(net_full, corpus_, small_stage(full.path(), 4));

  AfiuNet<float> net_part(AfiuConfig::tiny());
  training::train_stage(net_part, corpus_, small_stage(part.path(), 2));
  // A fresh process would start from a differently initialised model.
  AfiuConfig other = AfiuConfig::tiny();
  other.init_seed = 99;
  AfiuNet<float> resumed(other);
  auto cfg = small_stage(part.path(), 4);
  cfg.resume = part / "state.ckpt";
  training::train_stage(resumed, corpus_, cfg);

  EXPECT_EQ(slurp(full / "loss.csv"), slurp(part / "loss.csv"));
  const Checkpoint a = read_checkpoint(full / "model.ckpt"), b = read_checkpoint(part / "model.ckpt");
  ASSERT_EQ(a.tensors.size(), b.tensors.size());
  for (size_t i = 0; i < a.tensors.size(); ++i) {
    EXPECT_TRUE(std::equal(a.tensors[i].second.values().begin(), a.tensors[i].second.values().end(),
                           b.tensors[i].second.values().begin()))
        << a.tensors[i].first;
  }
  EXPECT_EQ(a.meta.iterations, b.meta.iterations);
}

TEST_F(StageTraining, ResumeRejectsAForeignSeed) {
  testing::TempDir dir("resume_seed");
  AfiuNet<float> net(AfiuConfig::tiny());
  training::train_stage(net, corpus_, small_stage(dir.path(), 1));
  auto cfg = small_stage(dir.path(), 2);
  cfg.optim.seed = 22;
  cfg.resume = dir / "state.ckpt";
  EXPECT_THROW(training::train_stage(net, corpus_, cfg), std::invalid_argument);
}

TEST_F(StageTraining, MismatchedInitFailsBeforeAnyUpdate) {
  testing::TempDir dir("init_mismatch");
  AfiuNet<float> donor(AfiuConfig::tiny());
  Checkpoint ckpt = capture(donor.registry(), {});
  ckpt.tensors[3].first += "_renamed";
  write_checkpoint(dir / "donor.ckpt", ckpt);

  AfiuNet<float> net(AfiuConfig::tiny());
  const Checkpoint before = capture(net.registry(), {});
  auto cfg = small_stage(dir / "out", 1);
  cfg.init = dir / "donor.ckpt";
  EXPECT_THROW(training::train_stage(net, corpus_, cfg), CheckpointError);
  const Checkpoint after = capture(net.registry(), {});
  for (size_t i = 0; i < before.tensors.size(); ++i) {
    EXPECT_TRUE(std::equal(before.tensors[i].second.values().begin(), before.tensors[i].second.values().end(),
                           after.tensors[i].second.values().begin()));
  }
  EXPECT_FALSE(std::filesystem::exists(dir / "out" / "loss.csv"));
}

TEST_F(StageTraining, NanLossAbortsWithDiagnostic) {
  testing::TempDir dir("nan");
  AfiuNet<float> net(AfiuConfig::tiny());
  net.registry().parameters().front().var.node()->value[0] = std::nanf("");
  try {
    training::train_stage(net, corpus_, small_stage(dir.path(), 1));
    FAIL() << "expected divergence";
  } catch (const training::TrainingDiverged& e) {
    EXPECT_NE(std::string(e.what()).find("iteration 1"), std::string::npos) << e.what();
  }
  EXPECT_FALSE(std::filesystem::exists(dir / "model.ckpt"));
}

TEST_F(StageTraining, StopThresholdEndsEarly) {
  testing::TempDir dir("stop");
  AfiuNet<float> net(AfiuConfig::tiny());
  auto cfg = small_stage(dir.path(), 5);
  cfg.stop_below = 10.0;  // any finite first loss qualifies
  const auto r = training::train_stage(net, corpus_, cfg);
  EXPECT_EQ(r.log.size(), 1u);
  EXPECT_EQ(r.meta.epochs, 1);
}

TEST_F(StageTraining, TransferRecordsLineage) {
  testing::TempDir dir("transfer");
  AfiuNet<float> net(AfiuConfig::tiny());
  training::TransferConfig cfg{small_stage(dir / "sod", 2), small_stage(dir / "dbd", 1)};
  cfg.pretrain.init = dir / "ignored.ckpt";
  const auto sod = data::synth_bokeh(4, 5, 64, 64, data::SynthStyle::salient);
  const auto r = training::two_stage_transfer(net, sod, corpus_, cfg);

  EXPECT_TRUE(std::filesystem::exists(dir / "sod" / "model.ckpt"));
  EXPECT_TRUE(std::filesystem::exists(dir / "dbd" / "model.ckpt"));
  const Checkpoint fin = read_checkpoint(r.finetune.checkpoint);
  EXPECT_EQ(fin.meta.stage, "dbd-finetuned");
  ASSERT_EQ(fin.meta.lineage.size(), 2u);
  EXPECT_EQ(fin.meta.lineage[0], "sod-pretrained:2:" + (dir / "sod" / "model.ckpt").string());
  EXPECT_EQ(fin.meta.lineage[1], "dbd-finetuned:1:" + (dir / "dbd" / "model.ckpt").string());
  EXPECT_EQ(read_checkpoint(r.pretrain.checkpoint).meta.stage, "sod-pretrained");

  cfg.finetune.out_dir = cfg.pretrain.out_dir;
  EXPECT_THROW(training::two_stage_transfer(net, sod, corpus_, cfg), std::invalid_argument);
}

TEST_F(StageTraining, SingleAdamStepLowersTheSampleLoss) {
  // One step at the default learning rate, 100 independent model/sample draws.
  // Normalisation uses running statistics: with batch statistics of a single
  // 64x64 sample the deepest maps hold 4 values per channel, and the loss is
  // far from linear at this step size.
  int failures = 0;
  for (int trial = 0; trial < 100; ++trial) {
    AfiuConfig cfg = AfiuConfig::tiny();
    cfg.init_seed = 1000 + static_cast<uint64_t>(trial);
    AfiuNet<float> net(cfg);
    net.set_training(false);
    const auto sample = data::synth_bokeh(1, 500 + static_cast<uint64_t>(trial), 64, 64);
    const data::Batch b = data::make_batch(sample, {0}, data::AugmentConfig::none(64, 64), 0);
    training::Adam<float> adam(net.registry().parameters(), training::OptimConfig{});

    const Var<float> before = training::bce_loss(net.forward(Var<float>(b.images)), b.masks, Reduction::mean);
    backward(before);
    adam.step();
    float after = 0;
    {
      NoGradGuard guard;
      after = training::bce_loss(net.forward(Var<float>(b.images)), b.masks, Reduction::mean).value()[0];
    }
    if (!(after < before.value()[0])) ++failures;
  }
  EXPECT_LE(failures, 1);
}

}  // namespace
}  // namespace afiu
