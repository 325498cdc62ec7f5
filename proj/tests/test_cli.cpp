// Copyright 2026 The AFIU Authors
// SPDX-License-Identifier: Apache-2.0

// Drives the built `afiu` binary end to end on tiny synthetic corpora.

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "afiu/checkpoint.hpp"
#include "afiu/config.hpp"
#include "afiu/data.hpp"
#include "afiu/metrics.hpp"
#include "afiu/training.hpp"
#include "test_util.hpp"

using namespace afiu;
using afiu::testing::TempDir;
namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code = -1;
  std::string output;  // stdout and stderr
};

CliRun afiu_cli(const std::string& args, const fs::path& cwd) {
  const fs::path log = cwd / "cli.log";
  const std::string cmd = "cd '" + cwd.string() + "' && '" AFIU_CLI_PATH "' " + args + " > '" + log.string() + "' 2>&1";
  const int status = std::system(cmd.c_str());
  CliRun r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(log);
  r.output.assign(std::istreambuf_iterator<char>(in), {});
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    // 48x48 corpus against a 64x64 model, so eval has to rescale.
    ASSERT_EQ(afiu_cli("synth --out corpus --count 4 --size 48 --seed 5 -q", dir_.path()).code, 0);
  }
  CliRun run(const std::string& args) { return afiu_cli(args, dir_.path()); }
  fs::path at(const std::string& leaf) const { return dir_ / leaf; }

  // Tiny profile, 1 thread, 2 iterations per epoch.
  static constexpr const char* kTrain = " --profile tiny --batch-size 2 --lr 1e-3 --threads 1 -q";

  TempDir dir_{"cli"};
};

}  // namespace

TEST_F(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("frobnicate").code, 2);
  EXPECT_EQ(run("finetune --data corpus").code, 2);
  const CliRun unknown = run("train-scratch --data corpus --set optim.momentum=1");
  EXPECT_EQ(unknown.code, 2);
  EXPECT_NE(unknown.output.find("unknown config key 'optim.momentum'"), std::string::npos);
  EXPECT_EQ(run("train-scratch --data corpus --lr fast").code, 2);
  EXPECT_EQ(run("curves --out c").code, 2);
  EXPECT_EQ(run("--help").code, 0);
}

TEST_F(Cli, SynthIsDeterministic) {
  ASSERT_EQ(run("synth --out again --count 4 --size 48 --seed 5 -q").code, 0);
  for (const char* sub : {"images", "masks"}) {
    for (const auto& e : fs::directory_iterator(at("corpus") / sub)) {
      EXPECT_EQ(slurp(e.path()), slurp(at("again") / sub / e.path().filename())) << e.path();
    }
  }
  EXPECT_EQ(data::load_corpus({at("corpus")}).size(), 4u);
}

TEST_F(Cli, ConfigFileFlagsAndSetCompose) {
  std::ofstream(at("run.cfg")) << "# base\noptim.seed = 3\noptim.batch_size = 4\ntrain.scratch_epochs = 1\n";
  const CliRun r = run("train-scratch -c run.cfg --data corpus --out s --seed 9 --set optim.seed=11" +
                    std::string(kTrain));
  ASSERT_EQ(r.code, 0) << r.output;
  const RunConfig saved = RunConfig::load(at("s") / "config.txt");
  EXPECT_EQ(saved.optim.seed, 11u);       // --set beats --seed
  EXPECT_EQ(saved.optim.batch_size, 2);   // --batch-size beats the file
  EXPECT_EQ(saved.scratch_epochs, 1);     // untouched file value
  const Checkpoint ck = read_checkpoint(at("s") / "model.ckpt");
  EXPECT_EQ(ck.meta.config_digest, saved.digest());
  EXPECT_EQ(ck.meta.stage, "scratch");
  EXPECT_EQ(ck.meta.extra.at("model.profile"), "tiny");
}

TEST_F(Cli, TrainEvalCurvesPipeline) {
  ASSERT_EQ(run("train-scratch --data corpus --out s --epochs 2" + std::string(kTrain)).code, 0);
  const auto log = training::read_loss_log(at("s") / "loss.csv");
  ASSERT_EQ(log.size(), 4u);

  const CliRun ev = run("eval -m s/model.ckpt --data corpus --out e -q");
  ASSERT_EQ(ev.code, 0) << ev.output;
  const auto rows = metrics::read_report_csv(at("e") / "report.csv");
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].dataset, "corpus");
  EXPECT_EQ(rows[0].count, 4);

  // Saved maps are at mask resolution, and rescoring them reproduces the
  // reported MAE up to 8-bit quantisation.
  const auto corpus = data::load_corpus({at("corpus")});
  double mae_from_pngs = 0.0;
  for (const auto& s : corpus) {
    const auto png = data::read_image(at("e") / "corpus" / "predictions" / (s.id + ".png"));
    ASSERT_EQ(png.height, 48);
    ASSERT_EQ(png.width, 48);
    data::Image8 gray(48, 48, 1);
    for (int64_t i = 0; i < 48 * 48; ++i) gray.pixels[i] = png.pixels[i * 3];
    mae_from_pngs += metrics::mae(metrics::prediction_plane(gray), metrics::mask_plane(s.mask)) / 4.0;
  }
  EXPECT_NEAR(mae_from_pngs, rows[0].mae, 0.5 / 255.0 + 1e-6);
  EXPECT_NEAR(metrics::read_curve_csv(at("e") / "corpus" / "curve.csv").max_f_beta(), rows[0].max_f_beta, 1e-6);

  const CliRun cv = run("curves --pr scratch=e --loss s --out plots -q");
  ASSERT_EQ(cv.code, 0) << cv.output;
  for (const char* f : {"pr.svg", "fmeasure.svg", "loss.svg", "pr_curves.csv", "loss_curves.csv", "config.txt"}) {
    EXPECT_TRUE(fs::exists(at("plots") / f)) << f;
  }
  EXPECT_NE(slurp(at("plots") / "pr.svg").find("scratch corpus"), std::string::npos);
  std::ifstream merged(at("plots") / "loss_curves.csv");
  std::string header, first;
  std::getline(merged, header);
  std::getline(merged, first);
  EXPECT_EQ(header, "series,epoch,iteration,loss");
  EXPECT_EQ(first, "s," + training::format_loss_row(log[0]));
}

TEST_F(Cli, FinetuneAndTransferRecordLineage) {
  ASSERT_EQ(run("pretrain --data corpus --out p --epochs 1" + std::string(kTrain)).code, 0);
  ASSERT_EQ(run("finetune --data corpus --init p/model.ckpt --out f --epochs 1" + std::string(kTrain)).code, 0);
  const auto meta = read_checkpoint(at("f") / "model.ckpt").meta;
  EXPECT_EQ(meta.stage, "dbd-finetuned");
  ASSERT_EQ(meta.lineage.size(), 2u);
  EXPECT_EQ(meta.lineage[0].rfind("sod-pretrained:1:", 0), 0u);

  ASSERT_EQ(run("transfer --sod corpus --dbd corpus --out t --pretrain-epochs 1 --finetune-epochs 1" +
                std::string(kTrain))
                .code,
            0);
  EXPECT_EQ(read_checkpoint(at("t") / "finetune" / "model.ckpt").meta.lineage.size(), 2u);
}

TEST_F(Cli, ResumeContinuesTheLog) {
  ASSERT_EQ(run("train-scratch --data corpus --out r --epochs 1" + std::string(kTrain)).code, 0);
  ASSERT_EQ(run("train-scratch --data corpus --out r --epochs 2 --resume" + std::string(kTrain)).code, 0);
  ASSERT_EQ(run("train-scratch --data corpus --out full --epochs 2" + std::string(kTrain)).code, 0);
  EXPECT_EQ(slurp(at("r") / "loss.csv"), slurp(at("full") / "loss.csv"));
  EXPECT_EQ(run("train-scratch --data corpus --out fresh --resume" + std::string(kTrain)).code, 1);
}

TEST_F(Cli, RuntimeFailureLeavesOneLineMarker) {
  const CliRun r = run("train-scratch --data nowhere --out bad" + std::string(kTrain));
  EXPECT_EQ(r.code, 1);
  const std::string marker = slurp(at("bad") / "FAILED");
  EXPECT_NE(marker.find("nowhere"), std::string::npos);
  EXPECT_EQ(std::count(marker.begin(), marker.end(), '\n'), 1);

  // A later success clears it.
  ASSERT_EQ(run("train-scratch --data corpus --out bad --epochs 1" + std::string(kTrain)).code, 0);
  EXPECT_FALSE(fs::exists(at("bad") / "FAILED"));
}

TEST_F(Cli, MalformedCurveNamesTheLine) {
  std::ofstream(at("broken.csv")) << "threshold,precision,recall,f_beta\n0,1,1,1\n1,oops,1,1\n";
  const CliRun r = run("curves --pr broken.csv --out plots");
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(slurp(at("plots") / "FAILED").find("broken.csv:3"), std::string::npos) << r.output;
}

TEST_F(Cli, OutputRootComesFromEnvironment) {
  const CliRun env = afiu_cli("synth --count 1 --size 32 -q", dir_.path());
  EXPECT_EQ(env.code, 0);
  EXPECT_TRUE(fs::exists(at("runs") / "synth" / "config.txt"));
  ASSERT_EQ(std::system(("cd '" + dir_.path().string() + "' && AFIU_OUTPUT_ROOT=outroot '" AFIU_CLI_PATH
                         "' synth --count 1 --size 32 -q")
                            .c_str()),
            0);
  EXPECT_TRUE(fs::exists(at("outroot") / "synth" / "config.txt"));
}
