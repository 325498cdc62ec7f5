// Copyright 2026 The AFIU Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cstdlib>

#include "afiu/config.hpp"
#include "afiu/plot.hpp"

using namespace afiu;

namespace {

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(RunConfig, CanonicalTextRoundTrips) {
  RunConfig a;
  a.set("model.profile", "tiny");
  a.set("optim.learning_rate", "0.1");
  a.set("augment.flip_axis", "horizontal");
  a.set("model.dilated_levels", "3,4,5");
  a.set("data.corpus", "some dir/with spaces");
  const RunConfig b = RunConfig::parse(a.to_text());
  EXPECT_EQ(b.to_text(), a.to_text());
  EXPECT_EQ(b.optim.learning_rate, 0.1);
  EXPECT_EQ(b.corpus, "some dir/with spaces");
}

TEST(RunConfig, EveryKeyReadsBackWhatItPrints) {
  RunConfig c;
  for (const auto& key : RunConfig::keys()) {
    RunConfig d = c;
    d.set(key, c.get(key));
    EXPECT_EQ(d.to_text(), c.to_text()) << key;
  }
  EXPECT_EQ(RunConfig::keys().size(), 39u);
}

TEST(RunConfig, RealsSurviveTheTextForm) {
  RunConfig c;
  for (double v : {1e-5, 0.1, 1.0 / 3.0, 2.5e-7, 0.999}) {
    c.optim.learning_rate = v;
    EXPECT_EQ(RunConfig::parse(c.to_text()).optim.learning_rate, v);
  }
  c.set("optim.learning_rate", "1e-5");
  EXPECT_EQ(c.get("optim.learning_rate"), "1e-05");
}

TEST(RunConfig, ProfileAppliesBeforeOtherModelKeys) {
  const RunConfig c = RunConfig::parse("model.input_height = 96\nmodel.profile = tiny\n");
  EXPECT_EQ(c.profile, "tiny");
  EXPECT_EQ(c.model.input_height, 96);
  EXPECT_EQ(c.model.interaction_width, AfiuConfig::tiny().interaction_width);
}

TEST(RunConfig, CommentsAndBlankLines) {
  const RunConfig c = RunConfig::parse("# header\n\n   optim.batch_size=4   \n  # indented comment\n");
  EXPECT_EQ(c.optim.batch_size, 4);
}

TEST(RunConfig, ErrorsNameSourceAndLine) {
  EXPECT_NE(error_of([] { RunConfig::parse("optim.batch_size = 4\nmodel.colour = red\n", "a.cfg"); })
                .find("a.cfg:2: unknown config key 'model.colour'"),
            std::string::npos);
  EXPECT_NE(error_of([] { RunConfig::parse("\n\noptim.batch_size = 4x\n", "b.cfg"); }).find("b.cfg:3:"),
            std::string::npos);
  EXPECT_NE(error_of([] { RunConfig::parse("optim.seed = 1\noptim.seed = 2\n"); }).find("already set on line 1"),
            std::string::npos);
  EXPECT_NE(error_of([] { RunConfig::parse("just words\n"); }).find(":1: expected key=value"), std::string::npos);
}

TEST(RunConfig, RejectsMalformedValues) {
  RunConfig c;
  for (const auto& [k, v] : std::vector<std::pair<std::string, std::string>>{
           {"model.profile", "huge"},
           {"model.zero_init_residual", "yes"},
           {"model.backbone_blocks", "3,4,6"},
           {"model.rsu_depths", "1,2,3,4,5,6"},
           {"model.init_seed", "-1"},
           {"optim.learning_rate", "fast"},
           {"optim.batch_size", "8.5"},
           {"augment.flip_axis", "diagonal"},
           {"synth.style", "noir"},
           {"run.threads", ""},
       }) {
    EXPECT_THROW(c.set(k, v), ConfigError) << k << " = " << v;
  }
}

TEST(RunConfig, ValidateCatchesInvariants) {
  RunConfig c;
  c.optim.batch_size = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = RunConfig{};
  c.finetune_epochs = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = RunConfig{};
  c.augment.flip_probability = 1.5;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_NO_THROW(RunConfig{}.validate());
}

TEST(RunConfig, DilatedLevelsFollowInputUnlessPinned) {
  RunConfig c;
  c.set("model.input_height", "64");
  c.set("model.input_width", "64");
  EXPECT_EQ(c.resolved_model().dilated_levels, default_dilated_levels(64, 64, c.model.rsu_depths));
  c.set("model.dilated_levels", "5");
  EXPECT_EQ(c.resolved_model().dilated_levels, std::set<int>{5});
  EXPECT_EQ(c.get("model.dilated_levels"), "5");
  c.set("model.dilated_levels", "auto");
  EXPECT_EQ(c.get("model.dilated_levels"), "auto");
}

TEST(RunConfig, AugmentTargetsModelInput) {
  RunConfig c;
  c.set("model.input_height", "96");
  c.set("model.input_width", "128");
  const auto a = c.resolved_augment();
  EXPECT_EQ(a.target_height, 96);
  EXPECT_EQ(a.target_width, 128);
}

TEST(RunConfig, ModelEntriesRebuildTheModel) {
  RunConfig c;
  c.set("model.profile", "tiny");
  c.set("model.init_seed", "77");
  c.set("model.rsu_depths", "2,2,2,3,3");
  c.set("optim.batch_size", "2");
  const auto entries = c.model_entries();
  for (const auto& [k, v] : entries) EXPECT_EQ(k.rfind("model.", 0), 0u) << k;
  const RunConfig r = RunConfig::from_model_entries(entries);
  EXPECT_EQ(r.model_entries(), entries);
  EXPECT_EQ(r.resolved_model().rsu_depths, c.resolved_model().rsu_depths);
  EXPECT_EQ(r.resolved_model().init_seed, 77u);
}

TEST(Digest, MatchesPublishedFnvVectors) {
  EXPECT_EQ(fnv1a(""), 0xcbf29ce484222325ull);
  EXPECT_EQ(fnv1a("a"), 0xaf63dc4c8601ec8cull);
  EXPECT_EQ(fnv1a("foobar"), 0x85944171f73967e8ull);
}

TEST(Digest, IgnoresRunKeysOnly) {
  RunConfig a;
  RunConfig b = a;
  b.out = "elsewhere";
  b.threads = 3;
  EXPECT_EQ(a.digest(), b.digest());
  b.optim.seed = 1;
  EXPECT_NE(a.digest(), b.digest());
  EXPECT_EQ(a.digest().size(), 16u);
}

TEST(Overrides, SplitAssignment) {
  EXPECT_EQ(split_assignment("optim.seed = 4"), (std::pair<std::string, std::string>{"optim.seed", "4"}));
  EXPECT_EQ(split_assignment("data.corpus=a=b").second, "a=b");
  EXPECT_THROW(split_assignment("optim.seed"), ConfigError);
  EXPECT_THROW(split_assignment("=4"), ConfigError);
}

TEST(OutputRoot, EnvironmentOverridesDefault) {
  const char* saved = std::getenv("AFIU_OUTPUT_ROOT");
  const std::string keep = saved ? saved : "";
  ::unsetenv("AFIU_OUTPUT_ROOT");
  EXPECT_EQ(default_output_root(), std::filesystem::path("runs"));
  ::setenv("AFIU_OUTPUT_ROOT", "", 1);
  EXPECT_EQ(default_output_root(), std::filesystem::path("runs"));
  ::setenv("AFIU_OUTPUT_ROOT", "/data/out", 1);
  EXPECT_EQ(default_output_root(), std::filesystem::path("/data/out"));
  if (saved) ::setenv("AFIU_OUTPUT_ROOT", keep.c_str(), 1);
  else ::unsetenv("AFIU_OUTPUT_ROOT");
}

TEST(Plot, TicksAreRoundAndCoverTheRange) {
  EXPECT_EQ(plot::nice_ticks(0.0, 1.0), (std::vector<double>{0.0, 0.2, 0.4, 0.6, 0.8, 1.0}));
  const auto t = plot::nice_ticks(0.0, 255.0);
  EXPECT_EQ(t.front(), 0.0);
  EXPECT_EQ(t[1] - t[0], 50.0);
  EXPECT_LE(t.back(), 255.0);
}

TEST(Plot, RendersEscapedLabelsAndOnePolylinePerSeries) {
  plot::Chart c{"a < b", "x", "y", std::nullopt, std::nullopt, {}};
  c.series.push_back({"one & two", {0, 1, 2}, {0, 1, 4}});
  c.series.push_back({"three", {0, 1}, {1, 1}});
  const std::string svg = plot::render_svg(c);
  EXPECT_NE(svg.find("a &lt; b"), std::string::npos);
  EXPECT_NE(svg.find("one &amp; two"), std::string::npos);
  size_t n = 0;
  for (size_t p = svg.find("<polyline"); p != std::string::npos; p = svg.find("<polyline", p + 1)) ++n;
  EXPECT_EQ(n, 2u);
  c.series.push_back({"bad", {0, 1}, {1}});
  EXPECT_THROW(plot::render_svg(c), std::invalid_argument);
}
