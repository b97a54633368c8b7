// Copyright 2026 The GeoForge Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <fstream>

#include "geoforge/pipeline/pipeline.hpp"
#include "test_util.hpp"

namespace geoforge::pipeline {
namespace {

PipelineConfig small_config(const std::filesystem::path& out) {
  PipelineConfig c;
  c.out = out;
  c.threads = 2;
  for (const char* kv : {"corpus.pins=240", "encoder.steps=30", "ranker.epochs=2", "agent.min_count=5", "collect.k=4"}) {
    const std::string s(kv);
    c.set(s.substr(0, s.find('=')), s.substr(s.find('=') + 1));
  }
  return c;
}

struct SmallRun {
  test::TempDir dir;
  PipelineReport report;
  SmallRun() { report = run_pipeline(small_config(dir.path)); }
};

const SmallRun& small_run() {
  static const SmallRun run;
  return run;
}

TEST(Config, KeysAndValuesAreValidated) {
  PipelineConfig c;
  EXPECT_THROW(c.set("no.such.key", "1"), ConfigError);
  EXPECT_THROW(c.set("index.ef_search", "fast"), ConfigError);
  EXPECT_THROW(c.set("index.ef_search", "0"), ConfigError);
  EXPECT_THROW(c.set("seed", "-3"), ConfigError);
  EXPECT_THROW(c.set("link.mode", "sideways"), ConfigError);
  EXPECT_THROW(c.set("link.base_url", "ftp://x"), ConfigError);
  EXPECT_THROW(c.set("stages", "curate,polish"), ConfigError);
  c.set("index.ef_search", "500");
  EXPECT_EQ(c.index.ef_search, 500u);
  c.set("stages", " link , curate ");
  EXPECT_EQ(c.stages, (std::vector<Stage>{Stage::kLink, Stage::kCurate}));
  c.set("agent.regions", "US,GB");
  EXPECT_EQ(c.agent.regions, (std::vector<std::string>{"US", "GB"}));
  const auto keys = PipelineConfig::keys();
  EXPECT_NE(std::find(keys.begin(), keys.end(), "ranker.width"), keys.end());
}

TEST(Config, FileReportsTheOffendingLine) {
  test::TempDir dir;
  const auto p = dir.path / "run.cfg";
  write_text(p, "# comment\n\nseed = 7\nindex.m=8\n");
  PipelineConfig c;
  apply_config_file(c, p);
  EXPECT_EQ(c.seed, 7u);
  EXPECT_EQ(c.index.M, 8u);
  write_text(p, "seed=7\nbogus=1\n");
  try {
    apply_config_file(c, p);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find(":2:"), std::string::npos);
  }
  write_text(p, "seed\n");
  EXPECT_THROW(apply_config_file(c, p), ConfigError);
  EXPECT_THROW(apply_config_file(c, dir.path / "absent.cfg"), ConfigError);
}

TEST(Pipeline, AllStagesSucceedAndRecordChecksums) {
  const auto& run = small_run();
  ASSERT_TRUE(run.report.ok());
  ASSERT_EQ(run.report.stages.size(), std::size(kAllStages));
  for (const auto& s : run.report.stages) {
    EXPECT_FALSE(s.artifacts.empty()) << to_string(s.stage);
    for (const auto& [rel, sum] : s.artifacts) {
      EXPECT_EQ(file_checksum((run.dir.path / rel).string()), sum) << rel;
    }
  }
  for (const char* rel : {paths::kSitemap, paths::kTrace, paths::kReport, paths::kRanker, paths::kIndex}) {
    EXPECT_TRUE(std::filesystem::exists(run.dir.path / rel)) << rel;
  }
  const auto report = Json::parse(read_text(run.dir.path / paths::kReport));
  EXPECT_TRUE(report["missing_stages"].empty());
  EXPECT_TRUE(report["summary"].contains("index/recall_at_10"));
  EXPECT_TRUE(report["summary"]["agent/replay_matches"].get<bool>());
}

TEST(Pipeline, SameSeedReproducesEveryChecksum) {
  const auto& first = small_run();
  test::TempDir dir;
  auto cfg = small_config(dir.path);
  cfg.threads = 1;
  const auto second = run_pipeline(cfg);
  ASSERT_TRUE(second.ok());
  for (std::size_t i = 0; i < second.stages.size(); ++i) {
    EXPECT_EQ(second.stages[i].artifacts, first.report.stages[i].artifacts) << to_string(second.stages[i].stage);
  }
  EXPECT_EQ(read_text(dir.path / paths::kReport), read_text(first.dir.path / paths::kReport));
}

TEST(Pipeline, StageRerunsFromArtifactsInIsolation) {
  const auto& first = small_run();
  test::TempDir dir;
  std::filesystem::copy(first.dir.path, dir.path, std::filesystem::copy_options::recursive);
  auto cfg = small_config(dir.path);
  cfg.stages = {Stage::kLink};
  const auto again = run_pipeline(cfg);
  ASSERT_TRUE(again.ok());
  EXPECT_EQ(again.stages[0].artifacts, first.report.find(Stage::kLink)->artifacts);
}

TEST(Pipeline, MissingArtifactNamesTheProducer) {
  const auto& first = small_run();
  test::TempDir dir;
  auto cfg = small_config(dir.path);
  cfg.manifest = first.dir.path / paths::kManifest;
  cfg.stages = {Stage::kIndex};
  const auto r = run_pipeline(cfg);
  ASSERT_EQ(r.stages.size(), 1u);
  EXPECT_EQ(r.stages[0].status, StageResult::Status::kFailed);
  EXPECT_NE(r.stages[0].error.find("encoder.ckpt"), std::string::npos);
  EXPECT_NE(r.stages[0].error.find("'encode'"), std::string::npos);
  EXPECT_FALSE(r.ok());
}

TEST(Pipeline, FailureSkipsDependentsOnly) {
  test::TempDir dir;
  auto cfg = small_config(dir.path);
  cfg.set("curate.neg_per_pos", "100000");
  cfg.stages = {Stage::kCorpus, Stage::kCurate, Stage::kRank, Stage::kEncode, Stage::kIndex};
  const auto r = run_pipeline(cfg);
  EXPECT_EQ(r.find(Stage::kCurate)->status, StageResult::Status::kFailed);
  EXPECT_EQ(r.find(Stage::kRank)->status, StageResult::Status::kSkipped);
  EXPECT_NE(r.find(Stage::kRank)->error.find("curate"), std::string::npos);
  EXPECT_EQ(r.find(Stage::kEncode)->status, StageResult::Status::kOk);
  EXPECT_EQ(r.find(Stage::kIndex)->status, StageResult::Status::kOk);
  EXPECT_FALSE(std::filesystem::exists(dir.path / paths::kReports / "curate.json"));
}

TEST(Pipeline, EvalNeedsAtLeastOneReport) {
  test::TempDir dir;
  auto cfg = small_config(dir.path);
  cfg.stages = {Stage::kEval};
  const auto r = run_pipeline(cfg);
  EXPECT_EQ(r.stages[0].status, StageResult::Status::kFailed);
  EXPECT_NE(r.stages[0].error.find("no stage reports"), std::string::npos);
}

TEST(Pipeline, CorpusStageRejectsExplicitManifest) {
  test::TempDir dir;
  auto cfg = small_config(dir.path);
  cfg.manifest = dir.path / "elsewhere.txt";
  cfg.stages = {Stage::kCorpus};
  EXPECT_EQ(run_pipeline(cfg).stages[0].status, StageResult::Status::kFailed);
}

TEST(LinkModes, AuthorityOrderingOnSmallRun) {
  const auto& run = small_run();
  const auto report = Json::parse(read_text(run.dir.path / paths::kReports / "link.json"));
  const auto& m = report["metrics"]["modes"];
  const double en = m["enabled"]["mean_collection_authority"], co = m["control"]["mean_collection_authority"],
               ab = m["ablation"]["mean_collection_authority"];
  EXPECT_GE(en, co);
  EXPECT_GE(co, ab);
  EXPECT_GT(m["ablation"]["orphan_pins"].get<std::size_t>(), m["control"]["orphan_pins"].get<std::size_t>());
  EXPECT_GT(m["ablation"]["orphan_pins"].get<std::size_t>(), m["enabled"]["orphan_pins"].get<std::size_t>());
}

}  // namespace
}  // namespace geoforge::pipeline
