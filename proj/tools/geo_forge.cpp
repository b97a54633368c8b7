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

// geo_forge: command-line entry point for every pipeline stage.

#include <cstdio>
#include <deque>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "geoforge/pipeline/pipeline.hpp"

namespace gp = geoforge::pipeline;

namespace {

constexpr int kUsageError = 2;

/// Options shared by every subcommand plus flags that map onto config keys.
struct Command {
  CLI::App* app = nullptr;
  std::vector<gp::Stage> stages;
  std::string seed, config, out, manifest, threads, stage_list;
  std::vector<std::string> sets;
  std::deque<std::pair<std::string, std::string>> mapped;  // config key, value
  std::vector<std::pair<CLI::Option*, std::size_t>> mapped_opts;

  void flag(const std::string& name, const std::string& key, const std::string& help) {
    mapped.emplace_back(key, std::string());
    mapped_opts.emplace_back(app->add_option(name, mapped.back().second, help + " [" + key + "]"), mapped.size() - 1);
  }
};

Command& add_command(CLI::App& root, std::deque<Command>& cmds, const std::string& name, const std::string& help,
                     std::vector<gp::Stage> stages) {
  auto& c = cmds.emplace_back();
  c.app = root.add_subcommand(name, help);
  c.stages = std::move(stages);
  c.app->add_option("--seed", c.seed, "Master seed (default 42)");
  c.app->add_option("--config", c.config, "key=value config file; command-line flags take precedence");
  c.app->add_option("--out", c.out, "Output directory for artifacts and reports (default geo_forge_out)");
  c.app->add_option("--manifest", c.manifest, "Corpus manifest; defaults to the generated corpus under --out");
  c.app->add_option("--threads", c.threads, "Worker threads (default GEO_FORGE_THREADS or all cores)");
  c.app->add_option("--set", c.sets, "Extra config override key=value (repeatable)");
  return c;
}

gp::PipelineConfig assemble(const Command& c, bool is_pipeline) {
  gp::PipelineConfig cfg;
  if (!c.config.empty()) gp::apply_config_file(cfg, c.config);
  if (!c.seed.empty()) cfg.set("seed", c.seed);
  if (!c.out.empty()) cfg.set("out", c.out);
  if (!c.manifest.empty()) cfg.set("manifest", c.manifest);
  if (!c.threads.empty()) cfg.set("threads", c.threads);
  for (const auto& [opt, i] : c.mapped_opts) {
    if (opt->count()) cfg.set(c.mapped[i].first, c.mapped[i].second);
  }
  for (const auto& kv : c.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw geoforge::ConfigError("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (is_pipeline) {
    if (!c.stage_list.empty()) cfg.set("stages", c.stage_list);
    // Without a manifest the pipeline regenerates its corpus first.
    if (!cfg.stages.empty() && cfg.manifest.empty()) cfg.stages.push_back(gp::Stage::kCorpus);
    if (cfg.stages.empty() && !cfg.manifest.empty()) {
      for (auto s : gp::kAllStages) {
        if (s != gp::Stage::kCorpus) cfg.stages.push_back(s);
      }
    }
  } else {
    cfg.stages = c.stages;
  }
  return cfg;
}

std::string cell(const geoforge::Json& v) {
  if (v.is_number_float()) {
    std::ostringstream os;
    os << std::setprecision(6) << v.get<double>();
    return os.str();
  }
  return v.is_string() ? v.get<std::string>() : v.dump();
}

void print_stage(const gp::StageResult& r) {
  std::printf("%-8s %-8s %8.2fs %4zu artifacts", std::string(gp::to_string(r.stage)).c_str(),
              std::string(r.status_name()).c_str(), r.seconds, r.artifacts.size());
  if (!r.error.empty()) std::printf("  %s", r.error.c_str());
  std::printf("\n");
  std::fflush(stdout);
}

void print_summary(const gp::StageResult& r) {
  if (!r.metrics.contains("summary")) return;
  std::printf("\n%-52s %s\n", "metric", "value");
  for (const auto& [k, v] : r.metrics["summary"].items()) std::printf("%-52s %s\n", k.c_str(), cell(v).c_str());
  for (const auto& m : r.metrics["missing_stages"]) std::printf("%-52s %s\n", ("(no report) " + m.get<std::string>()).c_str(), "-");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App root{"geo_forge: curate, encode, index, rank, collect, link and publish pin collections"};
  root.require_subcommand(1);
  std::deque<Command> cmds;

  add_command(root, cmds, "gen-corpus", "Generate the clustered synthetic corpus and trend feed", {gp::Stage::kCorpus})
      .flag("--pins", "corpus.pins", "Number of pins");
  {
    auto& c = add_command(root, cmds, "curate", "Filter engagement, dedup queries and label pairs", {gp::Stage::kCurate});
    c.flag("--top-n", "curate.top_n", "Queries kept per pin");
    c.flag("--dedup-threshold", "curate.dedup_threshold", "Cosine threshold for near-duplicate queries");
  }
  {
    auto& c = add_command(root, cmds, "train-encoder", "Train the contrastive encoder", {gp::Stage::kEncode});
    c.flag("--loss", "encoder.loss", "PinCLIP or SearchSAGE");
    c.flag("--steps", "encoder.steps", "Training steps");
    c.flag("--batch-size", "encoder.batch_size", "Batch size");
    c.flag("--learning-rate", "encoder.learning_rate", "SGD learning rate");
    c.flag("--temperature", "encoder.temperature", "Softmax temperature");
    c.flag("--output-dim", "encoder.output_dim", "Embedding dimension");
  }
  {
    auto& c = add_command(root, cmds, "build-index", "Build the HNSW index over encoded pins", {gp::Stage::kIndex});
    c.flag("--M", "index.m", "Graph degree");
    c.flag("--ef-construction", "index.ef_construction", "Build-time beam width");
    c.flag("--ef-search", "index.ef_search", "Query-time beam width");
    c.flag("--recall-queries", "index.recall_queries", "Queries used for the recall probe");
  }
  {
    auto& c = add_command(root, cmds, "train-ranker", "Train the two-tower annotation ranker", {gp::Stage::kRank});
    c.flag("--width", "ranker.width", "Width multiplier on hidden and output layers");
    c.flag("--epochs", "ranker.epochs", "Epochs");
    c.flag("--learning-rate", "ranker.learning_rate", "SGD learning rate");
    c.flag("--batch-size", "ranker.batch_size", "Batch size");
    c.flag("--margin", "ranker.margin", "Hinge margin");
  }
  {
    auto& c = add_command(root, cmds, "build-collections", "Retrieve collection members and write pages",
                          {gp::Stage::kCollect});
    c.flag("--k", "collect.k", "Members per collection");
    c.flag("--topics", "collect.topics", "File with one topic per line");
    c.flag("--judge-threshold", "collect.judge_threshold", "Embedding judge threshold");
  }
  {
    auto& c = add_command(root, cmds, "link", "Build the link graph, PageRank report and sitemap", {gp::Stage::kLink});
    c.flag("--mode", "link.mode", "enabled, control or ablation");
    c.flag("--base-url", "link.base_url", "Absolute site URL for the sitemap");
    c.flag("--annotations-per-pin", "link.annotations_per_pin", "Ranked annotations per pin");
  }
  {
    auto& c = add_command(root, cmds, "agent-run", "Run one trend-agent episode", {gp::Stage::kAgent});
    c.flag("--trends", "agent.trends", "Trend feed JSONL");
    c.flag("--memory-in", "agent.memory_in", "Long-term memory from a previous episode");
    c.flag("--regions", "agent.regions", "Comma-separated regions");
    c.flag("--timespans", "agent.timespans", "Comma-separated timespans");
    c.flag("--filter-threshold", "agent.filter_threshold", "Semantic filter threshold");
    c.flag("--min-count", "agent.min_count", "Relevant pins needed for sufficiency (strictly more than)");
    c.flag("--relevance-floor", "agent.relevance_floor", "Similarity floor for relevant pins");
    c.flag("--velocity-floor", "agent.velocity_floor", "Minimum trend velocity");
  }
  add_command(root, cmds, "eval", "Aggregate stage reports into report.json and print metrics", {gp::Stage::kEval});
  auto& pipe = add_command(root, cmds, "pipeline", "Run stages in dependency order", {});
  pipe.app->add_option("--stages", pipe.stage_list,
                       "Comma-separated subset of corpus,curate,encode,index,rank,collect,link,agent,eval");

  try {
    root.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return root.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return root.exit(e);
  } catch (const CLI::ParseError& e) {
    root.exit(e);
    return kUsageError;
  }

  const Command* chosen = nullptr;
  for (const auto& c : cmds) {
    if (c.app->parsed()) chosen = &c;
  }
  gp::PipelineConfig cfg;
  try {
    cfg = assemble(*chosen, chosen == &pipe);
  } catch (const geoforge::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsageError;
  }

  std::printf("%-8s %-8s %9s %14s\n", "stage", "status", "time", "");
  gp::PipelineReport report;
  try {
    report = gp::run_pipeline(cfg, print_stage);
  } catch (const geoforge::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  if (const auto* ev = report.find(gp::Stage::kEval); ev && ev->status == gp::StageResult::Status::kOk) {
    print_summary(*ev);
    std::printf("\nreport: %s\n", (cfg.out / gp::paths::kReport).string().c_str());
  }
  return report.ok() ? 0 : 1;
}
