#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "expertadapt/exp/experiments.hpp"

using namespace expertadapt;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& tag) {
  fs::path dir = fs::temp_directory_path() / ("ea_exp_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

/// A deliberately tiny study: 32x32 images, thin model, a handful of steps.
/// Sweep shapes stay at their minimum legal sizes so a whole experiment runs
/// in seconds while exercising every driver code path.
exp::ExperimentSpec micro_spec(const std::string& kind, const fs::path& out_dir) {
  exp::ExperimentSpec s;
  s.kind = kind;
  s.out_dir = out_dir.string();
  s.seed = 99;
  s.new_experts = {6};
  s.ann_counts = {2};
  s.expert_counts = {1};
  s.matrix_replicates = 2;
  s.n_ways = 2;
  s.train_cases = 6;
  s.ft_samples = 2;

  s.model.input_h = s.model.input_w = 32;
  s.model.base_width = 4;
  s.model.stage_blocks = {1, 1, 1, 1};

  s.train.batch_size = 2;
  s.train.train_steps = 25;
  s.train.finetune_steps = 15;
  s.train.crop = 32;

  s.synth.n_cases = 9;
  s.synth.height = s.synth.width = 32;
  s.synth.base_seed = 5150;
  s.synth.styles = {{1, 0, 0.5, 3, 11},  {2, +1, 0.5, 3, 12}, {3, -1, 0.5, 3, 13},
                    {4, +2, 0.5, 3, 14}, {5, -2, 0.5, 3, 15}, {6, +3, 0.5, 3, 16}};
  return s;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

report::RunResult matrix_key(const exp::ExperimentSpec& spec, int train_expert, int replicate) {
  report::RunResult key;
  key.experiment = "expert-matrix";
  key.config_hash = exp::spec_fingerprint(spec);
  key.train_expert = train_expert;
  key.replicate = replicate;
  key.combo = {train_expert};
  key.new_expert = 6;
  return key;
}

}  // namespace

TEST_CASE("run identifiers depend on cell identity, never on outcomes") {
  report::RunResult a;
  a.experiment = "expert-matrix";
  a.arm = "";
  a.train_expert = 3;
  a.replicate = 1;
  a.combo = {3};
  a.new_expert = 6;
  a.config_hash = "0123456789abcdef";
  a.metrics.dice = 0.8;
  a.metrics.assd = 1.5;
  a.metrics.hd95 = 4.0;
  a.seed = 7;

  const std::string id = report::ResultsLedger::run_id(a);
  REQUIRE(id.size() == 16);
  REQUIRE(id.find_first_not_of("0123456789abcdef") == std::string::npos);

  report::RunResult outcome_only = a;
  outcome_only.metrics.dice = 0.1;
  outcome_only.metrics.assd = 99.0;
  outcome_only.undefined_count = 3;
  outcome_only.seed = 123456;
  REQUIRE(report::ResultsLedger::run_id(outcome_only) == id);

  report::RunResult way = a;
  way.sampling_way = 1;
  REQUIRE(report::ResultsLedger::run_id(way) != id);

  report::RunResult combo = a;
  combo.combo = {3, 4};
  REQUIRE(report::ResultsLedger::run_id(combo) != id);

  report::RunResult config = a;
  config.config_hash = "fedcba9876543210";
  REQUIRE(report::ResultsLedger::run_id(config) != id);

  report::RunResult arm = a;
  arm.arm = "with";
  REQUIRE(report::ResultsLedger::run_id(arm) != id);

  const report::ResultsLedger ledger(fs::path("/anywhere"));
  REQUIRE(ledger.cell_path(a) == fs::path("/anywhere") / "expert-matrix" / (id + ".json"));
  REQUIRE(ledger.cell_path(outcome_only) == ledger.cell_path(a));
}

TEST_CASE("ledger finds cells by identity and loads whole experiments") {
  const fs::path root = fresh_dir("ledger");
  report::ResultsLedger ledger(root / "results");

  report::RunResult r;
  r.experiment = "ann-count";
  r.arm = "with";
  r.count = 2;
  r.combo = {1, 2, 3};
  r.sampling_way = 1;
  r.new_expert = 6;
  r.config_hash = "aaaaaaaaaaaaaaaa";
  r.metrics.dice = 0.5;
  r.metrics.assd = 2.25;
  r.metrics.hd95 = 6.5;
  r.metrics.surface_defined = true;
  r.seed = 42;

  REQUIRE_FALSE(ledger.find(r).has_value());
  REQUIRE(ledger.load("ann-count").empty());

  ledger.append(r);
  auto found = ledger.find(r);
  REQUIRE(found.has_value());
  REQUIRE(found->metrics.dice == 0.5);
  REQUIRE(found->metrics.assd == 2.25);
  REQUIRE(found->combo == std::vector<int>{1, 2, 3});
  REQUIRE(found->seed == 42);

  // Rewriting the same cell replaces it rather than duplicating it.
  report::RunResult updated = r;
  updated.metrics.dice = 0.75;
  ledger.append(updated);
  REQUIRE(ledger.find(r)->metrics.dice == 0.75);
  REQUIRE(ledger.load("ann-count").size() == 1);

  report::RunResult other = r;
  other.sampling_way = 2;
  ledger.append(other);
  REQUIRE(ledger.load("ann-count").size() == 2);
  REQUIRE(ledger.load("expert-count").empty());

  // A cell that cannot be parsed is a loud failure, not a silent skip.
  {
    std::ofstream bad(root / "results" / "ann-count" / "zzzzzzzzzzzzzzzz.json");
    bad << "this is not json {";
  }
  REQUIRE_THROWS_MATCHES(ledger.load("ann-count"), DataError,
                         Catch::Matchers::MessageMatches(
                             Catch::Matchers::ContainsSubstring("corrupt ledger cell")));
}

TEST_CASE("context preparation synthesizes once, splits the pool, and guards the data") {
  const fs::path dir = fresh_dir("ctx");
  const exp::ExperimentSpec spec = micro_spec("expert-matrix", dir);

  exp::ExperimentContext ctx = exp::prepare_context(spec);
  REQUIRE(ctx.train_pool.cases.size() == 6);
  REQUIRE(ctx.test_set.cases.size() == 3);
  for (int i = 0; i < 6; ++i) REQUIRE(ctx.train_pool.cases[static_cast<size_t>(i)].case_index == i + 1);
  for (int i = 0; i < 3; ++i) REQUIRE(ctx.test_set.cases[static_cast<size_t>(i)].case_index == i + 7);
  for (int e = 1; e <= 6; ++e) {
    REQUIRE(ctx.train_pool.expert_roster.count(data::ExpertId(e)) == 1);
    REQUIRE(ctx.test_set.cases[0].mask(data::ExpertId(e)).height() == 32);
  }
  REQUIRE(ctx.fingerprint == exp::spec_fingerprint(spec));
  REQUIRE(fs::exists(dir / "data" / "manifest.json"));
  REQUIRE(fs::exists(dir / "data" / "synth_config.json"));

  // A second context over the same directory reuses the files on disk.
  exp::ExperimentContext again = exp::prepare_context(spec);
  REQUIRE(again.train_pool.cases.size() == 6);

  // Same directory, different generation settings: refuse to mix datasets.
  exp::ExperimentSpec drifted = spec;
  drifted.synth.base_seed += 1;
  REQUIRE_THROWS_MATCHES(exp::prepare_context(drifted), DataError,
                         Catch::Matchers::MessageMatches(
                             Catch::Matchers::ContainsSubstring("different configuration")));

  // A requested expert with no annotations on disk is a data error.
  exp::ExperimentSpec wrong_expert = spec;
  wrong_expert.new_experts = {8};
  REQUIRE_THROWS_MATCHES(exp::prepare_context(wrong_expert), DataError,
                         Catch::Matchers::MessageMatches(
                             Catch::Matchers::ContainsSubstring("new expert 8")));

  // No held-out cases left is a configuration error, caught before any IO.
  exp::ExperimentSpec no_test = spec;
  no_test.train_cases = 9;
  REQUIRE_THROWS_AS(exp::prepare_context(no_test), ConfigError);

  exp::ExperimentSpec no_out = spec;
  no_out.out_dir.clear();
  REQUIRE_THROWS_AS(exp::experiment_paths(no_out), ConfigError);
}

TEST_CASE("cross-expert matrix runs resume from the ledger and rebuild identical tables") {
  const fs::path dir = fresh_dir("matrix");
  const exp::ExperimentSpec spec = micro_spec("expert-matrix", dir);

  // 6 training experts (5 pool + 1 new) x 2 replicates x 1 evaluation target.
  exp::ExperimentOutcome first = exp::run_experiment(spec);
  REQUIRE(first.stats.computed == 12);
  REQUIRE(first.stats.reused == 0);
  REQUIRE(first.tables.size() == 3);

  std::map<std::string, std::string> bytes;
  for (const auto& p : first.tables) {
    REQUIRE(fs::exists(p));
    bytes[p.filename().string()] = slurp(p);
  }
  REQUIRE(bytes.count("expert-matrix-test6.md") == 1);
  REQUIRE(bytes.count("expert-matrix-test6.csv") == 1);
  REQUIRE(bytes.count("expert-matrix-test6.json") == 1);

  {
    report::ResultsLedger ledger(dir / "results");
    REQUIRE(ledger.load("expert-matrix").size() == 12);
  }

  // Second run: everything is already recorded, nothing is trained.
  exp::ExperimentOutcome second = exp::run_experiment(spec);
  REQUIRE(second.stats.computed == 0);
  REQUIRE(second.stats.reused == 12);
  for (const auto& p : second.tables) REQUIRE(slurp(p) == bytes.at(p.filename().string()));

  // Rebuilding reports alone touches no results and emits identical bytes.
  std::vector<fs::path> rebuilt = exp::regenerate_reports(spec);
  REQUIRE(rebuilt.size() == 3);
  for (const auto& p : rebuilt) REQUIRE(slurp(p) == bytes.at(p.filename().string()));

  // Deleting one recorded cell makes the next run recompute exactly that
  // cell, and the deterministic pipeline reproduces the same table bytes.
  {
    report::ResultsLedger ledger(dir / "results");
    REQUIRE(fs::remove(ledger.cell_path(matrix_key(spec, 2, 1))));
  }
  exp::ExperimentOutcome third = exp::run_experiment(spec);
  REQUIRE(third.stats.computed == 1);
  REQUIRE(third.stats.reused == 11);
  for (const auto& p : third.tables) REQUIRE(slurp(p) == bytes.at(p.filename().string()));

  // The rendered table covers one row per training expert.
  exp::ExperimentContext ctx = exp::prepare_context(spec);
  report::RenderTable t = exp::build_expert_matrix_table(ctx, 6);
  REQUIRE(t.row_labels ==
          std::vector<std::string>{"trained on expert 1", "trained on expert 2",
                                   "trained on expert 3", "trained on expert 4",
                                   "trained on expert 5", "trained on expert 6"});
  REQUIRE(t.columns == std::vector<std::string>{"Dice (%)", "ASSD", "95HD"});
  REQUIRE(t.cells.size() == 6);
  for (const auto& row : t.cells) {
    REQUIRE(row.size() == 3);
    REQUIRE(row[0].value >= 0.0);
    REQUIRE(row[0].value <= 100.0);
  }

  // Results from one experiment never leak into another's tables.
  REQUIRE_THROWS_MATCHES(exp::build_ann_count_table(ctx, 6), DataError,
                         Catch::Matchers::MessageMatches(
                             Catch::Matchers::ContainsSubstring("no ann-count results")));
}

TEST_CASE("breadth sweep caches pre-trained models and aggregates per-breadth rows") {
  const fs::path dir = fresh_dir("breadth");
  const exp::ExperimentSpec spec = micro_spec("expert-count", dir);

  // k=0: 2 ways from scratch; k=1: 5 single-expert combinations x 2 ways.
  exp::ExperimentOutcome first = exp::run_experiment(spec);
  REQUIRE(first.stats.computed == 12);
  REQUIRE(first.stats.reused == 0);

  int checkpoints = 0;
  for (const auto& e : fs::directory_iterator(dir / "checkpoints"))
    if (e.path().extension() == ".ckpt") ++checkpoints;
  REQUIRE(checkpoints == 5);

  exp::ExperimentOutcome second = exp::run_experiment(spec);
  REQUIRE(second.stats.computed == 0);
  REQUIRE(second.stats.reused == 12);

  exp::ExperimentContext ctx = exp::prepare_context(spec);
  report::RenderTable t = exp::build_expert_count_table(ctx, 6);
  REQUIRE(t.row_labels == std::vector<std::string>{"k=0 (from scratch)", "k=1"});
  REQUIRE(t.cells.size() == 2);
  REQUIRE(t.cells[0].size() == 3);
  REQUIRE_FALSE(t.notes.empty());
  REQUIRE(t.title == "Pre-training breadth sweep, new expert 6");

  // No results were ever recorded for a second adaptation target.
  REQUIRE_THROWS_MATCHES(exp::build_expert_count_table(ctx, 7), DataError,
                         Catch::Matchers::MessageMatches(
                             Catch::Matchers::ContainsSubstring("expert 7")));
}
