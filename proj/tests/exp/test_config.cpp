#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "expertadapt/exp/config.hpp"

using namespace expertadapt;
using exp::ExperimentSpec;
namespace fs = std::filesystem;

TEST_CASE("profiles provide self-consistent defaults") {
  ExperimentSpec desk = exp::desk_spec();
  desk.kind = "ann-count";
  desk.validate(true);
  REQUIRE(desk.model.input_h == 64);
  REQUIRE(desk.train.crop == 64);
  REQUIRE(desk.synth.n_cases > desk.train_cases);

  ExperimentSpec paper = exp::paper_spec();
  paper.validate();
  REQUIRE(paper.model.input_h == 192);
  REQUIRE(paper.train.crop == 192);

  REQUIRE_THROWS_AS(exp::profile_spec("laptop"), ConfigError);
}

TEST_CASE("a spec survives serialize/parse round trips") {
  ExperimentSpec s = exp::desk_spec();
  s.kind = "expert-matrix";
  s.out_dir = "/tmp/somewhere";
  s.seed = 99u;
  s.new_experts = {6};
  s.train.optimizer = nn::OptimizerKind::adam;
  s.train.finetune_scope = nn::Scope::expert_only;
  s.synth.foreground = synth::ForegroundKind::ellipse;
  s.train.augment.prob = 0.25;

  const nlohmann::json j = exp::serialize_spec(s);
  const ExperimentSpec back = exp::spec_from_json(j);
  REQUIRE(back == s);
}

TEST_CASE("unknown keys are rejected by name at every level") {
  auto expect_error = [](nlohmann::json j, const std::string& needle) {
    try {
      exp::spec_from_json(j);
      FAIL("expected a config error mentioning " + needle);
    } catch (const ConfigError& e) {
      REQUIRE(std::string(e.what()).find(needle) != std::string::npos);
    }
  };

  expect_error(nlohmann::json{{"kinds", "ann-count"}}, "kinds");
  expect_error(nlohmann::json{{"train", {{"learning_rate", 0.1}}}}, "learning_rate");
  expect_error(nlohmann::json{{"model", {{"width", 8}}}}, "width");
  expect_error(nlohmann::json{{"synth", {{"cases", 10}}}}, "cases");
  expect_error(nlohmann::json{{"train", {{"augment", {{"crop_h", 64}}}}}}, "crop_h");
}

TEST_CASE("overrides apply on top of the chosen profile") {
  nlohmann::json j;
  j["profile"] = "desk";
  j["kind"] = "expert-count";
  j["seed"] = 12345;
  j["train"]["train_steps"] = 42;
  j["train"]["optimizer"] = "adam";
  j["synth"]["n_cases"] = 50;
  j["model"]["base_width"] = 12;

  const ExperimentSpec s = exp::spec_from_json(j);
  REQUIRE(s.kind == "expert-count");
  REQUIRE(s.seed == 12345u);
  REQUIRE(s.train.train_steps == 42);
  REQUIRE(s.train.optimizer == nn::OptimizerKind::adam);
  REQUIRE(s.synth.n_cases == 50);
  REQUIRE(s.model.base_width == 12);
  // Untouched fields keep the profile values.
  REQUIRE(s.train.finetune_steps == exp::desk_spec().train.finetune_steps);
  REQUIRE(s.ann_counts == exp::desk_spec().ann_counts);
}

TEST_CASE("validation guards the sweep parameters") {
  auto base = [] {
    ExperimentSpec s = exp::desk_spec();
    s.kind = "ann-count";
    return s;
  };

  ExperimentSpec overlap = base();
  overlap.new_experts = {3};
  REQUIRE_THROWS_AS(overlap.validate(), ConfigError);

  ExperimentSpec badn = base();
  badn.ann_counts = {0};
  REQUIRE_THROWS_AS(badn.validate(), ConfigError);

  ExperimentSpec toobig = base();
  toobig.ann_counts = {40};
  REQUIRE_THROWS_AS(toobig.validate(), ConfigError);

  ExperimentSpec badk = base();
  badk.expert_counts = {6};
  REQUIRE_THROWS_AS(badk.validate(), ConfigError);

  ExperimentSpec kindless = base();
  kindless.kind = "";
  kindless.validate();  // tolerated until a run needs it
  REQUIRE_THROWS_AS(kindless.validate(true), ConfigError);

  ExperimentSpec mismatch = base();
  mismatch.train.crop = 32;
  mismatch.model.input_h = mismatch.model.input_w = 32;
  // Crop and model agree, but the synthetic images must cover the crop.
  mismatch.synth.height = mismatch.synth.width = 16;
  REQUIRE_THROWS_AS(mismatch.validate(), ConfigError);

  ExperimentSpec shallow = base();
  shallow.synth.n_cases = shallow.train_cases;  // no held-out cases left
  REQUIRE_THROWS_AS(shallow.validate(), ConfigError);
}

TEST_CASE("config files load with parse errors reported") {
  const fs::path dir = fs::temp_directory_path() / "ea_cfg_test";
  fs::create_directories(dir);
  const fs::path good = dir / "good.json";
  {
    std::ofstream out(good);
    out << R"({"kind": "ann-count", "seed": 5})";
  }
  const ExperimentSpec s = exp::load_spec(good.string());
  REQUIRE(s.kind == "ann-count");
  REQUIRE(s.seed == 5u);

  const fs::path bad = dir / "bad.json";
  {
    std::ofstream out(bad);
    out << "{ not json";
  }
  REQUIRE_THROWS_AS(exp::load_spec(bad.string()), ConfigError);
  REQUIRE_THROWS_AS(exp::load_spec((dir / "missing.json").string()), ConfigError);
  fs::remove_all(dir);
}

TEST_CASE("the fingerprint tracks outcome-relevant fields only") {
  ExperimentSpec a = exp::desk_spec();
  a.kind = "ann-count";
  const std::string base = exp::spec_fingerprint(a);

  ExperimentSpec b = a;
  b.kind = "expert-count";
  b.out_dir = "/elsewhere";
  b.ann_counts = {5};
  b.matrix_replicates = 5;
  REQUIRE(exp::spec_fingerprint(b) == base);  // identity fields, not outcomes

  ExperimentSpec c = a;
  c.seed = a.seed + 1;
  REQUIRE(exp::spec_fingerprint(c) != base);

  ExperimentSpec d = a;
  d.train.train_steps += 1;
  REQUIRE(exp::spec_fingerprint(d) != base);

  ExperimentSpec e = a;
  e.synth.base_seed += 1;
  REQUIRE(exp::spec_fingerprint(e) != base);
}
