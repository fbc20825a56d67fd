#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "expertadapt/core/rng.hpp"
#include "expertadapt/nn/checkpoint.hpp"
#include "expertadapt/nn/model.hpp"

using namespace expertadapt;
namespace fs = std::filesystem;

namespace {

nn::ModelConfig micro_config(int n_experts) {
  nn::ModelConfig cfg;
  cfg.input_h = cfg.input_w = 32;
  cfg.base_width = 4;
  cfg.stage_blocks = {1, 1, 1, 1};
  cfg.n_experts = n_experts;
  return cfg;
}

fs::path fresh_file(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("ea_ckpt_" + name);
  fs::remove(p);
  return p;
}

}  // namespace

TEST_CASE("checkpoints round-trip parameters, roster and metadata") {
  const fs::path path = fresh_file("roundtrip.ckpt");
  nn::CinUNet<float> model(micro_config(2), {3, 6}, 0xabcu);
  core::Rng rng(9u);
  for (auto& p : model.parameters())
    for (auto& v : *p.value) v += static_cast<float>(rng.uniform(-0.05, 0.05));

  nlohmann::json tc;
  tc["lr0"] = 0.001;
  nn::save_checkpoint(path.string(), model, tc, 77, 0x1234abcdu);

  nn::CheckpointMeta meta;
  nn::CinUNet<float> back = nn::load_checkpoint<float>(path.string(), &meta);
  REQUIRE(meta.expert_ids == std::vector<int>{3, 6});
  REQUIRE(meta.step == 77);
  REQUIRE(meta.rng_state == 0x1234abcdu);
  REQUIRE(meta.train_config.at("lr0").get<double>() == 0.001);
  REQUIRE(meta.model_cfg.base_width == 4);
  REQUIRE(back.expert_ids() == model.expert_ids());

  auto p0 = model.parameters();
  auto p1 = back.parameters();
  REQUIRE(p0.size() == p1.size());
  for (size_t i = 0; i < p0.size(); ++i) {
    REQUIRE(p0[i].name == p1[i].name);
    REQUIRE(*p0[i].value == *p1[i].value);  // float storage: bitwise round trip
  }
  fs::remove(path);
}

TEST_CASE("a double-precision model reloads through the float storage") {
  const fs::path path = fresh_file("cast.ckpt");
  nn::CinUNet<double> model(micro_config(1), {1}, 7u);
  nn::save_checkpoint(path.string(), model, nlohmann::json::object(), 0, 0);
  nn::CinUNet<double> back = nn::load_checkpoint<double>(path.string());

  nn::Tensor<double> x(1, 1, 32, 32);
  core::Rng rng(3u);
  for (auto& v : x.v) v = rng.uniform();
  nn::Tensor<double> y0 = model.forward(x, 1);
  nn::Tensor<double> y1 = back.forward(x, 1);
  for (size_t i = 0; i < y0.size(); ++i)
    REQUIRE(y1.v[i] == Catch::Approx(y0.v[i]).margin(1e-4));
  fs::remove(path);
}

TEST_CASE("unreadable or malformed checkpoint files are rejected") {
  REQUIRE_THROWS_AS(nn::load_checkpoint<float>("/nonexistent/nowhere.ckpt"), DataError);

  const fs::path garbage = fresh_file("garbage.ckpt");
  {
    std::ofstream out(garbage, std::ios::binary);
    out << "this is not a checkpoint at all, but it is long enough";
  }
  REQUIRE_THROWS_AS(nn::load_checkpoint<float>(garbage.string()), DataError);
  fs::remove(garbage);
}

TEST_CASE("truncated parameter data is detected") {
  const fs::path path = fresh_file("truncated.ckpt");
  nn::CinUNet<float> model(micro_config(1), {1}, 1u);
  nn::save_checkpoint(path.string(), model, nlohmann::json::object(), 0, 0);

  const auto full = fs::file_size(path);
  fs::resize_file(path, full - 64);
  REQUIRE_THROWS_AS(nn::load_checkpoint<float>(path.string()), DataError);
  fs::remove(path);
}

TEST_CASE("model config json rejects unknown and missing fields") {
  nn::ModelConfig cfg = micro_config(2);
  nlohmann::json j = nn::model_config_to_json(cfg);
  nn::ModelConfig back = nn::model_config_from_json(j);
  REQUIRE(back.input_h == cfg.input_h);
  REQUIRE(back.base_width == cfg.base_width);
  REQUIRE(back.stage_blocks == cfg.stage_blocks);
  REQUIRE(back.n_experts == cfg.n_experts);

  nlohmann::json missing = j;
  missing.erase("base_width");
  REQUIRE_THROWS_AS(nn::model_config_from_json(missing), ConfigError);
}
