#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "expertadapt/core/rng.hpp"
#include "expertadapt/nn/model.hpp"

using namespace expertadapt;
using nn::Tensor;

namespace {

nn::ModelConfig micro_config(int n_experts, bool condition_encoder = true) {
  nn::ModelConfig cfg;
  cfg.input_h = cfg.input_w = 32;
  cfg.base_width = 4;
  cfg.stage_blocks = {1, 1, 1, 1};
  cfg.n_experts = n_experts;
  cfg.condition_encoder = condition_encoder;
  return cfg;
}

Tensor<double> random_input(core::Rng& rng, int h = 32, int w = 32) {
  Tensor<double> x(1, 1, h, w);
  for (auto& v : x.v) v = rng.uniform();
  return x;
}

// Sum of channel sizes over every conditioned norm layer; each branch holds
// one gamma and one beta of that size.
int conditioned_channels(const nn::ModelConfig& cfg) {
  const int W = cfg.base_width;
  const std::array<int, 4> stage_width{W, 2 * W, 4 * W, 8 * W};
  int enc = W;  // stem norm
  int in_ch = W;
  for (int s = 0; s < 4; ++s) {
    const int out_ch = stage_width[static_cast<size_t>(s)];
    for (int b = 0; b < cfg.stage_blocks[static_cast<size_t>(s)]; ++b) {
      const int stride = (s > 0 && b == 0) ? 2 : 1;
      enc += 2 * out_ch;                                   // norm1 + norm2
      if (stride != 1 || in_ch != out_ch) enc += out_ch;   // projection norm
      in_ch = out_ch;
    }
  }
  int dec = 0;
  for (int w : cfg.resolved_decoder_widths()) dec += 2 * w;
  return (cfg.condition_encoder ? enc : 0) + dec;
}

}  // namespace

TEST_CASE("freshly built branches are identical: expert choice cannot move the output") {
  nn::CinUNet<double> model(micro_config(3), {2, 5, 7}, 0x5eedu);
  core::Rng rng(123u);
  Tensor<double> x = random_input(rng);

  Tensor<double> y2 = model.forward(x, 2);
  Tensor<double> y5 = model.forward(x, 5);
  Tensor<double> y7 = model.forward(x, 7);
  double diff = 0.0;
  for (size_t i = 0; i < y2.size(); ++i) {
    diff = std::max(diff, std::abs(y2.v[i] - y5.v[i]));
    diff = std::max(diff, std::abs(y2.v[i] - y7.v[i]));
  }
  REQUIRE(diff < 1e-12);

  SECTION("perturbing one branch separates only that expert") {
    for (auto& p : model.parameters())
      if (!p.role.shared && p.role.expert_slot == model.slot_of(5))
        for (auto& v : *p.value) v += 0.05;
    Tensor<double> y5b = model.forward(x, 5);
    Tensor<double> y2b = model.forward(x, 2);
    double moved = 0.0, fixed = 0.0;
    for (size_t i = 0; i < y2.size(); ++i) {
      moved = std::max(moved, std::abs(y5b.v[i] - y5.v[i]));
      fixed = std::max(fixed, std::abs(y2b.v[i] - y2.v[i]));
    }
    REQUIRE(moved > 1e-3);
    REQUIRE(fixed == 0.0);
  }
}

TEST_CASE("a backward pass leaves the inactive branches' gradients exactly zero") {
  nn::CinUNet<double> model(micro_config(3), {1, 2, 3}, 99u);
  core::Rng rng(7u);
  Tensor<double> x = random_input(rng);

  model.zero_grad();
  Tensor<double> logits = model.forward(x, 2);
  Tensor<double> dy(logits.n, logits.c, logits.h, logits.w);
  for (auto& v : dy.v) v = rng.uniform(-1.0, 1.0);
  model.backward(dy);

  const int active = model.slot_of(2);
  size_t active_nonzero = 0, shared_nonzero = 0;
  for (auto& p : model.parameters()) {
    if (p.role.shared) {
      for (double g : *p.grad)
        if (g != 0.0) ++shared_nonzero;
    } else if (p.role.expert_slot == active) {
      for (double g : *p.grad)
        if (g != 0.0) ++active_nonzero;
    } else {
      for (double g : *p.grad) REQUIRE(g == 0.0);
    }
  }
  REQUIRE(active_nonzero > 0);
  REQUIRE(shared_nonzero > 0);
}

TEST_CASE("per-expert parameter count is twice the conditioned channel total") {
  SECTION("micro model, encoder conditioned") {
    nn::ModelConfig cfg = micro_config(2);
    nn::CinUNet<double> model(cfg, {1, 6}, 1u);
    auto rep = model.partition_report();
    const size_t expected = 2 * static_cast<size_t>(conditioned_channels(cfg));
    REQUIRE(conditioned_channels(cfg) == 244);
    REQUIRE(rep.per_expert_count.at(1) == expected);
    REQUIRE(rep.per_expert_count.at(6) == expected);
    REQUIRE(rep.shared_count > 0);
  }

  SECTION("micro model, decoder-only conditioning") {
    nn::ModelConfig cfg = micro_config(2, /*condition_encoder=*/false);
    nn::CinUNet<double> model(cfg, {1, 2}, 1u);
    auto rep = model.partition_report();
    const size_t expected = 2 * static_cast<size_t>(conditioned_channels(cfg));
    REQUIRE(rep.per_expert_count.at(1) == expected);
    REQUIRE(rep.per_expert_count.at(2) == expected);
  }

  SECTION("desk model") {
    nn::ModelConfig cfg = nn::desk_model_config(3);
    nn::CinUNet<float> model(cfg, {1, 2, 3}, 1u);
    auto rep = model.partition_report();
    REQUIRE(conditioned_channels(cfg) == 728);
    for (int e : {1, 2, 3}) REQUIRE(rep.per_expert_count.at(e) == 2u * 728u);
  }
}

TEST_CASE("adding a branch preserves existing experts and grows the roster") {
  nn::CinUNet<double> model(micro_config(2), {1, 2}, 42u);
  // Separate the branches so the average init is distinguishable.
  core::Rng prng(5u);
  for (auto& p : model.parameters())
    if (!p.role.shared)
      for (auto& v : *p.value) v += prng.uniform(-0.1, 0.1);

  core::Rng rng(6u);
  Tensor<double> x = random_input(rng);
  Tensor<double> before1 = model.forward(x, 1);
  Tensor<double> before2 = model.forward(x, 2);

  model.add_expert_branch(6, nn::BranchInit::average);
  REQUIRE(model.has_expert(6));
  REQUIRE(model.config().n_experts == 3);

  Tensor<double> after1 = model.forward(x, 1);
  Tensor<double> after2 = model.forward(x, 2);
  for (size_t i = 0; i < after1.size(); ++i) {
    REQUIRE(after1.v[i] == before1.v[i]);
    REQUIRE(after2.v[i] == before2.v[i]);
  }

  // The averaged branch parameters are the means of the existing branches.
  std::map<std::string, std::vector<const std::vector<double>*>> by_name;
  for (auto& p : model.parameters())
    if (!p.role.shared) by_name[p.name].push_back(p.value);
  for (auto& [name, blocks] : by_name) {
    REQUIRE(blocks.size() == 3);
    for (size_t i = 0; i < blocks[0]->size(); ++i)
      REQUIRE((*blocks[2])[i] ==
              Catch::Approx(0.5 * ((*blocks[0])[i] + (*blocks[1])[i])).margin(1e-12));
  }

  REQUIRE_THROWS_AS(model.add_expert_branch(1, nn::BranchInit::identity), ConfigError);
  REQUIRE_THROWS_AS(model.forward(x, 9), ConfigError);
}

TEST_CASE("end-to-end model gradients agree with finite differences") {
  nn::CinUNet<double> model(micro_config(2), {1, 2}, 0xfeedu);
  core::Rng rng(17u);
  Tensor<double> x = random_input(rng);

  Tensor<double> y0 = model.forward(x, 1);
  Tensor<double> proj(y0.n, y0.c, y0.h, y0.w);
  for (auto& v : proj.v) v = rng.uniform(-1.0, 1.0);
  auto loss = [&](Tensor<double>& y) {
    double s = 0.0;
    for (size_t i = 0; i < y.size(); ++i) s += y.v[i] * proj.v[i];
    return s;
  };

  model.zero_grad();
  model.forward(x, 1);
  Tensor<double> dx = model.backward(proj);

  const double step = 1e-6;
  SECTION("input gradient spot checks") {
    for (size_t i : {size_t(3), size_t(257), size_t(600), size_t(1023)}) {
      Tensor<double> xp = x, xm = x;
      xp.v[i] += step;
      xm.v[i] -= step;
      Tensor<double> yp = model.forward(xp, 1);
      Tensor<double> ym = model.forward(xm, 1);
      const double fd = (loss(yp) - loss(ym)) / (2 * step);
      const double denom = std::max({std::abs(fd), std::abs(dx.v[i]), 1e-8});
      REQUIRE(std::abs(fd - dx.v[i]) / denom < 1e-4);
    }
  }

  SECTION("parameter gradient spot checks across roles") {
    auto params = model.parameters();
    int checked = 0;
    for (size_t pi = 0; pi < params.size(); pi += 9) {
      auto& p = params[pi];
      if (!p.role.shared && p.role.expert_slot != model.slot_of(1)) continue;
      const size_t i = p.value->size() / 2;
      const double keep = (*p.value)[i];
      (*p.value)[i] = keep + step;
      Tensor<double> yp = model.forward(x, 1);
      (*p.value)[i] = keep - step;
      Tensor<double> ym = model.forward(x, 1);
      (*p.value)[i] = keep;
      const double fd = (loss(yp) - loss(ym)) / (2 * step);
      const double an = (*p.grad)[i];
      const double denom = std::max({std::abs(fd), std::abs(an), 1e-8});
      REQUIRE(std::abs(fd - an) / denom < 1e-4);
      ++checked;
    }
    REQUIRE(checked >= 5);
  }
}

TEST_CASE("model construction validates its inputs") {
  REQUIRE_THROWS_AS(nn::CinUNet<double>(micro_config(2), {1}, 0u), ConfigError);
  REQUIRE_THROWS_AS(nn::CinUNet<double>(micro_config(2), {1, 1}, 0u), ConfigError);
  REQUIRE_THROWS_AS(nn::CinUNet<double>(micro_config(2), {0, 1}, 0u), ConfigError);

  nn::ModelConfig bad = micro_config(1);
  bad.input_h = 48;  // not a multiple of 32
  REQUIRE_THROWS_AS(nn::CinUNet<double>(bad, {1}, 0u), ConfigError);

  nn::CinUNet<double> model(micro_config(1), {1}, 0u);
  Tensor<double> wrong(1, 2, 32, 32);
  REQUIRE_THROWS_AS(model.forward(wrong, 1), ConfigError);
  Tensor<double> off(1, 1, 30, 30);
  REQUIRE_THROWS_AS(model.forward(off, 1), ConfigError);
}
