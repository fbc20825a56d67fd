#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "expertadapt/core/rng.hpp"
#include "expertadapt/objectives/losses.hpp"

using namespace expertadapt;
using data::AnnotatedCase;
using data::ExpertCombination;
using data::ExpertId;

namespace {

nn::ModelConfig micro_config(int n_experts) {
  nn::ModelConfig cfg;
  cfg.input_h = cfg.input_w = 32;
  cfg.base_width = 4;
  cfg.stage_blocks = {1, 1, 1, 1};
  cfg.n_experts = n_experts;
  return cfg;
}

data::ImageGrid random_image(core::Rng& rng, int h, int w) {
  data::ImageGrid img(h, w);
  for (auto& p : img.pixels()) p = static_cast<float>(rng.uniform());
  return img;
}

data::BinaryMask disc_mask(int h, int w, double cy, double cx, double radius) {
  data::BinaryMask m(h, w);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c)
      if ((r - cy) * (r - cy) + (c - cx) * (c - cx) <= radius * radius)
        m.pixels()[static_cast<size_t>(r) * w + c] = 1;
  return m;
}

std::vector<AnnotatedCase> two_cases(core::Rng& rng, const std::vector<int>& experts) {
  std::vector<AnnotatedCase> batch;
  for (int i = 0; i < 2; ++i) {
    AnnotatedCase c;
    c.case_index = i + 1;
    c.image = random_image(rng, 32, 32);
    for (int e : experts)
      c.masks.emplace(ExpertId(e), disc_mask(32, 32, 14.0 + i, 15.0, 6.0 + e));
    batch.push_back(std::move(c));
  }
  return batch;
}

}  // namespace

TEST_CASE("singleton multi-expert objective equals the fine-tuning objective") {
  core::Rng rng(314159u);
  auto batch = two_cases(rng, {3});
  nn::CinUNet<double> model(micro_config(1), {3}, 0xabcdef12u);

  const double multi =
      objectives::multi_task_loss(model, batch, ExpertCombination({ExpertId(3)}), 1.0);

  std::vector<objectives::LabeledSample> samples;
  for (const auto& c : batch) samples.push_back({c.image, c.mask(ExpertId(3))});
  const double fine = objectives::finetune_loss(model, samples, 3, 1.0);

  REQUIRE(std::abs(multi - fine) < 1e-9);
}

TEST_CASE("composite objective is the manual per-case per-expert sum") {
  core::Rng rng(2718u);
  const std::vector<int> experts{1, 2, 4};
  auto batch = two_cases(rng, experts);
  nn::CinUNet<double> model(micro_config(3), experts, 77u);

  ExpertCombination combo({ExpertId(1), ExpertId(2), ExpertId(4)});
  const double composite = objectives::multi_task_loss(model, batch, combo, 1.0);

  // Manual route: every (case, expert) pair through a single-sample forward.
  double manual = 0.0;
  for (const auto& c : batch) {
    nn::Tensor<double> x(1, 1, 32, 32);
    std::copy(c.image.pixels().begin(), c.image.pixels().end(), x.v.begin());
    for (int e : experts) {
      nn::Tensor<double> logits = model.forward(x, e);
      manual += objectives::dice_loss(logits, c.mask(ExpertId(e)), 1.0);
    }
  }
  REQUIRE(std::abs(composite - manual) < 1e-6);
}

TEST_CASE("multi-expert gradients accumulate over the combo members") {
  core::Rng rng(555u);
  const std::vector<int> experts{1, 2};
  auto batch = two_cases(rng, experts);
  nn::CinUNet<double> model(micro_config(2), experts, 99u);

  // Joint pass over {1, 2}.
  model.zero_grad();
  objectives::multi_task_loss(model, batch, ExpertCombination({ExpertId(1), ExpertId(2)}), 1.0,
                              /*accumulate_grads=*/true);
  std::vector<std::vector<double>> joint;
  for (auto& p : model.parameters()) joint.push_back(*p.grad);

  // Two singleton passes without clearing in between.
  model.zero_grad();
  objectives::multi_task_loss(model, batch, ExpertCombination({ExpertId(1)}), 1.0, true);
  objectives::multi_task_loss(model, batch, ExpertCombination({ExpertId(2)}), 1.0, true);
  auto params = model.parameters();
  REQUIRE(params.size() == joint.size());
  for (size_t i = 0; i < params.size(); ++i) {
    REQUIRE(params[i].grad->size() == joint[i].size());
    for (size_t k = 0; k < joint[i].size(); ++k)
      REQUIRE((*params[i].grad)[k] == Catch::Approx(joint[i][k]).margin(1e-12));
  }
}

TEST_CASE("empty batches cost zero; unknown branches are rejected") {
  nn::CinUNet<double> model(micro_config(1), {2}, 5u);
  REQUIRE(objectives::multi_task_loss(model, {}, ExpertCombination({ExpertId(2)})) == 0.0);
  REQUIRE(objectives::finetune_loss(model, {}, 2) == 0.0);
  REQUIRE_THROWS_AS(objectives::finetune_loss(model, {}, 6), ConfigError);

  core::Rng rng(1u);
  auto batch = two_cases(rng, {2, 9});  // masks exist, but the model has no branch 9
  REQUIRE_THROWS_AS(
      objectives::multi_task_loss(model, batch, ExpertCombination({ExpertId(9)})),
      ConfigError);
}
