#pragma once

#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "expertadapt/augment/augment.hpp"
#include "expertadapt/data/sampling.hpp"
#include "expertadapt/metrics/seg_metrics.hpp"
#include "expertadapt/nn/checkpoint.hpp"
#include "expertadapt/nn/optim.hpp"
#include "expertadapt/objectives/losses.hpp"

namespace expertadapt::train {

using data::AnnotatedCase;
using data::ExpertCombination;
using data::ExpertId;
using data::MultiExpertDataset;

struct TrainConfig {
  int batch_size = 16;
  int train_steps = 5000;
  int finetune_steps = 1000;
  double lr0 = 0.001;
  double poly_power = 0.9;
  nn::OptimizerKind optimizer = nn::OptimizerKind::radam;
  std::uint64_t seed = 0;
  int crop = 192;  // square crop applied in training and evaluation
  nn::Scope finetune_scope = nn::Scope::all;
  nn::BranchInit finetune_init = nn::BranchInit::identity;
  double dice_smooth = 1.0;
  augment::AugmentConfig augment;

  bool operator==(const TrainConfig&) const = default;

  void validate() const {
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (train_steps < 1 || finetune_steps < 1) throw ConfigError("step counts must be >= 1");
    if (!(lr0 > 0.0)) throw ConfigError("lr0 must be positive");
    if (!(poly_power > 0.0)) throw ConfigError("poly power must be positive");
    if (crop < 32) throw ConfigError("crop must be at least 32");
    augment.validate();
  }

  augment::AugmentConfig augment_for_crop() const {
    augment::AugmentConfig a = augment;
    a.crop_h = a.crop_w = crop;
    return a;
  }
};

/// Polynomial annealing: lr0 · (1 − step/total)^power, clamped at zero past
/// the end.
inline double lr_schedule(long step, const TrainConfig& cfg, long total_steps) {
  if (step < 0) throw ConfigError("lr_schedule: negative step");
  if (total_steps < 1) throw ConfigError("lr_schedule: total_steps must be >= 1");
  if (step >= total_steps) return 0.0;
  const double frac = 1.0 - static_cast<double>(step) / static_cast<double>(total_steps);
  return cfg.lr0 * std::pow(frac, cfg.poly_power);
}

struct LossLogEntry {
  long step = 0;     // 1-based, the step just completed
  double lr = 0.0;
  double loss_raw = 0.0;   // summed objective over batch x experts
  double loss_norm = 0.0;  // loss_raw / (batch x experts)
};

/// Line-delimited JSON, one object per completed step.
inline void write_loss_log(const std::string& path, const std::vector<LossLogEntry>& log) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path);
  for (const auto& e : log) {
    nlohmann::json line{
        {"step", e.step}, {"lr", e.lr}, {"loss_raw", e.loss_raw}, {"loss_norm", e.loss_norm}};
    out << line.dump() << "\n";
  }
}

namespace engine_detail {

inline void scale_grads(std::vector<nn::ParamRef<float>>& params, double factor) {
  for (auto& p : params)
    for (auto& g : *p.grad) g = static_cast<float>(g * factor);
}

inline std::uint64_t augment_key(std::uint64_t seed, std::uint64_t stage_tag, long step,
                                 int slot) {
  return Rng::keyed(seed, {stage_tag, 0x5a09u, static_cast<std::uint64_t>(step),
                           static_cast<std::uint64_t>(slot)})
      .next_u64();
}

}  // namespace engine_detail

using Model = nn::CinUNet<float>;

/// Multi-expert training stage. Each step draws `batch_size` cases uniformly
/// with replacement, augments them, and takes one optimizer step on the
/// combo objective normalized by (batch x combo size). Throws NumericError
/// on a non-finite loss, after writing a diagnostic checkpoint when a path
/// is configured.
struct TrainOptions {
  std::string loss_log_path;             // empty = keep log in memory only
  std::string diagnostic_checkpoint_path;  // written on numerical failure
};

inline std::vector<LossLogEntry> train(Model& model, const MultiExpertDataset& dataset,
                                       const ExpertCombination& combo, const TrainConfig& cfg,
                                       const TrainOptions& opts = {}) {
  cfg.validate();
  combo.validate();
  if (dataset.cases.empty()) throw DataError("cannot train on an empty dataset");
  for (ExpertId e : combo.members) model.slot_of(e.value);  // branches must exist

  auto params = model.parameters();
  nn::Optimizer<float> optimizer(cfg.optimizer, params);
  Rng sampler = Rng::keyed(cfg.seed, {0x7e321u});
  const augment::AugmentConfig aug = cfg.augment_for_crop();
  const double norm = 1.0 / (static_cast<double>(cfg.batch_size) * combo.members.size());

  std::vector<LossLogEntry> log;
  log.reserve(static_cast<size_t>(cfg.train_steps));
  std::ofstream log_out;
  if (!opts.loss_log_path.empty()) {
    log_out.open(opts.loss_log_path, std::ios::trunc);
    if (!log_out) throw DataError("cannot write " + opts.loss_log_path);
  }

  for (long step = 0; step < cfg.train_steps; ++step) {
    std::vector<AnnotatedCase> batch;
    batch.reserve(static_cast<size_t>(cfg.batch_size));
    for (int slot = 0; slot < cfg.batch_size; ++slot) {
      const int pick = static_cast<int>(sampler.next_below(
          static_cast<std::uint64_t>(dataset.cases.size())));
      batch.push_back(augment::augment_sample(
          dataset.cases[static_cast<size_t>(pick)], aug,
          engine_detail::augment_key(cfg.seed, 0x7121u, step, slot)));
    }

    model.zero_grad();
    const double raw =
        objectives::multi_task_loss(model, batch, combo, cfg.dice_smooth, true);
    engine_detail::scale_grads(params, norm);
    const double lr = lr_schedule(step, cfg, cfg.train_steps);

    LossLogEntry entry{step + 1, lr, raw, raw * norm};
    if (!std::isfinite(raw)) {
      if (!opts.diagnostic_checkpoint_path.empty())
        nn::save_checkpoint(opts.diagnostic_checkpoint_path, model, nlohmann::json::object(),
                            step, sampler.state());
      throw NumericError(detail::strprintf("non-finite training loss at step %ld", step + 1));
    }
    optimizer.step(lr);
    if (log_out) {
      nlohmann::json line{{"step", entry.step}, {"lr", entry.lr},
                          {"loss_raw", entry.loss_raw}, {"loss_norm", entry.loss_norm}};
      log_out << line.dump() << "\n";
    }
    log.push_back(entry);
  }
  model.release_caches();
  return log;
}

/// Fine-tuning stage: adapts an existing model to `new_expert` on a small
/// annotated sample list. The new branch is created here (per
/// cfg.finetune_init) unless it already exists; optimization covers the
/// scope selection only (shared + new branch, or the new branch alone), so
/// other experts' affines are untouched.
inline std::vector<LossLogEntry> finetune(Model& model,
                                          const std::vector<objectives::LabeledSample>& new_data,
                                          int new_expert, const TrainConfig& cfg,
                                          const TrainOptions& opts = {}) {
  cfg.validate();
  if (new_data.empty()) throw DataError("fine-tuning requires at least one sample");
  if (!model.has_expert(new_expert)) model.add_expert_branch(new_expert, cfg.finetune_init);

  auto params = model.trainable_parameters(cfg.finetune_scope, new_expert);
  nn::Optimizer<float> optimizer(cfg.optimizer, params);
  Rng sampler = Rng::keyed(cfg.seed, {0xf7u});
  const augment::AugmentConfig aug = cfg.augment_for_crop();
  const double norm = 1.0 / static_cast<double>(cfg.batch_size);

  std::vector<LossLogEntry> log;
  log.reserve(static_cast<size_t>(cfg.finetune_steps));
  std::ofstream log_out;
  if (!opts.loss_log_path.empty()) {
    log_out.open(opts.loss_log_path, std::ios::trunc);
    if (!log_out) throw DataError("cannot write " + opts.loss_log_path);
  }

  for (long step = 0; step < cfg.finetune_steps; ++step) {
    std::vector<objectives::LabeledSample> batch;
    batch.reserve(static_cast<size_t>(cfg.batch_size));
    for (int slot = 0; slot < cfg.batch_size; ++slot) {
      const auto& src = new_data[sampler.next_below(new_data.size())];
      AnnotatedCase as_case;
      as_case.case_index = 1;
      as_case.image = src.image;
      as_case.masks.emplace(ExpertId(new_expert), src.mask);
      AnnotatedCase augd = augment::augment_sample(
          as_case, aug, engine_detail::augment_key(cfg.seed, 0xf72u, step, slot));
      batch.push_back({std::move(augd.image), augd.masks.at(ExpertId(new_expert))});
    }

    model.zero_grad();
    const double raw = objectives::finetune_loss(model, batch, new_expert, cfg.dice_smooth, true);
    engine_detail::scale_grads(params, norm);
    const double lr = lr_schedule(step, cfg, cfg.finetune_steps);

    LossLogEntry entry{step + 1, lr, raw, raw * norm};
    if (!std::isfinite(raw)) {
      if (!opts.diagnostic_checkpoint_path.empty())
        nn::save_checkpoint(opts.diagnostic_checkpoint_path, model, nlohmann::json::object(),
                            step, sampler.state());
      throw NumericError(detail::strprintf("non-finite fine-tune loss at step %ld", step + 1));
    }
    optimizer.step(lr);
    if (log_out) {
      nlohmann::json line{{"step", entry.step}, {"lr", entry.lr},
                          {"loss_raw", entry.loss_raw}, {"loss_norm", entry.loss_norm}};
      log_out << line.dump() << "\n";
    }
    log.push_back(entry);
  }
  model.release_caches();
  return log;
}

/// Mean metrics of one expert branch against one reference expert's masks
/// over a test set (evaluation applies the center crop only). Cases whose
/// surface distances are undefined (an empty mask) are excluded from the
/// ASSD/HD95 means and counted.
struct EvalResult {
  metrics::MetricTriple mean;  // surface_defined = (defined_count > 0)
  int n_cases = 0;
  int undefined_count = 0;
};

inline EvalResult evaluate_model(Model& model, const MultiExpertDataset& test_set,
                                 int expert_branch, int ref_expert, const TrainConfig& cfg) {
  if (test_set.cases.empty()) throw DataError("cannot evaluate on an empty test set");
  model.slot_of(expert_branch);
  EvalResult out;
  double dice_sum = 0.0, assd_sum = 0.0, hd_sum = 0.0;
  int defined = 0;
  for (const auto& c : test_set.cases) {
    AnnotatedCase cropped = augment::test_time_crop(c, cfg.crop, cfg.crop);
    data::BinaryMask pred = nn::predict_mask(model, cropped.image, expert_branch);
    metrics::MetricTriple m =
        metrics::evaluate_case(pred, cropped.mask(ExpertId(ref_expert)), test_set.spacing);
    dice_sum += m.dice;
    if (m.surface_defined) {
      assd_sum += m.assd;
      hd_sum += m.hd95;
      ++defined;
    }
    ++out.n_cases;
  }
  model.release_caches();
  out.undefined_count = out.n_cases - defined;
  out.mean.dice = dice_sum / out.n_cases;
  if (defined > 0) {
    out.mean.assd = assd_sum / defined;
    out.mean.hd95 = hd_sum / defined;
    out.mean.surface_defined = true;
  } else {
    // Surface distances undefined everywhere (e.g. the model predicts only
    // background): keep the Dice mean and flag the surface means instead of
    // aborting a whole sweep.
    out.mean.assd = 0.0;
    out.mean.hd95 = 0.0;
    out.mean.surface_defined = false;
  }
  return out;
}

}  // namespace expertadapt::train
