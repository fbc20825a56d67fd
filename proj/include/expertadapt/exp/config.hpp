#pragma once

#include <cstdint>
#include <fstream>
#include <initializer_list>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "expertadapt/nn/checkpoint.hpp"
#include "expertadapt/report/ledger.hpp"
#include "expertadapt/synth/generate.hpp"
#include "expertadapt/train/engine.hpp"

namespace expertadapt::exp {

inline constexpr std::array<const char*, 3> kExperimentKinds{"expert-matrix", "ann-count",
                                                             "expert-count"};

/// Experts whose annotations are available for pre-training; adaptation
/// targets must lie outside this pool.
inline constexpr std::array<int, 5> kTrainExperts{1, 2, 3, 4, 5};

namespace config_detail {

inline void reject_unknown_keys(const nlohmann::json& j,
                                std::initializer_list<const char*> allowed,
                                const std::string& scope) {
  if (!j.is_object()) throw ConfigError(scope + " must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed)
      if (it.key() == k) {
        ok = true;
        break;
      }
    if (!ok) throw ConfigError("unknown key in " + scope + ": " + it.key());
  }
}

template <typename T>
void maybe(const nlohmann::json& j, const char* key, T& target, const std::string& scope) {
  if (!j.contains(key)) return;
  try {
    target = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("bad value for " + scope + "." + key + ": " + e.what());
  }
}

inline std::string optimizer_name(nn::OptimizerKind k) {
  return k == nn::OptimizerKind::radam ? "radam" : "adam";
}
inline nn::OptimizerKind optimizer_from(const std::string& s) {
  if (s == "radam") return nn::OptimizerKind::radam;
  if (s == "adam") return nn::OptimizerKind::adam;
  throw ConfigError("unknown optimizer: " + s);
}
inline std::string scope_name(nn::Scope s) {
  return s == nn::Scope::all ? "all" : "expert_only";
}
inline nn::Scope scope_from(const std::string& s) {
  if (s == "all") return nn::Scope::all;
  if (s == "expert_only") return nn::Scope::expert_only;
  throw ConfigError("unknown finetune_scope: " + s);
}
inline std::string branch_init_name(nn::BranchInit b) {
  return b == nn::BranchInit::identity ? "identity" : "average";
}
inline nn::BranchInit branch_init_from(const std::string& s) {
  if (s == "identity") return nn::BranchInit::identity;
  if (s == "average") return nn::BranchInit::average;
  throw ConfigError("unknown finetune_init: " + s);
}
inline std::string foreground_name(synth::ForegroundKind f) {
  return f == synth::ForegroundKind::ellipse ? "ellipse" : "blob";
}
inline synth::ForegroundKind foreground_from(const std::string& s) {
  if (s == "ellipse") return synth::ForegroundKind::ellipse;
  if (s == "blob") return synth::ForegroundKind::blob;
  throw ConfigError("unknown foreground kind: " + s);
}

}  // namespace config_detail

// ---- JSON forms of the component configurations ---------------------------

inline nlohmann::json augment_config_to_json(const augment::AugmentConfig& a) {
  return nlohmann::json{{"translate_frac", a.translate_frac},
                        {"zoom_min", a.zoom_min},
                        {"zoom_max", a.zoom_max},
                        {"rotate_deg", a.rotate_deg},
                        {"noise_sigma_min", a.noise_sigma_min},
                        {"noise_sigma_max", a.noise_sigma_max},
                        {"blur_sigma_min", a.blur_sigma_min},
                        {"blur_sigma_max", a.blur_sigma_max},
                        {"brightness", a.brightness},
                        {"prob", a.prob}};
}

inline void apply_augment_config(const nlohmann::json& j, augment::AugmentConfig& a,
                                 const std::string& scope) {
  using namespace config_detail;
  reject_unknown_keys(j,
                      {"translate_frac", "zoom_min", "zoom_max", "rotate_deg", "noise_sigma_min",
                       "noise_sigma_max", "blur_sigma_min", "blur_sigma_max", "brightness",
                       "prob"},
                      scope);
  maybe(j, "translate_frac", a.translate_frac, scope);
  maybe(j, "zoom_min", a.zoom_min, scope);
  maybe(j, "zoom_max", a.zoom_max, scope);
  maybe(j, "rotate_deg", a.rotate_deg, scope);
  maybe(j, "noise_sigma_min", a.noise_sigma_min, scope);
  maybe(j, "noise_sigma_max", a.noise_sigma_max, scope);
  maybe(j, "blur_sigma_min", a.blur_sigma_min, scope);
  maybe(j, "blur_sigma_max", a.blur_sigma_max, scope);
  maybe(j, "brightness", a.brightness, scope);
  maybe(j, "prob", a.prob, scope);
}

inline nlohmann::json train_config_to_json(const train::TrainConfig& t) {
  return nlohmann::json{{"batch_size", t.batch_size},
                        {"train_steps", t.train_steps},
                        {"finetune_steps", t.finetune_steps},
                        {"lr0", t.lr0},
                        {"poly_power", t.poly_power},
                        {"optimizer", config_detail::optimizer_name(t.optimizer)},
                        {"crop", t.crop},
                        {"finetune_scope", config_detail::scope_name(t.finetune_scope)},
                        {"finetune_init", config_detail::branch_init_name(t.finetune_init)},
                        {"dice_smooth", t.dice_smooth},
                        {"augment", augment_config_to_json(t.augment)}};
}

inline void apply_train_config(const nlohmann::json& j, train::TrainConfig& t,
                               const std::string& scope) {
  using namespace config_detail;
  reject_unknown_keys(j,
                      {"batch_size", "train_steps", "finetune_steps", "lr0", "poly_power",
                       "optimizer", "crop", "finetune_scope", "finetune_init", "dice_smooth",
                       "augment"},
                      scope);
  maybe(j, "batch_size", t.batch_size, scope);
  maybe(j, "train_steps", t.train_steps, scope);
  maybe(j, "finetune_steps", t.finetune_steps, scope);
  maybe(j, "lr0", t.lr0, scope);
  maybe(j, "poly_power", t.poly_power, scope);
  if (j.contains("optimizer")) t.optimizer = optimizer_from(j.at("optimizer").get<std::string>());
  maybe(j, "crop", t.crop, scope);
  if (j.contains("finetune_scope"))
    t.finetune_scope = scope_from(j.at("finetune_scope").get<std::string>());
  if (j.contains("finetune_init"))
    t.finetune_init = branch_init_from(j.at("finetune_init").get<std::string>());
  maybe(j, "dice_smooth", t.dice_smooth, scope);
  if (j.contains("augment")) apply_augment_config(j.at("augment"), t.augment, scope + ".augment");
}

inline nlohmann::json synth_config_to_json(const synth::SynthConfig& s) {
  nlohmann::json styles = nlohmann::json::array();
  for (const auto& st : s.styles)
    styles.push_back(nlohmann::json{{"expert_id", st.expert_id},
                                    {"bias_radius", st.bias_radius},
                                    {"wobble_amplitude", st.wobble_amplitude},
                                    {"wobble_frequency", st.wobble_frequency},
                                    {"style_seed", st.style_seed}});
  return nlohmann::json{{"n_cases", s.n_cases},
                        {"height", s.height},
                        {"width", s.width},
                        {"base_seed", s.base_seed},
                        {"foreground", config_detail::foreground_name(s.foreground)},
                        {"styles", styles}};
}

inline void apply_synth_config(const nlohmann::json& j, synth::SynthConfig& s,
                               const std::string& scope) {
  using namespace config_detail;
  reject_unknown_keys(j, {"n_cases", "height", "width", "base_seed", "foreground", "styles"},
                      scope);
  maybe(j, "n_cases", s.n_cases, scope);
  maybe(j, "height", s.height, scope);
  maybe(j, "width", s.width, scope);
  maybe(j, "base_seed", s.base_seed, scope);
  if (j.contains("foreground")) s.foreground = foreground_from(j.at("foreground").get<std::string>());
  if (j.contains("styles")) {
    s.styles.clear();
    for (const auto& js : j.at("styles")) {
      reject_unknown_keys(
          js, {"expert_id", "bias_radius", "wobble_amplitude", "wobble_frequency", "style_seed"},
          scope + ".styles[]");
      synth::ExpertStyle st;
      maybe(js, "expert_id", st.expert_id, scope);
      maybe(js, "bias_radius", st.bias_radius, scope);
      maybe(js, "wobble_amplitude", st.wobble_amplitude, scope);
      maybe(js, "wobble_frequency", st.wobble_frequency, scope);
      maybe(js, "style_seed", st.style_seed, scope);
      s.styles.push_back(st);
    }
  }
}

inline void apply_model_config(const nlohmann::json& j, nn::ModelConfig& m,
                               const std::string& scope) {
  using namespace config_detail;
  reject_unknown_keys(j,
                      {"input_h", "input_w", "base_width", "stage_blocks", "decoder_widths",
                       "n_experts", "norm_eps", "condition_encoder"},
                      scope);
  maybe(j, "input_h", m.input_h, scope);
  maybe(j, "input_w", m.input_w, scope);
  maybe(j, "base_width", m.base_width, scope);
  maybe(j, "stage_blocks", m.stage_blocks, scope);
  maybe(j, "decoder_widths", m.decoder_widths, scope);
  maybe(j, "n_experts", m.n_experts, scope);
  maybe(j, "norm_eps", m.norm_eps, scope);
  maybe(j, "condition_encoder", m.condition_encoder, scope);
}

// ---- Experiment specification ---------------------------------------------

/// Everything a study run needs: which experiment, where the data lives (or
/// how to synthesize it), the sweep axes, and the component configurations.
struct ExperimentSpec {
  std::string kind;          // one of kExperimentKinds; may stay empty until run
  std::string dataset_root;  // empty => synthesize under <out_dir>/data
  std::string out_dir;
  std::uint64_t seed = 7321;
  std::vector<int> new_experts{6, 7};
  std::vector<int> ann_counts{5, 10, 15, 20, 25, 30, 34};  // annotation budget sweep
  std::vector<int> expert_counts{1, 2, 3, 4, 5};           // pre-training expert sweep
  int matrix_replicates = 10;  // repetitions per expert-matrix row
  int n_ways = 10;             // deterministic subsample starts per budget
  int train_cases = 34;        // leading cases form the training pool
  int ft_samples = 10;         // adaptation set size in the expert-count sweep
  nn::ModelConfig model;
  train::TrainConfig train;
  synth::SynthConfig synth;

  bool operator==(const ExperimentSpec&) const = default;

  void validate(bool require_kind = false) const {
    if (require_kind || !kind.empty()) {
      bool ok = false;
      for (const char* k : kExperimentKinds)
        if (kind == k) ok = true;
      if (!ok) throw ConfigError("unknown experiment kind: '" + kind + "'");
    }
    if (new_experts.empty()) throw ConfigError("new_experts must not be empty");
    for (int u : new_experts) {
      if (u < 1) throw ConfigError("new expert ids must be >= 1");
      for (int t : kTrainExperts)
        if (u == t)
          throw ConfigError(detail::strprintf(
              "new expert %d overlaps the pre-training expert pool", u));
    }
    if (ann_counts.empty()) throw ConfigError("ann_counts must not be empty");
    for (int n : ann_counts)
      if (n < 1 || n > train_cases)
        throw ConfigError(detail::strprintf("annotation count %d outside [1, %d]", n, train_cases));
    if (expert_counts.empty()) throw ConfigError("expert_counts must not be empty");
    for (int k : expert_counts)
      if (k < 1 || k > static_cast<int>(kTrainExperts.size()))
        throw ConfigError(detail::strprintf("expert count %d outside [1, %zu]", k,
                                            kTrainExperts.size()));
    if (matrix_replicates < 2) throw ConfigError("matrix_replicates must be >= 2");
    if (n_ways < 2) throw ConfigError("n_ways must be >= 2");
    if (train_cases < 1) throw ConfigError("train_cases must be >= 1");
    if (ft_samples < 1 || ft_samples > train_cases)
      throw ConfigError(detail::strprintf("ft_samples %d outside [1, %d]", ft_samples, train_cases));
    model.validate();
    train.validate();
    if (train.crop != model.input_h || train.crop != model.input_w)
      throw ConfigError(detail::strprintf("train.crop %d must match model input %dx%d", train.crop,
                                          model.input_h, model.input_w));
    if (dataset_root.empty()) {
      synth.validate();
      if (synth.height < train.crop || synth.width < train.crop)
        throw ConfigError("synthetic image size must cover the training crop");
      if (synth.n_cases <= train_cases)
        throw ConfigError(detail::strprintf(
            "synthetic set of %d cases leaves no held-out cases beyond the %d training cases",
            synth.n_cases, train_cases));
    }
  }
};

/// Small profile: 64x64 images, thin model, short schedules. Finishes a whole
/// study on a single desktop core; the sweep shapes match the full profile.
inline ExperimentSpec desk_spec() {
  ExperimentSpec s;
  s.model = nn::desk_model_config(1);
  s.train.train_steps = 600;
  s.train.finetune_steps = 200;
  s.train.crop = 64;
  s.synth.n_cases = 39;
  s.synth.height = s.synth.width = 64;
  s.synth.base_seed = 424242;
  s.synth.styles = synth::default_reference_styles();
  s.ann_counts = {5, 34};
  s.expert_counts = {1, 3, 5};
  s.matrix_replicates = 3;
  return s;
}

/// Full-scale profile: 192x192 images, wide model, long schedules.
inline ExperimentSpec paper_spec() {
  ExperimentSpec s;
  s.model = nn::full_model_config(1);
  s.synth.n_cases = 39;
  s.synth.height = s.synth.width = 192;
  s.synth.base_seed = 424242;
  s.synth.styles = synth::default_reference_styles();
  return s;
}

inline ExperimentSpec profile_spec(const std::string& name) {
  if (name == "desk") return desk_spec();
  if (name == "paper") return paper_spec();
  throw ConfigError("unknown profile: '" + name + "' (expected 'desk' or 'paper')");
}

inline nlohmann::json serialize_spec(const ExperimentSpec& s) {
  return nlohmann::json{{"kind", s.kind},
                        {"dataset_root", s.dataset_root},
                        {"out_dir", s.out_dir},
                        {"seed", s.seed},
                        {"new_experts", s.new_experts},
                        {"ann_counts", s.ann_counts},
                        {"expert_counts", s.expert_counts},
                        {"matrix_replicates", s.matrix_replicates},
                        {"n_ways", s.n_ways},
                        {"train_cases", s.train_cases},
                        {"ft_samples", s.ft_samples},
                        {"model", nn::model_config_to_json(s.model)},
                        {"train", train_config_to_json(s.train)},
                        {"synth", synth_config_to_json(s.synth)}};
}

/// Applies a configuration object on top of profile defaults. Unknown keys
/// are rejected by name at every level so typos never silently fall back to
/// defaults.
inline ExperimentSpec spec_from_json(const nlohmann::json& j) {
  using namespace config_detail;
  reject_unknown_keys(j,
                      {"profile", "kind", "dataset_root", "out_dir", "seed", "new_experts",
                       "ann_counts", "expert_counts", "matrix_replicates", "n_ways", "train_cases",
                       "ft_samples", "model", "train", "synth"},
                      "config");
  std::string profile = "desk";
  maybe(j, "profile", profile, "config");
  ExperimentSpec s = profile_spec(profile);
  maybe(j, "kind", s.kind, "config");
  maybe(j, "dataset_root", s.dataset_root, "config");
  maybe(j, "out_dir", s.out_dir, "config");
  maybe(j, "seed", s.seed, "config");
  maybe(j, "new_experts", s.new_experts, "config");
  maybe(j, "ann_counts", s.ann_counts, "config");
  maybe(j, "expert_counts", s.expert_counts, "config");
  maybe(j, "matrix_replicates", s.matrix_replicates, "config");
  maybe(j, "n_ways", s.n_ways, "config");
  maybe(j, "train_cases", s.train_cases, "config");
  maybe(j, "ft_samples", s.ft_samples, "config");
  if (j.contains("model")) apply_model_config(j.at("model"), s.model, "model");
  if (j.contains("train")) apply_train_config(j.at("train"), s.train, "train");
  if (j.contains("synth")) apply_synth_config(j.at("synth"), s.synth, "synth");
  return s;
}

inline ExperimentSpec load_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("cannot parse config file " + path + ": " + e.what());
  }
  return spec_from_json(j);
}

/// Digest over the fields that determine run outcomes (model, training,
/// data); sweep axes and output paths are excluded because they are part of
/// each run's identity already.
inline std::string spec_fingerprint(const ExperimentSpec& s) {
  nlohmann::json j{{"seed", s.seed},
                   {"dataset_root", s.dataset_root},
                   {"train_cases", s.train_cases},
                   {"n_ways", s.n_ways},
                   {"model", nn::model_config_to_json(s.model)},
                   {"train", train_config_to_json(s.train)},
                   {"synth", s.dataset_root.empty() ? synth_config_to_json(s.synth)
                                                    : nlohmann::json(nullptr)}};
  return report::digest(j.dump());
}

}  // namespace expertadapt::exp
