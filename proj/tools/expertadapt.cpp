// Command-line front end: synthetic data generation, training, adaptation,
// evaluation, and the full experiment sweeps.

#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "expertadapt/exp/experiments.hpp"

namespace ea = expertadapt;

namespace {

std::vector<int> all_case_indices(const ea::data::MultiExpertDataset& ds) {
  std::vector<int> idx;
  for (const auto& c : ds.cases) idx.push_back(c.case_index);
  return idx;
}

ea::data::ExpertCombination combo_from(const std::vector<int>& ids) {
  std::vector<ea::data::ExpertId> members;
  for (int id : ids) members.emplace_back(id);
  return ea::data::ExpertCombination(std::move(members));
}

struct GenDataArgs {
  std::string out;
  int cases = 39;
  std::string size = "64x64";
  std::uint64_t seed = 424242;
  std::string styles_file;
  std::string foreground = "blob";
};

int cmd_gen_data(const GenDataArgs& a) {
  ea::synth::SynthConfig cfg;
  cfg.n_cases = a.cases;
  if (std::sscanf(a.size.c_str(), "%dx%d", &cfg.height, &cfg.width) != 2)
    throw ea::ConfigError("--size expects HxW, got '" + a.size + "'");
  cfg.base_seed = a.seed;
  cfg.foreground = ea::exp::config_detail::foreground_from(a.foreground);
  cfg.styles = ea::synth::default_reference_styles();
  if (!a.styles_file.empty()) {
    std::ifstream in(a.styles_file);
    if (!in) throw ea::ConfigError("cannot open styles file: " + a.styles_file);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ea::ConfigError(std::string("cannot parse styles file: ") + e.what());
    }
    ea::synth::SynthConfig overlay = cfg;
    ea::exp::apply_synth_config(nlohmann::json{{"styles", j}}, overlay, "styles");
    cfg.styles = overlay.styles;
  }
  cfg.validate();
  ea::data::MultiExpertDataset ds = ea::synth::generate_dataset(cfg);
  ea::data::save_dataset(a.out, ds);
  std::printf("wrote %zu cases with %zu annotations each to %s\n", ds.cases.size(),
              ds.expert_roster.size(), a.out.c_str());
  return 0;
}

struct TrainArgs {
  std::string data, out, profile = "desk", loss_log;
  std::vector<int> experts;
  std::uint64_t seed = 7321;
  int steps = 0;  // 0 = profile default
};

int cmd_train(const TrainArgs& a) {
  ea::exp::ExperimentSpec spec = ea::exp::profile_spec(a.profile);
  ea::train::TrainConfig tc = spec.train;
  tc.seed = a.seed;
  if (a.steps > 0) tc.train_steps = a.steps;
  ea::nn::ModelConfig mc = spec.model;
  mc.n_experts = static_cast<int>(a.experts.size());

  ea::data::MultiExpertDataset ds = ea::data::load_dataset(a.data);
  ea::data::ExpertCombination combo = combo_from(a.experts);
  ea::train::Model model(mc, a.experts, a.seed);
  ea::train::TrainOptions opts;
  opts.loss_log_path = a.loss_log;
  opts.diagnostic_checkpoint_path = a.out + ".diagnostic";
  auto log = ea::train::train(model, ea::data::restrict(ds, combo, all_case_indices(ds)), combo,
                              tc, opts);
  ea::nn::save_checkpoint(a.out, model, ea::exp::train_config_to_json(tc), tc.train_steps, a.seed);
  std::printf("trained %d steps (final loss %.6f); checkpoint: %s\n", tc.train_steps,
              log.empty() ? 0.0 : log.back().loss_norm, a.out.c_str());
  return 0;
}

struct FinetuneArgs {
  std::string model, data, out, profile = "desk", loss_log;
  int expert = 0;
  std::vector<int> cases;  // empty = every case
  std::uint64_t seed = 7321;
  int steps = 0;
};

int cmd_finetune(const FinetuneArgs& a) {
  ea::exp::ExperimentSpec spec = ea::exp::profile_spec(a.profile);
  ea::train::TrainConfig tc = spec.train;
  tc.seed = a.seed;
  if (a.steps > 0) tc.finetune_steps = a.steps;

  ea::train::Model model = ea::nn::load_checkpoint<float>(a.model);
  ea::data::MultiExpertDataset ds = ea::data::load_dataset(a.data);
  std::vector<int> case_idx = a.cases.empty() ? all_case_indices(ds) : a.cases;
  std::vector<ea::objectives::LabeledSample> samples;
  for (int idx : case_idx) {
    const auto& c = ds.case_by_index(idx);
    samples.push_back({c.image, c.mask(ea::data::ExpertId(a.expert))});
  }
  ea::train::TrainOptions opts;
  opts.loss_log_path = a.loss_log;
  opts.diagnostic_checkpoint_path = a.out + ".diagnostic";
  auto log = ea::train::finetune(model, samples, a.expert, tc, opts);
  ea::nn::save_checkpoint(a.out, model, ea::exp::train_config_to_json(tc), tc.finetune_steps,
                          a.seed);
  std::printf("adapted to expert %d over %zu samples, %d steps (final loss %.6f); checkpoint: %s\n",
              a.expert, samples.size(), tc.finetune_steps, log.empty() ? 0.0 : log.back().loss_norm,
              a.out.c_str());
  return 0;
}

struct EvalArgs {
  std::string model, data, profile = "desk";
  int branch = 0;
  int ref = 0;  // 0 = same as branch
};

int cmd_eval(const EvalArgs& a) {
  ea::exp::ExperimentSpec spec = ea::exp::profile_spec(a.profile);
  ea::train::Model model = ea::nn::load_checkpoint<float>(a.model);
  ea::data::MultiExpertDataset ds = ea::data::load_dataset(a.data);
  const int ref = a.ref > 0 ? a.ref : a.branch;
  ea::train::EvalResult ev = ea::train::evaluate_model(model, ds, a.branch, ref, spec.train);
  nlohmann::json j{{"dice", ev.mean.dice},
                   {"assd", ev.mean.assd},
                   {"hd95", ev.mean.hd95},
                   {"surface_defined", ev.mean.surface_defined},
                   {"n_cases", ev.n_cases},
                   {"undefined_count", ev.undefined_count}};
  std::printf("%s\n", j.dump(2).c_str());
  return 0;
}

struct ExperimentArgs {
  std::string kind, config, out, data, profile = "desk";
  std::uint64_t seed = 0;
  bool has_seed = false;
  bool quiet = false;
};

ea::exp::ExperimentSpec spec_for(const ExperimentArgs& a) {
  ea::exp::ExperimentSpec spec =
      a.config.empty() ? ea::exp::profile_spec(a.profile) : ea::exp::load_spec(a.config);
  if (!a.kind.empty()) spec.kind = a.kind;
  if (!a.out.empty()) spec.out_dir = a.out;
  if (!a.data.empty()) spec.dataset_root = a.data;
  if (a.has_seed) spec.seed = a.seed;
  return spec;
}

int cmd_experiment(const ExperimentArgs& a) {
  ea::exp::ExperimentSpec spec = spec_for(a);
  ea::exp::ExperimentOutcome outcome = ea::exp::run_experiment(spec, !a.quiet);
  std::printf("%s: %d cells computed, %d reused\n", spec.kind.c_str(), outcome.stats.computed,
              outcome.stats.reused);
  for (const auto& f : outcome.tables) std::printf("wrote %s\n", f.string().c_str());
  return 0;
}

int cmd_report(const ExperimentArgs& a) {
  ea::exp::ExperimentSpec spec = spec_for(a);
  for (const auto& f : ea::exp::regenerate_reports(spec))
    std::printf("wrote %s\n", f.string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-expert segmentation: training, adaptation, and experiment sweeps"};
  app.require_subcommand(1);

  GenDataArgs gen;
  CLI::App* gen_cmd = app.add_subcommand("gen-data", "Synthesize a multi-expert dataset");
  gen_cmd->add_option("--out", gen.out, "Output dataset directory")->required();
  gen_cmd->add_option("--cases", gen.cases, "Number of cases");
  gen_cmd->add_option("--size", gen.size, "Image size as HxW");
  gen_cmd->add_option("--seed", gen.seed, "Base seed");
  gen_cmd->add_option("--styles", gen.styles_file, "JSON file with an expert style array");
  gen_cmd->add_option("--foreground", gen.foreground, "Base shape: ellipse or blob");

  TrainArgs tr;
  CLI::App* tr_cmd = app.add_subcommand("train", "Train a model on selected experts");
  tr_cmd->add_option("--data", tr.data, "Dataset directory")->required();
  tr_cmd->add_option("--experts", tr.experts, "Expert ids (comma separated)")
      ->required()
      ->delimiter(',');
  tr_cmd->add_option("--out", tr.out, "Checkpoint to write")->required();
  tr_cmd->add_option("--profile", tr.profile, "Configuration profile: desk or paper");
  tr_cmd->add_option("--seed", tr.seed, "Run seed");
  tr_cmd->add_option("--steps", tr.steps, "Override training steps");
  tr_cmd->add_option("--loss-log", tr.loss_log, "Write per-step losses (LDJSON)");

  FinetuneArgs ft;
  CLI::App* ft_cmd = app.add_subcommand("finetune", "Adapt a checkpoint to a new expert");
  ft_cmd->add_option("--model", ft.model, "Checkpoint to start from")->required();
  ft_cmd->add_option("--data", ft.data, "Dataset directory")->required();
  ft_cmd->add_option("--expert", ft.expert, "New expert id")->required();
  ft_cmd->add_option("--out", ft.out, "Checkpoint to write")->required();
  ft_cmd->add_option("--cases", ft.cases, "Case indices to adapt on (default: all)")
      ->delimiter(',');
  ft_cmd->add_option("--profile", ft.profile, "Configuration profile: desk or paper");
  ft_cmd->add_option("--seed", ft.seed, "Run seed");
  ft_cmd->add_option("--steps", ft.steps, "Override adaptation steps");
  ft_cmd->add_option("--loss-log", ft.loss_log, "Write per-step losses (LDJSON)");

  EvalArgs ev;
  CLI::App* ev_cmd = app.add_subcommand("eval", "Evaluate a checkpoint against an expert");
  ev_cmd->add_option("--model", ev.model, "Checkpoint to evaluate")->required();
  ev_cmd->add_option("--data", ev.data, "Dataset directory")->required();
  ev_cmd->add_option("--branch", ev.branch, "Expert branch used for prediction")->required();
  ev_cmd->add_option("--ref", ev.ref, "Reference expert (default: same as branch)");
  ev_cmd->add_option("--profile", ev.profile, "Configuration profile: desk or paper");

  ExperimentArgs ex;
  CLI::App* ex_cmd = app.add_subcommand("experiment", "Run a full experiment sweep (resumable)");
  ex_cmd->add_option("--kind", ex.kind, "expert-matrix, ann-count, or expert-count");
  ex_cmd->add_option("--config", ex.config, "Experiment configuration (JSON)");
  ex_cmd->add_option("--out", ex.out, "Output directory");
  ex_cmd->add_option("--data", ex.data, "Existing dataset directory (default: synthesize)");
  ex_cmd->add_option("--profile", ex.profile, "Base profile when no config file is given");
  ex_cmd->add_option("--seed", ex.seed, "Master seed")->each([&](const std::string&) {
    ex.has_seed = true;
  });
  ex_cmd->add_flag("--quiet", ex.quiet, "Suppress progress lines");

  ExperimentArgs rp;
  CLI::App* rp_cmd = app.add_subcommand("report", "Rebuild result tables from recorded runs");
  rp_cmd->add_option("--kind", rp.kind, "expert-matrix, ann-count, or expert-count");
  rp_cmd->add_option("--config", rp.config, "Experiment configuration (JSON)");
  rp_cmd->add_option("--out", rp.out, "Output directory");
  rp_cmd->add_option("--data", rp.data, "Existing dataset directory");
  rp_cmd->add_option("--profile", rp.profile, "Base profile when no config file is given");
  rp_cmd->add_option("--seed", rp.seed, "Master seed")->each([&](const std::string&) {
    rp.has_seed = true;
  });

  try {
    app.parse(argc, argv);
    if (gen_cmd->parsed()) return cmd_gen_data(gen);
    if (tr_cmd->parsed()) return cmd_train(tr);
    if (ft_cmd->parsed()) return cmd_finetune(ft);
    if (ev_cmd->parsed()) return cmd_eval(ev);
    if (ex_cmd->parsed()) return cmd_experiment(ex);
    if (rp_cmd->parsed()) return cmd_report(rp);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    app.exit(e);
    return 2;
  } catch (const ea::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const ea::DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 3;
  } catch (const ea::NumericError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return 4;
  }
  return 0;
}
