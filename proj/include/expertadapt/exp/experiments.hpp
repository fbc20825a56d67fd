#pragma once

#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "expertadapt/data/manifest.hpp"
#include "expertadapt/data/sampling.hpp"
#include "expertadapt/exp/config.hpp"
#include "expertadapt/report/aggregate.hpp"
#include "expertadapt/report/tables.hpp"
#include "expertadapt/train/engine.hpp"

namespace expertadapt::exp {

namespace fs = std::filesystem;

using data::AnnotatedCase;
using data::MultiExpertDataset;

struct ExperimentPaths {
  fs::path out;
  fs::path data;
  fs::path results;      // run ledger root
  fs::path checkpoints;  // pre-training cache
  fs::path tables;
  fs::path logs;
};

struct ExperimentContext {
  ExperimentSpec spec;
  ExperimentPaths paths;
  MultiExpertDataset train_pool;  // leading `train_cases` cases, all annotations
  MultiExpertDataset test_set;    // remaining held-out cases
  report::ResultsLedger ledger;
  std::string fingerprint;  // digest over the outcome-determining config
  bool verbose = false;
};

struct RunStats {
  int computed = 0;
  int reused = 0;
};

namespace exp_detail {

inline std::string combo_tag(const std::vector<int>& ids) {
  if (ids.empty()) return "none";
  std::string tag = "c";
  for (size_t i = 0; i < ids.size(); ++i) tag += detail::strprintf(i ? "-%d" : "%d", ids[i]);
  return tag;
}

inline std::uint64_t combo_mask(const std::vector<int>& ids) {
  std::uint64_t m = 0;
  for (int id : ids) m |= 1ULL << (id & 63);
  return m;
}

inline std::vector<int> combo_ids(const data::ExpertCombination& combo) {
  std::vector<int> ids;
  for (data::ExpertId e : combo.members) ids.push_back(e.value);
  return ids;
}

inline data::ExpertCombination combo_from_ids(const std::vector<int>& ids) {
  std::vector<data::ExpertId> members;
  for (int id : ids) members.emplace_back(id);
  return data::ExpertCombination(std::move(members));
}

inline void progress(const ExperimentContext& ctx, const std::string& line) {
  if (ctx.verbose) std::fprintf(stderr, "%s\n", line.c_str());
}

/// Case indices of the whole training pool, in pool order.
inline std::vector<int> pool_indices(const ExperimentContext& ctx) {
  std::vector<int> idx;
  for (const auto& c : ctx.train_pool.cases) idx.push_back(c.case_index);
  return idx;
}

/// Maps 1-based pool positions from a sampling plan to real case indices.
inline std::vector<int> positions_to_case_indices(const ExperimentContext& ctx,
                                                  const std::vector<int>& positions) {
  std::vector<int> idx;
  idx.reserve(positions.size());
  for (int pos : positions) {
    if (pos < 1 || pos > static_cast<int>(ctx.train_pool.cases.size()))
      throw DataError(detail::strprintf("sample position %d outside the training pool", pos));
    idx.push_back(ctx.train_pool.cases[static_cast<size_t>(pos - 1)].case_index);
  }
  return idx;
}

inline std::vector<objectives::LabeledSample> adaptation_samples(const ExperimentContext& ctx,
                                                                 const std::vector<int>& case_indices,
                                                                 int expert) {
  std::vector<objectives::LabeledSample> out;
  out.reserve(case_indices.size());
  for (int idx : case_indices) {
    const AnnotatedCase& c = ctx.train_pool.case_by_index(idx);
    out.push_back({c.image, c.mask(data::ExpertId(expert))});
  }
  return out;
}

inline report::RunResult base_key(const ExperimentContext& ctx, const std::string& experiment) {
  report::RunResult key;
  key.experiment = experiment;
  key.config_hash = ctx.fingerprint;
  return key;
}

inline void write_text_file(const fs::path& path, const std::string& content) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << content;
}

}  // namespace exp_detail

// ---- context preparation ---------------------------------------------------

inline ExperimentPaths experiment_paths(const ExperimentSpec& spec) {
  if (spec.out_dir.empty()) throw ConfigError("an output directory is required");
  ExperimentPaths p;
  p.out = fs::path(spec.out_dir);
  p.data = spec.dataset_root.empty() ? p.out / "data" : fs::path(spec.dataset_root);
  p.results = p.out / "results";
  p.checkpoints = p.out / "checkpoints";
  p.tables = p.out / "tables";
  p.logs = p.out / "logs";
  return p;
}

/// Loads (or first synthesizes) the dataset, splits it into the training pool
/// and the held-out test cases, and opens the results ledger.
inline ExperimentContext prepare_context(const ExperimentSpec& spec, bool verbose = false) {
  spec.validate(/*require_kind=*/true);
  ExperimentPaths paths = experiment_paths(spec);
  fs::create_directories(paths.out);

  if (spec.dataset_root.empty()) {
    const fs::path manifest = paths.data / "manifest.json";
    const fs::path synth_cfg_path = paths.data / "synth_config.json";
    const std::string synth_cfg = synth_config_to_json(spec.synth).dump(2) + "\n";
    if (!fs::exists(manifest)) {
      MultiExpertDataset generated = synth::generate_dataset(spec.synth);
      data::save_dataset(paths.data.string(), generated);
      exp_detail::write_text_file(synth_cfg_path, synth_cfg);
    } else {
      std::ifstream in(synth_cfg_path);
      std::string existing((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
      if (existing != synth_cfg)
        throw DataError("existing dataset at " + paths.data.string() +
                        " was synthesized from a different configuration; delete it to regenerate");
    }
  }

  MultiExpertDataset full = data::load_dataset(paths.data.string());
  std::sort(full.cases.begin(), full.cases.end(),
            [](const AnnotatedCase& a, const AnnotatedCase& b) { return a.case_index < b.case_index; });
  if (static_cast<int>(full.cases.size()) <= spec.train_cases)
    throw DataError(detail::strprintf("dataset has %zu cases; need more than the %d training cases",
                                      full.cases.size(), spec.train_cases));
  for (int e : kTrainExperts)
    if (!full.expert_roster.count(data::ExpertId(e)))
      throw DataError(detail::strprintf("dataset lacks annotations for pre-training expert %d", e));
  for (int u : spec.new_experts)
    if (!full.expert_roster.count(data::ExpertId(u)))
      throw DataError(detail::strprintf("dataset lacks annotations for new expert %d", u));

  ExperimentContext ctx{spec, paths, {}, {}, report::ResultsLedger(paths.results), "", verbose};
  ctx.train_pool.spacing = ctx.test_set.spacing = full.spacing;
  ctx.train_pool.expert_roster = ctx.test_set.expert_roster = full.expert_roster;
  for (size_t i = 0; i < full.cases.size(); ++i) {
    if (static_cast<int>(i) < spec.train_cases)
      ctx.train_pool.cases.push_back(full.cases[i]);
    else
      ctx.test_set.cases.push_back(full.cases[i]);
  }
  ctx.fingerprint = spec_fingerprint(spec);
  return ctx;
}

// ---- pre-training with a checkpoint cache ----------------------------------

inline fs::path pretrain_checkpoint_path(const ExperimentContext& ctx,
                                         const std::vector<int>& ids) {
  const std::string key = ctx.fingerprint + "|pretrain|" + exp_detail::combo_tag(ids);
  return ctx.paths.checkpoints / (exp_detail::combo_tag(ids) + "-" + report::digest(key) + ".ckpt");
}

/// Pre-training seed depends on the expert combination only (never on which
/// experiment asks), so sweeps sharing a combination share the checkpoint.
inline std::uint64_t pretrain_seed(const ExperimentSpec& spec, const std::vector<int>& ids) {
  return Rng::keyed(spec.seed, {0x92e7ULL, exp_detail::combo_mask(ids)}).next_u64();
}

/// Ensures the model pre-trained jointly on the given experts over the full
/// training pool exists in the checkpoint cache, training it once if needed.
/// Returns the checkpoint path; callers load a pristine copy per adaptation.
inline fs::path ensure_pretrained(ExperimentContext& ctx, const std::vector<int>& ids) {
  const fs::path path = pretrain_checkpoint_path(ctx, ids);
  if (fs::exists(path)) {
    try {
      nn::CheckpointMeta meta;
      nn::load_checkpoint<float>(path.string(), &meta);
      return path;
    } catch (const std::exception& e) {
      exp_detail::progress(ctx, detail::strprintf("[pretrain] discarding unreadable checkpoint %s (%s)",
                                                  path.string().c_str(), e.what()));
      fs::remove(path);
    }
  }
  const std::uint64_t seed = pretrain_seed(ctx.spec, ids);
  nn::ModelConfig mc = ctx.spec.model;
  mc.n_experts = static_cast<int>(ids.size());
  train::Model model(mc, ids, seed);
  train::TrainConfig tc = ctx.spec.train;
  tc.seed = seed;
  data::ExpertCombination combo = exp_detail::combo_from_ids(ids);
  train::TrainOptions opts;
  fs::create_directories(ctx.paths.logs);
  opts.loss_log_path =
      (ctx.paths.logs / ("pretrain-" + exp_detail::combo_tag(ids) + ".ldjson")).string();
  opts.diagnostic_checkpoint_path =
      (ctx.paths.logs / ("pretrain-" + exp_detail::combo_tag(ids) + "-diagnostic.ckpt")).string();
  exp_detail::progress(ctx, detail::strprintf("[pretrain] %s: %d steps",
                                              exp_detail::combo_tag(ids).c_str(), tc.train_steps));
  train::train(model, data::restrict(ctx.train_pool, combo, exp_detail::pool_indices(ctx)), combo,
               tc, opts);
  nn::save_checkpoint(path.string(), model, train_config_to_json(tc), tc.train_steps, seed);
  return path;
}

// ---- experiment drivers ------------------------------------------------------

/// Cross-expert matrix: train on each single expert, evaluate against each
/// adaptation target's reference, repeated over fresh seeds.
inline RunStats run_expert_matrix(ExperimentContext& ctx) {
  const ExperimentSpec& spec = ctx.spec;
  RunStats stats;
  std::vector<int> rows(kTrainExperts.begin(), kTrainExperts.end());
  for (int u : spec.new_experts) rows.push_back(u);
  const std::vector<int> all_train = exp_detail::pool_indices(ctx);

  for (int r : rows) {
    for (int rep = 0; rep < spec.matrix_replicates; ++rep) {
      std::vector<report::RunResult> keys;
      bool all_present = true;
      for (int u : spec.new_experts) {
        report::RunResult key = exp_detail::base_key(ctx, "expert-matrix");
        key.train_expert = r;
        key.replicate = rep;
        key.combo = {r};
        key.new_expert = u;
        if (!ctx.ledger.find(key)) all_present = false;
        keys.push_back(key);
      }
      if (all_present) {
        stats.reused += static_cast<int>(keys.size());
        continue;
      }
      const std::uint64_t run_seed =
          Rng::keyed(spec.seed, {0x3a7189ULL, static_cast<std::uint64_t>(r),
                                 static_cast<std::uint64_t>(rep)})
              .next_u64();
      nn::ModelConfig mc = spec.model;
      mc.n_experts = 1;
      train::Model model(mc, {r}, run_seed);
      train::TrainConfig tc = spec.train;
      tc.seed = run_seed;
      data::ExpertCombination combo = exp_detail::combo_from_ids({r});
      exp_detail::progress(ctx, detail::strprintf("[expert-matrix] expert %d replicate %d/%d", r,
                                                  rep + 1, spec.matrix_replicates));
      train::train(model, data::restrict(ctx.train_pool, combo, all_train), combo, tc);
      for (auto& key : keys) {
        train::EvalResult ev = train::evaluate_model(model, ctx.test_set, r, key.new_expert, tc);
        key.metrics = ev.mean;
        key.undefined_count = ev.undefined_count;
        key.seed = run_seed;
        ctx.ledger.append(key);
        ++stats.computed;
      }
    }
  }
  return stats;
}

namespace exp_detail {

/// Trains a single-expert model from scratch on the given adaptation cases
/// (the "no pre-training" arm shared by two experiments).
inline train::Model scratch_model(ExperimentContext& ctx, const std::vector<int>& case_indices,
                                  int expert, std::uint64_t seed) {
  nn::ModelConfig mc = ctx.spec.model;
  mc.n_experts = 1;
  train::Model model(mc, {expert}, seed);
  train::TrainConfig tc = ctx.spec.train;
  tc.seed = seed;
  data::ExpertCombination combo = combo_from_ids({expert});
  train::train(model, data::restrict(ctx.train_pool, combo, case_indices), combo, tc);
  return model;
}

}  // namespace exp_detail

/// Annotation-budget sweep: for each budget and deterministic subsample,
/// adapt every 3-expert pre-trained model to the new expert, against a
/// from-scratch counterpart on the identical samples.
inline RunStats run_ann_count(ExperimentContext& ctx) {
  const ExperimentSpec& spec = ctx.spec;
  RunStats stats;
  std::vector<data::ExpertId> pool;
  for (int e : kTrainExperts) pool.emplace_back(e);
  const std::vector<data::ExpertCombination> combos = data::expert_combinations(pool, 3);
  const std::vector<int> starts = data::starting_indices(spec.train_cases, spec.n_ways);

  for (const auto& combo : combos) {
    const std::vector<int> ids = exp_detail::combo_ids(combo);
    // Collect the cells this combination still owes before touching the
    // checkpoint, so fully resumed combinations cost nothing.
    struct Cell {
      int u, n, way;
    };
    std::vector<Cell> missing;
    for (int u : spec.new_experts)
      for (int n : spec.ann_counts)
        for (int w = 1; w <= spec.n_ways; ++w) {
          report::RunResult key = exp_detail::base_key(ctx, "ann-count");
          key.arm = "with";
          key.count = n;
          key.combo = ids;
          key.sampling_way = w;
          key.new_expert = u;
          if (ctx.ledger.find(key))
            ++stats.reused;
          else
            missing.push_back({u, n, w});
        }
    if (missing.empty()) continue;
    const fs::path pristine = ensure_pretrained(ctx, ids);
    for (const Cell& cell : missing) {
      const int start = starts[static_cast<size_t>(cell.way - 1)];
      const std::vector<int> positions =
          data::sample_indices({start, cell.n, spec.train_cases});
      const std::vector<int> case_idx = exp_detail::positions_to_case_indices(ctx, positions);
      const std::uint64_t seed =
          Rng::keyed(spec.seed, {0xf17eULL, exp_detail::combo_mask(ids),
                                 static_cast<std::uint64_t>(cell.way),
                                 static_cast<std::uint64_t>(cell.n),
                                 static_cast<std::uint64_t>(cell.u)})
              .next_u64();
      train::Model model = nn::load_checkpoint<float>(pristine.string());
      train::TrainConfig tc = spec.train;
      tc.seed = seed;
      exp_detail::progress(ctx, detail::strprintf("[ann-count] %s n=%d way=%d expert %d",
                                                  exp_detail::combo_tag(ids).c_str(), cell.n,
                                                  cell.way, cell.u));
      train::finetune(model, exp_detail::adaptation_samples(ctx, case_idx, cell.u), cell.u, tc);
      train::EvalResult ev = train::evaluate_model(model, ctx.test_set, cell.u, cell.u, tc);
      report::RunResult res = exp_detail::base_key(ctx, "ann-count");
      res.arm = "with";
      res.count = cell.n;
      res.combo = ids;
      res.sampling_way = cell.way;
      res.new_expert = cell.u;
      res.metrics = ev.mean;
      res.undefined_count = ev.undefined_count;
      res.seed = seed;
      ctx.ledger.append(res);
      ++stats.computed;
    }
  }

  // From-scratch counterpart: independent of the pre-training combination.
  for (int u : spec.new_experts)
    for (int n : spec.ann_counts)
      for (int w = 1; w <= spec.n_ways; ++w) {
        report::RunResult key = exp_detail::base_key(ctx, "ann-count");
        key.arm = "without";
        key.count = n;
        key.sampling_way = w;
        key.new_expert = u;
        if (ctx.ledger.find(key)) {
          ++stats.reused;
          continue;
        }
        const int start = starts[static_cast<size_t>(w - 1)];
        const std::vector<int> positions = data::sample_indices({start, n, spec.train_cases});
        const std::vector<int> case_idx = exp_detail::positions_to_case_indices(ctx, positions);
        const std::uint64_t seed =
            Rng::keyed(spec.seed, {0x5c4a7cULL, static_cast<std::uint64_t>(w),
                                   static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(u)})
                .next_u64();
        exp_detail::progress(ctx, detail::strprintf("[ann-count] scratch n=%d way=%d expert %d", n,
                                                    w, u));
        train::Model model = exp_detail::scratch_model(ctx, case_idx, u, seed);
        train::TrainConfig tc = spec.train;
        tc.seed = seed;
        train::EvalResult ev = train::evaluate_model(model, ctx.test_set, u, u, tc);
        key.metrics = ev.mean;
        key.undefined_count = ev.undefined_count;
        key.seed = seed;
        ctx.ledger.append(key);
        ++stats.computed;
      }
  return stats;
}

/// Pre-training-breadth sweep: adapt models pre-trained on k experts with a
/// small fixed adaptation set, including the k=0 from-scratch row.
inline RunStats run_expert_count(ExperimentContext& ctx) {
  const ExperimentSpec& spec = ctx.spec;
  RunStats stats;
  std::vector<data::ExpertId> pool;
  for (int e : kTrainExperts) pool.emplace_back(e);
  const std::vector<int> starts = data::starting_indices(spec.train_cases, spec.n_ways);

  auto way_case_indices = [&](int way) {
    const int start = starts[static_cast<size_t>(way - 1)];
    return exp_detail::positions_to_case_indices(
        ctx, data::sample_indices({start, spec.ft_samples, spec.train_cases}));
  };

  // k = 0: train from scratch on the adaptation samples alone.
  for (int u : spec.new_experts)
    for (int w = 1; w <= spec.n_ways; ++w) {
      report::RunResult key = exp_detail::base_key(ctx, "expert-count");
      key.arm = "without";
      key.count = 0;
      key.sampling_way = w;
      key.new_expert = u;
      if (ctx.ledger.find(key)) {
        ++stats.reused;
        continue;
      }
      const std::uint64_t seed =
          Rng::keyed(spec.seed, {0x5c4a7cULL, static_cast<std::uint64_t>(w),
                                 static_cast<std::uint64_t>(spec.ft_samples),
                                 static_cast<std::uint64_t>(u)})
              .next_u64();
      exp_detail::progress(ctx,
                           detail::strprintf("[expert-count] k=0 way=%d expert %d", w, u));
      train::Model model = exp_detail::scratch_model(ctx, way_case_indices(w), u, seed);
      train::TrainConfig tc = spec.train;
      tc.seed = seed;
      train::EvalResult ev = train::evaluate_model(model, ctx.test_set, u, u, tc);
      key.metrics = ev.mean;
      key.undefined_count = ev.undefined_count;
      key.seed = seed;
      ctx.ledger.append(key);
      ++stats.computed;
    }

  for (int k : spec.expert_counts) {
    for (const auto& combo : data::expert_combinations(pool, k)) {
      const std::vector<int> ids = exp_detail::combo_ids(combo);
      struct Cell {
        int u, way;
      };
      std::vector<Cell> missing;
      for (int u : spec.new_experts)
        for (int w = 1; w <= spec.n_ways; ++w) {
          report::RunResult key = exp_detail::base_key(ctx, "expert-count");
          key.arm = "with";
          key.count = k;
          key.combo = ids;
          key.sampling_way = w;
          key.new_expert = u;
          if (ctx.ledger.find(key))
            ++stats.reused;
          else
            missing.push_back({u, w});
        }
      if (missing.empty()) continue;
      const fs::path pristine = ensure_pretrained(ctx, ids);
      for (const Cell& cell : missing) {
        const std::uint64_t seed =
            Rng::keyed(spec.seed, {0xf17eULL, exp_detail::combo_mask(ids),
                                   static_cast<std::uint64_t>(cell.way),
                                   static_cast<std::uint64_t>(spec.ft_samples),
                                   static_cast<std::uint64_t>(cell.u)})
                .next_u64();
        train::Model model = nn::load_checkpoint<float>(pristine.string());
        train::TrainConfig tc = spec.train;
        tc.seed = seed;
        exp_detail::progress(ctx, detail::strprintf("[expert-count] %s way=%d expert %d",
                                                    exp_detail::combo_tag(ids).c_str(), cell.way,
                                                    cell.u));
        train::finetune(model, exp_detail::adaptation_samples(ctx, way_case_indices(cell.way),
                                                              cell.u),
                        cell.u, tc);
        train::EvalResult ev = train::evaluate_model(model, ctx.test_set, cell.u, cell.u, tc);
        report::RunResult res = exp_detail::base_key(ctx, "expert-count");
        res.arm = "with";
        res.count = k;
        res.combo = ids;
        res.sampling_way = cell.way;
        res.new_expert = cell.u;
        res.metrics = ev.mean;
        res.undefined_count = ev.undefined_count;
        res.seed = seed;
        ctx.ledger.append(res);
        ++stats.computed;
      }
    }
  }
  return stats;
}

// ---- table construction (pure over the ledger) -------------------------------

namespace exp_detail {

inline std::vector<report::RunResult> ledger_slice(const ExperimentContext& ctx,
                                                   const std::string& experiment, int new_expert) {
  std::vector<report::RunResult> out;
  for (auto& r : ctx.ledger.load(experiment))
    if (r.config_hash == ctx.fingerprint && r.new_expert == new_expert) out.push_back(std::move(r));
  return out;
}

inline report::TableRow row_from_aggregate(const std::string& label,
                                           const report::AggregatedResult& agg) {
  return report::TableRow{label, {agg.dice, agg.assd, agg.hd95}};
}

/// Per-way vectors for runs that have exactly one cell per way.
inline report::TableRow row_from_ways(const std::string& label,
                                      const std::vector<report::RunResult>& runs, int n_ways,
                                      const std::string& what) {
  std::map<int, const report::RunResult*> by_way;
  for (const auto& r : runs) {
    if (by_way.count(r.sampling_way))
      throw DataError("duplicate result for " + what + detail::strprintf(" way %d", r.sampling_way));
    by_way[r.sampling_way] = &r;
  }
  report::TableRow row{label, {}};
  for (int w = 1; w <= n_ways; ++w) {
    auto it = by_way.find(w);
    if (it == by_way.end())
      throw DataError("missing result for " + what + detail::strprintf(" way %d", w));
    row.values[0].push_back(it->second->metrics.dice);
    row.values[1].push_back(it->second->metrics.assd);
    row.values[2].push_back(it->second->metrics.hd95);
  }
  return row;
}

inline report::RenderTable render_rows(const std::string& title,
                                       const std::vector<report::TableRow>& rows,
                                       const report::SignificanceReport& sig) {
  report::RenderTable t;
  t.title = title;
  t.row_header = "setting";
  t.columns = {"Dice (%)", "ASSD", "95HD"};
  for (size_t i = 0; i < rows.size(); ++i) {
    t.row_labels.push_back(rows[i].label);
    std::vector<report::RenderCell> cells(3);
    for (size_t m = 0; m < 3; ++m) {
      double mean = 0.0;
      for (double v : rows[i].values[m]) mean += v;
      mean /= static_cast<double>(rows[i].values[m].size());
      cells[m].value = m == 0 ? mean * 100.0 : mean;
      cells[m].decimals = m == 0 ? 2 : 3;
      const auto& bold = sig.columns[m].bold_rows;
      cells[m].bold = std::find(bold.begin(), bold.end(), static_cast<int>(i)) != bold.end();
      cells[m].flagged = sig.columns[m].degenerate[i];
    }
    t.cells.push_back(std::move(cells));
  }
  t.notes.push_back(detail::strprintf(
      "bold: best column value and rows not significantly different from it (alpha=%.2f, %s t-test)",
      sig.alpha, sig.kind == report::TTestKind::paired ? "paired" : "unpaired"));
  t.notes.push_back("(*): significance against the best row used the zero-variance convention");
  return t;
}

}  // namespace exp_detail

inline report::RenderTable build_expert_matrix_table(const ExperimentContext& ctx, int new_expert) {
  const auto runs = exp_detail::ledger_slice(ctx, "expert-matrix", new_expert);
  if (runs.empty())
    throw DataError(detail::strprintf("no expert-matrix results for expert %d; run the experiment",
                                      new_expert));
  std::vector<int> row_experts(kTrainExperts.begin(), kTrainExperts.end());
  for (int u : ctx.spec.new_experts) row_experts.push_back(u);

  std::vector<report::TableRow> rows;
  for (int r : row_experts) {
    std::map<int, const report::RunResult*> by_rep;
    for (const auto& run : runs)
      if (run.train_expert == r) {
        if (by_rep.count(run.replicate))
          throw DataError(detail::strprintf("duplicate expert-matrix replicate %d for expert %d",
                                            run.replicate, r));
        by_rep[run.replicate] = &run;
      }
    report::TableRow row{detail::strprintf("trained on expert %d", r), {}};
    for (int rep = 0; rep < ctx.spec.matrix_replicates; ++rep) {
      auto it = by_rep.find(rep);
      if (it == by_rep.end())
        throw DataError(detail::strprintf("missing expert-matrix replicate %d for expert %d", rep,
                                          r));
      row.values[0].push_back(it->second->metrics.dice);
      row.values[1].push_back(it->second->metrics.assd);
      row.values[2].push_back(it->second->metrics.hd95);
    }
    rows.push_back(std::move(row));
  }
  const auto sig = report::highlight(rows, report::TTestKind::unpaired);
  return exp_detail::render_rows(
      detail::strprintf("Cross-expert transfer, evaluated against expert %d", new_expert), rows,
      sig);
}

inline report::RenderTable build_ann_count_table(const ExperimentContext& ctx, int new_expert) {
  const auto runs = exp_detail::ledger_slice(ctx, "ann-count", new_expert);
  if (runs.empty())
    throw DataError(detail::strprintf("no ann-count results for expert %d; run the experiment",
                                      new_expert));
  std::vector<report::TableRow> rows;
  std::vector<std::pair<int, int>> pair_rows;  // (scratch row, adapted row) per budget
  for (int n : ctx.spec.ann_counts) {
    std::vector<report::RunResult> with_runs, without_runs;
    for (const auto& r : runs) {
      if (r.count != n) continue;
      (r.arm == "with" ? with_runs : without_runs).push_back(r);
    }
    rows.push_back(exp_detail::row_from_ways(detail::strprintf("n=%d, from scratch", n),
                                             without_runs, ctx.spec.n_ways,
                                             detail::strprintf("ann-count scratch n=%d", n)));
    rows.push_back(exp_detail::row_from_aggregate(detail::strprintf("n=%d, adapted", n),
                                                  report::aggregate(with_runs)));
    pair_rows.emplace_back(static_cast<int>(rows.size()) - 2, static_cast<int>(rows.size()) - 1);
  }
  const auto sig = report::highlight(rows, report::TTestKind::paired);
  report::RenderTable t = exp_detail::render_rows(
      detail::strprintf("Annotation budget sweep, new expert %d", new_expert), rows, sig);
  for (auto [scratch_i, adapted_i] : pair_rows) {
    const auto mark_ad = report::compare_counterpart(rows[static_cast<size_t>(adapted_i)],
                                                     rows[static_cast<size_t>(scratch_i)]);
    const auto mark_sc = report::compare_counterpart(rows[static_cast<size_t>(scratch_i)],
                                                     rows[static_cast<size_t>(adapted_i)]);
    for (size_t m = 0; m < 3; ++m) {
      t.cells[static_cast<size_t>(adapted_i)][m].underline = mark_ad.significantly_better[m];
      t.cells[static_cast<size_t>(scratch_i)][m].underline = mark_sc.significantly_better[m];
    }
  }
  t.notes.push_back(
      "underline: significantly better than the same-budget counterpart row (paired)");
  return t;
}

inline report::RenderTable build_expert_count_table(const ExperimentContext& ctx, int new_expert) {
  const auto runs = exp_detail::ledger_slice(ctx, "expert-count", new_expert);
  if (runs.empty())
    throw DataError(detail::strprintf("no expert-count results for expert %d; run the experiment",
                                      new_expert));
  std::vector<report::TableRow> rows;
  std::vector<report::RunResult> scratch;
  for (const auto& r : runs)
    if (r.arm == "without") scratch.push_back(r);
  rows.push_back(exp_detail::row_from_ways("k=0 (from scratch)", scratch, ctx.spec.n_ways,
                                           "expert-count scratch"));
  for (int k : ctx.spec.expert_counts) {
    std::vector<report::RunResult> with_runs;
    for (const auto& r : runs)
      if (r.arm == "with" && r.count == k) with_runs.push_back(r);
    rows.push_back(exp_detail::row_from_aggregate(detail::strprintf("k=%d", k),
                                                  report::aggregate(with_runs)));
  }
  const auto sig = report::highlight(rows, report::TTestKind::paired);
  return exp_detail::render_rows(
      detail::strprintf("Pre-training breadth sweep, new expert %d", new_expert), rows, sig);
}

/// Renders every table for the experiment from the ledger and writes the
/// markdown/CSV/JSON forms; returns the files written.
inline std::vector<fs::path> write_reports(const ExperimentContext& ctx) {
  std::vector<fs::path> files;
  for (int u : ctx.spec.new_experts) {
    report::RenderTable t;
    if (ctx.spec.kind == "expert-matrix")
      t = build_expert_matrix_table(ctx, u);
    else if (ctx.spec.kind == "ann-count")
      t = build_ann_count_table(ctx, u);
    else if (ctx.spec.kind == "expert-count")
      t = build_expert_count_table(ctx, u);
    else
      throw ConfigError("unknown experiment kind: '" + ctx.spec.kind + "'");
    const std::string stem = ctx.spec.kind + detail::strprintf("-test%d", u);
    const struct {
      const char* ext;
      report::TableFormat fmt;
    } forms[] = {{".md", report::TableFormat::markdown},
                 {".csv", report::TableFormat::csv},
                 {".json", report::TableFormat::json}};
    for (const auto& f : forms) {
      const fs::path path = ctx.paths.tables / (stem + f.ext);
      exp_detail::write_text_file(path, report::emit_table(t, f.fmt));
      files.push_back(path);
    }
  }
  return files;
}

struct ExperimentOutcome {
  RunStats stats;
  std::vector<fs::path> tables;
};

/// Runs (or resumes) the configured experiment end to end and writes reports.
inline ExperimentOutcome run_experiment(const ExperimentSpec& spec, bool verbose = false) {
  ExperimentContext ctx = prepare_context(spec, verbose);
  ExperimentOutcome out;
  if (spec.kind == "expert-matrix")
    out.stats = run_expert_matrix(ctx);
  else if (spec.kind == "ann-count")
    out.stats = run_ann_count(ctx);
  else if (spec.kind == "expert-count")
    out.stats = run_expert_count(ctx);
  else
    throw ConfigError("unknown experiment kind: '" + spec.kind + "'");
  out.tables = write_reports(ctx);
  return out;
}

/// Rebuilds the report files from recorded results without training anything.
inline std::vector<fs::path> regenerate_reports(const ExperimentSpec& spec) {
  ExperimentContext ctx = prepare_context(spec, false);
  return write_reports(ctx);
}

}  // namespace expertadapt::exp
