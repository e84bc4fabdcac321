// Copyright 2026 The reinit-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include "reinit_lab/harness.hpp"

namespace reinit_lab {

namespace {

/// Runs fn(0..n-1) on up to `threads` workers; the first exception wins.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
  const auto workers = static_cast<std::size_t>(std::clamp<int>(threads, 1, static_cast<int>(std::max<std::size_t>(n, 1))));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

std::string num_tag(double v) {
  std::ostringstream s;
  s << v;
  return s.str();
}

std::string fmt(double v) {
  return std::isnan(v) ? std::string() : nlohmann::json(v).dump();
}

std::filesystem::path study_dir(const RunConfig& base) {
  auto dir = run_directory(base);
  std::filesystem::create_directories(dir);
  return dir;
}

int resolve_threads(int threads) { return threads > 0 ? threads : harness_threads(); }

}  // namespace

int harness_threads() {
  if (const char* env = std::getenv("REINIT_LAB_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

double GridResult::robustness() const {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& c : cells) {
    if (c.failed) continue;
    lo = std::min(lo, c.test_acc);
    hi = std::max(hi, c.test_acc);
  }
  return hi >= lo ? hi - lo : 0.0;
}

GridResult grid_search(const RunConfig& base, const std::vector<double>& lr_grid,
                       const std::vector<double>& wd_grid, const ExperimentData* data, int threads) {
  if (lr_grid.empty() || wd_grid.empty()) throw ConfigError("grid search needs non-empty grids");
  std::optional<ExperimentData> owned;
  if (!data) data = &owned.emplace(prepare_data(base));

  std::vector<double> lrs = lr_grid;
  std::vector<double> wds = wd_grid;
  std::sort(lrs.begin(), lrs.end());
  std::sort(wds.begin(), wds.end());

  std::vector<RunConfig> cfgs;
  GridResult result;
  for (double lr : lrs)
    for (double wd : wds) {
      RunConfig cfg = base;
      cfg.lr = lr;
      cfg.weight_decay = wd;
      cfg.run_id = base.run_id + "_lr" + num_tag(lr) + "_wd" + num_tag(wd);
      if (!base.out_dir.empty()) cfg.out_dir = (run_directory(base) / "cells").string();
      validate_config(cfg, *data);
      cfgs.push_back(cfg);
      GridCell cell;
      cell.lr = lr;
      cell.weight_decay = wd;
      result.cells.push_back(cell);
    }

  parallel_for(cfgs.size(), resolve_threads(threads), [&](std::size_t i) {
    auto& cell = result.cells[i];
    try {
      const RunResult r = run_experiment(cfgs[i], *data);
      cell.val_acc = r.best_val_acc;
      cell.test_acc = r.best_test_acc;
      cell.memorization = r.memorization_best;
      cell.total_steps = r.total_steps;
      cell.failed = r.failed;
      cell.failure = r.failure;
    } catch (const Error& e) {
      cell.failed = true;
      cell.failure = e.what();
    }
  });

  bool any = false;
  for (std::size_t i = 0; i < result.cells.size(); ++i) {
    const auto& c = result.cells[i];
    if (c.failed) continue;
    // Cells are ordered by (lr, wd), so strict > keeps the smaller lr, then wd, on ties.
    if (!any || c.val_acc > result.cells[result.chosen].val_acc) result.chosen = i;
    any = true;
  }
  if (!any) throw HarnessError("every grid cell failed");

  if (!base.out_dir.empty()) {
    const auto dir = study_dir(base);
    std::ofstream csv(dir / "grid.csv", std::ios::trunc);
    csv << "lr,weight_decay,val_acc,test_acc,memorization,total_steps,failed,chosen\n";
    for (std::size_t i = 0; i < result.cells.size(); ++i) {
      const auto& c = result.cells[i];
      csv << fmt(c.lr) << ',' << fmt(c.weight_decay) << ',' << fmt(c.val_acc) << ','
          << fmt(c.test_acc) << ',' << fmt(c.memorization) << ',' << c.total_steps << ','
          << (c.failed ? 1 : 0) << ',' << (i == result.chosen ? 1 : 0) << '\n';
    }
    std::ofstream js(dir / "grid.json", std::ios::trunc);
    js << nlohmann::json{{"chosen", result.chosen},
                         {"robustness", result.robustness()},
                         {"lr", result.best().lr},
                         {"weight_decay", result.best().weight_decay}}
              .dump(2)
       << '\n';
    if (!csv || !js) throw IoError("cannot write grid results under " + dir.string());
  }
  return result;
}

std::vector<StageSweepRow> stage_sweep(const RunConfig& base, const std::vector<int>& stage_values,
                                       const ExperimentData* data, int threads) {
  if (stage_values.empty()) throw ConfigError("stage sweep needs at least one T");
  std::optional<ExperimentData> owned;
  if (!data) data = &owned.emplace(prepare_data(base));

  std::vector<RunConfig> cfgs;
  for (int t : stage_values) {
    if (t < 1 || base.total_epochs % t != 0)
      throw ConfigError("T=" + std::to_string(t) + " does not divide N=" +
                        std::to_string(base.total_epochs));
    RunConfig cfg = base;
    cfg.num_stages = t;
    cfg.run_id = base.run_id + "_T" + std::to_string(t);
    if (t == 1) {
      cfg.reinit.kind = ReinitKind::none;
      cfg.distill.enabled = false;
    } else if (cfg.reinit.kind == ReinitKind::layer_wise) {
      if (t % cfg.reinit.blocks != 0)
        throw ConfigError("layer-wise needs T to be a multiple of K=" + std::to_string(cfg.reinit.blocks));
      cfg.reinit.repeats = t / cfg.reinit.blocks;
    }
    if (!base.out_dir.empty()) cfg.out_dir = (run_directory(base) / "stages").string();
    validate_config(cfg, *data);
    cfgs.push_back(cfg);
  }

  std::vector<StageSweepRow> rows(cfgs.size());
  parallel_for(cfgs.size(), resolve_threads(threads), [&](std::size_t i) {
    const RunResult r = run_experiment(cfgs[i], *data);
    if (r.failed) throw HarnessError("stage sweep run " + cfgs[i].run_id + " failed: " + r.failure);
    const StagePlan plan = make_stage_plan(cfgs[i].total_epochs, cfgs[i].num_stages);
    rows[i] = {plan.num_stages, plan.epochs_per_stage, r.total_steps, r.best_val_acc, r.best_test_acc};
  });
  for (const auto& row : rows)
    if (row.total_steps != rows.front().total_steps)
      throw HarnessError("compute parity violated across the stage sweep");

  if (!base.out_dir.empty()) {
    std::ofstream csv(study_dir(base) / "stages.csv", std::ios::trunc);
    csv << "num_stages,epochs_per_stage,total_steps,val_acc,test_acc\n";
    for (const auto& r : rows)
      csv << r.num_stages << ',' << r.epochs_per_stage << ',' << r.total_steps << ','
          << fmt(r.val_acc) << ',' << fmt(r.test_acc) << '\n';
  }
  return rows;
}

std::vector<MethodSpec> default_methods(int num_stages) {
  MethodSpec standard{"standard", {}, 1, false, 1.0};
  MethodSpec sp{"shrink_perturb", {}, num_stages, false, 1.0};
  sp.reinit.kind = ReinitKind::shrink_perturb;
  MethodSpec sp_distill = sp;
  sp_distill.name = "shrink_perturb+distill";
  sp_distill.distill = true;
  return {standard, sp, sp_distill};
}

NoiseStudyResult noise_study(const RunConfig& base, const std::vector<double>& q_values,
                             const std::vector<MethodSpec>& methods,
                             const std::vector<double>& lr_grid, const std::vector<double>& wd_grid,
                             const std::vector<int>& epoch_budgets, int threads) {
  if (q_values.empty() || methods.empty()) throw ConfigError("noise study needs q values and methods");
  NoiseStudyResult out;
  for (double q : q_values) {
    if (!(q >= 0.0 && q <= 1.0)) throw ConfigError("label noise fraction must lie in [0, 1]");
    RunConfig qcfg = base;
    qcfg.noise_q = q;
    qcfg.run_id = base.run_id + "_q" + num_tag(q);
    const ExperimentData data = prepare_data(qcfg);

    std::vector<NoiseRow> rows;
    for (const auto& m : methods) {
      RunConfig cfg = qcfg;
      cfg.run_id = qcfg.run_id + "_" + m.name;
      cfg.reinit = m.reinit;
      cfg.num_stages = m.num_stages;
      cfg.distill = {m.distill, m.beta};
      const GridResult g = grid_search(cfg, lr_grid.empty() ? std::vector<double>{cfg.lr} : lr_grid,
                                       wd_grid.empty() ? std::vector<double>{cfg.weight_decay} : wd_grid,
                                       &data, threads);
      const auto& best = g.best();
      rows.push_back({q, m.name, best.lr, best.weight_decay, best.val_acc, best.test_acc,
                      best.memorization, best.total_steps});
    }
    for (const auto& r : rows)
      if (r.total_steps != rows.front().total_steps)
        throw HarnessError("compute parity violated between methods at q=" + num_tag(q));
    out.rows.insert(out.rows.end(), rows.begin(), rows.end());

    for (int epochs : epoch_budgets) {
      RunConfig cfg = qcfg;
      cfg.run_id = qcfg.run_id + "_standard_N" + std::to_string(epochs);
      cfg.reinit = {};
      cfg.num_stages = 1;
      cfg.distill.enabled = false;
      cfg.total_epochs = epochs;
      const RunResult r = run_experiment(cfg, data);
      out.budget_rows.push_back({q, epochs, r.best_test_acc, r.memorization_best});
    }
  }

  if (!base.out_dir.empty()) {
    const auto dir = study_dir(base);
    std::ofstream csv(dir / "noise.csv", std::ios::trunc);
    csv << "q,method,lr,weight_decay,val_acc,test_acc,memorization,total_steps\n";
    for (const auto& r : out.rows)
      csv << fmt(r.q) << ',' << r.method << ',' << fmt(r.lr) << ',' << fmt(r.weight_decay) << ','
          << fmt(r.val_acc) << ',' << fmt(r.test_acc) << ',' << fmt(r.memorization) << ','
          << r.total_steps << '\n';
    std::ofstream budget(dir / "noise_epoch_budget.csv", std::ios::trunc);
    budget << "q,total_epochs,test_acc,memorization\n";
    for (const auto& r : out.budget_rows)
      budget << fmt(r.q) << ',' << r.total_epochs << ',' << fmt(r.test_acc) << ','
             << fmt(r.memorization) << '\n';
  }
  return out;
}

std::string to_string(OnlineMethod m) {
  switch (m) {
    case OnlineMethod::scratch: return "scratch";
    case OnlineMethod::warm_start: return "warm_start";
    case OnlineMethod::shrink_perturb: return "shrink_perturb";
  }
  return "scratch";
}

OnlineMethod parse_online_method(const std::string& name) {
  if (name == "scratch") return OnlineMethod::scratch;
  if (name == "warm_start" || name == "warm") return OnlineMethod::warm_start;
  if (name == "shrink_perturb" || name == "sp") return OnlineMethod::shrink_perturb;
  throw ConfigError("unknown online method '" + name + "'");
}

OnlineCurve online_sim(const RunConfig& base, int num_chunks, OnlineMethod method,
                       const ExperimentData* data) {
  if (num_chunks < 2) throw ConfigError("online simulation needs at least 2 chunks");
  std::optional<ExperimentData> owned;
  if (!data) data = &owned.emplace(prepare_data(base));

  RunConfig cfg = base;
  cfg.run_id = base.run_id + "_" + to_string(method);
  cfg.num_stages = num_chunks;
  cfg.distill.enabled = false;
  switch (method) {
    case OnlineMethod::scratch: cfg.reinit.kind = ReinitKind::full; break;
    case OnlineMethod::warm_start: cfg.reinit.kind = ReinitKind::none; break;
    case OnlineMethod::shrink_perturb: cfg.reinit.kind = ReinitKind::shrink_perturb; break;
  }
  const ChunkStream stream = make_chunks(data->train, num_chunks, derive_seed(base.seeds.data, 5));
  StageTrainingSets sets;
  for (int k = 1; k <= num_chunks; ++k) sets.push_back(stream.cumulative_union(k));

  const RunResult r = run_experiment(cfg, *data, sets);
  if (r.failed) throw HarnessError("online run " + cfg.run_id + " failed: " + r.failure);

  OnlineCurve curve;
  curve.method = method;
  for (int k = 1; k <= num_chunks; ++k) {
    OnlinePoint p;
    p.chunk = k;
    p.train_size = static_cast<Index>(sets[k - 1].size());
    double best_val = -1.0;
    for (const auto& m : r.metrics) {
      if (m.stage != k) continue;
      p.test_acc_end = m.test_acc;
      p.steps = m.step;
      if (m.val_acc > best_val) {
        best_val = m.val_acc;
        p.test_acc_best_val = m.test_acc;
      }
    }
    curve.points.push_back(p);
  }
  return curve;
}

}  // namespace reinit_lab
