// Copyright 2026 The reinit-lab Authors
// SPDX-License-Identifier: Apache-2.0

// reinit_lab: staged training with re-initialization from the command line.
//
//   reinit_lab train  --setting none --reinit sp --stages 5 --out runs
//   reinit_lab grid   --reinit sp --stages 5
//   reinit_lab stages --reinit sp --t-values 1,2,5,10
//   reinit_lab noise  --q-values 0,0.2,0.4
//   reinit_lab online --chunks 5
//   reinit_lab inspect <run_id> --out runs

#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "reinit_lab/harness.hpp"

using namespace reinit_lab;
using nlohmann::json;

namespace {

struct Overrides {
  std::string config;
  std::optional<double> lr, wd, lambda, gamma, beta, noise_q;
  std::optional<int> stages, epochs, batch_size;
  std::optional<std::string> reinit, setting, run_id;
  std::optional<std::uint64_t> seed;
  std::string out = "runs";
};

void add_common(CLI::App* app, Overrides& o) {
  app->add_option("--config", o.config, "JSON run config")->check(CLI::ExistingFile);
  app->add_option("--lr", o.lr, "learning rate");
  app->add_option("--wd", o.wd, "weight decay");
  app->add_option("--stages", o.stages, "number of stages T");
  app->add_option("--reinit", o.reinit, "none|sp|layerwise|full")
      ->check(CLI::IsMember({"none", "sp", "layerwise", "full"}));
  app->add_option("--lambda", o.lambda, "shrink factor");
  app->add_option("--gamma", o.gamma, "perturb factor");
  app->add_option("--distill-beta", o.beta, "enable self-distillation with this strength");
  app->add_option("--noise-q", o.noise_q, "fraction of training labels to randomize");
  app->add_option("--setting", o.setting, "none|d|dc|dcw")
      ->check(CLI::IsMember({"none", "d", "dc", "dcw"}));
  app->add_option("--seed", o.seed, "base seed for init/data/noise/shuffle streams");
  app->add_option("--epochs", o.epochs, "total epoch budget N");
  app->add_option("--batch-size", o.batch_size, "minibatch size");
  app->add_option("--run-id", o.run_id, "run name");
  app->add_option("--out", o.out, "output root directory");
}

RunConfig build_config(const Overrides& o) {
  RunConfig cfg = o.config.empty() ? RunConfig{} : load_run_config(o.config);
  if (o.setting) apply_setting(cfg, *o.setting);
  if (o.lr) cfg.lr = *o.lr;
  if (o.wd) {
    cfg.weight_decay = *o.wd;
    if (!o.setting) cfg.use_weight_decay = *o.wd > 0.0;
  }
  if (o.stages) cfg.num_stages = *o.stages;
  if (o.reinit) cfg.reinit.kind = parse_reinit_kind(*o.reinit);
  if (o.lambda) cfg.reinit.lambda = *o.lambda;
  if (o.gamma) cfg.reinit.gamma = *o.gamma;
  if (o.beta) {
    cfg.distill.enabled = true;
    cfg.distill.beta = *o.beta;
  }
  if (o.noise_q) cfg.noise_q = *o.noise_q;
  if (o.seed) {
    cfg.seeds.init = derive_seed(*o.seed, 0);
    cfg.seeds.data = derive_seed(*o.seed, 1);
    cfg.seeds.noise = derive_seed(*o.seed, 2);
    cfg.seeds.shuffle = derive_seed(*o.seed, 3);
  }
  if (o.epochs) cfg.total_epochs = *o.epochs;
  if (o.batch_size) cfg.batch_size = *o.batch_size;
  if (o.run_id) cfg.run_id = *o.run_id;
  cfg.out_dir = o.out;
  return cfg;
}

json run_summary(const RunConfig& cfg, const RunResult& r) {
  return {{"run_id", r.run_id},
          {"setting", setting_label(cfg)},
          {"reinit", to_string(cfg.reinit.kind)},
          {"num_stages", cfg.num_stages},
          {"total_steps", r.total_steps},
          {"best_stage", r.best_stage},
          {"best_epoch", r.best_epoch},
          {"best_val_acc", r.best_val_acc},
          {"best_test_acc", r.best_test_acc},
          {"final_test_acc", r.metrics.empty() ? 0.0 : r.metrics.back().test_acc},
          {"final_weight_norm", r.metrics.empty() ? 0.0 : r.metrics.back().weight_norm},
          {"failed", r.failed},
          {"failure", r.failure},
          {"directory", run_directory(cfg).string()}};
}

int cmd_inspect(const std::string& run_id, const std::string& out) {
  const auto dir = std::filesystem::path(out) / run_id;
  if (!std::filesystem::is_directory(dir)) throw IoError("no run directory " + dir.string());
  json report{{"run_id", run_id}, {"directory", dir.string()}};

  std::ifstream summary(dir / "summary.csv");
  if (!summary) throw IoError("missing " + (dir / "summary.csv").string());
  std::string header, row;
  std::getline(summary, header);
  std::getline(summary, row);
  std::vector<std::string> keys, values;
  for (auto* target : {&keys, &values}) {
    std::stringstream ss(target == &keys ? header : row);
    std::string cell;
    while (std::getline(ss, cell, ',')) target->push_back(cell);
  }
  json s;
  for (std::size_t i = 0; i < keys.size(); ++i) s[keys[i]] = i < values.size() ? values[i] : "";
  report["summary"] = s;

  std::ifstream metrics(dir / "metrics.jsonl");
  std::string line, last;
  std::size_t epochs = 0;
  while (std::getline(metrics, line))
    if (!line.empty()) {
      ++epochs;
      last = line;
    }
  report["epochs_logged"] = epochs;
  if (!last.empty()) report["last_epoch"] = json::parse(last);
  if (std::filesystem::exists(dir / "config.json")) {
    std::ifstream c(dir / "config.json");
    report["config"] = json::parse(c);
  }
  std::cout << report.dump(2) << '\n';
  return 0;
}

void print_error(const std::string& kind, const std::string& message) {
  std::cerr << json{{"error", {{"kind", kind}, {"message", message}}}}.dump() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Staged training with re-initialization (shrink & perturb, layer-wise, full)"};
  app.require_subcommand(1);

  Overrides o;
  std::vector<double> lr_grid = kDefaultLrGrid;
  std::vector<double> wd_grid = kDefaultWdGrid;
  std::vector<int> t_values = kDefaultStageValues;
  std::vector<double> q_values{0.0, 0.2, 0.4};
  std::vector<int> epoch_budgets;
  int chunks = 5;
  std::string inspect_id;

  auto* train = app.add_subcommand("train", "single run");
  add_common(train, o);

  auto* grid = app.add_subcommand("grid", "learning-rate x weight-decay grid search");
  add_common(grid, o);
  grid->add_option("--lr-grid", lr_grid, "learning rates")->delimiter(',');
  grid->add_option("--wd-grid", wd_grid, "weight decays")->delimiter(',');

  auto* stages = app.add_subcommand("stages", "equal-compute sweep over the number of stages");
  add_common(stages, o);
  stages->add_option("--t-values", t_values, "stage counts")->delimiter(',');

  auto* noise = app.add_subcommand("noise", "label-noise study");
  add_common(noise, o);
  noise->add_option("--q-values", q_values, "noise fractions")->delimiter(',');
  noise->add_option("--lr-grid", lr_grid, "learning rates")->delimiter(',');
  noise->add_option("--wd-grid", wd_grid, "weight decays")->delimiter(',');
  noise->add_option("--epoch-budgets", epoch_budgets, "extra standard-training budgets")->delimiter(',');

  auto* online = app.add_subcommand("online", "data arriving in chunks: scratch vs warm start vs S&P");
  add_common(online, o);
  online->add_option("--chunks", chunks, "number of chunks");

  auto* inspect = app.add_subcommand("inspect", "summarize a finished run");
  inspect->add_option("run_id", inspect_id, "run directory name")->required();
  inspect->add_option("--out", o.out, "output root directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error("usage", e.what());
    return 2;
  }

  try {
    if (*inspect) return cmd_inspect(inspect_id, o.out);
    RunConfig cfg = build_config(o);

    if (*train) {
      const RunResult r = run_experiment(cfg);
      std::cout << run_summary(cfg, r).dump(2) << '\n';
      return r.failed ? 3 : 0;
    }
    if (*grid) {
      const GridResult g = grid_search(cfg, lr_grid, wd_grid);
      json cells = json::array();
      for (const auto& c : g.cells)
        cells.push_back({{"lr", c.lr}, {"weight_decay", c.weight_decay}, {"val_acc", c.val_acc},
                         {"test_acc", c.test_acc}, {"failed", c.failed}});
      std::cout << json{{"cells", cells},
                        {"chosen", {{"lr", g.best().lr}, {"weight_decay", g.best().weight_decay}}},
                        {"robustness", g.robustness()}}
                       .dump(2)
                << '\n';
      return 0;
    }
    if (*stages) {
      json rows = json::array();
      for (const auto& r : stage_sweep(cfg, t_values))
        rows.push_back({{"num_stages", r.num_stages}, {"epochs_per_stage", r.epochs_per_stage},
                        {"total_steps", r.total_steps}, {"val_acc", r.val_acc}, {"test_acc", r.test_acc}});
      std::cout << json{{"rows", rows}}.dump(2) << '\n';
      return 0;
    }
    if (*noise) {
      const int t = cfg.num_stages > 1 ? cfg.num_stages : 5;
      auto methods = default_methods(t);
      for (auto& m : methods) {
        m.reinit.lambda = cfg.reinit.lambda;
        m.reinit.gamma = cfg.reinit.gamma;
        m.beta = cfg.distill.beta;
      }
      const auto res = noise_study(cfg, q_values, methods, lr_grid, wd_grid, epoch_budgets);
      json rows = json::array();
      for (const auto& r : res.rows)
        rows.push_back({{"q", r.q}, {"method", r.method}, {"lr", r.lr}, {"weight_decay", r.weight_decay},
                        {"test_acc", r.test_acc}, {"memorization", std::isnan(r.memorization) ? json() : json(r.memorization)}});
      json budget = json::array();
      for (const auto& r : res.budget_rows)
        budget.push_back({{"q", r.q}, {"total_epochs", r.total_epochs}, {"test_acc", r.test_acc}});
      std::cout << json{{"rows", rows}, {"epoch_budget", budget}}.dump(2) << '\n';
      return 0;
    }
    if (*online) {
      const ExperimentData data = prepare_data(cfg);
      json curves = json::object();
      std::ofstream csv;
      if (!cfg.out_dir.empty()) {
        std::filesystem::create_directories(run_directory(cfg));
        csv.open(run_directory(cfg) / "online.csv", std::ios::trunc);
        csv << "method,chunk,train_size,test_acc_end,test_acc_best_val,steps\n";
      }
      for (auto m : {OnlineMethod::scratch, OnlineMethod::warm_start, OnlineMethod::shrink_perturb}) {
        const OnlineCurve c = online_sim(cfg, chunks, m, &data);
        json pts = json::array();
        for (const auto& p : c.points) {
          pts.push_back({{"chunk", p.chunk}, {"train_size", p.train_size},
                         {"test_acc_end", p.test_acc_end}, {"test_acc_best_val", p.test_acc_best_val}});
          if (csv.is_open())
            csv << to_string(m) << ',' << p.chunk << ',' << p.train_size << ',' << p.test_acc_end
                << ',' << p.test_acc_best_val << ',' << p.steps << '\n';
        }
        curves[to_string(m)] = pts;
      }
      std::cout << json{{"curves", curves}}.dump(2) << '\n';
      return 0;
    }
  } catch (const Error& e) {
    print_error(e.kind(), e.what());
    return 1;
  } catch (const std::exception& e) {
    print_error("internal", e.what());
    return 1;
  }
  return 0;
}
