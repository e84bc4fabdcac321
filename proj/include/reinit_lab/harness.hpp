// Copyright 2026 The reinit-lab Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef REINIT_LAB_HARNESS_HPP
#define REINIT_LAB_HARNESS_HPP

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "reinit_lab/data.hpp"
#include "reinit_lab/distill.hpp"
#include "reinit_lab/network.hpp"
#include "reinit_lab/optim.hpp"
#include "reinit_lab/reinit.hpp"

namespace reinit_lab {

enum class DataKind { synthetic, idx, csv };

/// Where the train pool and test set come from. The train pool is split into
/// train/val; normalization statistics are fit on the train side only.
struct DataSource {
  DataKind kind = DataKind::synthetic;
  SyntheticSpec synthetic;
  double synthetic_test_fraction = 0.2;  // share of the generated pool held out as test set
  std::string train_images, train_labels, test_images, test_labels;
  std::string train_csv, test_csv;
  Index max_train = 0;  // 0 keeps everything
  Index max_test = 0;
  double val_fraction = 0.1;
  bool normalize = true;
};

struct DistillSpec {
  bool enabled = false;
  double beta = 1.0;
};

struct Seeds {
  std::uint64_t init = 1;
  std::uint64_t data = 2;
  std::uint64_t noise = 3;
  std::uint64_t shuffle = 4;
};

struct RunConfig {
  std::string run_id = "run";
  NetworkSpec network{0, {256, 128}, 0, {}};
  DataSource data;

  // Regularization setting flags: D, C and W.
  bool augment = false;
  bool cosine = false;
  bool use_weight_decay = false;

  AugmentSpec augment_spec;
  double lr = 0.05;
  double eta_min = 0.0;
  double weight_decay = 5e-4;  // only applied when use_weight_decay
  double momentum = 0.9;
  int total_epochs = 60;
  int batch_size = 125;
  int num_stages = 1;
  ReinitSpec reinit;
  DistillSpec distill;
  double noise_q = 0.0;
  Seeds seeds;
  bool reset_optimizer_on_stage = true;
  bool log_wall_time = false;
  std::string out_dir;  // empty: nothing written

  double effective_weight_decay() const { return use_weight_decay ? weight_decay : 0.0; }
  ScheduleKind schedule_kind() const {
    return cosine ? ScheduleKind::cosine_per_stage : ScheduleKind::constant;
  }
};

/// "none", "d", "dc", "dcw" (and the other flag combinations, e.g. "cw").
std::string setting_label(const RunConfig& cfg);
void apply_setting(RunConfig& cfg, const std::string& label);

void to_json(nlohmann::json& j, const RunConfig& cfg);
/// Missing keys keep the defaults of `RunConfig{}`.
void from_json(const nlohmann::json& j, RunConfig& cfg);
RunConfig load_run_config(const std::filesystem::path& path);

struct ExperimentData {
  Dataset train;  // labels are the (possibly noisy) training labels
  Dataset val;
  Dataset test;
  std::vector<int> clean_train_labels;
  std::vector<std::uint8_t> noise_mask;  // over train rows
};

ExperimentData prepare_data(const RunConfig& cfg);

struct MetricsRecord {
  std::string run_id;
  int stage = 0;
  int epoch = 0;  // global, 1-based
  std::int64_t step = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_acc = 0.0;
  double test_acc = 0.0;
  double weight_norm = 0.0;
  std::int64_t wall_ms = 0;
};

nlohmann::ordered_json to_json(const MetricsRecord& r);

struct ReinitEvent {
  int after_stage = 0;
  double norm_end = 0.0;    // |theta| before re-init
  double norm_start = 0.0;  // |theta_RI|
  double fresh_norm = 0.0;  // |theta_init| of the fresh draw (0 for none)
};

struct RunCounters {
  std::int64_t augment_calls = 0;
  std::vector<std::int64_t> teacher_rows_read;  // per stage, index 0 = stage 1
  int teacher_snapshots = 0;
  std::int64_t snapshot_forward_examples = 0;
};

struct RunResult {
  std::string run_id;
  NetworkSpec network;
  std::vector<MetricsRecord> metrics;
  ParamVector<float> final_params;
  std::optional<FrozenNormLayer<float>> final_norm;
  ParamVector<float> best_params;
  std::optional<FrozenNormLayer<float>> best_norm;
  int best_stage = 0;
  int best_epoch = 0;
  double best_val_acc = -1.0;
  double best_test_acc = 0.0;
  std::int64_t total_steps = 0;
  bool failed = false;
  std::string failure;
  int last_good_epoch = 0;
  RunCounters counters;
  std::vector<ReinitEvent> reinit_events;
  /// Accuracy w.r.t. the noisy labels on the noisy subset of the training
  /// set; NaN without label noise.
  double memorization_best = 0.0;
  double memorization_final = 0.0;
};

/// Training-set rows used by each stage; an empty list means "all rows".
using StageTrainingSets = std::vector<std::vector<Index>>;

/// Staged training with re-initialization between stages, optional
/// self-distillation from stage 2 on, early stopping by validation accuracy.
RunResult run_experiment(const RunConfig& cfg);
RunResult run_experiment(const RunConfig& cfg, const ExperimentData& data,
                         const StageTrainingSets& stage_sets = {});

/// Network spec with input_dim / num_classes filled in from the data.
NetworkSpec resolve_network(const RunConfig& cfg, const ExperimentData& data);

/// Throws ConfigError for anything that would fail mid-run.
void validate_config(const RunConfig& cfg, const ExperimentData& data);

/// Total optimizer steps a run will take over `train_size` examples.
std::int64_t planned_steps(const RunConfig& cfg, Index train_size);

void emit_metrics(const std::vector<MetricsRecord>& stream, const std::filesystem::path& path);
void write_summary_csv(const std::filesystem::path& path, const RunConfig& cfg,
                       const RunResult& result);
const std::vector<std::string>& summary_csv_columns();

/// Directory of one run: <out_dir>/<run_id>.
std::filesystem::path run_directory(const RunConfig& cfg);

// ---------------------------------------------------------------- studies

struct GridCell {
  double lr = 0.0;
  double weight_decay = 0.0;
  double val_acc = 0.0;
  double test_acc = 0.0;
  double memorization = 0.0;
  std::int64_t total_steps = 0;
  bool failed = false;
  std::string failure;
};

struct GridResult {
  std::vector<GridCell> cells;  // lr-major, ascending
  std::size_t chosen = 0;

  const GridCell& best() const { return cells[chosen]; }
  /// max - min test accuracy over the non-failed cells.
  double robustness() const;
};

inline const std::vector<double> kDefaultLrGrid{0.005, 0.01, 0.03, 0.05, 0.1};
inline const std::vector<double> kDefaultWdGrid{0.0, 0.0001, 0.0005, 0.001, 0.005};

/// Worker count for grid-style drivers: REINIT_LAB_THREADS if set, else the
/// hardware concurrency.
int harness_threads();

GridResult grid_search(const RunConfig& base, const std::vector<double>& lr_grid,
                       const std::vector<double>& wd_grid, const ExperimentData* data = nullptr,
                       int threads = 0);

struct StageSweepRow {
  int num_stages = 1;
  int epochs_per_stage = 0;
  std::int64_t total_steps = 0;
  double val_acc = 0.0;
  double test_acc = 0.0;
};

inline const std::vector<int> kDefaultStageValues{1, 2, 5, 10, 20, 25};

std::vector<StageSweepRow> stage_sweep(const RunConfig& base, const std::vector<int>& stage_values,
                                       const ExperimentData* data = nullptr, int threads = 0);

struct MethodSpec {
  std::string name;
  ReinitSpec reinit;
  int num_stages = 1;
  bool distill = false;
  double beta = 1.0;
};

/// standard, S&P, S&P + distillation with T stages.
std::vector<MethodSpec> default_methods(int num_stages);

struct NoiseRow {
  double q = 0.0;
  std::string method;
  double lr = 0.0;
  double weight_decay = 0.0;
  double val_acc = 0.0;
  double test_acc = 0.0;
  double memorization = 0.0;
  std::int64_t total_steps = 0;
};

struct EpochBudgetRow {
  double q = 0.0;
  int total_epochs = 0;
  double test_acc = 0.0;
  double memorization = 0.0;
};

struct NoiseStudyResult {
  std::vector<NoiseRow> rows;
  std::vector<EpochBudgetRow> budget_rows;
};

/// Per (q, method): best grid cell by validation accuracy, with noise on the
/// training split only. `epoch_budgets` adds standard-training runs with
/// shorter budgets.
NoiseStudyResult noise_study(const RunConfig& base, const std::vector<double>& q_values,
                             const std::vector<MethodSpec>& methods,
                             const std::vector<double>& lr_grid, const std::vector<double>& wd_grid,
                             const std::vector<int>& epoch_budgets = {}, int threads = 0);

enum class OnlineMethod { scratch, warm_start, shrink_perturb };
std::string to_string(OnlineMethod m);
OnlineMethod parse_online_method(const std::string& name);

struct OnlinePoint {
  int chunk = 0;
  Index train_size = 0;
  double test_acc_end = 0.0;      // after the chunk's last epoch
  double test_acc_best_val = 0.0; // at the chunk's best validation epoch
  std::int64_t steps = 0;
};

struct OnlineCurve {
  OnlineMethod method = OnlineMethod::scratch;
  std::vector<OnlinePoint> points;
};

/// Training data arrives in `num_chunks` chunks; chunk k trains on chunks
/// 1..k for floor(N / num_chunks) epochs.
OnlineCurve online_sim(const RunConfig& cfg, int num_chunks, OnlineMethod method,
                       const ExperimentData* data = nullptr);

}  // namespace reinit_lab

#endif  // REINIT_LAB_HARNESS_HPP
