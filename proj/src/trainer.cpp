// Copyright 2026 The reinit-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

#include "reinit_lab/checkpoint.hpp"
#include "reinit_lab/harness.hpp"

namespace reinit_lab {

namespace {

constexpr Index kEvalChunk = 1024;

double evaluate(const NetworkSpec& spec, const ParamVector<float>& params,
                const FrozenNormLayer<float>* norm, const Matrix<float>& inputs,
                std::span<const int> labels) {
  if (inputs.rows() == 0) return 0.0;
  Index correct = 0;
  for (Index start = 0; start < inputs.rows(); start += kEvalChunk) {
    const Index n = std::min(kEvalChunk, inputs.rows() - start);
    const Matrix<float> logits = forward(spec, params, Matrix<float>(inputs.middleRows(start, n)), norm);
    for (Index i = 0; i < n; ++i) {
      Index arg = 0;
      logits.row(i).maxCoeff(&arg);
      if (arg == labels[static_cast<std::size_t>(start + i)]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(inputs.rows());
}

double memorization(const NetworkSpec& spec, const ParamVector<float>& params,
                    const FrozenNormLayer<float>* norm, const ExperimentData& data) {
  std::vector<Index> idx;
  for (std::size_t i = 0; i < data.noise_mask.size(); ++i)
    if (data.noise_mask[i]) idx.push_back(static_cast<Index>(i));
  if (idx.empty()) return std::numeric_limits<double>::quiet_NaN();
  const Dataset noisy = subset(data.train, idx);
  return evaluate(spec, params, norm, noisy.inputs, noisy.labels);
}

std::int64_t steps_per_epoch(Index train_size, int batch_size) {
  return (static_cast<std::int64_t>(train_size) + batch_size - 1) / batch_size;
}

const FrozenNormLayer<float>* ptr(const std::optional<FrozenNormLayer<float>>& n) {
  return n ? &*n : nullptr;
}

}  // namespace

std::filesystem::path run_directory(const RunConfig& cfg) {
  return std::filesystem::path(cfg.out_dir) / cfg.run_id;
}

NetworkSpec resolve_network(const RunConfig& cfg, const ExperimentData& data) {
  NetworkSpec spec = cfg.network;
  if (spec.input_dim == 0) spec.input_dim = static_cast<int>(data.train.dim());
  if (spec.num_classes == 0) spec.num_classes = data.train.num_classes;
  return spec;
}

void validate_config(const RunConfig& cfg, const ExperimentData& data) {
  const NetworkSpec spec = resolve_network(cfg, data);
  spec.validate();
  if (spec.input_dim != data.train.dim())
    throw ConfigError("network input_dim " + std::to_string(spec.input_dim) + " != data width " +
                      std::to_string(data.train.dim()));
  if (spec.num_classes < data.train.num_classes)
    throw ConfigError("network has fewer outputs than the data has classes");
  if (cfg.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(cfg.lr > 0.0) || !std::isfinite(cfg.lr)) throw ConfigError("lr must be positive");
  if (cfg.eta_min < 0.0 || cfg.eta_min > cfg.lr) throw ConfigError("need 0 <= eta_min <= lr");
  if (!(cfg.momentum >= 0.0 && cfg.momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  if (cfg.weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
  if (cfg.distill.beta < 0.0) throw ConfigError("distillation beta must be >= 0");
  if (!(cfg.noise_q >= 0.0 && cfg.noise_q <= 1.0)) throw ConfigError("noise_q must lie in [0, 1]");
  if (cfg.augment && !data.train.geometry)
    throw ConfigError("setting D (augmentation) needs image data");
  if (cfg.run_id.empty() || cfg.run_id.find('/') != std::string::npos)
    throw ConfigError("run_id must be a non-empty name without '/'");
  const StagePlan plan = make_stage_plan(cfg.total_epochs, cfg.num_stages);
  cfg.reinit.validate(plan, LayerLayout::from_spec(spec));
}

std::int64_t planned_steps(const RunConfig& cfg, Index train_size) {
  const StagePlan plan = make_stage_plan(cfg.total_epochs, cfg.num_stages);
  return static_cast<std::int64_t>(plan.trained_epochs()) * steps_per_epoch(train_size, cfg.batch_size);
}

nlohmann::ordered_json to_json(const MetricsRecord& r) {
  nlohmann::ordered_json j;
  j["run_id"] = r.run_id;
  j["stage"] = r.stage;
  j["epoch"] = r.epoch;
  j["step"] = r.step;
  j["lr"] = r.lr;
  j["train_loss"] = r.train_loss;
  j["train_acc"] = r.train_acc;
  j["val_acc"] = r.val_acc;
  j["test_acc"] = r.test_acc;
  j["weight_norm"] = r.weight_norm;
  j["wall_ms"] = r.wall_ms;
  return j;
}

void emit_metrics(const std::vector<MetricsRecord>& stream, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  for (const auto& r : stream) out << to_json(r).dump() << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

const std::vector<std::string>& summary_csv_columns() {
  static const std::vector<std::string> cols{
      "run_id",       "setting",     "reinit",       "num_stages",     "epochs_per_stage",
      "total_steps",  "best_stage",  "best_epoch",   "best_val_acc",   "best_test_acc",
      "final_test_acc", "final_weight_norm", "memorization", "failed"};
  return cols;
}

void write_summary_csv(const std::filesystem::path& path, const RunConfig& cfg,
                       const RunResult& result) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  const auto& cols = summary_csv_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << '\n';
  const StagePlan plan = make_stage_plan(cfg.total_epochs, cfg.num_stages);
  const double final_test = result.metrics.empty() ? 0.0 : result.metrics.back().test_acc;
  const double final_norm = result.metrics.empty() ? 0.0 : result.metrics.back().weight_norm;
  auto num = [](double v) { return std::isnan(v) ? std::string() : nlohmann::json(v).dump(); };
  out << cfg.run_id << ',' << setting_label(cfg) << ',' << to_string(cfg.reinit.kind) << ','
      << plan.num_stages << ',' << plan.epochs_per_stage << ',' << result.total_steps << ','
      << result.best_stage << ',' << result.best_epoch << ',' << num(result.best_val_acc) << ','
      << num(result.best_test_acc) << ',' << num(final_test) << ',' << num(final_norm) << ','
      << num(result.memorization_best) << ',' << (result.failed ? 1 : 0) << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

RunResult run_experiment(const RunConfig& cfg) {
  const ExperimentData data = prepare_data(cfg);
  return run_experiment(cfg, data);
}

RunResult run_experiment(const RunConfig& cfg, const ExperimentData& data,
                         const StageTrainingSets& stage_sets) {
  validate_config(cfg, data);
  const NetworkSpec spec = resolve_network(cfg, data);
  const StagePlan plan = make_stage_plan(cfg.total_epochs, cfg.num_stages);
  if (!stage_sets.empty() && static_cast<int>(stage_sets.size()) != plan.num_stages)
    throw ConfigError("need one training set per stage");

  const bool write = !cfg.out_dir.empty();
  const auto dir = run_directory(cfg);
  std::ofstream metrics_out;
  if (write) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    std::ofstream cfg_out(dir / "config.json", std::ios::trunc);
    if (!cfg_out) throw IoError("cannot write " + (dir / "config.json").string());
    cfg_out << nlohmann::json(cfg).dump(2) << '\n';
    metrics_out.open(dir / "metrics.jsonl", std::ios::trunc);
    if (!metrics_out) throw IoError("cannot write " + (dir / "metrics.jsonl").string());
  }

  RunResult result;
  result.run_id = cfg.run_id;
  result.network = spec;
  result.counters.teacher_rows_read.assign(static_cast<std::size_t>(plan.num_stages), 0);

  const InitDistribution dist{cfg.seeds.init};
  ParamVector<float> theta = init_params<float>(spec, dist);
  const std::vector<double> init_block_norms = block_norms(theta);
  OptimState<float> opt(theta.size(), static_cast<float>(cfg.momentum),
                        static_cast<float>(cfg.effective_weight_decay()));
  std::mt19937_64 shuffle_rng(derive_seed(cfg.seeds.shuffle, 0));
  std::mt19937_64 augment_rng(derive_seed(cfg.seeds.shuffle, 1));
  std::mt19937_64 stats_rng(derive_seed(cfg.seeds.shuffle, 2));
  std::optional<FrozenNormLayer<float>> norm;
  std::optional<TeacherCache<float>> teacher;
  result.best_params = theta;

  const auto t_start = std::chrono::steady_clock::now();
  std::vector<Index> all_rows(static_cast<std::size_t>(data.train.size()));
  std::iota(all_rows.begin(), all_rows.end(), Index(0));
  int global_epoch = 0;
  std::int64_t global_step = 0;

  try {
    for (int stage = 1; stage <= plan.num_stages; ++stage) {
      const std::vector<Index>& rows =
          stage_sets.empty() || stage_sets[stage - 1].empty() ? all_rows : stage_sets[stage - 1];
      if (stage > 1) {
        ReinitContext<float> ctx;
        Matrix<float> stats_batch;
        if (cfg.reinit.kind == ReinitKind::layer_wise) {
          std::vector<Index> pick = rows;
          std::shuffle(pick.begin(), pick.end(), stats_rng);
          pick.resize(std::min<std::size_t>(pick.size(), static_cast<std::size_t>(cfg.batch_size)));
          stats_batch = data.train.inputs(pick, Eigen::all);
          ctx.init_block_norms = init_block_norms;
          ctx.stats_batch = &stats_batch;
        }
        const double norm_end = weight_norm(theta);
        auto outcome = apply_reinit(cfg.reinit, spec, theta, dist, stage - 1, ctx);
        theta = std::move(outcome.params);
        if (outcome.norm) norm = std::move(outcome.norm);
        result.reinit_events.push_back(
            {stage - 1, norm_end, weight_norm(theta), outcome.fresh ? weight_norm(*outcome.fresh) : 0.0});
        if (cfg.reset_optimizer_on_stage) opt.reset();
      }

      const std::int64_t epoch_steps = steps_per_epoch(static_cast<Index>(rows.size()), cfg.batch_size);
      LrSchedule schedule{cfg.schedule_kind(), cfg.lr, cfg.eta_min, epoch_steps * plan.epochs_per_stage};
      std::int64_t step_in_stage = 0;
      const bool distilling = cfg.distill.enabled && stage > 1;
      if (distilling && !teacher) throw LogicError("distillation enabled but no teacher snapshot");
      Matrix<float> teacher_rows;

      for (int e = 1; e <= plan.epochs_per_stage; ++e) {
        std::vector<Index> perm = rows;
        std::shuffle(perm.begin(), perm.end(), shuffle_rng);
        double loss_sum = 0.0;
        double correct = 0.0;
        double lr = cfg.lr;
        for (std::size_t start = 0; start < perm.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
          const std::size_t n = std::min(perm.size() - start, static_cast<std::size_t>(cfg.batch_size));
          const std::span<const Index> idx(perm.data() + start, n);
          Matrix<float> x = data.train.inputs(std::vector<Index>(idx.begin(), idx.end()),
                                              Eigen::all);
          std::vector<int> y(n);
          for (std::size_t i = 0; i < n; ++i) y[i] = data.train.labels[static_cast<std::size_t>(idx[i])];
          if (cfg.augment) {
            x = augment(x, data.train.geometry, cfg.augment_spec, augment_rng);
            ++result.counters.augment_calls;
          }
          const Matrix<float>* t_ptr = nullptr;
          if (distilling) {
            teacher_rows = distill_rows(*teacher, idx, stage);
            result.counters.teacher_rows_read[stage - 1] += static_cast<std::int64_t>(n);
            t_ptr = &teacher_rows;
          }
          lr = lr_at(schedule, step_in_stage);
          const auto lg = loss_and_grad(spec, theta, x, y, t_ptr,
                                        static_cast<float>(distilling ? cfg.distill.beta : 0.0),
                                        ptr(norm));
          if (!std::isfinite(lg.loss)) throw NumericalError("non-finite training loss", global_step);
          sgd_step<float>(theta.values, lg.grad, opt, static_cast<float>(lr), global_step);
          loss_sum += static_cast<double>(lg.loss) * static_cast<double>(n);
          correct += accuracy(lg.logits, y) * static_cast<double>(n);
          ++step_in_stage;
          ++global_step;
        }
        if (!theta.values.allFinite()) throw NumericalError("parameters diverged", global_step);
        ++global_epoch;

        MetricsRecord rec;
        rec.run_id = cfg.run_id;
        rec.stage = stage;
        rec.epoch = global_epoch;
        rec.step = global_step;
        rec.lr = lr;
        rec.train_loss = loss_sum / static_cast<double>(perm.size());
        rec.train_acc = correct / static_cast<double>(perm.size());
        rec.val_acc = evaluate(spec, theta, ptr(norm), data.val.inputs, data.val.labels);
        rec.test_acc = evaluate(spec, theta, ptr(norm), data.test.inputs, data.test.labels);
        rec.weight_norm = weight_norm(theta);
        if (cfg.log_wall_time)
          rec.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                            std::chrono::steady_clock::now() - t_start)
                            .count();
        result.metrics.push_back(rec);
        if (write) metrics_out << to_json(rec).dump() << '\n' << std::flush;
        result.last_good_epoch = global_epoch;

        if (rec.val_acc > result.best_val_acc) {
          result.best_val_acc = rec.val_acc;
          result.best_test_acc = rec.test_acc;
          result.best_stage = stage;
          result.best_epoch = global_epoch;
          result.best_params = theta;
          result.best_norm = norm;
        }
      }

      if (cfg.distill.enabled && stage < plan.num_stages) {
        teacher = snapshot_teacher(spec, theta, data.train.inputs, stage, cfg.distill.beta, ptr(norm));
        ++result.counters.teacher_snapshots;
        result.counters.snapshot_forward_examples += data.train.size();
        if (write) save_teacher_cache(dir / teacher_cache_filename(stage), *teacher);
      }
    }
  } catch (const NumericalError& e) {
    result.failed = true;
    result.failure = e.what();
  }

  result.total_steps = global_step;
  result.final_params = theta;
  result.final_norm = norm;
  result.memorization_best = memorization(spec, result.best_params, ptr(result.best_norm), data);
  result.memorization_final = memorization(spec, theta, ptr(norm), data);

  if (write) {
    CheckpointInfo info{spec, cfg.seeds.init, result.best_stage, result.best_epoch, result.best_norm};
    save_checkpoint(dir / "best.ckpt", result.best_params, info);
    write_summary_csv(dir / "summary.csv", cfg, result);
  }
  return result;
}

}  // namespace reinit_lab
