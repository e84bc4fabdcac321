// Copyright 2026 The reinit-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>

#include "reinit_lab/checkpoint.hpp"
#include "reinit_lab/harness.hpp"

namespace reinit_lab {

std::string setting_label(const RunConfig& cfg) {
  std::string s;
  if (cfg.augment) s += 'd';
  if (cfg.cosine) s += 'c';
  if (cfg.use_weight_decay) s += 'w';
  return s.empty() ? "none" : s;
}

void apply_setting(RunConfig& cfg, const std::string& label) {
  std::string l = label;
  std::transform(l.begin(), l.end(), l.begin(), [](unsigned char c) { return std::tolower(c); });
  if (l == "none" || l == "empty" || l == "0") l.clear();
  for (char c : l)
    if (c != 'd' && c != 'c' && c != 'w') throw ConfigError("unknown setting '" + label + "'");
  cfg.augment = l.find('d') != std::string::npos;
  cfg.cosine = l.find('c') != std::string::npos;
  cfg.use_weight_decay = l.find('w') != std::string::npos;
}

namespace {

std::string to_string(DataKind k) {
  switch (k) {
    case DataKind::synthetic: return "synthetic";
    case DataKind::idx: return "idx";
    case DataKind::csv: return "csv";
  }
  return "synthetic";
}

DataKind parse_data_kind(const std::string& s) {
  if (s == "synthetic") return DataKind::synthetic;
  if (s == "idx") return DataKind::idx;
  if (s == "csv") return DataKind::csv;
  throw ConfigError("unknown data kind '" + s + "'");
}

void check_keys(const nlohmann::json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, _] : j.items())
    if (!allowed.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
}

}  // namespace

void to_json(nlohmann::json& j, const RunConfig& cfg) {
  const auto& d = cfg.data;
  j = nlohmann::json{
      {"run_id", cfg.run_id},
      {"network", cfg.network},
      {"data",
       {{"kind", to_string(d.kind)},
        {"synthetic",
         {{"num_classes", d.synthetic.num_classes},
          {"dim", d.synthetic.dim},
          {"per_class", d.synthetic.per_class},
          {"separation", d.synthetic.separation},
          {"noise_std", d.synthetic.noise_std},
          {"image_side", d.synthetic.image_side},
          {"seed", d.synthetic.seed}}},
        {"synthetic_test_fraction", d.synthetic_test_fraction},
        {"train_images", d.train_images},
        {"train_labels", d.train_labels},
        {"test_images", d.test_images},
        {"test_labels", d.test_labels},
        {"train_csv", d.train_csv},
        {"test_csv", d.test_csv},
        {"max_train", d.max_train},
        {"max_test", d.max_test},
        {"val_fraction", d.val_fraction},
        {"normalize", d.normalize}}},
      {"setting", setting_label(cfg)},
      {"augment", cfg.augment},
      {"cosine", cfg.cosine},
      {"use_weight_decay", cfg.use_weight_decay},
      {"augment_spec",
       {{"horizontal_flip_prob", cfg.augment_spec.horizontal_flip_prob},
        {"pad_pixels", cfg.augment_spec.pad_pixels}}},
      {"lr", cfg.lr},
      {"eta_min", cfg.eta_min},
      {"weight_decay", cfg.weight_decay},
      {"momentum", cfg.momentum},
      {"total_epochs", cfg.total_epochs},
      {"batch_size", cfg.batch_size},
      {"num_stages", cfg.num_stages},
      {"reinit",
       {{"kind", to_string(cfg.reinit.kind)},
        {"lambda", cfg.reinit.lambda},
        {"gamma", cfg.reinit.gamma},
        {"blocks", cfg.reinit.blocks},
        {"repeats", cfg.reinit.repeats},
        {"rescale_mode", to_string(cfg.reinit.rescale_mode)}}},
      {"distill", {{"enabled", cfg.distill.enabled}, {"beta", cfg.distill.beta}}},
      {"noise_q", cfg.noise_q},
      {"seeds",
       {{"init", cfg.seeds.init},
        {"data", cfg.seeds.data},
        {"noise", cfg.seeds.noise},
        {"shuffle", cfg.seeds.shuffle}}},
      {"reset_optimizer_on_stage", cfg.reset_optimizer_on_stage},
      {"log_wall_time", cfg.log_wall_time},
      {"out_dir", cfg.out_dir}};
}

void from_json(const nlohmann::json& j, RunConfig& cfg) {
  try {
    check_keys(j,
               {"run_id", "network", "data", "setting", "augment", "cosine", "use_weight_decay",
                "augment_spec", "lr", "eta_min", "weight_decay", "momentum", "total_epochs",
                "batch_size", "num_stages", "reinit", "distill", "noise_q", "seeds",
                "reset_optimizer_on_stage", "log_wall_time", "out_dir"},
               "run config");
    cfg.run_id = j.value("run_id", cfg.run_id);
    if (j.contains("network")) j["network"].get_to(cfg.network);
    if (j.contains("data")) {
      const auto& dj = j["data"];
      auto& d = cfg.data;
      if (dj.contains("kind")) d.kind = parse_data_kind(dj["kind"].get<std::string>());
      if (dj.contains("synthetic")) {
        const auto& s = dj["synthetic"];
        d.synthetic.num_classes = s.value("num_classes", d.synthetic.num_classes);
        d.synthetic.dim = s.value("dim", d.synthetic.dim);
        d.synthetic.per_class = s.value("per_class", d.synthetic.per_class);
        d.synthetic.separation = s.value("separation", d.synthetic.separation);
        d.synthetic.noise_std = s.value("noise_std", d.synthetic.noise_std);
        d.synthetic.image_side = s.value("image_side", d.synthetic.image_side);
        d.synthetic.seed = s.value("seed", d.synthetic.seed);
      }
      d.synthetic_test_fraction = dj.value("synthetic_test_fraction", d.synthetic_test_fraction);
      d.train_images = dj.value("train_images", d.train_images);
      d.train_labels = dj.value("train_labels", d.train_labels);
      d.test_images = dj.value("test_images", d.test_images);
      d.test_labels = dj.value("test_labels", d.test_labels);
      d.train_csv = dj.value("train_csv", d.train_csv);
      d.test_csv = dj.value("test_csv", d.test_csv);
      d.max_train = dj.value("max_train", d.max_train);
      d.max_test = dj.value("max_test", d.max_test);
      d.val_fraction = dj.value("val_fraction", d.val_fraction);
      d.normalize = dj.value("normalize", d.normalize);
    }
    if (j.contains("setting")) apply_setting(cfg, j["setting"].get<std::string>());
    cfg.augment = j.value("augment", cfg.augment);
    cfg.cosine = j.value("cosine", cfg.cosine);
    cfg.use_weight_decay = j.value("use_weight_decay", cfg.use_weight_decay);
    if (j.contains("augment_spec")) {
      const auto& a = j["augment_spec"];
      cfg.augment_spec.horizontal_flip_prob =
          a.value("horizontal_flip_prob", cfg.augment_spec.horizontal_flip_prob);
      cfg.augment_spec.pad_pixels = a.value("pad_pixels", cfg.augment_spec.pad_pixels);
    }
    cfg.lr = j.value("lr", cfg.lr);
    cfg.eta_min = j.value("eta_min", cfg.eta_min);
    cfg.weight_decay = j.value("weight_decay", cfg.weight_decay);
    cfg.momentum = j.value("momentum", cfg.momentum);
    cfg.total_epochs = j.value("total_epochs", cfg.total_epochs);
    cfg.batch_size = j.value("batch_size", cfg.batch_size);
    cfg.num_stages = j.value("num_stages", cfg.num_stages);
    if (j.contains("reinit")) {
      const auto& r = j["reinit"];
      if (r.contains("kind")) cfg.reinit.kind = parse_reinit_kind(r["kind"].get<std::string>());
      cfg.reinit.lambda = r.value("lambda", cfg.reinit.lambda);
      cfg.reinit.gamma = r.value("gamma", cfg.reinit.gamma);
      cfg.reinit.blocks = r.value("blocks", cfg.reinit.blocks);
      cfg.reinit.repeats = r.value("repeats", cfg.reinit.repeats);
      if (r.contains("rescale_mode"))
        cfg.reinit.rescale_mode = parse_rescale_mode(r["rescale_mode"].get<std::string>());
    }
    if (j.contains("distill")) {
      cfg.distill.enabled = j["distill"].value("enabled", cfg.distill.enabled);
      cfg.distill.beta = j["distill"].value("beta", cfg.distill.beta);
    }
    cfg.noise_q = j.value("noise_q", cfg.noise_q);
    if (j.contains("seeds")) {
      const auto& s = j["seeds"];
      cfg.seeds.init = s.value("init", cfg.seeds.init);
      cfg.seeds.data = s.value("data", cfg.seeds.data);
      cfg.seeds.noise = s.value("noise", cfg.seeds.noise);
      cfg.seeds.shuffle = s.value("shuffle", cfg.seeds.shuffle);
    }
    cfg.reset_optimizer_on_stage = j.value("reset_optimizer_on_stage", cfg.reset_optimizer_on_stage);
    cfg.log_wall_time = j.value("log_wall_time", cfg.log_wall_time);
    cfg.out_dir = j.value("out_dir", cfg.out_dir);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed run config: ") + e.what());
  }
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  RunConfig cfg;
  from_json(j, cfg);
  return cfg;
}

namespace {

Dataset take_first(const Dataset& ds, Index limit, std::uint64_t seed) {
  if (limit <= 0 || limit >= ds.size()) return ds;
  std::vector<Index> perm(static_cast<std::size_t>(ds.size()));
  std::iota(perm.begin(), perm.end(), Index(0));
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  perm.resize(static_cast<std::size_t>(limit));
  std::sort(perm.begin(), perm.end());
  return subset(ds, perm);
}

}  // namespace

ExperimentData prepare_data(const RunConfig& cfg) {
  const auto& src = cfg.data;
  Dataset pool;
  std::optional<Dataset> test;
  switch (src.kind) {
    case DataKind::synthetic: pool = make_synthetic(src.synthetic); break;
    case DataKind::idx:
      if (src.train_images.empty() || src.train_labels.empty())
        throw ConfigError("idx data needs train_images and train_labels");
      pool = load_idx(src.train_images, src.train_labels);
      if (!src.test_images.empty()) test = load_idx(src.test_images, src.test_labels);
      break;
    case DataKind::csv:
      if (src.train_csv.empty()) throw ConfigError("csv data needs train_csv");
      pool = load_csv(src.train_csv);
      if (!src.test_csv.empty()) test = load_csv(src.test_csv);
      break;
  }
  if (!test) {
    auto s = split(pool, src.synthetic_test_fraction, derive_seed(cfg.seeds.data, 1));
    pool = std::move(s.train);
    test = std::move(s.val);
  }
  if (test->dim() != pool.dim()) throw DataError("train and test inputs have different widths");
  pool = take_first(pool, src.max_train, derive_seed(cfg.seeds.data, 2));
  *test = take_first(*test, src.max_test, derive_seed(cfg.seeds.data, 3));

  const int classes = std::max(pool.num_classes, test->num_classes);
  pool.num_classes = classes;
  test->num_classes = classes;

  auto tv = split(pool, src.val_fraction, derive_seed(cfg.seeds.data, 4));
  ExperimentData data;
  data.train = std::move(tv.train);
  data.val = std::move(tv.val);
  data.test = std::move(*test);
  if (src.normalize) {
    const auto norm = fit_normalization(data.train);
    data.train = normalize(std::move(data.train), norm);
    data.val = normalize(std::move(data.val), norm);
    data.test = normalize(std::move(data.test), norm);
  }
  data.clean_train_labels = data.train.labels;
  auto noisy = inject_label_noise(data.train, cfg.noise_q, cfg.seeds.noise);
  data.train.labels = noisy.noisy_labels;
  data.noise_mask = std::move(noisy.noise_mask);
  data.train.validate();
  data.val.validate();
  data.test.validate();
  return data;
}

}  // namespace reinit_lab
