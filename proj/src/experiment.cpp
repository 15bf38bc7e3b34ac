#include "hsim/experiment.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "hsim/error.hpp"
#include "hsim/perturb.hpp"
#include "hsim/rng.hpp"

namespace hsim {
namespace {

using nlohmann::json;

[[noreturn]] void bad_field(const std::string& path, const std::string& what) {
  throw Error(ErrorKind::InvalidConfig, "field '" + path + "': " + what);
}

// Reads `key` from `obj` if present, checking its JSON type.
template <class T>
void read(const json& obj, const std::string& parent, const char* key, T& out) {
  const auto it = obj.find(key);
  if (it == obj.end()) return;
  const std::string path = parent.empty() ? key : parent + "." + key;
  try {
    if constexpr (std::is_same_v<T, bool>) {
      if (!it->is_boolean()) bad_field(path, "expected a boolean");
    } else if constexpr (std::is_arithmetic_v<T>) {
      if (!it->is_number()) bad_field(path, "expected a number");
      if constexpr (std::is_integral_v<T>) {
        if (!it->is_number_integer()) bad_field(path, "expected an integer");
        if (std::is_unsigned_v<T> && it->is_number_integer() && !it->is_number_unsigned()) {
          bad_field(path, "expected a non-negative integer");
        }
      }
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!it->is_string()) bad_field(path, "expected a string");
    }
    out = it->get<T>();
  } catch (const json::exception& e) {
    bad_field(path, e.what());
  }
}

const json& section(const json& obj, const std::string& parent, const char* key) {
  static const json empty = json::object();
  const auto it = obj.find(key);
  if (it == obj.end()) return empty;
  if (!it->is_object()) bad_field(parent.empty() ? key : parent + "." + key, "expected an object");
  return *it;
}

void reject_unknown(const json& obj, const std::string& parent, std::initializer_list<const char*> known) {
  for (const auto& [k, v] : obj.items()) {
    bool ok = false;
    for (const char* name : known) ok = ok || k == name;
    if (!ok) bad_field(parent.empty() ? k : parent + "." + k, "unknown key");
  }
}

template <class Parse>
auto parse_enum(const std::string& path, const std::string& value, Parse parse) {
  try {
    return parse(value);
  } catch (const Error& e) {
    bad_field(path, e.detail());
  }
}

std::string format_double(const char* fmt, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

}  // namespace

ExperimentConfig parse_experiment_config(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::InvalidConfig, std::string("config is not valid JSON: ") + e.what());
  }
  if (!root.is_object()) throw Error(ErrorKind::InvalidConfig, "config must be a JSON object");
  reject_unknown(root, "", {"run_id", "seed", "seeds", "dataset", "noise", "train", "eval",
                            "output_dir", "dump_margins"});
  ExperimentConfig cfg;
  cfg.source_text = json_text;
  read(root, "", "run_id", cfg.run_id);
  read(root, "", "seed", cfg.train.seed);
  read(root, "", "seeds", cfg.seeds);
  std::string out_dir;
  read(root, "", "output_dir", out_dir);
  cfg.output_dir = out_dir;
  read(root, "", "dump_margins", cfg.dump_margins);

  const auto& ds = section(root, "", "dataset");
  reject_unknown(ds, "dataset", {"source", "path", "format", "seed", "hierarchy"});
  std::string source = "synthetic";
  read(ds, "dataset", "source", source);
  if (source == "synthetic") {
    cfg.dataset.kind = DatasetSource::Kind::Synthetic;
  } else if (source == "file") {
    cfg.dataset.kind = DatasetSource::Kind::File;
    std::string path;
    read(ds, "dataset", "path", path);
    if (path.empty()) bad_field("dataset.path", "required when source is 'file'");
    cfg.dataset.path = path;
    cfg.dataset.format = format_for_path(cfg.dataset.path);
  } else {
    bad_field("dataset.source", "expected 'synthetic' or 'file'");
  }
  if (ds.contains("format")) {
    std::string fmt;
    read(ds, "dataset", "format", fmt);
    cfg.dataset.format = parse_enum("dataset.format", fmt, parse_file_format);
  }
  if (ds.contains("seed")) {
    std::uint64_t s = 0;
    read(ds, "dataset", "seed", s);
    cfg.dataset.seed = s;
  }
  const auto& h = section(ds, "dataset", "hierarchy");
  reject_unknown(h, "dataset.hierarchy", {"superclasses", "subclasses_per_super", "samples_per_class",
                                          "dim", "super_scale", "sub_scale", "noise_scale"});
  auto& hs = cfg.dataset.hierarchy;
  read(h, "dataset.hierarchy", "superclasses", hs.superclasses);
  read(h, "dataset.hierarchy", "subclasses_per_super", hs.subclasses_per_super);
  read(h, "dataset.hierarchy", "samples_per_class", hs.samples_per_class);
  read(h, "dataset.hierarchy", "dim", hs.dim);
  read(h, "dataset.hierarchy", "super_scale", hs.super_scale);
  read(h, "dataset.hierarchy", "sub_scale", hs.sub_scale);
  read(h, "dataset.hierarchy", "noise_scale", hs.noise_scale);
  if (cfg.dataset.kind == DatasetSource::Kind::Synthetic) {
    try {
      hs.validate();
    } catch (const Error& e) {
      bad_field("dataset.hierarchy", e.detail());
    }
  }

  const auto& noise = section(root, "", "noise");
  reject_unknown(noise, "noise", {"ratio"});
  read(noise, "noise", "ratio", cfg.noise_ratio);
  if (!(cfg.noise_ratio >= 0.0 && cfg.noise_ratio <= 1.0)) bad_field("noise.ratio", "must lie in [0, 1]");

  const auto& tr = section(root, "", "train");
  reject_unknown(tr, "train", {"epochs", "classes_per_batch", "samples_per_class", "hidden_dim",
                               "output_dim", "loss", "margin_mode", "gamma", "triplet_margin", "ms",
                               "inter_transform", "reciprocal_epsilon", "consistency",
                               "class_divergence", "sample_consistency", "similarity", "curvature",
                               "exp_map", "augment", "adam", "stats_cap_per_class"});
  auto& t = cfg.train;
  read(tr, "train", "epochs", t.epochs);
  read(tr, "train", "classes_per_batch", t.classes_per_batch);
  read(tr, "train", "samples_per_class", t.samples_per_class);
  read(tr, "train", "hidden_dim", t.hidden_dim);
  read(tr, "train", "output_dim", t.output_dim);
  std::string s;
  if (tr.contains("loss")) {
    read(tr, "train", "loss", s);
    t.loss.family = parse_enum("train.loss", s, parse_loss_family);
  }
  if (tr.contains("margin_mode")) {
    read(tr, "train", "margin_mode", s);
    t.loss.mode = parse_enum("train.margin_mode", s, parse_margin_mode);
  }
  read(tr, "train", "gamma", t.loss.gamma);
  read(tr, "train", "triplet_margin", t.loss.triplet_margin);
  const auto& ms = section(tr, "train", "ms");
  reject_unknown(ms, "train.ms", {"aug_scale", "pos_scale", "neg_scale"});
  read(ms, "train.ms", "aug_scale", t.loss.ms.aug_scale);
  read(ms, "train.ms", "pos_scale", t.loss.ms.pos_scale);
  read(ms, "train.ms", "neg_scale", t.loss.ms.neg_scale);
  double eps = t.inter.epsilon;
  read(tr, "train", "reciprocal_epsilon", eps);
  std::string inter = t.inter.name();
  read(tr, "train", "inter_transform", inter);
  t.inter = parse_enum("train.inter_transform", inter, [&](const std::string& n) { return InterTransform::parse(n, eps); });
  if (tr.contains("consistency")) {
    read(tr, "train", "consistency", s);
    if (s == "min") t.consistency = ConsistencyMode::Min;
    else if (s == "max") t.consistency = ConsistencyMode::Max;
    else bad_field("train.consistency", "expected 'min' or 'max'");
  }
  read(tr, "train", "class_divergence", t.class_divergence);
  read(tr, "train", "sample_consistency", t.sample_consistency);
  std::string sim = "cosine";
  double tau = 1.0;
  std::string form = "as_printed";
  read(tr, "train", "similarity", sim);
  read(tr, "train", "curvature", tau);
  read(tr, "train", "exp_map", form);
  const auto exp_form = parse_enum("train.exp_map", form, parse_exp_map_form);
  t.similarity = parse_enum("train.similarity", sim,
                            [&](const std::string& n) { return SimilarityKind::parse(n, tau, exp_form); });
  if (sim == "cosine") {
    t.similarity.curvature = tau;
    t.similarity.exp_form = exp_form;
  }
  const auto& aug = section(tr, "train", "augment");
  reject_unknown(aug, "train.augment", {"weak", "strong", "mask_frac"});
  read(aug, "train.augment", "weak", t.augment.weak);
  read(aug, "train.augment", "strong", t.augment.strong);
  read(aug, "train.augment", "mask_frac", t.augment.mask_frac);
  try {
    t.augment.resolve(1.0, 1);
  } catch (const Error& e) {
    bad_field("train.augment", e.detail());
  }
  const auto& adam = section(tr, "train", "adam");
  reject_unknown(adam, "train.adam", {"lr", "beta1", "beta2", "eps", "weight_decay"});
  read(adam, "train.adam", "lr", t.adam.lr);
  read(adam, "train.adam", "beta1", t.adam.beta1);
  read(adam, "train.adam", "beta2", t.adam.beta2);
  read(adam, "train.adam", "eps", t.adam.eps);
  read(adam, "train.adam", "weight_decay", t.adam.weight_decay);
  read(tr, "train", "stats_cap_per_class", t.stats_cap_per_class);
  try {
    t.validate();
  } catch (const Error& e) {
    throw Error(ErrorKind::InvalidConfig, std::string("train: ") + e.detail());
  }

  const auto& ev = section(root, "", "eval");
  reject_unknown(ev, "eval", {"k_values", "every_epoch"});
  read(ev, "eval", "k_values", cfg.k_values);
  read(ev, "eval", "every_epoch", cfg.eval_every_epoch);
  if (cfg.k_values.empty()) bad_field("eval.k_values", "must not be empty");
  for (int k : cfg.k_values) {
    if (k < 1) bad_field("eval.k_values", "every K must be >= 1");
  }
  std::sort(cfg.k_values.begin(), cfg.k_values.end());
  cfg.k_values.erase(std::unique(cfg.k_values.begin(), cfg.k_values.end()), cfg.k_values.end());
  return cfg;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::InvalidConfig, "cannot read config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_experiment_config(ss.str());
}

std::string experiment_config_json(const ExperimentConfig& c, int indent) {
  const auto& t = c.train;
  json j;
  j["run_id"] = c.run_id;
  j["seed"] = t.seed;
  j["seeds"] = c.seeds;
  j["output_dir"] = c.output_dir.string();
  j["dump_margins"] = c.dump_margins;
  json ds;
  ds["source"] = c.dataset.kind == DatasetSource::Kind::Synthetic ? "synthetic" : "file";
  if (c.dataset.kind == DatasetSource::Kind::File) ds["path"] = c.dataset.path.string();
  ds["format"] = c.dataset.format == FileFormat::Csv ? "csv" : "binary";
  if (c.dataset.seed) ds["seed"] = *c.dataset.seed;
  const auto& h = c.dataset.hierarchy;
  ds["hierarchy"] = {{"superclasses", h.superclasses}, {"subclasses_per_super", h.subclasses_per_super},
                     {"samples_per_class", h.samples_per_class}, {"dim", h.dim},
                     {"super_scale", h.super_scale}, {"sub_scale", h.sub_scale},
                     {"noise_scale", h.noise_scale}};
  j["dataset"] = ds;
  j["noise"] = {{"ratio", c.noise_ratio}};
  j["train"] = {
      {"epochs", t.epochs},
      {"classes_per_batch", t.classes_per_batch},
      {"samples_per_class", t.samples_per_class},
      {"hidden_dim", t.hidden_dim},
      {"output_dim", t.output_dim},
      {"loss", t.loss.family_name()},
      {"margin_mode", t.loss.mode_name()},
      {"gamma", t.loss.gamma},
      {"triplet_margin", t.loss.triplet_margin},
      {"ms", {{"aug_scale", t.loss.ms.aug_scale}, {"pos_scale", t.loss.ms.pos_scale}, {"neg_scale", t.loss.ms.neg_scale}}},
      {"inter_transform", t.inter.name()},
      {"reciprocal_epsilon", t.inter.epsilon},
      {"consistency", t.consistency == ConsistencyMode::Min ? "min" : "max"},
      {"class_divergence", t.class_divergence},
      {"sample_consistency", t.sample_consistency},
      {"similarity", t.similarity.name()},
      {"curvature", t.similarity.curvature},
      {"exp_map", to_string(t.similarity.exp_form)},
      {"augment", {{"weak", t.augment.weak}, {"strong", t.augment.strong}, {"mask_frac", t.augment.mask_frac}}},
      {"adam", {{"lr", t.adam.lr}, {"beta1", t.adam.beta1}, {"beta2", t.adam.beta2}, {"eps", t.adam.eps},
                {"weight_decay", t.adam.weight_decay}}},
      {"stats_cap_per_class", t.stats_cap_per_class},
  };
  j["eval"] = {{"k_values", c.k_values}, {"every_epoch", c.eval_every_epoch}};
  return j.dump(indent);
}

std::string metrics_csv_header(const std::vector<int>& k_values) {
  std::string h = "run_id,loss,margin_mode,sim_kind,noise_ratio,seed,epoch,mean_loss";
  for (int k : k_values) h += ",recall@" + std::to_string(k);
  return h + "\n";
}

std::string metrics_csv_row(const MetricsRow& r) {
  std::string s = r.run_id + "," + r.loss + "," + r.margin_mode + "," + r.sim_kind + "," +
                  format_double("%.6g", r.noise_ratio) + "," + std::to_string(r.seed) + "," + r.epoch +
                  "," + (r.mean_loss ? format_double("%.10g", *r.mean_loss) : std::string("nan"));
  for (double v : r.recalls) s += "," + format_double("%.6f", v);
  return s + "\n";
}

DataSplits prepare_data(const ExperimentConfig& config) {
  const std::uint64_t data_seed = config.dataset.seed.value_or(config.seed());
  FeatureDataset full;
  if (config.dataset.kind == DatasetSource::Kind::Synthetic) {
    full = generate_hierarchical(config.dataset.hierarchy, data_seed);
  } else {
    if (!std::filesystem::exists(config.dataset.path)) {
      throw Error(ErrorKind::InvalidConfig, "field 'dataset.path': " + config.dataset.path.string() +
                                                " does not exist");
    }
    full = load_features(config.dataset.path, config.dataset.format);
    assign_stratified_split(full, data_seed);
  }
  full.validate();
  DataSplits out;
  out.train = full.subset(Split::Train);
  out.test = full.subset(Split::Test);
  out.clean_train_labels = out.train.labels;
  const auto noisy = inject_label_noise(out.train.labels, full.num_classes,
                                        {config.noise_ratio, derive_seed(config.seed(), 0x6C6162656CULL)});
  out.train.labels = noisy.labels;
  out.flipped = noisy.flipped;
  return out;
}

RunResult run(const ExperimentConfig& config) {
  const auto started = std::chrono::steady_clock::now();
  const auto& tc = config.train;
  tc.validate();
  const DataSplits data = prepare_data(config);
  if (data.test.size() < 2) throw Error(ErrorKind::InvalidConfig, "test split needs at least 2 samples");
  for (int k : config.k_values) {
    if (k >= data.test.size()) {
      throw Error(ErrorKind::InvalidConfig, "field 'eval.k_values': K = " + std::to_string(k) +
                                                " must be below the test split size " +
                                                std::to_string(data.test.size()));
    }
  }
  const bool write = !config.output_dir.empty();
  if (write) std::filesystem::create_directories(config.output_dir);

  RunResult result;
  result.model = make_model(static_cast<int>(data.train.dim()), tc);
  auto make_row = [&](std::string epoch, std::optional<double> loss, const RecallReport& rec) {
    return MetricsRow{config.run_id, tc.loss.family_name(), tc.loss.mode_name(), tc.similarity.name(),
                      config.noise_ratio, config.seed(), std::move(epoch), loss, rec.recalls};
  };
  auto evaluate = [&](const MlpModel& model) {
    return recall_at_k(forward(model, data.test.features), data.test.labels, config.k_values, tc.similarity);
  };

  std::vector<RecallReport> epoch_recalls;
  FitObserver observer;
  if (write && config.dump_margins) {
    observer.on_margins = [&](const MarginTable& table) {
      write_text(config.output_dir / ("margins_epoch" + std::to_string(table.epoch) + ".json"),
                 margin_table_json(table) + "\n");
    };
  }
  observer.on_epoch = [&](const EpochRecord& rec, const MlpModel& model) {
    if (!config.eval_every_epoch) return;
    epoch_recalls.push_back(evaluate(model));
    result.rows.push_back(make_row(std::to_string(rec.epoch), rec.stats.mean_loss, epoch_recalls.back()));
  };
  const TrainingSet train{data.train.features, data.train.labels, data.train.num_classes};
  result.history = fit(result.model, train, tc, observer);
  result.final_recall = evaluate(result.model);
  std::optional<double> last_loss;
  if (!result.history.empty()) last_loss = result.history.back().stats.mean_loss;
  result.rows.push_back(make_row("final", last_loss, result.final_recall));
  result.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

  if (write) {
    std::string csv = metrics_csv_header(config.k_values);
    for (const auto& r : result.rows) csv += metrics_csv_row(r);
    write_text(config.output_dir / "metrics.csv", csv);
    if (!config.source_text.empty()) write_text(config.output_dir / "config.json", config.source_text);
    write_text(config.output_dir / "config.resolved.json", experiment_config_json(config) + "\n");
    save_checkpoint(result.model, config.output_dir / "model.hsim");

    json report;
    report["config"] = json::parse(experiment_config_json(config));
    json history = json::array();
    for (std::size_t e = 0; e < result.history.size(); ++e) {
      const auto& h = result.history[e];
      json item{{"epoch", h.epoch}, {"mean_loss", h.stats.mean_loss}, {"batches", h.stats.batches}};
      if (h.margins) {
        item["margins"] = {{"mean_pos", h.margins->mean_pos}, {"mean_neg", h.margins->mean_neg},
                           {"mean_aug", h.margins->mean_aug}};
      }
      if (e < epoch_recalls.size()) item["recall"] = epoch_recalls[e].recalls;
      history.push_back(item);
    }
    report["history"] = history;
    json final_recall = json::object();
    for (std::size_t i = 0; i < config.k_values.size(); ++i) {
      final_recall["recall@" + std::to_string(config.k_values[i])] = result.final_recall.recalls[i];
    }
    report["final_recall"] = final_recall;
    report["noisy_train_labels"] = std::count(data.flipped.begin(), data.flipped.end(), true);
    report["wall_clock_seconds"] = result.wall_clock_seconds;
    write_text(config.output_dir / "report.json", report.dump(2) + "\n");
  }
  return result;
}

const char* ablation_row_name(AblationRow row) {
  switch (row) {
    case AblationRow::Baseline: return "baseline";
    case AblationRow::ClassWise: return "+class_wise";
    case AblationRow::SampleWise: return "+sample_wise";
    case AblationRow::Full: return "full";
    case AblationRow::FullEuclidean: return "full_without_hg";
    case AblationRow::FullHyperbolic: return "full_with_hg";
  }
  return "unknown";
}

std::vector<AblationRow> ablation_rows() {
  return {AblationRow::Baseline, AblationRow::ClassWise, AblationRow::SampleWise,
          AblationRow::Full, AblationRow::FullEuclidean, AblationRow::FullHyperbolic};
}

ExperimentConfig ablation_config(const ExperimentConfig& base, AblationRow row, std::uint64_t seed) {
  ExperimentConfig c = base;
  c.set_seed(seed);
  c.output_dir.clear();
  c.dump_margins = false;
  c.run_id = base.run_id + "/" + ablation_row_name(row) + "/seed" + std::to_string(seed);
  auto& t = c.train;
  t.loss.mode = MarginMode::Hierarchical;
  t.class_divergence = true;
  t.sample_consistency = true;
  switch (row) {
    case AblationRow::Baseline: t.loss.mode = MarginMode::Fixed; break;
    case AblationRow::ClassWise: t.sample_consistency = false; break;
    case AblationRow::SampleWise: t.class_divergence = false; break;
    case AblationRow::Full: break;
    case AblationRow::FullEuclidean: t.similarity = SimilarityKind::cosine(); break;
    case AblationRow::FullHyperbolic:
      t.similarity = SimilarityKind::neg_exp_poincare(base.train.similarity.curvature,
                                                      base.train.similarity.exp_form);
      break;
  }
  return c;
}

double AblationResult::mean_recall(AblationRow row, std::size_t k_index) const {
  const auto r = static_cast<std::size_t>(std::find(rows.begin(), rows.end(), row) - rows.begin());
  if (r >= rows.size() || recall[r].empty()) return 0.0;
  double sum = 0.0;
  for (const auto& per_seed : recall[r]) sum += per_seed[k_index];
  return sum / static_cast<double>(recall[r].size());
}

std::string AblationResult::csv() const {
  std::string out = "row,seed";
  for (int k : k_values) out += ",recall@" + std::to_string(k);
  out += "\n";
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t s = 0; s < seeds.size(); ++s) {
      out += std::string(ablation_row_name(rows[r])) + "," + std::to_string(seeds[s]);
      for (double v : recall[r][s]) out += "," + format_double("%.6f", v);
      out += "\n";
    }
    out += std::string(ablation_row_name(rows[r])) + ",mean";
    for (std::size_t k = 0; k < k_values.size(); ++k) out += "," + format_double("%.6f", mean_recall(rows[r], k));
    out += "\n";
  }
  return out;
}

AblationResult run_ablation(const ExperimentConfig& config) {
  AblationResult result;
  result.rows = ablation_rows();
  result.seeds = config.seeds.empty() ? std::vector<std::uint64_t>{config.seed()} : config.seeds;
  result.k_values = config.k_values;
  result.recall.assign(result.rows.size(), {});
  const bool base_hyperbolic = config.train.similarity.hyperbolic();
  for (std::size_t r = 0; r < result.rows.size(); ++r) {
    const auto row = result.rows[r];
    // The HG pair repeats the full row under one of the two geometries.
    const bool same_as_full = (row == AblationRow::FullEuclidean && !base_hyperbolic) ||
                              (row == AblationRow::FullHyperbolic &&
                               config.train.similarity.mode == SimilarityMode::NegExpPoincare);
    if (same_as_full) {
      result.recall[r] = result.recall[3];
      continue;
    }
    for (auto seed : result.seeds) {
      auto c = ablation_config(config, row, seed);
      c.eval_every_epoch = false;
      result.recall[r].push_back(run(c).final_recall.recalls);
    }
  }
  if (!config.output_dir.empty()) {
    std::filesystem::create_directories(config.output_dir);
    write_text(config.output_dir / "ablation.csv", result.csv());
    if (!config.source_text.empty()) write_text(config.output_dir / "config.json", config.source_text);
  }
  return result;
}

}  // namespace hsim
