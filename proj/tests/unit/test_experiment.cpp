#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "hsim/error.hpp"
#include "hsim/experiment.hpp"

using namespace hsim;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string invalid_message(const std::string& text) {
  try {
    parse_experiment_config(text);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::InvalidConfig);
    return e.what();
  }
  FAIL("expected InvalidConfig");
  return {};
}

const char* kSmall = R"({
  "run_id": "small",
  "seed": 3,
  "dataset": {"hierarchy": {"superclasses": 2, "subclasses_per_super": 2, "samples_per_class": 12, "dim": 6}},
  "noise": {"ratio": 0.2},
  "train": {"epochs": 2, "classes_per_batch": 2, "samples_per_class": 3, "hidden_dim": 8, "output_dim": 4},
  "eval": {"k_values": [1, 2]}
})";

}  // namespace

TEST_CASE("config parsing fills every section") {
  const auto c = parse_experiment_config(R"({
    "run_id": "x", "seed": 9, "seeds": [1, 2],
    "dataset": {"source": "synthetic", "seed": 4,
                "hierarchy": {"superclasses": 3, "subclasses_per_super": 2, "samples_per_class": 10,
                              "dim": 8, "super_scale": 2.0, "sub_scale": 1.0, "noise_scale": 0.1}},
    "noise": {"ratio": 0.3},
    "train": {"epochs": 4, "loss": "lifted", "margin_mode": "fixed", "gamma": 0.4,
              "similarity": "negexp_poincare", "curvature": 0.05, "exp_map": "standard",
              "inter_transform": "reciprocal", "reciprocal_epsilon": 0.01, "consistency": "max",
              "ms": {"aug_scale": 3.0}, "adam": {"lr": 0.01}},
    "eval": {"k_values": [1, 4], "every_epoch": false},
    "dump_margins": true
  })");
  CHECK(c.run_id == "x");
  CHECK(c.seed() == 9);
  CHECK(c.seeds == std::vector<std::uint64_t>{1, 2});
  CHECK(c.dataset.seed == std::optional<std::uint64_t>(4));
  CHECK(c.dataset.hierarchy.superclasses == 3);
  CHECK(c.dataset.hierarchy.noise_scale == 0.1);
  CHECK(c.noise_ratio == 0.3);
  CHECK(c.train.epochs == 4);
  CHECK(c.train.loss.family == LossFamily::Lifted);
  CHECK(c.train.loss.mode == MarginMode::Fixed);
  CHECK(c.train.loss.gamma == 0.4);
  CHECK(c.train.similarity.mode == SimilarityMode::NegExpPoincare);
  CHECK(c.train.similarity.curvature == 0.05);
  CHECK(c.train.similarity.exp_form == ExpMapForm::Standard);
  CHECK(c.train.inter.kind == InterTransform::Kind::Reciprocal);
  CHECK(c.train.inter.epsilon == 0.01);
  CHECK(c.train.consistency == ConsistencyMode::Max);
  CHECK(c.train.loss.ms.aug_scale == 3.0);
  CHECK(c.train.adam.lr == 0.01);
  CHECK(c.k_values == std::vector<int>{1, 4});
  CHECK_FALSE(c.eval_every_epoch);
  CHECK(c.dump_margins);
  // The resolved dump parses back to the same settings.
  const auto again = parse_experiment_config(experiment_config_json(c));
  CHECK(experiment_config_json(again) == experiment_config_json(c));
}

TEST_CASE("config errors name the field") {
  CHECK(invalid_message(R"({"train": {"epochz": 3}})").find("train.epochz") != std::string::npos);
  CHECK(invalid_message(R"({"train": {"epochs": "three"}})").find("train.epochs") != std::string::npos);
  CHECK(invalid_message(R"({"train": {"loss": "softmax"}})").find("train.loss") != std::string::npos);
  CHECK(invalid_message(R"({"noise": {"ratio": 1.5}})").find("noise.ratio") != std::string::npos);
  CHECK(invalid_message(R"({"eval": {"k_values": [0]}})").find("eval.k_values") != std::string::npos);
  CHECK(invalid_message(R"({"dataset": {"source": "file"}})").find("dataset.path") != std::string::npos);
  CHECK(invalid_message(R"({"seed": -1})").find("seed") != std::string::npos);
  CHECK(invalid_message("not json").find("JSON") != std::string::npos);
}

TEST_CASE("metrics csv schema") {
  CHECK(metrics_csv_header({1, 2, 4, 8}) ==
        "run_id,loss,margin_mode,sim_kind,noise_ratio,seed,epoch,mean_loss,recall@1,recall@2,recall@4,recall@8\n");
  MetricsRow r{"a", "ms", "fixed", "cosine", 0.3, 7, "final", 0.25, {0.5, 1.0}};
  CHECK(metrics_csv_row(r) == "a,ms,fixed,cosine,0.3,7,final,0.25,0.500000,1.000000\n");
}

TEST_CASE("noise touches only the training split") {
  auto c = parse_experiment_config(kSmall);
  const auto d = prepare_data(c);
  CHECK(d.train.size() == 24);
  CHECK(d.test.size() == 24);
  long flips = 0;
  for (std::size_t i = 0; i < d.flipped.size(); ++i) {
    flips += d.flipped[i];
    CHECK((d.train.labels[i] != d.clean_train_labels[i]) == static_cast<bool>(d.flipped[i]));
  }
  CHECK(flips == 5);  // round(0.2 * 24)
  // The test split labels match a noiseless preparation.
  c.noise_ratio = 0.0;
  CHECK(prepare_data(c).test.labels == d.test.labels);
}

TEST_CASE("zero epochs reports the untrained model") {
  auto c = parse_experiment_config(kSmall);
  c.train.epochs = 0;
  c.noise_ratio = 0.0;
  const auto r = run(c);
  CHECK(r.history.empty());
  REQUIRE(r.rows.size() == 1);
  CHECK(r.rows[0].epoch == "final");
  CHECK_FALSE(r.rows[0].mean_loss.has_value());
  const auto data = prepare_data(c);
  const auto expected = recall_at_k(forward(make_model(6, c.train), data.test.features), data.test.labels,
                                    c.k_values, c.train.similarity);
  CHECK(r.final_recall.recalls == expected.recalls);
}

TEST_CASE("run writes artifacts and is reproducible") {
  const auto root = fs::temp_directory_path() / "hsim_test_experiment";
  fs::remove_all(root);
  auto c = parse_experiment_config(kSmall);
  c.dump_margins = true;
  c.output_dir = root / "a";
  const auto ra = run(c);
  c.output_dir = root / "b";
  run(c);
  const auto csv = slurp(root / "a" / "metrics.csv");
  CHECK(csv == slurp(root / "b" / "metrics.csv"));
  CHECK(csv.rfind("run_id,loss,margin_mode,sim_kind,noise_ratio,seed,epoch,mean_loss,recall@1,recall@2\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);  // header, 2 epochs, final
  CHECK(slurp(root / "a" / "config.json") == kSmall);
  CHECK(fs::exists(root / "a" / "model.hsim"));
  CHECK(fs::exists(root / "a" / "margins_epoch1.json"));
  CHECK(fs::exists(root / "a" / "margins_epoch2.json"));
  const auto report = nlohmann::json::parse(slurp(root / "a" / "report.json"));
  CHECK(report["history"].size() == 2);
  CHECK(report["final_recall"]["recall@1"].get<double>() == ra.final_recall.recalls[0]);
  CHECK(report.contains("wall_clock_seconds"));
  const auto model = load_checkpoint(root / "a" / "model.hsim");
  CHECK(model.layers()[0].weight == ra.model.layers()[0].weight);
  fs::remove_all(root);
}

TEST_CASE("ablation rows coincide without training") {
  auto c = parse_experiment_config(kSmall);
  c.train.epochs = 0;
  c.seeds = {1, 2};
  const auto a = run_ablation(c);
  REQUIRE(a.rows.size() == 6);
  // Untrained cosine rows share model and data; the hyperbolic row differs in geometry.
  for (std::size_t r = 1; r < 5; ++r) CHECK(a.recall[r] == a.recall[0]);
  CHECK(a.csv().rfind("row,seed,recall@1,recall@2\nbaseline,1,", 0) == 0);
}

TEST_CASE("ablation row configurations") {
  auto c = parse_experiment_config(kSmall);
  const auto base = ablation_config(c, AblationRow::Baseline, 5);
  const auto cw = ablation_config(c, AblationRow::ClassWise, 5);
  const auto sw = ablation_config(c, AblationRow::SampleWise, 5);
  const auto full = ablation_config(c, AblationRow::Full, 5);
  CHECK(base.train.loss.mode == MarginMode::Fixed);
  CHECK(cw.train.hierarchical());
  CHECK_FALSE(cw.train.uses_augmentation());
  CHECK(cw.train.class_divergence);
  CHECK(sw.train.uses_augmentation());
  CHECK_FALSE(sw.train.class_divergence);
  CHECK(full.train.uses_augmentation());
  CHECK(full.train.class_divergence);
  CHECK(full.seed() == 5);
  CHECK(ablation_config(c, AblationRow::FullHyperbolic, 5).train.similarity.hyperbolic());
  CHECK_FALSE(ablation_config(c, AblationRow::FullEuclidean, 5).train.similarity.hyperbolic());
}
