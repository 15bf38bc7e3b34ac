// hsim command-line harness: generate data, train, evaluate, ablate.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "hsim/error.hpp"
#include "hsim/experiment.hpp"

namespace fs = std::filesystem;
using namespace hsim;

namespace {

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool out_required) {
  cmd->add_option("--config", f.config, "experiment configuration (JSON)")->required()->check(CLI::ExistingFile);
  cmd->add_option("--seed", f.seed, "override the configured seed");
  auto* out = cmd->add_option("--out", f.out, "output directory");
  if (out_required) out->required();
}

ExperimentConfig load(const CommonFlags& f) {
  auto cfg = load_experiment_config(f.config);
  if (f.seed) {
    cfg.set_seed(*f.seed);
    cfg.seeds = {*f.seed};
  }
  if (!f.out.empty()) cfg.output_dir = f.out;
  return cfg;
}

void print_recall(const std::vector<int>& ks, const std::vector<double>& recalls) {
  for (std::size_t i = 0; i < ks.size(); ++i) {
    std::printf("%sRecall@%d=%.4f", i ? " " : "", ks[i], recalls[i]);
  }
  std::printf("\n");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical-margin metric learning experiments"};
  app.require_subcommand(1);

  CommonFlags gen_flags;
  std::string gen_format = "binary";
  auto* gen = app.add_subcommand("generate", "write the configured synthetic dataset");
  add_common(gen, gen_flags, true);
  gen->add_option("--format", gen_format, "binary or csv")->check(CLI::IsMember({"binary", "csv"}));

  CommonFlags train_flags;
  bool dump_margins = false;
  auto* train = app.add_subcommand("train", "train, evaluate and write metrics");
  add_common(train, train_flags, false);
  train->add_flag("--dump-margins", dump_margins, "write margins_epoch<N>.json each epoch");

  CommonFlags eval_flags;
  std::string checkpoint;
  int neighbors = 0;
  std::vector<long long> queries;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on the clean test split");
  add_common(eval, eval_flags, false);
  eval->add_option("--checkpoint", checkpoint, "model.hsim written by train")->required()->check(CLI::ExistingFile);
  eval->add_option("--neighbors", neighbors, "print this many neighbors per query");
  eval->add_option("--query", queries, "test-split query indices for --neighbors (default: all)");

  CommonFlags ablate_flags;
  auto* ablate = app.add_subcommand("ablate", "run the component ablation grid");
  add_common(ablate, ablate_flags, false);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      auto cfg = load(gen_flags);
      const auto format = parse_file_format(gen_format);
      const auto ds = generate_hierarchical(cfg.dataset.hierarchy, cfg.dataset.seed.value_or(cfg.seed()));
      fs::create_directories(gen_flags.out);
      const fs::path path = fs::path(gen_flags.out) / (format == FileFormat::Csv ? "dataset.csv" : "dataset.bin");
      save_features(ds, path, format);
      std::printf("wrote %s (%lld samples, %lld dims, %d classes)\n", path.string().c_str(),
                  static_cast<long long>(ds.size()), static_cast<long long>(ds.dim()), ds.num_classes);
    } else if (*train) {
      auto cfg = load(train_flags);
      cfg.dump_margins = cfg.dump_margins || dump_margins;
      const auto result = run(cfg);
      if (cfg.output_dir.empty()) {
        std::cout << metrics_csv_header(cfg.k_values);
        for (const auto& r : result.rows) std::cout << metrics_csv_row(r);
      } else {
        std::printf("%s: %zu epochs, %.1f s, results in %s\n", cfg.run_id.c_str(), result.history.size(),
                    result.wall_clock_seconds, cfg.output_dir.string().c_str());
      }
      print_recall(cfg.k_values, result.final_recall.recalls);
    } else if (*eval) {
      const auto cfg = load(eval_flags);
      const auto model = load_checkpoint(checkpoint);
      const auto data = prepare_data(cfg);
      const RowMatrix z = forward(model, data.test.features);
      const auto report = recall_at_k(z, data.test.labels, cfg.k_values, cfg.train.similarity);
      print_recall(report.k_values, report.recalls);
      if (neighbors > 0) {
        std::vector<Eigen::Index> q(queries.begin(), queries.end());
        if (q.empty()) {
          for (Eigen::Index i = 0; i < data.test.size(); ++i) q.push_back(i);
        }
        std::cout << neighbor_dump(z, data.test.labels, q, neighbors, cfg.train.similarity);
      }
    } else if (*ablate) {
      const auto cfg = load(ablate_flags);
      const auto result = run_ablation(cfg);
      std::cout << result.csv();
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "hsim: error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "hsim: %s\n", e.what());
    return 1;
  }
  return 0;
}
