#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "hsim/class_stats.hpp"
#include "hsim/dataio.hpp"
#include "hsim/error.hpp"
#include "hsim/eval.hpp"
#include "hsim/experiment.hpp"
#include "hsim/geometry.hpp"
#include "hsim/losses.hpp"
#include "hsim/margins.hpp"
#include "hsim/perturb.hpp"

namespace py = pybind11;
using namespace hsim;

namespace {

SimilarityKind make_kind(const std::string& name, double curvature, const std::string& exp_map) {
  return SimilarityKind::parse(name, curvature, parse_exp_map_form(exp_map));
}

EmbeddingBatch make_batch(const RowMatrix& z, std::vector<Label> labels, std::vector<Eigen::Index> source,
                          int epoch) {
  EmbeddingBatch b{z, std::move(labels), std::move(source), epoch};
  if (b.source.empty()) b.source.assign(b.labels.size(), kNoSource);
  return b;
}

py::tuple as_tuple(const LossResult& r) { return py::make_tuple(r.value, r.grads); }

}  // namespace

PYBIND11_MODULE(_hsim, m) {
  m.doc() = "Hierarchical-margin deep metric learning core";

  py::register_exception<Error>(m, "HsimError", PyExc_ValueError);

  // geometry
  m.def("cosine_sim", [](std::vector<double> u, std::vector<double> v) { return cosine_sim(u, v); });
  m.def("poincare_distance", [](std::vector<double> u, std::vector<double> v) { return poincare_distance(u, v); });
  m.def("exp_map", [](std::vector<double> x, double tau, const std::string& form) {
    return exp_map(x, tau, parse_exp_map_form(form));
  }, py::arg("x"), py::arg("tau"), py::arg("form") = "as_printed");
  m.def("embedding_similarity",
        [](std::vector<double> u, std::vector<double> v, const std::string& kind, double curvature,
           const std::string& form) { return embedding_similarity(u, v, make_kind(kind, curvature, form)); },
        py::arg("u"), py::arg("v"), py::arg("kind") = "cosine", py::arg("curvature") = 1.0,
        py::arg("exp_map") = "as_printed");
  m.def("pairwise_similarity",
        [](const RowMatrix& z, const std::string& kind, double curvature, const std::string& form) {
          return PairwiseSimilarity(z, make_kind(kind, curvature, form)).matrix();
        },
        py::arg("embeddings"), py::arg("kind") = "cosine", py::arg("curvature") = 1.0,
        py::arg("exp_map") = "as_printed");

  // class statistics and margins
  m.def("class_similarity_matrix",
        [](const RowMatrix& z, std::vector<Label> labels, int num_classes, const std::string& kind,
           double curvature) {
          return class_similarity_matrix(z, labels, num_classes, make_kind(kind, curvature, "as_printed")).entries;
        },
        py::arg("embeddings"), py::arg("labels"), py::arg("num_classes"), py::arg("kind") = "cosine",
        py::arg("curvature") = 1.0);
  m.def("rescale_to_unit_fifth", [](std::vector<double> v) { return rescale_to_unit_fifth(v).values; });
  m.def("min_intra_similarity",
        [](const RowMatrix& z, std::vector<Label> labels, Label class_id, const std::string& kind, double curvature) {
          return min_intra_similarity(z, labels, class_id, make_kind(kind, curvature, "as_printed"));
        },
        py::arg("embeddings"), py::arg("labels"), py::arg("class_id"), py::arg("kind") = "cosine",
        py::arg("curvature") = 1.0);

  py::class_<MarginTable>(m, "MarginTable")
      .def(py::init([](std::vector<double> m_pos, Eigen::MatrixXd m_neg, std::vector<double> m_aug, double gamma,
                       int epoch) {
             MarginTable t;
             t.m_pos = std::move(m_pos);
             t.m_neg = std::move(m_neg);
             t.m_aug = std::move(m_aug);
             t.gamma = gamma;
             t.epoch = epoch;
             return t;
           }),
           py::arg("m_pos"), py::arg("m_neg"), py::arg("m_aug"), py::arg("gamma") = 0.5, py::arg("epoch") = 0)
      .def_static("baseline", &MarginTable::baseline, py::arg("num_classes"), py::arg("gamma") = 0.5,
                  py::arg("epoch") = 0, py::arg("aug") = 1.0)
      .def_readonly("m_pos", &MarginTable::m_pos)
      .def_readonly("m_neg", &MarginTable::m_neg)
      .def_readonly("m_aug", &MarginTable::m_aug)
      .def_readonly("gamma", &MarginTable::gamma)
      .def_readonly("epoch", &MarginTable::epoch)
      .def("to_json", [](const MarginTable& t) { return margin_table_json(t); });

  m.def("build_margin_table",
        [](const Eigen::MatrixXd& stats, std::vector<double> consistency, double gamma, const std::string& inter,
           double epsilon, int epoch) {
          ClassSimilarityMatrix s{stats, std::vector<std::size_t>(static_cast<std::size_t>(stats.rows()), 2), epoch};
          return build_margin_table(s, consistency,
                                    MarginConfig{gamma, InterTransform::parse(inter, epsilon), ConsistencyMode::Min});
        },
        py::arg("class_similarity"), py::arg("consistency"), py::arg("gamma") = 0.5,
        py::arg("inter_transform") = "negation", py::arg("epsilon") = 1e-3, py::arg("epoch") = 0);

  // losses: each returns (value, gradient w.r.t. embeddings)
  m.def("triplet_loss",
        [](const RowMatrix& z, std::vector<Label> labels, double margin, const std::string& kind, double curvature) {
          return as_tuple(triplet_loss(make_batch(z, labels, {}, 0), margin, make_kind(kind, curvature, "as_printed")));
        },
        py::arg("embeddings"), py::arg("labels"), py::arg("margin") = 0.1, py::arg("kind") = "cosine",
        py::arg("curvature") = 1.0);
  m.def("lifted_loss",
        [](const RowMatrix& z, std::vector<Label> labels, double gamma, const std::string& kind, double curvature) {
          return as_tuple(lifted_loss(make_batch(z, labels, {}, 0), gamma, make_kind(kind, curvature, "as_printed")));
        },
        py::arg("embeddings"), py::arg("labels"), py::arg("gamma") = 0.5, py::arg("kind") = "cosine",
        py::arg("curvature") = 1.0);
  m.def("ms_loss",
        [](const RowMatrix& z, std::vector<Label> labels, double gamma, double pos_scale, double neg_scale,
           const std::string& kind, double curvature) {
          return as_tuple(ms_loss(make_batch(z, labels, {}, 0), gamma, pos_scale, neg_scale,
                                  make_kind(kind, curvature, "as_printed")));
        },
        py::arg("embeddings"), py::arg("labels"), py::arg("gamma") = 0.5, py::arg("pos_scale") = 2.0,
        py::arg("neg_scale") = 40.0, py::arg("kind") = "cosine", py::arg("curvature") = 1.0);
  m.def("ms_star_loss",
        [](const RowMatrix& z, std::vector<Label> labels, std::vector<Eigen::Index> source, const MarginTable& t,
           double aug_scale, double pos_scale, double neg_scale, const std::string& kind, double curvature) {
          return as_tuple(ms_star_loss(make_batch(z, labels, source, t.epoch), t,
                                       {aug_scale, pos_scale, neg_scale}, make_kind(kind, curvature, "as_printed")));
        },
        py::arg("embeddings"), py::arg("labels"), py::arg("source"), py::arg("margins"), py::arg("aug_scale") = 2.0,
        py::arg("pos_scale") = 2.0, py::arg("neg_scale") = 40.0, py::arg("kind") = "cosine",
        py::arg("curvature") = 1.0);

  // data, noise, evaluation
  m.def("inject_label_noise",
        [](std::vector<Label> labels, int num_classes, double ratio, std::uint64_t seed) {
          auto out = inject_label_noise(labels, num_classes, {ratio, seed});
          return py::make_tuple(out.labels, std::vector<bool>(out.flipped.begin(), out.flipped.end()));
        },
        py::arg("labels"), py::arg("num_classes"), py::arg("ratio"), py::arg("seed") = 0);
  m.def("generate_hierarchical",
        [](int superclasses, int subclasses, int samples, int dim, double super_scale, double sub_scale,
           double noise_scale, std::uint64_t seed) {
          const auto ds = generate_hierarchical(
              {superclasses, subclasses, samples, dim, super_scale, sub_scale, noise_scale}, seed);
          std::vector<bool> train;
          for (auto s : ds.split) train.push_back(s == Split::Train);
          return py::make_tuple(ds.features, ds.labels, train);
        },
        py::arg("superclasses") = 5, py::arg("subclasses_per_super") = 4, py::arg("samples_per_class") = 60,
        py::arg("dim") = 32, py::arg("super_scale") = 1.0, py::arg("sub_scale") = 0.5,
        py::arg("noise_scale") = 0.25, py::arg("seed") = 0);
  m.def("recall_at_k",
        [](const RowMatrix& z, std::vector<Label> labels, std::vector<int> ks, const std::string& kind,
           double curvature) {
          const auto r = recall_at_k(z, labels, ks, make_kind(kind, curvature, "as_printed"));
          py::dict out;
          for (std::size_t i = 0; i < r.k_values.size(); ++i) out[py::int_(r.k_values[i])] = r.recalls[i];
          return out;
        },
        py::arg("embeddings"), py::arg("labels"), py::arg("k_values"), py::arg("kind") = "cosine",
        py::arg("curvature") = 1.0);

  // experiments
  m.def("run_experiment",
        [](const std::string& config_json, const std::string& output_dir) {
          auto cfg = parse_experiment_config(config_json);
          if (!output_dir.empty()) cfg.output_dir = output_dir;
          RunResult r;
          {
            py::gil_scoped_release release;
            r = run(cfg);
          }
          std::string csv = metrics_csv_header(cfg.k_values);
          for (const auto& row : r.rows) csv += metrics_csv_row(row);
          py::dict out;
          for (std::size_t i = 0; i < cfg.k_values.size(); ++i) {
            out[py::int_(cfg.k_values[i])] = r.final_recall.recalls[i];
          }
          return py::make_tuple(csv, out);
        },
        py::arg("config_json"), py::arg("output_dir") = "",
        "Run one experiment from a JSON config; returns (metrics_csv, {k: recall}).");
}
