#include "hsim/embedder.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "hsim/class_stats.hpp"
#include "hsim/error.hpp"
#include "hsim/rng.hpp"

namespace hsim {

MlpModel::MlpModel(std::span<const int> dims, std::uint64_t seed) {
  if (dims.size() < 2) throw Error(ErrorKind::InvalidConfig, "model needs at least two dims");
  RngStream rng(derive_seed(seed, 0x6D6F64656CULL));
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const int in = dims[l];
    const int out = dims[l + 1];
    if (in < 1 || out < 1) throw Error(ErrorKind::InvalidConfig, "layer dims must be positive");
    const double bound = std::sqrt(6.0 / in);
    DenseLayer layer{Eigen::MatrixXd(out, in), Eigen::VectorXd::Zero(out)};
    for (int r = 0; r < out; ++r) {
      for (int c = 0; c < in; ++c) layer.weight(r, c) = rng.uniform(-bound, bound);
    }
    layers_.push_back(std::move(layer));
  }
}

MlpModel::MlpModel(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) throw Error(ErrorKind::InvalidConfig, "model has no layers");
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    if (layers_[l].bias.size() != layers_[l].weight.rows() ||
        (l > 0 && layers_[l].weight.cols() != layers_[l - 1].weight.rows())) {
      throw Error(ErrorKind::ShapeMismatch, "layer " + std::to_string(l) + " is not contiguous");
    }
  }
}

MlpModel MlpModel::zeros(std::span<const int> dims) {
  std::vector<DenseLayer> layers;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    layers.push_back({Eigen::MatrixXd::Zero(dims[l + 1], dims[l]), Eigen::VectorXd::Zero(dims[l + 1])});
  }
  return MlpModel(std::move(layers));
}

int MlpModel::input_dim() const { return static_cast<int>(layers_.front().weight.cols()); }
int MlpModel::output_dim() const { return static_cast<int>(layers_.back().weight.rows()); }

std::vector<int> MlpModel::dims() const {
  std::vector<int> d{input_dim()};
  for (const auto& l : layers_) d.push_back(static_cast<int>(l.weight.rows()));
  return d;
}

std::size_t MlpModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

RowMatrix forward(const MlpModel& model, const RowMatrix& features, ForwardCache* cache) {
  if (features.cols() != model.input_dim()) {
    throw Error(ErrorKind::DimensionMismatch, "features have " + std::to_string(features.cols()) +
                                                  " columns, model expects " +
                                                  std::to_string(model.input_dim()));
  }
  if (cache) {
    cache->inputs.clear();
    cache->pre.clear();
  }
  RowMatrix h = features;
  const auto& layers = model.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    RowMatrix z = h * layers[l].weight.transpose();
    z.rowwise() += layers[l].bias.transpose();
    if (cache) {
      cache->inputs.push_back(h);
      cache->pre.push_back(z);
    }
    h = l + 1 < layers.size() ? RowMatrix(z.cwiseMax(0.0)) : std::move(z);
  }
  return h;
}

ModelGrads backward(const MlpModel& model, const ForwardCache& cache, const RowMatrix& upstream) {
  const auto& layers = model.layers();
  if (cache.inputs.size() != layers.size() || cache.pre.size() != layers.size()) {
    throw Error(ErrorKind::MissingCache, "backward called without a matching forward cache");
  }
  if (upstream.rows() != cache.pre.back().rows() || upstream.cols() != model.output_dim()) {
    throw Error(ErrorKind::ShapeMismatch, "upstream gradient shape does not match the forward batch");
  }
  ModelGrads grads(layers.size());
  RowMatrix delta = upstream;
  for (std::size_t l = layers.size(); l-- > 0;) {
    grads[l].weight = delta.transpose() * cache.inputs[l];
    grads[l].bias = delta.colwise().sum().transpose();
    if (l == 0) break;
    RowMatrix prev = delta * layers[l].weight;
    const auto& pre = cache.pre[l - 1];
    for (Eigen::Index i = 0; i < prev.size(); ++i) {
      if (!(pre.data()[i] > 0.0)) prev.data()[i] = 0.0;
    }
    delta = std::move(prev);
  }
  return grads;
}

AdamState::AdamState(const MlpModel& model, const AdamConfig& cfg) : config(cfg) {
  for (const auto& l : model.layers()) {
    m.push_back({Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()), Eigen::VectorXd::Zero(l.bias.size())});
  }
  v = m;
}

namespace {

template <class Param>
void adam_update(Param& p, const Param& g, Param& m, Param& v, const AdamConfig& c, double bc1,
                 double bc2) {
  if (c.weight_decay != 0.0) p *= (1.0 - c.lr * c.weight_decay);
  m = c.beta1 * m + (1.0 - c.beta1) * g;
  v = c.beta2 * v + (1.0 - c.beta2) * g.cwiseProduct(g);
  p.array() -= c.lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + c.eps);
}

}  // namespace

void adam_step(AdamState& state, MlpModel& model, const ModelGrads& grads) {
  auto& layers = model.layers();
  if (grads.size() != layers.size() || state.m.size() != layers.size()) {
    throw Error(ErrorKind::ShapeMismatch, "gradient/optimizer layer count differs from the model");
  }
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (grads[l].weight.rows() != layers[l].weight.rows() || grads[l].weight.cols() != layers[l].weight.cols() ||
        grads[l].bias.size() != layers[l].bias.size()) {
      throw Error(ErrorKind::ShapeMismatch, "gradient shape differs at layer " + std::to_string(l));
    }
  }
  ++state.step;
  const auto& c = state.config;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  for (std::size_t l = 0; l < layers.size(); ++l) {
    adam_update(layers[l].weight, grads[l].weight, state.m[l].weight, state.v[l].weight, c, bc1, bc2);
    adam_update(layers[l].bias, grads[l].bias, state.m[l].bias, state.v[l].bias, c, bc1, bc2);
  }
}

AugmentPolicy RelativeAugment::resolve(double mean_norm, Eigen::Index dim) const {
  const double unit = mean_norm / std::sqrt(static_cast<double>(dim));
  AugmentPolicy p{weak * unit, strong * unit, mask_frac};
  p.validate();
  return p;
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorKind::InvalidConfig, what); };
  if (epochs < 0) fail("epochs must be >= 0");
  if (classes_per_batch < 2) fail("classes_per_batch must be >= 2");
  if (samples_per_class < 2) fail("samples_per_class must be >= 2");
  if (hidden_dim < 1 || output_dim < 1) fail("model dims must be positive");
  if (!(loss.gamma > 0.0)) fail("gamma must be positive");
  loss.ms.validate();
  if (!(adam.lr >= 0.0) || !(adam.weight_decay >= 0.0)) fail("lr and weight_decay must be >= 0");
  if (stats_cap_per_class < 1) fail("stats_cap_per_class must be >= 1");
  if (similarity.hyperbolic() && !(similarity.curvature > 0.0)) fail("curvature must be positive");
}

std::vector<std::vector<std::size_t>> sample_batches(std::span<const Label> labels, int num_classes,
                                                     const TrainConfig& config, int epoch) {
  std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(num_classes));
  for (std::size_t i = 0; i < labels.size(); ++i) members[static_cast<std::size_t>(labels[i])].push_back(i);
  const auto spc = static_cast<std::size_t>(config.samples_per_class);
  const auto cpb = static_cast<std::size_t>(config.classes_per_batch);
  std::vector<std::size_t> eligible;
  for (std::size_t a = 0; a < members.size(); ++a) {
    if (members[a].size() >= spc) eligible.push_back(a);
  }
  if (eligible.size() < cpb) {
    throw Error(ErrorKind::UnsatisfiableBatchSpec,
                std::to_string(eligible.size()) + " classes have >= " + std::to_string(spc) +
                    " samples, " + std::to_string(cpb) + " needed per batch");
  }
  RngStream rng(derive_seed(config.seed, 0x6261746368ULL, static_cast<std::uint64_t>(epoch)));
  for (auto& m : members) rng.shuffle(m.begin(), m.end());
  std::vector<std::size_t> cursor(members.size(), 0);
  const std::size_t batch_size = cpb * spc;
  const std::size_t count = std::max<std::size_t>(1, labels.size() / batch_size);
  std::vector<std::vector<std::size_t>> batches(count);
  for (auto& batch : batches) {
    for (std::size_t t = 0; t < cpb; ++t) {
      std::swap(eligible[t], eligible[t + rng.below(eligible.size() - t)]);
      const auto a = eligible[t];
      auto& m = members[a];
      if (cursor[a] + spc > m.size()) {
        rng.shuffle(m.begin(), m.end());
        cursor[a] = 0;
      }
      batch.insert(batch.end(), m.begin() + static_cast<std::ptrdiff_t>(cursor[a]),
                   m.begin() + static_cast<std::ptrdiff_t>(cursor[a] + spc));
      cursor[a] += spc;
    }
  }
  return batches;
}

namespace {

double mean_row_norm(const RowMatrix& x) {
  if (x.rows() == 0) return 0.0;
  return x.rowwise().norm().mean();
}

}  // namespace

EpochStats train_epoch(MlpModel& model, AdamState& adam, const TrainingSet& data,
                       const MarginTable& margins, const TrainConfig& config, int epoch) {
  if (config.hierarchical() && margins.epoch != epoch) {
    throw Error(ErrorKind::StaleMarginTable, "margins built for epoch " + std::to_string(margins.epoch) +
                                                 ", training epoch " + std::to_string(epoch));
  }
  const auto batches = sample_batches(data.labels, data.num_classes, config, epoch);
  const bool augment = config.uses_augmentation();
  const AugmentPolicy policy = augment ? config.augment.resolve(mean_row_norm(data.features), data.features.cols())
                                       : AugmentPolicy{};
  const Eigen::Index d = data.features.cols();
  EpochStats stats;
  double total = 0.0;
  ForwardCache cache;
  for (const auto& idx : batches) {
    const auto b = static_cast<Eigen::Index>(idx.size());
    const Eigen::Index rows = augment ? 3 * b : b;
    RowMatrix x(rows, d);
    EmbeddingBatch batch;
    batch.epoch = epoch;
    batch.labels.resize(static_cast<std::size_t>(rows));
    batch.source.assign(static_cast<std::size_t>(rows), kNoSource);
    for (Eigen::Index r = 0; r < b; ++r) {
      const auto i = idx[static_cast<std::size_t>(r)];
      x.row(r) = data.features.row(static_cast<Eigen::Index>(i));
      batch.labels[static_cast<std::size_t>(r)] = data.labels[i];
      if (!augment) continue;
      const auto xi = row_span(data.features, static_cast<Eigen::Index>(i));
      auto weak_rng = augmentation_stream(config.seed, i, epoch, AugmentTag::Weak);
      auto strong_rng = augmentation_stream(config.seed, i, epoch, AugmentTag::Strong);
      const auto w = weak_augment(xi, policy, weak_rng);
      const auto s = strong_augment(xi, policy, strong_rng);
      std::copy(w.begin(), w.end(), row_span(x, b + r).begin());
      std::copy(s.begin(), s.end(), row_span(x, 2 * b + r).begin());
      for (auto row : {b + r, 2 * b + r}) {
        batch.labels[static_cast<std::size_t>(row)] = data.labels[i];
        batch.source[static_cast<std::size_t>(row)] = r;
      }
    }
    batch.embeddings = forward(model, x, &cache);
    const auto result = evaluate_loss(config.loss, batch, margins, config.similarity);
    const auto grads = backward(model, cache, result.grads);
    adam_step(adam, model, grads);
    total += result.value;
    ++stats.batches;
  }
  stats.mean_loss = stats.batches ? total / static_cast<double>(stats.batches) : 0.0;
  return stats;
}

MarginTable compute_epoch_margins(const MlpModel& model, const TrainingSet& data,
                                  const TrainConfig& config, int epoch) {
  // Per-class cap: the first `stats_cap_per_class` members in index order.
  std::vector<std::size_t> taken(static_cast<std::size_t>(data.num_classes), 0);
  std::vector<Eigen::Index> rows;
  std::vector<Label> labels;
  for (std::size_t i = 0; i < data.labels.size(); ++i) {
    auto& t = taken[static_cast<std::size_t>(data.labels[i])];
    if (t >= config.stats_cap_per_class) continue;
    ++t;
    rows.push_back(static_cast<Eigen::Index>(i));
    labels.push_back(data.labels[i]);
  }
  RowMatrix x(static_cast<Eigen::Index>(rows.size()), data.features.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) x.row(static_cast<Eigen::Index>(r)) = data.features.row(rows[r]);
  const RowMatrix z = forward(model, x);
  const PairwiseSimilarity sims(z, config.similarity);
  const auto stats = class_similarity_matrix(sims, labels, data.num_classes, epoch);
  const auto which = config.consistency == ConsistencyMode::Min ? IntraExtreme::Min : IntraExtreme::Max;
  const auto consistency = intra_similarity_extremes(sims, labels, data.num_classes, which);
  auto table = build_margin_table(stats, consistency, {config.loss.gamma, config.inter, config.consistency});
  table.validate(config.similarity);
  return config.class_divergence ? table : table.without_class_divergence();
}

MarginSummary summarize(const MarginTable& table) {
  MarginSummary s;
  const int c = table.num_classes();
  if (c == 0) return s;
  s.mean_pos = std::accumulate(table.m_pos.begin(), table.m_pos.end(), 0.0) / c;
  s.mean_aug = std::accumulate(table.m_aug.begin(), table.m_aug.end(), 0.0) / c;
  if (c > 1) {
    double sum = 0.0;
    for (int a = 0; a < c; ++a) {
      for (int b = a + 1; b < c; ++b) sum += table.m_neg(a, b);
    }
    s.mean_neg = sum / (c * (c - 1) / 2.0);
  } else {
    s.mean_neg = table.gamma;
  }
  return s;
}

std::vector<EpochRecord> fit(MlpModel& model, const TrainingSet& data, const TrainConfig& config,
                             const FitObserver& observer) {
  config.validate();
  if (data.labels.size() != static_cast<std::size_t>(data.features.rows())) {
    throw Error(ErrorKind::DimensionMismatch, "training labels do not match features");
  }
  AdamState adam(model, config.adam);
  std::vector<EpochRecord> history;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    EpochRecord record;
    record.epoch = epoch;
    MarginTable margins;
    if (config.hierarchical()) {
      margins = compute_epoch_margins(model, data, config, epoch);
      record.margins = summarize(margins);
      if (observer.on_margins) observer.on_margins(margins);
    } else {
      margins = MarginTable::baseline(data.num_classes, config.loss.gamma, epoch);
    }
    record.stats = train_epoch(model, adam, data, margins, config, epoch);
    if (observer.on_epoch) observer.on_epoch(record, model);
    history.push_back(record);
  }
  return history;
}

MlpModel make_model(int input_dim, const TrainConfig& config) {
  const std::vector<int> dims{input_dim, config.hidden_dim, config.output_dim};
  return MlpModel(dims, config.seed);
}

namespace {

constexpr char kCheckpointMagic[5] = {'H', 'S', 'I', 'M', '1'};

void write_u32(std::ostream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF),
                     static_cast<char>((v >> 16) & 0xFF), static_cast<char>((v >> 24) & 0xFF)};
  out.write(b, 4);
}

void write_f64(std::ostream& out, double x) {
  const auto v = std::bit_cast<std::uint64_t>(x);
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(b, 8);
}

std::uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw Error(ErrorKind::MalformedFile, "truncated checkpoint");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

double read_f64(std::istream& in) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) throw Error(ErrorKind::MalformedFile, "truncated checkpoint");
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return std::bit_cast<double>(v);
}

}  // namespace

// Layout: "HSIM1", u32 input_dim, u32 output_dim, u32 layer_count,
// u32 dims[layer_count + 1], then per layer the row-major weight (out x in)
// followed by the bias, all f64 little-endian.
void save_checkpoint(const MlpModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out.write(kCheckpointMagic, 5);
  write_u32(out, static_cast<std::uint32_t>(model.input_dim()));
  write_u32(out, static_cast<std::uint32_t>(model.output_dim()));
  write_u32(out, static_cast<std::uint32_t>(model.layers().size()));
  for (int d : model.dims()) write_u32(out, static_cast<std::uint32_t>(d));
  for (const auto& l : model.layers()) {
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) write_f64(out, l.weight(r, c));
    }
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) write_f64(out, l.bias[r]);
  }
  if (!out) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

MlpModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  char magic[5];
  if (!in.read(magic, 5) || std::memcmp(magic, kCheckpointMagic, 5) != 0) {
    throw Error(ErrorKind::UnknownMagic, path.string() + " is not an HSIM1 checkpoint");
  }
  const auto input_dim = read_u32(in);
  const auto output_dim = read_u32(in);
  const auto layer_count = read_u32(in);
  if (layer_count == 0 || layer_count > 1024) {
    throw Error(ErrorKind::InconsistentDimensions, "bad layer count " + std::to_string(layer_count));
  }
  std::vector<std::uint32_t> dims(layer_count + 1);
  for (auto& d : dims) {
    d = read_u32(in);
    if (d == 0 || d > (1u << 20)) throw Error(ErrorKind::InconsistentDimensions, "bad layer width");
  }
  if (dims.front() != input_dim || dims.back() != output_dim) {
    throw Error(ErrorKind::InconsistentDimensions, "header dims disagree with layer dims");
  }
  std::vector<DenseLayer> layers;
  for (std::uint32_t l = 0; l < layer_count; ++l) {
    DenseLayer layer{Eigen::MatrixXd(dims[l + 1], dims[l]), Eigen::VectorXd(dims[l + 1])};
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) layer.weight(r, c) = read_f64(in);
    }
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) layer.bias[r] = read_f64(in);
    layers.push_back(std::move(layer));
  }
  return MlpModel(std::move(layers));
}

}  // namespace hsim
