#include "hsim/dataio.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "hsim/error.hpp"
#include "hsim/rng.hpp"

namespace hsim {
namespace {

constexpr char kDatasetMagic[5] = {'H', 'S', 'F', 'D', '1'};

void put_u32(std::ostream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF),
                     static_cast<char>((v >> 16) & 0xFF), static_cast<char>((v >> 24) & 0xFF)};
  out.write(b, 4);
}

void put_f64(std::ostream& out, double x) {
  const auto v = std::bit_cast<std::uint64_t>(x);
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(b, 8);
}

class ByteReader {
 public:
  explicit ByteReader(std::istream& in) : in_(in) {}

  void read(char* dst, std::size_t n) {
    in_.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) {
      throw Error(ErrorKind::MalformedFile, "truncated file at byte offset " + std::to_string(offset_));
    }
    offset_ += n;
  }

  std::uint32_t u32() {
    unsigned char b[4];
    read(reinterpret_cast<char*>(b), 4);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
  }

  double f64() {
    unsigned char b[8];
    read(reinterpret_cast<char*>(b), 8);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
    return std::bit_cast<double>(v);
  }

  std::size_t offset() const { return offset_; }

 private:
  std::istream& in_;
  std::size_t offset_ = 0;
};

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    fields.push_back(line.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return fields;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.remove_suffix(1);
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  return s;
}

[[noreturn]] void malformed_line(std::size_t line, const std::string& what) {
  throw Error(ErrorKind::MalformedFile, "line " + std::to_string(line) + ": " + what);
}

FeatureDataset load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) malformed_line(1, "missing header");
  const auto header = split_commas(trim(line));
  if (header.size() < 2 || trim(header[0]) != "label") malformed_line(1, "header must start with 'label,f0'");
  for (std::size_t k = 1; k < header.size(); ++k) {
    if (trim(header[k]) != "f" + std::to_string(k - 1)) {
      malformed_line(1, "expected column f" + std::to_string(k - 1));
    }
  }
  const std::size_t d = header.size() - 1;
  std::vector<Label> labels;
  std::vector<double> values;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const auto body = trim(line);
    if (body.empty()) continue;
    const auto fields = split_commas(body);
    if (fields.size() != d + 1) {
      throw Error(ErrorKind::MalformedFile, "line " + std::to_string(line_no) + ": expected " +
                                                std::to_string(d + 1) + " fields, found " +
                                                std::to_string(fields.size()));
    }
    const auto lf = trim(fields[0]);
    Label label = 0;
    auto [lp, lec] = std::from_chars(lf.data(), lf.data() + lf.size(), label);
    if (lec != std::errc() || lp != lf.data() + lf.size() || label < 0) {
      malformed_line(line_no, "bad label '" + std::string(lf) + "'");
    }
    labels.push_back(label);
    for (std::size_t k = 1; k <= d; ++k) {
      const auto f = trim(fields[k]);
      double v = 0.0;
      auto [p, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
      if (ec != std::errc() || p != f.data() + f.size() || !std::isfinite(v)) {
        malformed_line(line_no, "bad value '" + std::string(f) + "' in column f" + std::to_string(k - 1));
      }
      values.push_back(v);
    }
  }
  FeatureDataset ds;
  ds.features = Eigen::Map<RowMatrix>(values.data(), static_cast<Eigen::Index>(labels.size()),
                                      static_cast<Eigen::Index>(d));
  ds.labels = std::move(labels);
  ds.num_classes = ds.labels.empty() ? 0 : *std::max_element(ds.labels.begin(), ds.labels.end()) + 1;
  return ds;
}

FeatureDataset load_binary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  ByteReader r(in);
  char magic[5];
  r.read(magic, 5);
  if (std::memcmp(magic, kDatasetMagic, 5) != 0) {
    throw Error(ErrorKind::UnknownMagic, path.string() + " is not an HSFD1 dataset");
  }
  const auto n = r.u32();
  const auto d = r.u32();
  const auto c = r.u32();
  if (d == 0 || c == 0 || c > static_cast<std::uint32_t>(INT32_MAX)) {
    throw Error(ErrorKind::InconsistentDimensions, "header has d = " + std::to_string(d) +
                                                      ", c = " + std::to_string(c));
  }
  FeatureDataset ds;
  ds.num_classes = static_cast<int>(c);
  ds.labels.resize(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    const auto off = r.offset();
    const auto l = r.u32();
    if (l >= c) {
      throw Error(ErrorKind::InconsistentDimensions, "label " + std::to_string(l) + " at byte offset " +
                                                         std::to_string(off) + " exceeds class count");
    }
    ds.labels[i] = static_cast<Label>(l);
  }
  ds.features.resize(n, d);
  for (std::uint32_t i = 0; i < n; ++i) {
    for (std::uint32_t k = 0; k < d; ++k) ds.features(i, k) = r.f64();
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw Error(ErrorKind::InconsistentDimensions, "trailing bytes after offset " + std::to_string(r.offset()));
  }
  return ds;
}

}  // namespace

std::vector<Eigen::Index> FeatureDataset::indices(Split which) const {
  std::vector<Eigen::Index> out;
  for (std::size_t i = 0; i < split.size(); ++i) {
    if (split[i] == which) out.push_back(static_cast<Eigen::Index>(i));
  }
  return out;
}

FeatureDataset FeatureDataset::subset(Split which) const {
  const auto idx = indices(which);
  FeatureDataset out;
  out.features.resize(static_cast<Eigen::Index>(idx.size()), dim());
  out.labels.reserve(idx.size());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    out.features.row(static_cast<Eigen::Index>(r)) = features.row(idx[r]);
    out.labels.push_back(labels[static_cast<std::size_t>(idx[r])]);
  }
  out.num_classes = num_classes;
  out.split.assign(idx.size(), which);
  out.provenance = provenance;
  return out;
}

void FeatureDataset::validate() const {
  if (labels.size() != static_cast<std::size_t>(size()) || split.size() != labels.size()) {
    throw Error(ErrorKind::InconsistentDimensions, "dataset columns have different lengths");
  }
  for (Label l : labels) {
    if (l < 0 || l >= num_classes) throw Error(ErrorKind::InconsistentDimensions, "label out of range");
  }
  if (!features.allFinite()) throw Error(ErrorKind::NonFinite, "dataset has non-finite features");
}

void HierarchySpec::validate() const {
  if (superclasses < 1 || subclasses_per_super < 1 || samples_per_class < 1 || dim < 1) {
    throw Error(ErrorKind::InvalidSpec, "hierarchy counts must be >= 1");
  }
  if (!(noise_scale > 0.0 && sub_scale > noise_scale && super_scale > sub_scale)) {
    throw Error(ErrorKind::InvalidSpec, "scales must satisfy super > sub > noise > 0");
  }
}

FeatureDataset generate_hierarchical(const HierarchySpec& spec, std::uint64_t seed) {
  spec.validate();
  RngStream rng(derive_seed(seed, 0x68696572ULL));
  const int c = spec.num_classes();
  const Eigen::Index d = spec.dim;
  FeatureDataset ds;
  ds.num_classes = c;
  ds.features.resize(static_cast<Eigen::Index>(c) * spec.samples_per_class, d);
  ds.labels.reserve(static_cast<std::size_t>(ds.features.rows()));
  Eigen::VectorXd super_center(d), sub_center(d);
  Eigen::Index row = 0;
  for (int s = 0; s < spec.superclasses; ++s) {
    for (Eigen::Index k = 0; k < d; ++k) super_center[k] = spec.super_scale * rng.normal();
    for (int j = 0; j < spec.subclasses_per_super; ++j) {
      for (Eigen::Index k = 0; k < d; ++k) sub_center[k] = super_center[k] + spec.sub_scale * rng.normal();
      const Label label = s * spec.subclasses_per_super + j;
      for (int m = 0; m < spec.samples_per_class; ++m, ++row) {
        for (Eigen::Index k = 0; k < d; ++k) {
          ds.features(row, k) = sub_center[k] + spec.noise_scale * rng.normal();
        }
        ds.labels.push_back(label);
      }
    }
  }
  ds.provenance = "synthetic";
  assign_stratified_split(ds, seed);
  return ds;
}

void assign_stratified_split(FeatureDataset& dataset, std::uint64_t seed) {
  RngStream rng(derive_seed(seed, 0x73706C6974ULL));
  dataset.split.assign(dataset.labels.size(), Split::Test);
  std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(dataset.num_classes));
  for (std::size_t i = 0; i < dataset.labels.size(); ++i) {
    members[static_cast<std::size_t>(dataset.labels[i])].push_back(i);
  }
  for (auto& m : members) {
    rng.shuffle(m.begin(), m.end());
    for (std::size_t r = 0; r < (m.size() + 1) / 2; ++r) dataset.split[m[r]] = Split::Train;
  }
}

FileFormat parse_file_format(const std::string& name) {
  if (name == "csv") return FileFormat::Csv;
  if (name == "binary" || name == "bin") return FileFormat::Binary;
  throw Error(ErrorKind::InvalidConfig, "unknown file format '" + name + "'");
}

FileFormat format_for_path(const std::filesystem::path& path) {
  return path.extension() == ".csv" ? FileFormat::Csv : FileFormat::Binary;
}

FeatureDataset load_features(const std::filesystem::path& path, FileFormat format) {
  FeatureDataset ds = format == FileFormat::Csv ? load_csv(path) : load_binary(path);
  ds.split.assign(ds.labels.size(), Split::Train);
  ds.provenance = path.string();
  if (!ds.features.allFinite()) throw Error(ErrorKind::MalformedFile, "non-finite feature value");
  return ds;
}

void save_features(const FeatureDataset& dataset, const std::filesystem::path& path,
                   FileFormat format) {
  if (dataset.labels.size() != static_cast<std::size_t>(dataset.size())) {
    throw Error(ErrorKind::InconsistentDimensions, "labels do not match features");
  }
  if (format == FileFormat::Csv) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
    out << "label";
    for (Eigen::Index k = 0; k < dataset.dim(); ++k) out << ",f" << k;
    out << '\n';
    char buf[32];
    for (Eigen::Index i = 0; i < dataset.size(); ++i) {
      out << dataset.labels[static_cast<std::size_t>(i)];
      for (Eigen::Index k = 0; k < dataset.dim(); ++k) {
        std::snprintf(buf, sizeof buf, "%.17g", dataset.features(i, k));
        out << ',' << buf;
      }
      out << '\n';
    }
    if (!out) throw Error(ErrorKind::Io, "write failed for " + path.string());
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out.write(kDatasetMagic, 5);
  put_u32(out, static_cast<std::uint32_t>(dataset.size()));
  put_u32(out, static_cast<std::uint32_t>(dataset.dim()));
  put_u32(out, static_cast<std::uint32_t>(dataset.num_classes));
  for (Label l : dataset.labels) put_u32(out, static_cast<std::uint32_t>(l));
  for (Eigen::Index i = 0; i < dataset.size(); ++i) {
    for (Eigen::Index k = 0; k < dataset.dim(); ++k) put_f64(out, dataset.features(i, k));
  }
  if (!out) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

}  // namespace hsim
