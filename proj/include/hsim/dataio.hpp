#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hsim/types.hpp"

namespace hsim {

enum class Split : std::uint8_t { Train, Test };

struct FeatureDataset {
  RowMatrix features;         // n x d
  std::vector<Label> labels;  // in [0, num_classes)
  int num_classes = 0;
  std::vector<Split> split;   // per sample
  std::string provenance;

  Eigen::Index size() const { return features.rows(); }
  Eigen::Index dim() const { return features.cols(); }
  std::vector<Eigen::Index> indices(Split which) const;

  // Rows of one split, in index order. The result is marked entirely as
  // `which`.
  FeatureDataset subset(Split which) const;

  void validate() const;
};

// Two-level class hierarchy: superclass centers, subclass centers around
// them, samples around subclass centers.
struct HierarchySpec {
  int superclasses = 5;
  int subclasses_per_super = 4;
  int samples_per_class = 60;
  int dim = 32;
  double super_scale = 1.0;
  double sub_scale = 0.5;
  double noise_scale = 0.25;

  int num_classes() const { return superclasses * subclasses_per_super; }
  void validate() const;
};

FeatureDataset generate_hierarchical(const HierarchySpec& spec, std::uint64_t seed);

// Per class: a shuffled half (rounded up) goes to train, the rest to test.
void assign_stratified_split(FeatureDataset& dataset, std::uint64_t seed);

enum class FileFormat { Csv, Binary };

FileFormat parse_file_format(const std::string& name);
// ".csv" selects CSV, anything else the binary format.
FileFormat format_for_path(const std::filesystem::path& path);

// Loaded datasets have every sample in the training split.
FeatureDataset load_features(const std::filesystem::path& path, FileFormat format);
void save_features(const FeatureDataset& dataset, const std::filesystem::path& path,
                   FileFormat format);

}  // namespace hsim
