#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "hsim/rng.hpp"
#include "hsim/types.hpp"

namespace hsim {

// Feature-space stand-in for weak (jitter) and strong (jitter + masking)
// image augmentation.
struct AugmentPolicy {
  double weak_sigma = 0.0;        // per-coordinate Gaussian scale
  double strong_sigma = 0.0;
  double strong_mask_frac = 0.0;  // fraction of coordinates zeroed

  void validate() const;
};

struct NoiseSpec {
  double ratio = 0.0;
  std::uint64_t seed = 0;
};

struct NoisyLabels {
  std::vector<Label> labels;
  std::vector<bool> flipped;  // ground truth, for diagnostics only
};

enum class AugmentTag : std::uint64_t { Weak = 1, Strong = 2 };

// Stream for one sample's augmentation at one epoch; independent of how
// samples are grouped into batches.
RngStream augmentation_stream(std::uint64_t seed, std::size_t sample, int epoch, AugmentTag tag);

std::vector<double> weak_augment(std::span<const double> x, const AugmentPolicy& policy,
                                 RngStream& rng);

std::vector<double> strong_augment(std::span<const double> x, const AugmentPolicy& policy,
                                   RngStream& rng);

NoisyLabels inject_label_noise(std::span<const Label> labels, int num_classes,
                               const NoiseSpec& spec);

}  // namespace hsim
