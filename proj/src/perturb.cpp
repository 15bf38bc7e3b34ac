#include "hsim/perturb.hpp"

#include <cmath>
#include <numeric>

#include "hsim/error.hpp"

namespace hsim {

void AugmentPolicy::validate() const {
  if (!(weak_sigma >= 0.0) || !(strong_sigma >= weak_sigma)) {
    throw Error(ErrorKind::InvalidConfig, "augmentation requires 0 <= weak_sigma <= strong_sigma");
  }
  if (!(strong_mask_frac >= 0.0 && strong_mask_frac < 1.0)) {
    throw Error(ErrorKind::InvalidConfig, "strong_mask_frac must lie in [0, 1)");
  }
}

RngStream augmentation_stream(std::uint64_t seed, std::size_t sample, int epoch, AugmentTag tag) {
  return RngStream(derive_seed(seed, static_cast<std::uint64_t>(sample),
                               static_cast<std::uint64_t>(epoch), static_cast<std::uint64_t>(tag)));
}

std::vector<double> weak_augment(std::span<const double> x, const AugmentPolicy& policy,
                                 RngStream& rng) {
  std::vector<double> out(x.begin(), x.end());
  if (policy.weak_sigma == 0.0) return out;
  for (double& c : out) c += policy.weak_sigma * rng.normal();
  return out;
}

std::vector<double> strong_augment(std::span<const double> x, const AugmentPolicy& policy,
                                   RngStream& rng) {
  std::vector<double> out(x.begin(), x.end());
  if (policy.strong_sigma != 0.0) {
    for (double& c : out) c += policy.strong_sigma * rng.normal();
  }
  const auto masked =
      static_cast<std::size_t>(std::floor(policy.strong_mask_frac * static_cast<double>(out.size())));
  if (masked > 0) {
    std::vector<std::size_t> idx(out.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    // Partial Fisher-Yates: the first `masked` slots are a uniform subset.
    for (std::size_t i = 0; i < masked; ++i) {
      const auto j = i + rng.below(idx.size() - i);
      std::swap(idx[i], idx[j]);
      out[idx[i]] = 0.0;
    }
  }
  return out;
}

NoisyLabels inject_label_noise(std::span<const Label> labels, int num_classes,
                               const NoiseSpec& spec) {
  if (!(spec.ratio >= 0.0 && spec.ratio <= 1.0)) {
    throw Error(ErrorKind::InvalidConfig, "noise ratio must lie in [0, 1]");
  }
  NoisyLabels out{std::vector<Label>(labels.begin(), labels.end()),
                  std::vector<bool>(labels.size(), false)};
  const auto n = labels.size();
  const auto flips = static_cast<std::size_t>(std::llround(spec.ratio * static_cast<double>(n)));
  if (flips == 0) return out;
  if (num_classes < 2) throw Error(ErrorKind::TooFewClasses, "label noise needs at least 2 classes");
  for (Label l : labels) {
    if (l < 0 || l >= num_classes) throw Error(ErrorKind::IndexOutOfRange, "label out of range");
  }
  RngStream rng(derive_seed(spec.seed, 0x6E6F697365ULL));
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < flips; ++i) {
    const auto j = i + rng.below(n - i);
    std::swap(idx[i], idx[j]);
    const auto target = idx[i];
    const auto r = static_cast<Label>(rng.below(static_cast<std::uint64_t>(num_classes - 1)));
    const Label old = labels[target];
    out.labels[target] = r < old ? r : r + 1;
    out.flipped[target] = true;
  }
  return out;
}

}  // namespace hsim
