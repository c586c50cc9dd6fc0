#pragma once

#include <cstdint>
#include <vector>

#include "hera/feature_store.hpp"

namespace hera::synth {

/// Planted-layer episode generator. At `planted_layer` foreground tokens are
/// N(mu_fg, noise^2 I) and background tokens N(mu_bg, noise^2 I) with
/// |mu_fg - mu_bg| = margin; every other layer is N(0, noise^2 I) unless
/// `neighbor_decay` > 0, in which case layer l carries margin * decay^|l - planted|.
struct SyntheticSpec {
  int grid_h = 14;
  int grid_w = 14;
  int dim = 32;
  int layers = 24;
  int planted_layer = 17;
  double margin = 4.0;
  double noise = 1.0;
  int episodes = 200;
  int shot = 5;
  int heads = 4;
  /// Layers with stored attention logits; empty means {planted_layer, layers - 1}.
  std::vector<int> exported_layers;
  int patch_size = 16;
  double neighbor_decay = 0.0;
  /// Probability that a foreground boundary token is replaced by the
  /// fg/bg midpoint plus noise (all layers).
  double boundary_corruption = 0.0;
  double color_noise = 0.05;
  /// Weight of the same-label term in the attention logits.
  double attention_affinity = 2.0;
  double attention_noise = 0.5;
  int mask_supersample = 4;

  void validate() const;
  std::vector<int> resolved_exported_layers() const;
};

/// Episode `index` of the stream defined by (spec, seed). Query dumps carry
/// their ground-truth mask for evaluation.
store::Episode gen_synthetic_episode(const SyntheticSpec& spec, std::uint64_t seed, int index);

std::vector<store::Episode> gen_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

/// Random filled ellipse rendered at supersampled resolution, area-averaged
/// onto the grid and binarized; always has at least one cell of each label.
BinaryMask random_ellipse_mask(const Grid& grid, int supersample, std::uint64_t seed);

} // namespace hera::synth
