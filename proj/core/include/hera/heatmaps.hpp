#pragma once

#include <filesystem>
#include <vector>

#include "hera/feature_store.hpp"
#include "hera/ssp_head.hpp"

namespace hera::heatmap {

/// sigmoid(kappa * (cos(F, P_fg) - cos(F, P_bg))) on the query at `layer`,
/// with prototypes pooled over the supports at the same layer.
Vector layer_probability(const store::Episode& episode, int layer, const ssp::SspConfig& ssp);

/// round(255 p) per cell.
std::vector<unsigned char> quantize(const Vector& p);

/// Binary portable graymap (P5).
std::vector<unsigned char> encode_pgm(const Grid& grid, const std::vector<unsigned char>& pixels);

/// Writes layer_XX.pgm and layer_XX.csv for every backbone layer and
/// returns the PGM paths in layer order.
std::vector<std::filesystem::path> dump_layer_heatmaps(const store::Episode& episode,
                                                       const std::filesystem::path& out_dir,
                                                       const ssp::SspConfig& ssp);

} // namespace hera::heatmap
