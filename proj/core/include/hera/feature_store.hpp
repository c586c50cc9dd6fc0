#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hera/types.hpp"

namespace hera::store {

/// Magic bytes opening every feature container file.
inline constexpr char kMagic[4] = {'H', 'F', 'D', '1'};

struct DumpMeta {
  Grid grid;
  int patch_size = 16;
  std::string backbone;
  /// Backbone layers whose attention logits are stored, strictly increasing.
  std::vector<int> exported_layers;

  friend bool operator==(const DumpMeta&, const DumpMeta&) = default;
};

/// Cached backbone activations for one image.
///
/// Tensors are row-major:
///   tokens       [L, N, D]
///   qk_logits    [La, H, N, N]   pre-softmax, already scaled by 1/sqrt(d_head)
///   kk_logits    [La, H, N, N]
///   image_small  [3, Hg, Wg]     RGB in [0,1]
///   mask         [Hg, Wg]        {0,1}, supports only
/// with N = Hg * Wg and La = exported_layers.size().
struct FeatureDump {
  DumpMeta meta;
  int layers = 0;
  int channels = 0;
  int heads = 0;
  std::vector<float> tokens;
  std::vector<float> qk_logits;
  std::vector<float> kk_logits;
  std::vector<float> image_small;
  std::optional<std::vector<std::uint8_t>> mask;

  int tokens_per_layer() const noexcept { return meta.grid.size(); }
  int attn_layers() const noexcept { return static_cast<int>(meta.exported_layers.size()); }

  /// Throws Error{InvalidDump} or Error{NonFinite} if any invariant fails.
  void validate() const;

  /// Features of one layer as an N x D matrix.
  Matrix layer_features(int layer) const;

  /// Slot of `layer` within exported_layers, if its logits were stored.
  std::optional<int> attn_slot(int layer) const;
  /// Exported layer closest to `layer`; ties go to the deeper one.
  int nearest_exported_layer(int layer) const;

  Matrix qk_head(int slot, int head) const;
  Matrix kk_head(int slot, int head) const;

  BinaryMask binary_mask() const;
  SoftMask soft_mask() const;
};

/// Bitwise comparison, so -0.0 and 0.0 (or NaN payloads) are distinguished.
bool bitwise_equal(const FeatureDump& a, const FeatureDump& b);

/// Serializes to the HFD1 byte layout. Rejects invalid dumps before producing
/// any output.
std::vector<unsigned char> encode_dump(const FeatureDump& dump);
FeatureDump decode_dump(const std::vector<unsigned char>& bytes);

void write_dump(const FeatureDump& dump, const std::filesystem::path& path);
FeatureDump read_dump(const std::filesystem::path& path);

using DumpPtr = std::shared_ptr<const FeatureDump>;

/// One K-shot evaluation unit. Dumps are immutable and may be shared.
struct Episode {
  std::vector<DumpPtr> supports;
  DumpPtr query;
  std::string class_id;
  /// Shot count as labeled; supports.size() can exceed it after augmentation.
  int shot = 0;

  int effective_shot() const noexcept { return static_cast<int>(supports.size()); }
  const FeatureDump& support(int i) const { return *supports.at(static_cast<std::size_t>(i)); }
  Grid grid() const { return query->meta.grid; }

  /// Query ground truth for evaluation only; prediction code never calls this.
  std::optional<BinaryMask> query_ground_truth() const;
};

/// Checks shot >= 1, support masks present, and identical
/// (Hg, Wg, D, L, backbone) across all dumps.
void validate_episode(const Episode& episode);

/// Manifest JSON: {"supports": [paths], "query": path, "class_id": str}.
/// Relative paths resolve against the manifest's directory.
Episode load_episode(const std::filesystem::path& manifest);

void write_manifest(const std::filesystem::path& manifest,
                    const std::vector<std::string>& supports,
                    const std::string& query, const std::string& class_id);

} // namespace hera::store
