#pragma once

#include <map>
#include <optional>
#include <vector>

#include "hera/feature_store.hpp"
#include "hera/ssp_head.hpp"

namespace hera::hls {

enum class RouteKind { Single, Fusion };

/// A routed representation: one layer, or a convex combination of layers.
struct Representation {
  RouteKind kind = RouteKind::Single;
  std::vector<int> layers;
  std::vector<double> weights;  // fusion only, same order as layers

  static Representation single(int layer) { return {RouteKind::Single, {layer}, {1.0}}; }

  /// Layer whose attention logits stand in for the representation: the layer
  /// itself, or the highest-weight fusion member (ties go deeper).
  int dominant_layer() const;
};

/// Features of a dump under a representation, N x D.
Matrix representation_features(const store::FeatureDump& dump, const Representation& rep);

struct HlsConfig {
  std::vector<int> candidates = {12, 13, 14, 15, 16, 17, 18, 19, 20, 21, 22, 23};
  double beta = 10.0;
  double tau_fusion = 2.0;  // 0 drops the locality term
  int anchor_layer = 23;
  /// nullopt: pools anchored at the best single layer. Empty: no fusion.
  std::optional<std::vector<std::vector<int>>> fusion_pools;
  bool enabled = true;  // disabled: route straight to anchor_layer

  void validate(int layers) const;
};

struct FusionCandidate {
  std::vector<int> pool;
  std::vector<double> weights;
  double etr = 0.0;
};

struct RoutingDecision {
  Representation rep;
  double etr = 0.0;
  std::map<int, double> per_layer_risk;
  int single_layer = 0;
  double single_etr = 0.0;
  std::vector<FusionCandidate> fusion_candidates;
};

/// One minus the mean leave-one-out foreground IoU over the supports.
/// Throws Error{InsufficientSupports} for fewer than two supports.
double etr(const store::Episode& episode, const Representation& rep, const ssp::SspConfig& ssp);

struct SingleSelection {
  int layer = 0;
  std::map<int, double> per_layer_risk;
};

/// argmin of ETR over the candidates; ties resolve to the deeper layer.
SingleSelection select_single(const store::Episode& episode, const HlsConfig& cfg, const ssp::SspConfig& ssp);

/// softmax(-beta * r - |l - anchor| / tau) over the pool.
std::vector<double> fusion_weights(const std::vector<int>& pool, const std::map<int, double>& risks,
                                   const HlsConfig& cfg);

/// {s, anchor}, {s-1, s, anchor}, {s, s+1, anchor}, clipped to the candidates,
/// de-duplicated, singletons dropped.
std::vector<std::vector<int>> default_pools(int single_layer, const HlsConfig& cfg);

RoutingDecision route(const store::Episode& episode, const HlsConfig& cfg, const ssp::SspConfig& ssp);

/// Routing pinned to one layer (used by baselines and the no-HLS ablation).
RoutingDecision fixed_route(const store::Episode& episode, int layer, const ssp::SspConfig& ssp);

} // namespace hera::hls
