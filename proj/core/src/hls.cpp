#include "hera/hls.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "hera/error.hpp"

namespace hera::hls {

int Representation::dominant_layer() const {
  if (layers.empty()) throw Error(ErrorKind::InvalidArgument, "empty representation");
  std::size_t best = 0;
  for (std::size_t i = 1; i < layers.size(); ++i) {
    const double wi = i < weights.size() ? weights[i] : 0.0;
    const double wb = best < weights.size() ? weights[best] : 0.0;
    if (wi > wb || (wi == wb && layers[i] > layers[best])) best = i;
  }
  return layers[best];
}

Matrix representation_features(const store::FeatureDump& dump, const Representation& rep) {
  if (rep.kind == RouteKind::Single) return dump.layer_features(rep.layers.at(0));
  if (rep.weights.size() != rep.layers.size()) throw Error(ErrorKind::InvalidArgument, "fusion weights/layers mismatch");
  Matrix acc = Matrix::Zero(dump.tokens_per_layer(), dump.channels);
  for (std::size_t i = 0; i < rep.layers.size(); ++i) acc += rep.weights[i] * dump.layer_features(rep.layers[i]);
  return acc;
}

void HlsConfig::validate(int layers) const {
  if (candidates.empty()) throw Error(ErrorKind::BadConfig, "hls needs at least one candidate layer");
  for (int l : candidates) {
    if (l < 0 || l >= layers) throw Error(ErrorKind::BadConfig, "hls candidate layer out of range");
  }
  if (std::find(candidates.begin(), candidates.end(), anchor_layer) == candidates.end()) {
    throw Error(ErrorKind::BadConfig, "hls anchor layer must be a candidate");
  }
  if (!(beta > 0.0)) throw Error(ErrorKind::BadConfig, "hls beta must be positive");
  if (!(tau_fusion >= 0.0)) throw Error(ErrorKind::BadConfig, "hls tau must be non-negative");
  if (fusion_pools) {
    for (const auto& pool : *fusion_pools) {
      if (pool.empty()) throw Error(ErrorKind::BadConfig, "fusion pools must be non-empty");
      for (int l : pool) {
        if (std::find(candidates.begin(), candidates.end(), l) == candidates.end()) {
          throw Error(ErrorKind::BadConfig, "fusion pool layers must be candidates");
        }
      }
    }
  }
}

double etr(const store::Episode& episode, const Representation& rep, const ssp::SspConfig& ssp) {
  const int k = episode.effective_shot();
  if (k < 2) throw Error(ErrorKind::InsufficientSupports, "ETR needs at least two supports");
  std::vector<Matrix> feats;
  std::vector<Vector> masks;
  feats.reserve(static_cast<std::size_t>(k));
  masks.reserve(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) {
    feats.push_back(representation_features(episode.support(i), rep));
    masks.push_back(episode.support(i).soft_mask().values);
  }
  double total = 0.0;
  std::vector<Matrix> rest_f;
  std::vector<Vector> rest_m;
  for (int i = 0; i < k; ++i) {
    rest_f.clear();
    rest_m.clear();
    for (int j = 0; j < k; ++j) {
      if (j == i) continue;
      rest_f.push_back(feats[static_cast<std::size_t>(j)]);
      rest_m.push_back(masks[static_cast<std::size_t>(j)]);
    }
    const auto protos = ssp::pool_prototypes(rest_f, rest_m);
    const auto pred = ssp::predict_or_trivial(feats[static_cast<std::size_t>(i)], protos, ssp);
    const Grid grid = episode.support(i).meta.grid;
    total += num::binary_iou(num::binarize(grid, pred.prob.values), episode.support(i).binary_mask());
  }
  return 1.0 - total / k;
}

SingleSelection select_single(const store::Episode& episode, const HlsConfig& cfg, const ssp::SspConfig& ssp) {
  if (cfg.candidates.empty()) throw Error(ErrorKind::BadConfig, "no candidate layers");
  SingleSelection out;
  std::vector<int> ordered = cfg.candidates;
  std::sort(ordered.begin(), ordered.end());
  double best = 0.0;
  bool first = true;
  for (int l : ordered) {
    const double r = etr(episode, Representation::single(l), ssp);
    out.per_layer_risk[l] = r;
    // Ascending order with <= lets the deeper layer win ties.
    if (first || r <= best) {
      best = r;
      out.layer = l;
      first = false;
    }
  }
  return out;
}

std::vector<double> fusion_weights(const std::vector<int>& pool, const std::map<int, double>& risks,
                                   const HlsConfig& cfg) {
  if (pool.empty()) throw Error(ErrorKind::InvalidArgument, "empty fusion pool");
  std::vector<double> logits;
  logits.reserve(pool.size());
  for (int l : pool) {
    const auto it = risks.find(l);
    if (it == risks.end()) throw Error(ErrorKind::InvalidArgument, "no risk for fusion layer " + std::to_string(l));
    double z = -cfg.beta * it->second;
    if (cfg.tau_fusion > 0.0) z -= std::abs(l - cfg.anchor_layer) / cfg.tau_fusion;
    logits.push_back(z);
  }
  const double m = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double& z : logits) {
    z = std::exp(z - m);
    total += z;
  }
  for (double& z : logits) z /= total;
  return logits;
}

std::vector<std::vector<int>> default_pools(int single_layer, const HlsConfig& cfg) {
  const std::set<int> allowed(cfg.candidates.begin(), cfg.candidates.end());
  const std::vector<std::vector<int>> raw = {
      {single_layer, cfg.anchor_layer},
      {single_layer - 1, single_layer, cfg.anchor_layer},
      {single_layer, single_layer + 1, cfg.anchor_layer},
  };
  std::vector<std::vector<int>> out;
  for (const auto& pool : raw) {
    std::set<int> kept;
    for (int l : pool) {
      if (allowed.count(l) != 0) kept.insert(l);
    }
    if (kept.size() < 2) continue;
    std::vector<int> as_vec(kept.begin(), kept.end());
    if (std::find(out.begin(), out.end(), as_vec) == out.end()) out.push_back(std::move(as_vec));
  }
  return out;
}

RoutingDecision route(const store::Episode& episode, const HlsConfig& cfg, const ssp::SspConfig& ssp) {
  if (!cfg.enabled) return fixed_route(episode, cfg.anchor_layer, ssp);

  const SingleSelection single = select_single(episode, cfg, ssp);
  RoutingDecision out;
  out.per_layer_risk = single.per_layer_risk;
  out.single_layer = single.layer;
  out.single_etr = single.per_layer_risk.at(single.layer);
  out.rep = Representation::single(single.layer);
  out.etr = out.single_etr;

  std::vector<std::vector<int>> pools = cfg.fusion_pools ? *cfg.fusion_pools : default_pools(single.layer, cfg);
  for (auto& pool : pools) {
    std::sort(pool.begin(), pool.end());
    pool.erase(std::unique(pool.begin(), pool.end()), pool.end());
    FusionCandidate cand;
    cand.pool = pool;
    cand.weights = fusion_weights(pool, single.per_layer_risk, cfg);
    const Representation rep{RouteKind::Fusion, pool, cand.weights};
    cand.etr = etr(episode, rep, ssp);
    // Strict: the single layer keeps ties.
    if (cand.etr < out.etr) {
      out.etr = cand.etr;
      out.rep = rep;
    }
    out.fusion_candidates.push_back(std::move(cand));
  }
  return out;
}

RoutingDecision fixed_route(const store::Episode& episode, int layer, const ssp::SspConfig& ssp) {
  RoutingDecision out;
  out.rep = Representation::single(layer);
  out.single_layer = layer;
  out.etr = episode.effective_shot() >= 2 ? etr(episode, out.rep, ssp) : 1.0;
  out.single_etr = out.etr;
  out.per_layer_risk[layer] = out.etr;
  return out;
}

} // namespace hera::hls
