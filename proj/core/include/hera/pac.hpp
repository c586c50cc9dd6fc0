#pragma once

#include <optional>
#include <span>
#include <vector>

#include "hera/hls.hpp"
#include "hera/pgr.hpp"
#include "hera/ssp_head.hpp"
#include "hera/tta.hpp"

namespace hera::pac {

enum class GateMode { Default, AlwaysOn, Auto, Off };

/// Default: always on for 1-shot, otherwise Auto with T = ceil(2K/5).
struct GatePolicy {
  GateMode mode = GateMode::Default;
  std::optional<int> threshold;  // Auto only; derived from K when absent
};

struct ResolvedGate {
  GateMode mode = GateMode::AlwaysOn;  // never Default
  int threshold = 0;
};

ResolvedGate resolve_gate(const GatePolicy& policy, int shot);

struct PacConfig {
  double tau_sim = 1.0;
  double tau_attn = 1.0;
  double tau_img = 0.5;
  double w_sim = 0.3;
  double w_attn = 0.3;
  double w_img = 0.2;
  GatePolicy gate;
  bool enabled = true;

  void validate() const;
};

struct LogitMaps {
  Vector base;
  Vector sim;
  Vector attn;
  Vector img;
  Vector final;
};

Vector l_sim(const Matrix& fq, const num::Prototype& fg, const num::Prototype& bg, const PacConfig& cfg);

/// tau_attn * (A p0) with p0 = sigmoid(base).
Vector l_attn(const Matrix& attn_mean, const Vector& base, const PacConfig& cfg);

inline constexpr int kAppearanceDim = 5;
inline constexpr double kAppearanceEps = 1e-6;

/// Per cell: CIELAB L, a, b, then the 3x3 mean and 3x3 standard deviation of
/// L (windows clipped at the border). Each channel is standardized over the
/// image. N x 5.
Matrix appearance_embed(const store::FeatureDump& dump);
Matrix appearance_embed(std::span<const float> image_small, const Grid& grid);

Vector l_img(const Matrix& v, const num::Prototype& u_fg, const num::Prototype& u_bg, const PacConfig& cfg);

/// base + w_sim sim + w_attn attn + w_img img when gated on, else base.
Vector fuse(const LogitMaps& maps, const PacConfig& cfg, bool gate_on);

/// sigmoid(logits) >= 0.5.
BinaryMask mask_from_logits(const Grid& grid, const Vector& logits);

/// Appearance prototypes pooled over support masks.
ssp::PooledPrototypes appearance_prototypes(std::span<const Matrix> embeds, std::span<const Vector> masks);

/// Everything needed to produce the logit maps for one (pseudo-)query.
struct BranchInputs {
  Matrix features;                  // query features after the head
  ssp::PooledPrototypes prototypes; // from head-transformed supports
  Matrix attention;                 // head-averaged calibrated attention
  Matrix appearance;                // query appearance embedding
  ssp::PooledPrototypes appearance_prototypes;
};

/// Base prediction plus the three branches; final is left equal to base.
LogitMaps compute_maps(const BranchInputs& in, const ssp::SspConfig& ssp, const PacConfig& cfg);

/// Assembles branch inputs for `query` from `supports` at the routed
/// representation, applying the head and PGR at the dominant layer.
BranchInputs branch_inputs(const store::FeatureDump& query, std::span<const store::FeatureDump* const> supports,
                           const hls::Representation& rep, const tta::AdaptedHead& head,
                           const pgr::PgrConfig& pgr);

struct GateReport {
  ResolvedGate gate;
  std::vector<double> delta_iou;  // one entry per pseudo-query; empty unless Auto
  int positive_votes = 0;
  bool on = false;
};

/// Leave-one-out vote: support i counts when PAC strictly raises its IoU.
GateReport refine_vote(const store::Episode& episode, const hls::Representation& rep, const tta::AdaptedHead& head,
                       const ssp::SspConfig& ssp, const pgr::PgrConfig& pgr, const PacConfig& cfg, int threshold);

/// Resolves the policy for the labeled shot and runs the vote when needed.
GateReport decide_gate(const store::Episode& episode, const hls::Representation& rep, const tta::AdaptedHead& head,
                       const ssp::SspConfig& ssp, const pgr::PgrConfig& pgr, const PacConfig& cfg);

} // namespace hera::pac
