#pragma once

#include <optional>
#include <span>

#include "hera/numerics.hpp"

namespace hera::ssp {

struct SspConfig {
  double tau_f = 0.7;   // foreground confidence threshold
  double tau_b = 0.6;   // background confidence threshold
  double alpha1 = 0.5;  // weight of the support prototype
  double alpha2 = 0.5;  // weight of the query self-support prototype
  double kappa = 10.0;  // cosine-to-logit scale

  void validate() const;
};

struct SupportPrototypes {
  num::Prototype fg;
  num::Prototype bg;
};

/// Pools foreground and background prototypes over a set of supports.
/// Either side is empty when no contributing support has weight there.
struct PooledPrototypes {
  std::optional<num::Prototype> fg;
  std::optional<num::Prototype> bg;

  bool complete() const noexcept { return fg.has_value() && bg.has_value(); }
  SupportPrototypes get() const { return SupportPrototypes{*fg, *bg}; }
};

PooledPrototypes pool_prototypes(std::span<const Matrix> feats, std::span<const Vector> masks);

num::ProbMap coarse_match(const Matrix& fq, const num::Prototype& fg, const num::Prototype& bg,
                          const SspConfig& cfg);

struct SelfSupport {
  num::Prototype proto;
  bool fallback = false;
};

/// Masked average over positions whose coarse foreground probability exceeds
/// tau_f; falls back to the support prototype when none qualify.
SelfSupport self_support_fg(const Matrix& fq, const num::ProbMap& coarse, const num::Prototype& support_fg,
                            const SspConfig& cfg);

struct BackgroundSupport {
  num::Prototype proto;  // field averaged over all positions
  Matrix field;          // one adaptive background prototype per position, N x D
  int selected = 0;      // number of reliable background positions t
  bool fallback = false;
};

/// Attention-style aggregation over reliable background positions
/// (1 - coarse > tau_b); affinities are cosine similarities, softmax-normalized over the selected
/// positions independently for each query location.
BackgroundSupport self_support_bg(const Matrix& fq, const num::ProbMap& coarse, const num::Prototype& support_bg,
                                  const SspConfig& cfg);

struct Prediction {
  num::ProbMap prob;
  Vector base_logit;  // kappa * (cos(F, P_fg) - cos(F, P_bg)); sigmoid(base_logit) == prob
  SupportPrototypes fused;
  bool fg_fallback = false;
  bool bg_fallback = false;
};

Prediction predict(const Matrix& fq, const SupportPrototypes& support, const SspConfig& cfg);

/// predict() when both pooled prototypes exist. Otherwise the trivial
/// prediction: all background without a foreground prototype, all
/// foreground without a background one.
Prediction predict_or_trivial(const Matrix& fq, const PooledPrototypes& support, const SspConfig& cfg);

} // namespace hera::ssp
