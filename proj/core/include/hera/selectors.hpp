#pragma once

#include <map>
#include <vector>

#include "hera/feature_store.hpp"
#include "hera/ssp_head.hpp"

namespace hera::selectors {

struct StaticMaxConfig {
  double alpha_sem = 0.5;
  double w_sem = 1.0 / 3.0;
  double w_str = 1.0 / 3.0;
  double w_comp = 1.0 / 3.0;
  double eps_norm = 1e-8;

  void validate() const;
};

/// Support prototypes, query base probability and soft query prototypes at one layer.
struct LayerContext {
  Matrix query;
  ssp::SupportPrototypes support;
  Vector p0;
  num::Prototype q_fg;
  num::Prototype q_bg;
};

LayerContext layer_context(const store::Episode& episode, int layer, const ssp::SspConfig& ssp);

/// alpha cos(P_fg, Q_fg) + (1 - alpha) cos(P_bg, Q_bg).
double s_sem(const ssp::SupportPrototypes& p, const num::Prototype& q_fg, const num::Prototype& q_bg, double alpha);

/// 1 - (cos(Q_fg, Q_bg) + cos(P_fg, P_bg)) / 2.
double s_str(const ssp::SupportPrototypes& p, const num::Prototype& q_fg, const num::Prototype& q_bg);

/// p0-weighted per-dimension variance around Q_fg (averaged over dimensions)
/// plus the mean Bernoulli entropy of p0.
double complexity(const Matrix& fq, const Vector& p0);

/// (s - min) / (max - min + eps).
std::vector<double> range_normalize(const std::vector<double>& values, double eps);

struct StaticScores {
  std::vector<int> layers;
  std::vector<double> sem;
  std::vector<double> str;
  std::vector<double> comp;
  std::vector<double> combined;
};

StaticScores static_scores(const store::Episode& episode, const std::vector<int>& candidates,
                           const StaticMaxConfig& cfg, const ssp::SspConfig& ssp);

/// Weighted argmax of range-normalized scores; ties go deeper.
int static_max(const store::Episode& episode, const std::vector<int>& candidates, const StaticMaxConfig& cfg,
               const ssp::SspConfig& ssp);

/// Mean clamped BCE of the coarse cosine prediction against 1[p0 >= 0.5];
/// fills the gradient with respect to fq (prototypes held fixed) when given.
double base_loss(const Matrix& fq, const ssp::SupportPrototypes& p, const Vector& p0, double kappa,
                 Matrix* grad = nullptr);

/// Frobenius norm of the base-loss gradient per candidate layer.
std::map<int, double> grad_norms(const store::Episode& episode, const std::vector<int>& candidates,
                                 const ssp::SspConfig& ssp);

/// argmax over layers; ties go deeper.
int grad_max(const std::map<int, double>& norms);

/// argmax of |g_l - g_prev| over consecutive candidates, first excluded;
/// falls back to the only candidate when there is one.
int grad_delta_max(const std::map<int, double>& norms);

} // namespace hera::selectors
