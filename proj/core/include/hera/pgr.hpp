#pragma once

#include <span>
#include <vector>

#include "hera/feature_store.hpp"

namespace hera::pgr {

struct PgrConfig {
  double sigma_loc = 2.0;   // patch units
  double sigma_glo = 8.0;   // patch units
  double alpha_gate = 1.0;  // gate temperature
  bool enabled = true;

  void validate() const;
};

/// exp(-|p_j - p_i|^2 / (2 sigma^2)) for every grid position j.
Vector gaussian_prior(const Grid& grid, int center, double sigma);

struct HeadGate {
  double gamma = 0.5;
  double sigma = 5.0;
};

/// gamma = logistic(alpha * (H(qk) - H(kk))), sigma = (1 - gamma) sigma_glo + gamma sigma_loc.
HeadGate head_gate(const Matrix& qk, const Matrix& kk, const PgrConfig& cfg);

/// rowsoftmax(qk + log prior) with each row's prior centred at that row's position.
Matrix prior_attention(const Matrix& qk, const Grid& grid, double sigma);

struct CalibratedAttention {
  std::vector<Matrix> heads;    // row-stochastic, N x N
  std::vector<HeadGate> gates;  // empty when disabled
};

/// Per-head calibration. Disabled: plain rowsoftmax of qk per head.
/// Throws Error{NonFinite} on non-finite logits.
CalibratedAttention calibrate_attention(std::span<const Matrix> qk, std::span<const Matrix> kk, const Grid& grid,
                                        const PgrConfig& cfg);

/// Calibrates the stored logits of `layer`, or of the nearest exported layer.
CalibratedAttention calibrate_dump(const store::FeatureDump& dump, int layer, const PgrConfig& cfg);

/// Head average, re-normalized so every row sums to one.
Matrix mean_attention(const CalibratedAttention& attn);

/// Sum over rows of attention mass at distance > radius from the row's position.
double far_field_mass(const Matrix& attn, const Grid& grid, double radius);

} // namespace hera::pgr
