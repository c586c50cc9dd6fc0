#include "hera/pgr.hpp"

#include <cmath>

#include "hera/error.hpp"
#include "hera/numerics.hpp"

namespace hera::pgr {
namespace {

double squared_distance(const Grid& grid, int a, int b) {
  const double dr = grid.row(a) - grid.row(b);
  const double dc = grid.col(a) - grid.col(b);
  return dr * dr + dc * dc;
}

void require_square(const Matrix& m, const Grid& grid, const char* what) {
  if (m.rows() != grid.size() || m.cols() != grid.size()) {
    throw Error(ErrorKind::InvalidArgument, std::string(what) + " logits must be N x N");
  }
  if (!m.allFinite()) throw Error(ErrorKind::NonFinite, std::string(what) + " logits contain non-finite values");
}

} // namespace

void PgrConfig::validate() const {
  if (!(sigma_loc > 0.0) || !(sigma_loc < sigma_glo)) {
    throw Error(ErrorKind::BadConfig, "pgr requires 0 < sigma_loc < sigma_glo");
  }
  if (!(alpha_gate > 0.0)) throw Error(ErrorKind::BadConfig, "pgr alpha_gate must be positive");
}

Vector gaussian_prior(const Grid& grid, int center, double sigma) {
  if (!(sigma > 0.0)) throw Error(ErrorKind::InvalidArgument, "prior bandwidth must be positive");
  if (center < 0 || center >= grid.size()) throw Error(ErrorKind::InvalidArgument, "prior centre off the grid");
  Vector out(grid.size());
  for (int j = 0; j < grid.size(); ++j) out[j] = std::exp(-squared_distance(grid, center, j) / (2.0 * sigma * sigma));
  return out;
}

HeadGate head_gate(const Matrix& qk, const Matrix& kk, const PgrConfig& cfg) {
  const double diff = num::row_entropy_mean(qk) - num::row_entropy_mean(kk);
  HeadGate g;
  g.gamma = num::sigmoid(cfg.alpha_gate * diff);
  g.sigma = (1.0 - g.gamma) * cfg.sigma_glo + g.gamma * cfg.sigma_loc;
  return g;
}

Matrix prior_attention(const Matrix& qk, const Grid& grid, double sigma) {
  if (!(sigma > 0.0)) throw Error(ErrorKind::InvalidArgument, "prior bandwidth must be positive");
  Matrix logits = qk;
  const double inv = 1.0 / (2.0 * sigma * sigma);
  for (int i = 0; i < grid.size(); ++i) {
    for (int j = 0; j < grid.size(); ++j) logits(i, j) -= squared_distance(grid, i, j) * inv;
  }
  return num::row_softmax(logits);
}

CalibratedAttention calibrate_attention(std::span<const Matrix> qk, std::span<const Matrix> kk, const Grid& grid,
                                        const PgrConfig& cfg) {
  if (qk.empty()) throw Error(ErrorKind::InvalidArgument, "no attention heads");
  if (cfg.enabled && kk.size() != qk.size()) throw Error(ErrorKind::InvalidArgument, "qk/kk head count mismatch");
  CalibratedAttention out;
  for (std::size_t h = 0; h < qk.size(); ++h) {
    require_square(qk[h], grid, "qk");
    if (!cfg.enabled) {
      out.heads.push_back(num::row_softmax(qk[h]));
      continue;
    }
    require_square(kk[h], grid, "kk");
    const HeadGate g = head_gate(qk[h], kk[h], cfg);
    out.gates.push_back(g);
    out.heads.push_back(prior_attention(qk[h], grid, g.sigma));
  }
  return out;
}

CalibratedAttention calibrate_dump(const store::FeatureDump& dump, int layer, const PgrConfig& cfg) {
  const int slot = *dump.attn_slot(dump.nearest_exported_layer(layer));
  std::vector<Matrix> qk;
  std::vector<Matrix> kk;
  for (int h = 0; h < dump.heads; ++h) {
    qk.push_back(dump.qk_head(slot, h));
    if (cfg.enabled) kk.push_back(dump.kk_head(slot, h));
  }
  return calibrate_attention(qk, kk, dump.meta.grid, cfg);
}

Matrix mean_attention(const CalibratedAttention& attn) {
  if (attn.heads.empty()) throw Error(ErrorKind::InvalidArgument, "no attention heads");
  Matrix acc = attn.heads.front();
  for (std::size_t h = 1; h < attn.heads.size(); ++h) acc += attn.heads[h];
  for (Eigen::Index i = 0; i < acc.rows(); ++i) {
    const double s = acc.row(i).sum();
    if (s > 0.0) acc.row(i) /= s;
  }
  return acc;
}

double far_field_mass(const Matrix& attn, const Grid& grid, double radius) {
  double total = 0.0;
  const double r2 = radius * radius;
  for (int i = 0; i < grid.size(); ++i) {
    for (int j = 0; j < grid.size(); ++j) {
      if (squared_distance(grid, i, j) > r2) total += attn(i, j);
    }
  }
  return total;
}

} // namespace hera::pgr
