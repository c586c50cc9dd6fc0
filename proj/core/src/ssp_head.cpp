#include "hera/ssp_head.hpp"

#include <cmath>

#include "hera/error.hpp"

namespace hera::ssp {

using num::Prototype;
using num::PrototypeKind;

void SspConfig::validate() const {
  if (!(tau_f > 0.0 && tau_f < 1.0) || !(tau_b > 0.0 && tau_b < 1.0)) {
    throw Error(ErrorKind::BadConfig, "ssp thresholds must lie in (0,1)");
  }
  if (std::abs(alpha1 + alpha2 - 1.0) > 1e-9) throw Error(ErrorKind::BadConfig, "ssp alpha1 + alpha2 must be 1");
  if (!(kappa > 0.0)) throw Error(ErrorKind::BadConfig, "ssp kappa must be positive");
}

PooledPrototypes pool_prototypes(std::span<const Matrix> feats, std::span<const Vector> masks) {
  if (feats.size() != masks.size() || feats.empty()) {
    throw Error(ErrorKind::InvalidArgument, "prototype pooling needs matching, non-empty inputs");
  }
  const auto d = feats.front().cols();
  Vector fg_sum = Vector::Zero(d);
  Vector bg_sum = Vector::Zero(d);
  double fg_w = 0.0;
  double bg_w = 0.0;
  for (std::size_t s = 0; s < feats.size(); ++s) {
    const Vector bg_mask = Vector::Ones(masks[s].size()) - masks[s];
    fg_sum.noalias() += feats[s].transpose() * masks[s];
    bg_sum.noalias() += feats[s].transpose() * bg_mask;
    fg_w += masks[s].sum();
    bg_w += bg_mask.sum();
  }
  PooledPrototypes out;
  if (fg_w > 0.0 && fg_sum.norm() > 0.0) out.fg = Prototype{fg_sum / fg_w, PrototypeKind::Foreground};
  if (bg_w > 0.0 && bg_sum.norm() > 0.0) out.bg = Prototype{bg_sum / bg_w, PrototypeKind::Background};
  return out;
}

num::ProbMap coarse_match(const Matrix& fq, const Prototype& fg, const Prototype& bg, const SspConfig& cfg) {
  return num::fgbg_softmax(num::cos_map(fq, fg), num::cos_map(fq, bg), cfg.kappa);
}

SelfSupport self_support_fg(const Matrix& fq, const num::ProbMap& coarse, const Prototype& support_fg,
                            const SspConfig& cfg) {
  Vector w(coarse.values.size());
  for (Eigen::Index i = 0; i < w.size(); ++i) w[i] = coarse.values[i] > cfg.tau_f ? 1.0 : 0.0;
  if (w.sum() == 0.0) return SelfSupport{support_fg, true};
  Prototype p = num::masked_avg_pool(fq, w, PrototypeKind::Foreground);
  if (p.vec.norm() == 0.0) return SelfSupport{support_fg, true};
  return SelfSupport{std::move(p), false};
}

BackgroundSupport self_support_bg(const Matrix& fq, const num::ProbMap& coarse, const Prototype& support_bg,
                                  const SspConfig& cfg) {
  const auto n = fq.rows();
  std::vector<Eigen::Index> picked;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (1.0 - coarse.values[i] > cfg.tau_b) picked.push_back(i);
  }
  BackgroundSupport out;
  out.selected = static_cast<int>(picked.size());
  if (picked.empty()) {
    out.proto = support_bg;
    out.field = support_bg.vec.transpose().replicate(n, 1);
    out.fallback = true;
    return out;
  }
  const auto t = static_cast<Eigen::Index>(picked.size());
  Matrix fb(t, fq.cols());
  for (Eigen::Index k = 0; k < t; ++k) fb.row(k) = fq.row(picked[static_cast<std::size_t>(k)]);

  // A is t x n over unit-normalized rows; softmax down each column.
  const auto unit = [](const Matrix& m) {
    Matrix u = m;
    for (Eigen::Index r = 0; r < u.rows(); ++r) {
      const double len = u.row(r).norm();
      if (len > 0.0) u.row(r) /= len;
    }
    return u;
  };
  Matrix a = unit(fb) * unit(fq).transpose();
  for (Eigen::Index j = 0; j < n; ++j) {
    const double m = a.col(j).maxCoeff();
    double z = 0.0;
    for (Eigen::Index k = 0; k < t; ++k) {
      a(k, j) = std::exp(a(k, j) - m);
      z += a(k, j);
    }
    a.col(j) /= z;
  }
  out.field = a.transpose() * fb;
  Vector mean = out.field.colwise().mean().transpose();
  if (mean.norm() == 0.0) {
    out.proto = support_bg;
    out.fallback = true;
    return out;
  }
  out.proto = Prototype{std::move(mean), PrototypeKind::Background};
  return out;
}

Prediction predict(const Matrix& fq, const SupportPrototypes& support, const SspConfig& cfg) {
  const num::ProbMap coarse = coarse_match(fq, support.fg, support.bg, cfg);
  const SelfSupport fg = self_support_fg(fq, coarse, support.fg, cfg);
  const BackgroundSupport bg = self_support_bg(fq, coarse, support.bg, cfg);

  Prediction out;
  out.fg_fallback = fg.fallback;
  out.bg_fallback = bg.fallback;
  out.fused.fg = Prototype{cfg.alpha1 * support.fg.vec + cfg.alpha2 * fg.proto.vec, PrototypeKind::Foreground};
  out.fused.bg = Prototype{cfg.alpha1 * support.bg.vec + cfg.alpha2 * bg.proto.vec, PrototypeKind::Background};
  // A fused prototype can only vanish if the query prototype exactly cancels
  // the support one; keep the support prototype then.
  if (out.fused.fg.vec.norm() == 0.0) out.fused.fg = support.fg;
  if (out.fused.bg.vec.norm() == 0.0) out.fused.bg = support.bg;

  const Vector cf = num::cos_map(fq, out.fused.fg);
  const Vector cb = num::cos_map(fq, out.fused.bg);
  out.prob = num::fgbg_softmax(cf, cb, cfg.kappa);
  out.base_logit = cfg.kappa * cf - cfg.kappa * cb;
  return out;
}

Prediction predict_or_trivial(const Matrix& fq, const PooledPrototypes& support, const SspConfig& cfg) {
  if (support.complete()) return predict(fq, support.get(), cfg);
  Prediction out;
  const auto n = fq.rows();
  // Matches a saturated cosine margin of +-2.
  const double sign = support.fg ? 1.0 : -1.0;
  out.base_logit = Vector::Constant(n, sign * 2.0 * cfg.kappa);
  out.prob.values = Vector::Constant(n, support.fg ? 1.0 : 0.0);
  out.fg_fallback = !support.fg.has_value();
  out.bg_fallback = !support.bg.has_value();
  return out;
}

} // namespace hera::ssp
