#include "hera/selectors.hpp"

#include <algorithm>
#include <cmath>

#include "hera/error.hpp"

namespace hera::selectors {
namespace {

constexpr double kProbClamp = 1e-7;

num::Prototype soft_pool(const Matrix& f, const Vector& w, const num::Prototype& fallback) {
  if (!(w.sum() > 0.0)) return fallback;
  return num::masked_avg_pool(f, w, fallback.kind);
}

int argmax_deeper(const std::vector<int>& layers, const std::vector<double>& values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < layers.size(); ++i) {
    if (values[i] > values[best] || (values[i] == values[best] && layers[i] > layers[best])) best = i;
  }
  return layers[best];
}

} // namespace

void StaticMaxConfig::validate() const {
  if (!(alpha_sem >= 0.0 && alpha_sem <= 1.0)) throw Error(ErrorKind::BadConfig, "alpha_sem must lie in [0,1]");
  if (w_sem < 0.0 || w_str < 0.0 || w_comp < 0.0) throw Error(ErrorKind::BadConfig, "static-max weights must be >= 0");
  if (std::abs(w_sem + w_str + w_comp - 1.0) > 1e-9) throw Error(ErrorKind::BadConfig, "static-max weights must sum to 1");
  if (!(eps_norm > 0.0)) throw Error(ErrorKind::BadConfig, "eps_norm must be positive");
}

LayerContext layer_context(const store::Episode& episode, int layer, const ssp::SspConfig& ssp) {
  std::vector<Matrix> feats;
  std::vector<Vector> masks;
  for (int i = 0; i < episode.effective_shot(); ++i) {
    feats.push_back(episode.support(i).layer_features(layer));
    masks.push_back(episode.support(i).soft_mask().values);
  }
  const auto pooled = ssp::pool_prototypes(feats, masks);
  if (!pooled.complete()) throw Error(ErrorKind::EmptyMask, "supports lack foreground or background");
  LayerContext ctx;
  ctx.query = episode.query->layer_features(layer);
  ctx.support = pooled.get();
  ctx.p0 = ssp::predict(ctx.query, ctx.support, ssp).prob.values;
  ctx.q_fg = soft_pool(ctx.query, ctx.p0, ctx.support.fg);
  ctx.q_bg = soft_pool(ctx.query, Vector::Ones(ctx.p0.size()) - ctx.p0, ctx.support.bg);
  return ctx;
}

double s_sem(const ssp::SupportPrototypes& p, const num::Prototype& q_fg, const num::Prototype& q_bg, double alpha) {
  return alpha * num::cosine(p.fg.vec, q_fg.vec) + (1.0 - alpha) * num::cosine(p.bg.vec, q_bg.vec);
}

double s_str(const ssp::SupportPrototypes& p, const num::Prototype& q_fg, const num::Prototype& q_bg) {
  return 1.0 - 0.5 * (num::cosine(q_fg.vec, q_bg.vec) + num::cosine(p.fg.vec, p.bg.vec));
}

double complexity(const Matrix& fq, const Vector& p0) {
  if (fq.rows() != p0.size()) throw Error(ErrorKind::InvalidArgument, "feature/probability size mismatch");
  const double wsum = p0.sum();
  double var = 0.0;
  if (wsum > 0.0) {
    const Vector mean = fq.transpose() * p0 / wsum;
    double acc = 0.0;
    for (Eigen::Index x = 0; x < fq.rows(); ++x) acc += p0[x] * (fq.row(x).transpose() - mean).squaredNorm();
    var = acc / wsum / static_cast<double>(fq.cols());
  }
  return var + num::bernoulli_entropy_mean(p0);
}

std::vector<double> range_normalize(const std::vector<double>& values, double eps) {
  if (values.empty()) return {};
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const double min = *lo;
  const double span = *hi - *lo + eps;
  std::vector<double> out;
  out.reserve(values.size());
  for (double v : values) out.push_back((v - min) / span);
  return out;
}

StaticScores static_scores(const store::Episode& episode, const std::vector<int>& candidates,
                           const StaticMaxConfig& cfg, const ssp::SspConfig& ssp) {
  cfg.validate();
  if (candidates.empty()) throw Error(ErrorKind::InvalidArgument, "no candidate layers");
  StaticScores s;
  s.layers = candidates;
  for (int l : candidates) {
    const auto ctx = layer_context(episode, l, ssp);
    s.sem.push_back(s_sem(ctx.support, ctx.q_fg, ctx.q_bg, cfg.alpha_sem));
    s.str.push_back(s_str(ctx.support, ctx.q_fg, ctx.q_bg));
    s.comp.push_back(complexity(ctx.query, ctx.p0));
  }
  const auto a = range_normalize(s.sem, cfg.eps_norm);
  const auto b = range_normalize(s.str, cfg.eps_norm);
  const auto c = range_normalize(s.comp, cfg.eps_norm);
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    s.combined.push_back(cfg.w_sem * a[i] + cfg.w_str * b[i] + cfg.w_comp * c[i]);
  }
  return s;
}

int static_max(const store::Episode& episode, const std::vector<int>& candidates, const StaticMaxConfig& cfg,
               const ssp::SspConfig& ssp) {
  const auto s = static_scores(episode, candidates, cfg, ssp);
  return argmax_deeper(s.layers, s.combined);
}

double base_loss(const Matrix& fq, const ssp::SupportPrototypes& p, const Vector& p0, double kappa, Matrix* grad) {
  const auto n = fq.rows();
  if (p0.size() != n) throw Error(ErrorKind::InvalidArgument, "feature/probability size mismatch");
  const double nf = p.fg.vec.norm();
  const double nb = p.bg.vec.norm();
  if (nf == 0.0 || nb == 0.0) throw Error(ErrorKind::ZeroProto, "zero prototype");
  if (grad) grad->setZero(n, fq.cols());
  double loss = 0.0;
  for (Eigen::Index x = 0; x < n; ++x) {
    const double hn = fq.row(x).norm();
    const double cf = hn == 0.0 ? 0.0 : fq.row(x).dot(p.fg.vec) / (hn * nf);
    const double cb = hn == 0.0 ? 0.0 : fq.row(x).dot(p.bg.vec) / (hn * nb);
    const double prob = num::sigmoid(kappa * (cf - cb));
    const double pc = std::clamp(prob, kProbClamp, 1.0 - kProbClamp);
    const double y = p0[x] >= 0.5 ? 1.0 : 0.0;
    loss -= y * std::log(pc) + (1.0 - y) * std::log(1.0 - pc);
    if (!grad || hn == 0.0 || prob != pc) continue;
    const double dz = kappa * (prob - y) / static_cast<double>(n);
    grad->row(x) = dz * (p.fg.vec.transpose() / (hn * nf) - cf * fq.row(x) / (hn * hn) -
                         p.bg.vec.transpose() / (hn * nb) + cb * fq.row(x) / (hn * hn));
  }
  return loss / static_cast<double>(n);
}

std::map<int, double> grad_norms(const store::Episode& episode, const std::vector<int>& candidates,
                                 const ssp::SspConfig& ssp) {
  std::map<int, double> out;
  for (int l : candidates) {
    const auto ctx = layer_context(episode, l, ssp);
    Matrix g;
    base_loss(ctx.query, ctx.support, ctx.p0, ssp.kappa, &g);
    out[l] = g.norm();
  }
  return out;
}

int grad_max(const std::map<int, double>& norms) {
  if (norms.empty()) throw Error(ErrorKind::InvalidArgument, "no gradient norms");
  std::vector<int> layers;
  std::vector<double> values;
  for (const auto& [l, v] : norms) {
    layers.push_back(l);
    values.push_back(v);
  }
  return argmax_deeper(layers, values);
}

int grad_delta_max(const std::map<int, double>& norms) {
  if (norms.empty()) throw Error(ErrorKind::InvalidArgument, "no gradient norms");
  if (norms.size() == 1) return norms.begin()->first;
  std::vector<int> layers;
  std::vector<double> values;
  auto prev = norms.begin();
  for (auto it = std::next(norms.begin()); it != norms.end(); ++it, ++prev) {
    layers.push_back(it->first);
    values.push_back(std::abs(it->second - prev->second));
  }
  return argmax_deeper(layers, values);
}

} // namespace hera::selectors
