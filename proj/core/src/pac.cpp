#include "hera/pac.hpp"

#include <algorithm>
#include <cmath>

#include "hera/error.hpp"

namespace hera::pac {
namespace {

double srgb_to_linear(double c) {
  return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
}

double lab_f(double t) {
  constexpr double kDelta = 6.0 / 29.0;
  return t > kDelta * kDelta * kDelta ? std::cbrt(t) : t / (3.0 * kDelta * kDelta) + 4.0 / 29.0;
}

Vector zero_if_incomplete(int n) { return Vector::Zero(n); }

} // namespace

ResolvedGate resolve_gate(const GatePolicy& policy, int shot) {
  if (shot < 1) throw Error(ErrorKind::InvalidArgument, "shot must be positive");
  ResolvedGate g;
  g.mode = policy.mode;
  if (g.mode == GateMode::Default) g.mode = shot == 1 ? GateMode::AlwaysOn : GateMode::Auto;
  if (g.mode == GateMode::Auto) g.threshold = policy.threshold.value_or((2 * shot + 4) / 5);
  return g;
}

void PacConfig::validate() const {
  if (w_sim < 0.0 || w_attn < 0.0 || w_img < 0.0) throw Error(ErrorKind::BadConfig, "pac weights must be non-negative");
  if (!std::isfinite(tau_sim) || !std::isfinite(tau_attn) || !std::isfinite(tau_img)) {
    throw Error(ErrorKind::BadConfig, "pac temperatures must be finite");
  }
  if (gate.threshold && *gate.threshold < 0) throw Error(ErrorKind::BadConfig, "gate threshold must be non-negative");
}

Vector l_sim(const Matrix& fq, const num::Prototype& fg, const num::Prototype& bg, const PacConfig& cfg) {
  return cfg.tau_sim * (num::cos_map(fq, fg) - num::cos_map(fq, bg));
}

Vector l_attn(const Matrix& attn_mean, const Vector& base, const PacConfig& cfg) {
  if (attn_mean.rows() != base.size() || attn_mean.cols() != base.size()) {
    throw Error(ErrorKind::InvalidArgument, "attention and logit map sizes differ");
  }
  const Vector p0 = base.unaryExpr([](double x) { return num::sigmoid(x); });
  return cfg.tau_attn * (attn_mean * p0);
}

Matrix appearance_embed(const store::FeatureDump& dump) { return appearance_embed(dump.image_small, dump.meta.grid); }

Matrix appearance_embed(std::span<const float> image_small, const Grid& grid) {
  const int n = grid.size();
  if (static_cast<int>(image_small.size()) != 3 * n) throw Error(ErrorKind::InvalidArgument, "image must be 3 x Hg x Wg");
  Matrix v(n, kAppearanceDim);
  for (int i = 0; i < n; ++i) {
    const double r = srgb_to_linear(image_small[static_cast<std::size_t>(i)]);
    const double g = srgb_to_linear(image_small[static_cast<std::size_t>(n + i)]);
    const double b = srgb_to_linear(image_small[static_cast<std::size_t>(2 * n + i)]);
    const double x = (0.4124564 * r + 0.3575761 * g + 0.1804375 * b) / 0.95047;
    const double y = 0.2126729 * r + 0.7151522 * g + 0.0721750 * b;
    const double z = (0.0193339 * r + 0.1191920 * g + 0.9503041 * b) / 1.08883;
    const double fx = lab_f(x);
    const double fy = lab_f(y);
    const double fz = lab_f(z);
    v(i, 0) = 116.0 * fy - 16.0;
    v(i, 1) = 500.0 * (fx - fy);
    v(i, 2) = 200.0 * (fy - fz);
  }
  for (int i = 0; i < n; ++i) {
    const int r0 = grid.row(i);
    const int c0 = grid.col(i);
    const int ra = std::max(0, r0 - 1);
    const int rb = std::min(grid.height - 1, r0 + 1);
    const int ca = std::max(0, c0 - 1);
    const int cb = std::min(grid.width - 1, c0 + 1);
    double sum = 0.0;
    int count = 0;
    for (int r = ra; r <= rb; ++r) {
      for (int c = ca; c <= cb; ++c) {
        sum += v(grid.index(r, c), 0);
        ++count;
      }
    }
    const double mean = sum / count;
    double sq = 0.0;
    for (int r = ra; r <= rb; ++r) {
      for (int c = ca; c <= cb; ++c) {
        const double dl = v(grid.index(r, c), 0) - mean;
        sq += dl * dl;
      }
    }
    v(i, 3) = mean;
    v(i, 4) = std::sqrt(sq / count);
  }
  for (int ch = 0; ch < kAppearanceDim; ++ch) {
    const double mean = v.col(ch).mean();
    const double var = (v.col(ch).array() - mean).square().mean();
    const double sd = std::max(std::sqrt(var), kAppearanceEps);
    v.col(ch) = (v.col(ch).array() - mean) / sd;
  }
  return v;
}

BinaryMask mask_from_logits(const Grid& grid, const Vector& logits) {
  return num::binarize(grid, logits.unaryExpr([](double x) { return num::sigmoid(x); }));
}

Vector l_img(const Matrix& v, const num::Prototype& u_fg, const num::Prototype& u_bg, const PacConfig& cfg) {
  return cfg.tau_img * (num::cos_map(v, u_fg) - num::cos_map(v, u_bg));
}

Vector fuse(const LogitMaps& maps, const PacConfig& cfg, bool gate_on) {
  if (!gate_on) return maps.base;
  Vector out = maps.base;
  if (cfg.w_sim != 0.0) out += cfg.w_sim * maps.sim;
  if (cfg.w_attn != 0.0) out += cfg.w_attn * maps.attn;
  if (cfg.w_img != 0.0) out += cfg.w_img * maps.img;
  return out;
}

ssp::PooledPrototypes appearance_prototypes(std::span<const Matrix> embeds, std::span<const Vector> masks) {
  return ssp::pool_prototypes(embeds, masks);
}

LogitMaps compute_maps(const BranchInputs& in, const ssp::SspConfig& ssp, const PacConfig& cfg) {
  const int n = static_cast<int>(in.features.rows());
  LogitMaps maps;
  const auto pred = ssp::predict_or_trivial(in.features, in.prototypes, ssp);
  maps.base = pred.base_logit;
  maps.sim = in.prototypes.complete() ? l_sim(in.features, *in.prototypes.fg, *in.prototypes.bg, cfg)
                                      : zero_if_incomplete(n);
  maps.attn = l_attn(in.attention, maps.base, cfg);
  maps.img = in.appearance_prototypes.complete()
                 ? l_img(in.appearance, *in.appearance_prototypes.fg, *in.appearance_prototypes.bg, cfg)
                 : zero_if_incomplete(n);
  maps.final = maps.base;
  return maps;
}

BranchInputs branch_inputs(const store::FeatureDump& query, std::span<const store::FeatureDump* const> supports,
                           const hls::Representation& rep, const tta::AdaptedHead& head,
                           const pgr::PgrConfig& pgr) {
  BranchInputs in;
  in.features = tta::apply_head(head, hls::representation_features(query, rep));
  std::vector<Matrix> feats;
  std::vector<Vector> masks;
  std::vector<Matrix> embeds;
  for (const auto* s : supports) {
    feats.push_back(tta::apply_head(head, hls::representation_features(*s, rep)));
    masks.push_back(s->soft_mask().values);
    embeds.push_back(appearance_embed(*s));
  }
  in.prototypes = ssp::pool_prototypes(feats, masks);
  in.attention = pgr::mean_attention(pgr::calibrate_dump(query, rep.dominant_layer(), pgr));
  in.appearance = appearance_embed(query);
  in.appearance_prototypes = appearance_prototypes(embeds, masks);
  return in;
}

GateReport refine_vote(const store::Episode& episode, const hls::Representation& rep, const tta::AdaptedHead& head,
                       const ssp::SspConfig& ssp, const pgr::PgrConfig& pgr, const PacConfig& cfg, int threshold) {
  GateReport report;
  report.gate = ResolvedGate{GateMode::Auto, threshold};
  const int k = episode.effective_shot();
  if (k < 2) throw Error(ErrorKind::InsufficientSupports, "refine vote needs at least two supports");
  std::vector<const store::FeatureDump*> rest;
  for (int i = 0; i < k; ++i) {
    rest.clear();
    for (int j = 0; j < k; ++j) {
      if (j != i) rest.push_back(&episode.support(j));
    }
    const auto& pseudo = episode.support(i);
    const auto in = branch_inputs(pseudo, rest, rep, head, pgr);
    const auto maps = compute_maps(in, ssp, cfg);
    const Grid grid = pseudo.meta.grid;
    const auto gt = pseudo.binary_mask();
    const double base_iou = num::binary_iou(mask_from_logits(grid, maps.base), gt);
    const double pac_iou = num::binary_iou(mask_from_logits(grid, fuse(maps, cfg, true)), gt);
    report.delta_iou.push_back(pac_iou - base_iou);
    if (pac_iou - base_iou > 0.0) ++report.positive_votes;
  }
  report.on = report.positive_votes >= threshold;
  return report;
}

GateReport decide_gate(const store::Episode& episode, const hls::Representation& rep, const tta::AdaptedHead& head,
                       const ssp::SspConfig& ssp, const pgr::PgrConfig& pgr, const PacConfig& cfg) {
  const ResolvedGate gate = resolve_gate(cfg.gate, std::max(1, episode.shot));
  if (!cfg.enabled || gate.mode == GateMode::Off) return GateReport{ResolvedGate{GateMode::Off, 0}, {}, 0, false};
  if (gate.mode == GateMode::AlwaysOn || gate.threshold == 0) return GateReport{gate, {}, 0, true};
  GateReport report = refine_vote(episode, rep, head, ssp, pgr, cfg, gate.threshold);
  return report;
}

} // namespace hera::pac
