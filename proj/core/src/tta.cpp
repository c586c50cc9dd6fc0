#include "hera/tta.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "hera/error.hpp"
#include "hera/numerics.hpp"
#include "hera/seed.hpp"

namespace hera::tta {
namespace {

constexpr double kProbClamp = 1e-7;

struct HeadForward {
  Matrix pre;  // X W1 + b1
  Matrix out;
};

HeadForward forward(const AdaptedHead& head, const Matrix& x) {
  HeadForward f;
  if (head.variant == HeadVariant::M0) {
    f.out = x;
    return f;
  }
  const auto& p = head.params;
  f.pre = (x * p.w1).rowwise() + p.b1.transpose();
  Matrix act = f.pre.unaryExpr([](double v) { return gelu(v); });
  f.out = x + act * p.w2;
  f.out.rowwise() += p.b2.transpose();
  return f;
}

void backward(const AdaptedHead& head, const Matrix& x, const HeadForward& f, const Matrix& d_out, HeadParams& g) {
  if (head.variant == HeadVariant::M0) return;
  const auto& p = head.params;
  Matrix act = f.pre.unaryExpr([](double v) { return gelu(v); });
  g.w2.noalias() += act.transpose() * d_out;
  g.b2 += d_out.colwise().sum().transpose();
  Matrix d_act = d_out * p.w2.transpose();
  Matrix d_pre = d_act.cwiseProduct(f.pre.unaryExpr([](double v) { return gelu_grad(v); }));
  g.w1.noalias() += x.transpose() * d_pre;
  g.b1 += d_pre.colwise().sum().transpose();
}

template <typename F>
void for_each_param_block(HeadParams& a, F&& f) {
  f(std::span<double>(a.w1.data(), static_cast<std::size_t>(a.w1.size())));
  f(std::span<double>(a.b1.data(), static_cast<std::size_t>(a.b1.size())));
  f(std::span<double>(a.w2.data(), static_cast<std::size_t>(a.w2.size())));
  f(std::span<double>(a.b2.data(), static_cast<std::size_t>(a.b2.size())));
}

std::vector<std::span<double>> blocks(HeadParams& a) {
  std::vector<std::span<double>> out;
  for_each_param_block(a, [&](std::span<double> s) { out.push_back(s); });
  return out;
}

// Enumerates n-subsets of `pool` in lexicographic order.
template <typename F>
void for_each_subset(const std::vector<int>& pool, int n, F&& f) {
  const int m = static_cast<int>(pool.size());
  if (n <= 0 || n > m) return;
  std::vector<int> idx(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
  std::vector<int> chosen(static_cast<std::size_t>(n));
  while (true) {
    for (int i = 0; i < n; ++i) chosen[static_cast<std::size_t>(i)] = pool[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])];
    f(chosen);
    int i = n - 1;
    while (i >= 0 && idx[static_cast<std::size_t>(i)] == m - n + i) --i;
    if (i < 0) break;
    ++idx[static_cast<std::size_t>(i)];
    for (int j = i + 1; j < n; ++j) idx[static_cast<std::size_t>(j)] = idx[static_cast<std::size_t>(j - 1)] + 1;
  }
}

// d cos(h, p) / d h for every row h of `h`, scaled per row by `scale`.
// cos_row and norms are precomputed.
Matrix cos_grad_rows(const Matrix& h, const Vector& h_norm, const Vector& p, double p_norm, const Vector& cos_row,
                     const Vector& scale) {
  Matrix out(h.rows(), h.cols());
  for (Eigen::Index x = 0; x < h.rows(); ++x) {
    if (h_norm[x] == 0.0 || scale[x] == 0.0) {
      out.row(x).setZero();
      continue;
    }
    out.row(x) = scale[x] * (p.transpose() / (h_norm[x] * p_norm) - cos_row[x] * h.row(x) / (h_norm[x] * h_norm[x]));
  }
  return out;
}

// sum_x scale_x * d cos(h_x, p) / d p
Vector cos_grad_proto(const Matrix& h, const Vector& h_norm, const Vector& p, double p_norm, const Vector& cos_row,
                      const Vector& scale) {
  Vector acc = Vector::Zero(p.size());
  double cos_weight = 0.0;
  for (Eigen::Index x = 0; x < h.rows(); ++x) {
    if (h_norm[x] == 0.0 || scale[x] == 0.0) continue;
    acc += (scale[x] / (h_norm[x] * p_norm)) * h.row(x).transpose();
    cos_weight += scale[x] * cos_row[x];
  }
  return acc - (cos_weight / (p_norm * p_norm)) * p;
}

} // namespace

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

double gelu_grad(double x) {
  constexpr double kInvSqrt2Pi = 0.39894228040143267794;
  return 0.5 * (1.0 + std::erf(x / std::sqrt(2.0))) + x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

HeadParams HeadParams::zeros(int dim, int hidden) {
  return HeadParams{Matrix::Zero(dim, hidden), Vector::Zero(hidden), Matrix::Zero(hidden, dim), Vector::Zero(dim)};
}

std::size_t HeadParams::size() const {
  return static_cast<std::size_t>(w1.size() + b1.size() + w2.size() + b2.size());
}

double HeadParams::squared_norm() const {
  return w1.squaredNorm() + b1.squaredNorm() + w2.squaredNorm() + b2.squaredNorm();
}

bool HeadParams::all_finite() const {
  return w1.allFinite() && b1.allFinite() && w2.allFinite() && b2.allFinite();
}

AdaptedHead AdaptedHead::zero_init(int dim, int hidden, HeadVariant variant, std::uint64_t seed) {
  if (dim <= 0) throw Error(ErrorKind::InvalidArgument, "head width must be positive");
  if (hidden <= 0) hidden = dim;
  AdaptedHead h;
  h.variant = variant;
  h.params = HeadParams::zeros(dim, hidden);
  h.adam_m = HeadParams::zeros(dim, hidden);
  h.adam_v = HeadParams::zeros(dim, hidden);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(dim)));
  for (Eigen::Index i = 0; i < h.params.w1.size(); ++i) h.params.w1.data()[i] = normal(rng);
  return h;
}

std::size_t AdaptedHead::trainable_parameters() const {
  return variant == HeadVariant::M0 ? 0 : params.size();
}

Matrix apply_head(const AdaptedHead& head, const Matrix& feat) {
  if (head.variant == HeadVariant::M0) return feat;
  if (feat.cols() != head.params.w1.rows()) throw Error(ErrorKind::InvalidArgument, "head width mismatch");
  return forward(head, feat).out;
}

void TtaConfig::validate() const {
  if (!(lr > 0.0)) throw Error(ErrorKind::BadConfig, "tta lr must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw Error(ErrorKind::BadConfig, "tta Adam betas must lie in [0,1)");
  }
  if (!(eps_adam > 0.0)) throw Error(ErrorKind::BadConfig, "tta eps must be positive");
  if (augment_views < 0) throw Error(ErrorKind::BadConfig, "tta augment_views must be non-negative");
  if (hidden_dim < 0) throw Error(ErrorKind::BadConfig, "tta hidden_dim must be non-negative");
}

LooProblem make_problem(const store::Episode& episode, const hls::Representation& rep, double kappa) {
  LooProblem p;
  p.kappa = kappa;
  for (int i = 0; i < episode.effective_shot(); ++i) {
    p.feats.push_back(hls::representation_features(episode.support(i), rep));
    p.masks.push_back(episode.support(i).soft_mask().values);
  }
  return p;
}

LossAndGrad combination_loss(const LooProblem& problem, const AdaptedHead& head, int n, bool with_grad) {
  const int k = static_cast<int>(problem.feats.size());
  if (k < 2) throw Error(ErrorKind::InsufficientSupports, "leave-one-out loss needs at least two supports");
  if (n < 1 || n > k - 1) throw Error(ErrorKind::InvalidArgument, "subset size must lie in [1, K-1]");
  const double kappa = problem.kappa;

  std::vector<HeadForward> fwd;
  std::vector<Vector> norms;
  std::vector<Vector> fg_sum;
  std::vector<Vector> bg_sum;
  std::vector<double> fg_w;
  std::vector<double> bg_w;
  for (int s = 0; s < k; ++s) {
    fwd.push_back(forward(head, problem.feats[static_cast<std::size_t>(s)]));
    const Matrix& h = fwd.back().out;
    const Vector& m = problem.masks[static_cast<std::size_t>(s)];
    const Vector mb = Vector::Ones(m.size()) - m;
    norms.push_back(h.rowwise().norm());
    fg_sum.push_back(h.transpose() * m);
    bg_sum.push_back(h.transpose() * mb);
    fg_w.push_back(m.sum());
    bg_w.push_back(mb.sum());
  }

  const int dim = static_cast<int>(problem.feats.front().cols());
  const int hidden = head.variant == HeadVariant::M0 ? 1 : static_cast<int>(head.params.b1.size());
  std::vector<Matrix> d_h;
  if (with_grad) {
    for (int s = 0; s < k; ++s) d_h.push_back(Matrix::Zero(problem.feats[static_cast<std::size_t>(s)].rows(), dim));
  }

  struct Fold {
    int query;
    std::vector<int> subset;
  };
  std::vector<Fold> folds;
  for (int q = 0; q < k; ++q) {
    std::vector<int> others;
    for (int s = 0; s < k; ++s) {
      if (s != q) others.push_back(s);
    }
    for_each_subset(others, n, [&](const std::vector<int>& sub) {
      double wf = 0.0;
      double wb = 0.0;
      Vector sf = Vector::Zero(dim);
      Vector sb = Vector::Zero(dim);
      for (int s : sub) {
        wf += fg_w[static_cast<std::size_t>(s)];
        wb += bg_w[static_cast<std::size_t>(s)];
        sf += fg_sum[static_cast<std::size_t>(s)];
        sb += bg_sum[static_cast<std::size_t>(s)];
      }
      if (wf > 0.0 && wb > 0.0 && sf.norm() > 0.0 && sb.norm() > 0.0) folds.push_back(Fold{q, sub});
    });
  }

  LossAndGrad out;
  out.grad = HeadParams::zeros(dim, hidden);
  out.folds = static_cast<int>(folds.size());
  if (folds.empty()) return out;
  const double fold_scale = 1.0 / static_cast<double>(folds.size());

  for (const auto& fold : folds) {
    double wf = 0.0;
    double wb = 0.0;
    Vector pf = Vector::Zero(dim);
    Vector pb = Vector::Zero(dim);
    for (int s : fold.subset) {
      wf += fg_w[static_cast<std::size_t>(s)];
      wb += bg_w[static_cast<std::size_t>(s)];
      pf += fg_sum[static_cast<std::size_t>(s)];
      pb += bg_sum[static_cast<std::size_t>(s)];
    }
    pf /= wf;
    pb /= wb;
    const double pf_norm = pf.norm();
    const double pb_norm = pb.norm();

    const auto qi = static_cast<std::size_t>(fold.query);
    const Matrix& hq = fwd[qi].out;
    const Vector& hn = norms[qi];
    const Vector& y = problem.masks[qi];
    const auto rows = hq.rows();
    Vector dots_f = hq * pf;
    Vector dots_b = hq * pb;
    Vector cf(rows);
    Vector cb(rows);
    Vector dz(rows);
    double fold_loss = 0.0;
    for (Eigen::Index x = 0; x < rows; ++x) {
      cf[x] = hn[x] == 0.0 ? 0.0 : dots_f[x] / (hn[x] * pf_norm);
      cb[x] = hn[x] == 0.0 ? 0.0 : dots_b[x] / (hn[x] * pb_norm);
      const double z = kappa * (cf[x] - cb[x]);
      const double p = num::sigmoid(z);
      const double pc = std::clamp(p, kProbClamp, 1.0 - kProbClamp);
      fold_loss -= y[x] * std::log(pc) + (1.0 - y[x]) * std::log(1.0 - pc);
      dz[x] = (p == pc) ? (p - y[x]) / static_cast<double>(rows) : 0.0;
    }
    out.loss += fold_scale * fold_loss / static_cast<double>(rows);
    if (!with_grad) continue;

    const Vector scale_f = (fold_scale * kappa) * dz;
    const Vector scale_b = -(fold_scale * kappa) * dz;
    d_h[qi] += cos_grad_rows(hq, hn, pf, pf_norm, cf, scale_f);
    d_h[qi] += cos_grad_rows(hq, hn, pb, pb_norm, cb, scale_b);
    const Vector d_pf = cos_grad_proto(hq, hn, pf, pf_norm, cf, scale_f) / wf;
    const Vector d_pb = cos_grad_proto(hq, hn, pb, pb_norm, cb, scale_b) / wb;
    for (int s : fold.subset) {
      const auto si = static_cast<std::size_t>(s);
      const Vector& m = problem.masks[si];
      d_h[si].noalias() += m * d_pf.transpose();
      d_h[si].noalias() += (Vector::Ones(m.size()) - m) * d_pb.transpose();
    }
  }

  if (with_grad && head.variant != HeadVariant::M0) {
    for (int s = 0; s < k; ++s) {
      const auto si = static_cast<std::size_t>(s);
      backward(head, problem.feats[si], fwd[si], d_h[si], out.grad);
    }
  }
  return out;
}

double loo_loss(const LooProblem& problem, const AdaptedHead& head) {
  const int k = static_cast<int>(problem.feats.size());
  return combination_loss(problem, head, k - 1, false).loss;
}

double loo_loss(const store::Episode& episode, const AdaptedHead& head, const hls::RoutingDecision& decision,
                double kappa) {
  return loo_loss(make_problem(episode, decision.rep, kappa), head);
}

void adam_update(std::span<double> params, std::span<const double> grads, std::span<double> m, std::span<double> v,
                 int t, const TtaConfig& cfg) {
  if (params.size() != grads.size() || params.size() != m.size() || params.size() != v.size()) {
    throw Error(ErrorKind::InvalidArgument, "Adam block size mismatch");
  }
  if (t < 1) throw Error(ErrorKind::InvalidArgument, "Adam step counter starts at 1");
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grads[i];
    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grads[i] * grads[i];
    const double m_hat = m[i] / c1;
    const double v_hat = v[i] / c2;
    params[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps_adam);
  }
}

void adam_step(AdaptedHead& head, const HeadParams& grads, const TtaConfig& cfg) {
  if (head.variant != HeadVariant::M2) return;
  if (grads.size() != head.params.size()) throw Error(ErrorKind::InvalidArgument, "gradient shape mismatch");
  ++head.step;
  HeadParams g = grads;
  auto p = blocks(head.params);
  auto gb = blocks(g);
  auto mb = blocks(head.adam_m);
  auto vb = blocks(head.adam_v);
  for (std::size_t i = 0; i < p.size(); ++i) adam_update(p[i], gb[i], mb[i], vb[i], head.step, cfg);
}

AdaptResult adapt(const store::Episode& episode, const hls::RoutingDecision& decision, const TtaConfig& cfg,
                  double kappa) {
  cfg.validate();
  const int k = episode.effective_shot();
  if (k < 2) {
    throw Error(ErrorKind::InsufficientSupports, "adaptation needs at least two supports (augment 1-shot episodes)");
  }
  const LooProblem problem = make_problem(episode, decision.rep, kappa);
  const int dim = static_cast<int>(problem.feats.front().cols());
  AdaptResult out;
  out.head = AdaptedHead::zero_init(dim, cfg.hidden_dim > 0 ? cfg.hidden_dim : dim, cfg.variant, cfg.init_seed);
  out.initial_loss = loo_loss(problem, out.head);
  out.final_loss = out.initial_loss;
  if (cfg.variant != HeadVariant::M2) return out;
  if (!std::isfinite(out.initial_loss)) {
    out.aborted = true;
    return out;
  }

  for (int n = 1; n <= k - 1; ++n) {
    const LossAndGrad lg = combination_loss(problem, out.head, n, true);
    out.step_losses.push_back(lg.loss);
    if (!std::isfinite(lg.loss) || !lg.grad.all_finite()) {
      out.aborted = true;
      break;
    }
    AdaptedHead next = out.head;
    adam_step(next, lg.grad, cfg);
    const double after = loo_loss(problem, next);
    if (!next.params.all_finite() || !std::isfinite(after)) {
      out.aborted = true;
      break;
    }
    out.head = std::move(next);
    out.final_loss = after;
  }
  return out;
}

store::FeatureDump soft_copy_at(const store::FeatureDump& support, Offset offset) {
  if (!support.mask) throw Error(ErrorKind::MissingMask, "soft copy needs a support mask");
  const Grid g = support.meta.grid;
  const int n = g.size();
  const int d = support.channels;
  store::FeatureDump out = support;
  const auto& src_mask = *support.mask;
  auto& dst_mask = *out.mask;
  for (int r = 0; r < g.height; ++r) {
    for (int c = 0; c < g.width; ++c) {
      const int src = g.index(r, c);
      if (src_mask[static_cast<std::size_t>(src)] == 0) continue;
      const int tr = r + offset.dy;
      const int tc = c + offset.dx;
      if (tr < 0 || tr >= g.height || tc < 0 || tc >= g.width) continue;
      const int dst = g.index(tr, tc);
      for (int l = 0; l < support.layers; ++l) {
        const std::size_t base = static_cast<std::size_t>(l) * n * d;
        std::copy_n(support.tokens.begin() + static_cast<std::ptrdiff_t>(base + static_cast<std::size_t>(src) * d), d,
                    out.tokens.begin() + static_cast<std::ptrdiff_t>(base + static_cast<std::size_t>(dst) * d));
      }
      for (int ch = 0; ch < 3; ++ch) {
        out.image_small[static_cast<std::size_t>(ch * n + dst)] = support.image_small[static_cast<std::size_t>(ch * n + src)];
      }
      dst_mask[static_cast<std::size_t>(dst)] = 1;
    }
  }
  return out;
}

Offset sample_offset(const store::FeatureDump& support, std::uint64_t seed) {
  if (!support.mask) throw Error(ErrorKind::MissingMask, "soft copy needs a support mask");
  const Grid g = support.meta.grid;
  int r0 = g.height;
  int r1 = -1;
  int c0 = g.width;
  int c1 = -1;
  for (int i = 0; i < g.size(); ++i) {
    if ((*support.mask)[static_cast<std::size_t>(i)] == 0) continue;
    r0 = std::min(r0, g.row(i));
    r1 = std::max(r1, g.row(i));
    c0 = std::min(c0, g.col(i));
    c1 = std::max(c1, g.col(i));
  }
  if (r1 < 0) return Offset{};
  const int dy_lo = -r0;
  const int dy_hi = g.height - 1 - r1;
  const int dx_lo = -c0;
  const int dx_hi = g.width - 1 - c1;
  const std::uint64_t ny = static_cast<std::uint64_t>(dy_hi - dy_lo + 1);
  const std::uint64_t nx = static_cast<std::uint64_t>(dx_hi - dx_lo + 1);
  const std::uint64_t total = ny * nx;
  if (total <= 1) return Offset{};
  // Enumerate placements row-major and skip the identity one.
  const std::uint64_t identity = static_cast<std::uint64_t>(-dy_lo) * nx + static_cast<std::uint64_t>(-dx_lo);
  std::mt19937_64 rng(seed);
  std::uint64_t pick = rng() % (total - 1);
  if (pick >= identity) ++pick;
  return Offset{dy_lo + static_cast<int>(pick / nx), dx_lo + static_cast<int>(pick % nx)};
}

store::FeatureDump soft_copy(const store::FeatureDump& support, std::uint64_t seed) {
  return soft_copy_at(support, sample_offset(support, seed));
}

store::Episode augment_one_shot(const store::Episode& episode, int views, std::uint64_t seed) {
  if (episode.effective_shot() != 1 || views < 2) return episode;
  store::Episode out = episode;
  for (int v = 1; v < views; ++v) {
    out.supports.push_back(std::make_shared<const store::FeatureDump>(
        soft_copy(episode.support(0), derive_seed(seed, {static_cast<std::uint64_t>(v)}))));
  }
  return out;
}

} // namespace hera::tta
