#include "hera/numerics.hpp"

#include <algorithm>
#include <cmath>

#include "hera/error.hpp"

namespace hera::num {

Prototype masked_avg_pool(const Matrix& feat, const Vector& weights, PrototypeKind kind) {
  if (weights.size() != feat.rows()) throw Error(ErrorKind::InvalidArgument, "weights/features length mismatch");
  const double total = weights.sum();
  if (!(total > 0.0)) throw Error(ErrorKind::EmptyMask, "masked pooling over an empty mask");
  Vector acc = feat.transpose() * weights;
  return Prototype{acc / total, kind};
}

double cosine(const Vector& a, const Vector& b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return a.dot(b) / (na * nb);
}

Vector cos_map(const Matrix& feat, const Prototype& proto) {
  const double pn = proto.vec.norm();
  if (!(pn > 0.0)) throw Error(ErrorKind::ZeroProto, "cosine against a zero prototype");
  if (proto.vec.size() != feat.cols()) throw Error(ErrorKind::InvalidArgument, "prototype/feature width mismatch");
  Vector dots = feat * proto.vec;
  Vector out(feat.rows());
  for (Eigen::Index i = 0; i < feat.rows(); ++i) {
    const double fn = feat.row(i).norm();
    out[i] = fn == 0.0 ? 0.0 : std::clamp(dots[i] / (fn * pn), -1.0, 1.0);
  }
  return out;
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

ProbMap fgbg_softmax(const Vector& s_fg, const Vector& s_bg, double kappa) {
  if (!(kappa > 0.0)) throw Error(ErrorKind::InvalidArgument, "kappa must be positive");
  if (s_fg.size() != s_bg.size()) throw Error(ErrorKind::InvalidArgument, "score length mismatch");
  ProbMap p{Vector(s_fg.size())};
  for (Eigen::Index i = 0; i < s_fg.size(); ++i) {
    const double a = kappa * s_fg[i];
    const double b = kappa * s_bg[i];
    const double m = std::max(a, b);
    const double ea = std::exp(a - m);
    const double eb = std::exp(b - m);
    p.values[i] = ea / (ea + eb);
  }
  return p;
}

BinaryMask binarize(const Grid& grid, const Vector& values, double threshold) {
  if (values.size() != grid.size()) throw Error(ErrorKind::InvalidArgument, "values do not match grid");
  BinaryMask m{grid, std::vector<std::uint8_t>(static_cast<std::size_t>(grid.size()))};
  for (int i = 0; i < grid.size(); ++i) m.values[static_cast<std::size_t>(i)] = values[i] >= threshold ? 1 : 0;
  return m;
}

double binary_iou(const BinaryMask& pred, const BinaryMask& gt) {
  if (pred.grid != gt.grid || pred.values.size() != gt.values.size()) {
    throw Error(ErrorKind::InvalidArgument, "IoU of masks with different shapes");
  }
  std::size_t inter = 0;
  std::size_t uni = 0;
  for (std::size_t i = 0; i < pred.values.size(); ++i) {
    const bool a = pred.values[i] != 0;
    const bool b = gt.values[i] != 0;
    inter += (a && b) ? 1 : 0;
    uni += (a || b) ? 1 : 0;
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

SoftMask resample_mask(const BinaryMask& mask, const Grid& to) {
  if (to.height <= 0 || to.width <= 0) throw Error(ErrorKind::InvalidArgument, "target grid must be non-empty");
  const Grid from = mask.grid;
  SoftMask out{to, Vector::Zero(to.size())};
  // Source pixel (r, c) covers [r, r+1) x [c, c+1); target cell (R, C) covers
  // [R*sy, (R+1)*sy) x [C*sx, (C+1)*sx) in source units.
  const double sy = static_cast<double>(from.height) / to.height;
  const double sx = static_cast<double>(from.width) / to.width;
  for (int R = 0; R < to.height; ++R) {
    const double y0 = R * sy;
    const double y1 = (R + 1) * sy;
    for (int C = 0; C < to.width; ++C) {
      const double x0 = C * sx;
      const double x1 = (C + 1) * sx;
      double acc = 0.0;
      for (int r = static_cast<int>(std::floor(y0)); r < std::min(from.height, static_cast<int>(std::ceil(y1))); ++r) {
        const double wy = std::min<double>(r + 1, y1) - std::max<double>(r, y0);
        if (wy <= 0.0) continue;
        for (int c = static_cast<int>(std::floor(x0)); c < std::min(from.width, static_cast<int>(std::ceil(x1))); ++c) {
          const double wx = std::min<double>(c + 1, x1) - std::max<double>(c, x0);
          if (wx <= 0.0) continue;
          if (mask.values[static_cast<std::size_t>(from.index(r, c))] != 0) acc += wy * wx;
        }
      }
      out.values[to.index(R, C)] = std::clamp(acc / (sy * sx), 0.0, 1.0);
    }
  }
  return out;
}

Matrix row_softmax(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double m = logits.row(i).maxCoeff();
    double z = 0.0;
    for (Eigen::Index j = 0; j < logits.cols(); ++j) {
      out(i, j) = std::exp(logits(i, j) - m);
      z += out(i, j);
    }
    out.row(i) /= z;
  }
  return out;
}

double row_entropy_mean(const Matrix& logits) {
  if (logits.rows() == 0 || logits.cols() == 0) throw Error(ErrorKind::InvalidArgument, "empty logit matrix");
  double total = 0.0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double m = logits.row(i).maxCoeff();
    double z = 0.0;
    double weighted = 0.0;
    for (Eigen::Index j = 0; j < logits.cols(); ++j) {
      const double shifted = logits(i, j) - m;
      const double e = std::exp(shifted);
      z += e;
      weighted += e * shifted;
    }
    // H = log Z - E[x - m]
    total += std::log(z) - weighted / z;
  }
  const double mean = total / static_cast<double>(logits.rows());
  return std::clamp(mean, 0.0, std::log(static_cast<double>(logits.cols())));
}

double bernoulli_entropy_mean(const Vector& p) {
  if (p.size() == 0) return 0.0;
  double total = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    const double q = std::clamp(p[i], 0.0, 1.0);
    if (q > 0.0) total -= q * std::log(q);
    if (q < 1.0) total -= (1.0 - q) * std::log(1.0 - q);
  }
  return total / static_cast<double>(p.size());
}

} // namespace hera::num
