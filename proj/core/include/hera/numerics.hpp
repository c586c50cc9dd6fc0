#pragma once

#include "hera/types.hpp"

namespace hera::num {

enum class PrototypeKind { Foreground, Background };

struct Prototype {
  Vector vec;
  PrototypeKind kind = PrototypeKind::Foreground;
};

/// Foreground probability per token; the background probability is always
/// the complement 1 - p.
struct ProbMap {
  Vector values;
};

/// sum_i w_i * feat_i / sum_i w_i. Throws Error{EmptyMask} when the weights
/// sum to zero.
Prototype masked_avg_pool(const Matrix& feat, const Vector& weights,
                          PrototypeKind kind = PrototypeKind::Foreground);

/// Cosine of every row against the prototype; zero-norm rows map to 0.
/// Throws Error{ZeroProto} for a zero prototype.
Vector cos_map(const Matrix& feat, const Prototype& proto);
double cosine(const Vector& a, const Vector& b);

/// Two-way softmax exp(k*s_fg) / (exp(k*s_fg) + exp(k*s_bg)), max-shifted.
ProbMap fgbg_softmax(const Vector& s_fg, const Vector& s_bg, double kappa);
double sigmoid(double x);

BinaryMask binarize(const Grid& grid, const Vector& values, double threshold = 0.5);

/// |pred & gt| / |pred | gt|, with an empty union scoring 1.
double binary_iou(const BinaryMask& pred, const BinaryMask& gt);

/// Area-averaged resampling of a binary mask onto another grid.
SoftMask resample_mask(const BinaryMask& mask, const Grid& to);

/// Row-wise softmax of a logit matrix.
Matrix row_softmax(const Matrix& logits);

/// Mean over rows of the natural-log entropy of softmax(row).
double row_entropy_mean(const Matrix& logits);

/// Mean Bernoulli entropy of a probability vector (natural log, 0 log 0 = 0).
double bernoulli_entropy_mean(const Vector& p);

} // namespace hera::num
