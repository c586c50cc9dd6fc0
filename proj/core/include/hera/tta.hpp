#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "hera/feature_store.hpp"
#include "hera/hls.hpp"

namespace hera::tta {

/// M0: no head. M1: zero-initialized head, frozen. M2: head trained at test time.
enum class HeadVariant { M0, M1, M2 };

/// Residual MLP parameters: out = x + gelu(x W1 + b1) W2 + b2 per token row.
struct HeadParams {
  Matrix w1;  // D x Dh
  Vector b1;  // Dh
  Matrix w2;  // Dh x D
  Vector b2;  // D

  static HeadParams zeros(int dim, int hidden);
  std::size_t size() const;
  double squared_norm() const;
  bool all_finite() const;
};

struct AdaptedHead {
  HeadVariant variant = HeadVariant::M2;
  HeadParams params;
  HeadParams adam_m;
  HeadParams adam_v;
  int step = 0;

  /// W1 ~ N(0, 1/D), W2 = 0, biases 0, so the head starts as the identity.
  static AdaptedHead zero_init(int dim, int hidden, HeadVariant variant, std::uint64_t seed);
  int dim() const { return static_cast<int>(params.b2.size()); }
  /// 2*D*Dh + Dh + D for M1/M2, 0 for M0.
  std::size_t trainable_parameters() const;
};

Matrix apply_head(const AdaptedHead& head, const Matrix& feat);

double gelu(double x);
double gelu_grad(double x);

struct TtaConfig {
  double lr = 1.3e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps_adam = 1e-8;
  int augment_views = 2;
  int hidden_dim = 0;  // 0: same as the feature width
  HeadVariant variant = HeadVariant::M2;
  std::uint64_t init_seed = 0;

  void validate() const;
};

/// Leave-one-out training data at the routed representation.
struct LooProblem {
  std::vector<Matrix> feats;  // per support, N x D (before the head)
  std::vector<Vector> masks;  // per support, soft masks
  double kappa = 10.0;
};

LooProblem make_problem(const store::Episode& episode, const hls::Representation& rep, double kappa);

struct LossAndGrad {
  double loss = 0.0;
  HeadParams grad;
  int folds = 0;
};

/// Mean BCE over every (pseudo-query i, n-subset of the other supports) fold,
/// with prototypes built from head-transformed support features. Gradients
/// are exact, through the head, the prototypes, the cosines and the BCE.
LossAndGrad combination_loss(const LooProblem& problem, const AdaptedHead& head, int n, bool with_grad = true);

/// The n = K-1 leave-one-out loss.
double loo_loss(const LooProblem& problem, const AdaptedHead& head);
double loo_loss(const store::Episode& episode, const AdaptedHead& head, const hls::RoutingDecision& decision,
                double kappa);

/// Bias-corrected Adam on a flat parameter block; t is the post-increment step.
void adam_update(std::span<double> params, std::span<const double> grads, std::span<double> m, std::span<double> v,
                 int t, const TtaConfig& cfg);

/// One Adam step on W1, b1, W2, b2. M0 and M1 heads are returned untouched.
void adam_step(AdaptedHead& head, const HeadParams& grads, const TtaConfig& cfg);

struct AdaptResult {
  AdaptedHead head;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  std::vector<double> step_losses;  // combination loss at each n before its step
  bool aborted = false;             // a non-finite loss stopped adaptation
};

/// K-1 Adam steps, step n on the n-subset combination loss. Requires at
/// least two (possibly augmented) supports.
AdaptResult adapt(const store::Episode& episode, const hls::RoutingDecision& decision, const TtaConfig& cfg,
                  double kappa);

/// Head checkpoint in the HFD1 container: tensors head.W1, head.b1, head.W2,
/// head.b2 and their Adam moments (adam.m.*, adam.v.*), stored as f32.
std::vector<unsigned char> encode_head(const AdaptedHead& head);
AdaptedHead decode_head(const std::vector<unsigned char>& bytes);
void write_head(const AdaptedHead& head, const std::filesystem::path& path);
AdaptedHead read_head(const std::filesystem::path& path);

struct Offset {
  int dy = 0;
  int dx = 0;
};

/// Copies foreground tokens, image cells and mask to the grid shifted by
/// `offset`, overwriting destinations; mask' = clip(M + shifted M).
/// Cells shifted off the grid are dropped. Attention logits are kept.
store::FeatureDump soft_copy_at(const store::FeatureDump& support, Offset offset);

/// Uniform offset keeping the foreground bounding box on the grid, excluding
/// the identity placement when any other placement exists.
Offset sample_offset(const store::FeatureDump& support, std::uint64_t seed);

store::FeatureDump soft_copy(const store::FeatureDump& support, std::uint64_t seed);

/// A 1-shot episode becomes `views` supports: the original plus views-1
/// soft copies. Episodes with two or more supports are returned unchanged.
store::Episode augment_one_shot(const store::Episode& episode, int views, std::uint64_t seed);

} // namespace hera::tta
