#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <functional>

#include "hera/error.hpp"
#include "hera/hls.hpp"
#include "hera/synthetic.hpp"
#include "support/test_util.hpp"

using namespace hera;

namespace {

store::Episode map_dumps(const store::Episode& ep, const std::function<void(store::FeatureDump&)>& fn) {
  store::Episode out = ep;
  out.supports.clear();
  for (const auto& s : ep.supports) {
    auto d = *s;
    fn(d);
    out.supports.push_back(std::make_shared<const store::FeatureDump>(std::move(d)));
  }
  auto q = *ep.query;
  fn(q);
  out.query = std::make_shared<const store::FeatureDump>(std::move(q));
  return out;
}

void copy_layer_everywhere(store::FeatureDump& d, int src) {
  const std::size_t block = static_cast<std::size_t>(d.tokens_per_layer()) * d.channels;
  for (int l = 0; l < d.layers; ++l) {
    if (l == src) continue;
    std::copy_n(d.tokens.begin() + static_cast<std::ptrdiff_t>(src * block), block,
                d.tokens.begin() + static_cast<std::ptrdiff_t>(l * block));
  }
}

synth::SyntheticSpec spec_default() {
  synth::SyntheticSpec s;
  s.episodes = 10;
  return s;
}

} // namespace

TEST(Etr, PlantedLayerNearZeroNoiseLayerWorse) {
  auto spec = spec_default();
  spec.margin = 12.0;
  for (int i = 0; i < 5; ++i) {
    const auto ep = synth::gen_synthetic_episode(spec, 1, i);
    const double planted = hls::etr(ep, hls::Representation::single(spec.planted_layer), {});
    const double noise = hls::etr(ep, hls::Representation::single(5), {});
    EXPECT_LT(planted, 0.05);
    EXPECT_GE(noise, 0.4);
    EXPECT_LE(noise, 0.9);
    EXPECT_GT(noise, planted);
  }
}

TEST(Etr, RequiresTwoSupports) {
  auto spec = spec_default();
  spec.shot = 1;
  const auto ep = synth::gen_synthetic_episode(spec, 1, 0);
  try {
    hls::etr(ep, hls::Representation::single(17), {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InsufficientSupports);
  }
}

TEST(Etr, InvariantToPerLayerRescaling) {
  const auto ep = synth::gen_synthetic_episode(spec_default(), 2, 0);
  const auto scaled = map_dumps(ep, [](store::FeatureDump& d) {
    const std::size_t block = static_cast<std::size_t>(d.tokens_per_layer()) * d.channels;
    for (std::size_t i = 0; i < d.tokens.size(); ++i) d.tokens[i] *= 0.5f + static_cast<float>(i / block);
  });
  for (int l : {12, 17, 23}) {
    EXPECT_NEAR(hls::etr(ep, hls::Representation::single(l), {}), hls::etr(scaled, hls::Representation::single(l), {}),
                1e-12);
  }
}

TEST(SelectSingle, RecoversPlantedLayer) {
  const auto spec = spec_default();
  int hits = 0;
  for (int i = 0; i < 10; ++i) {
    hits += hls::select_single(synth::gen_synthetic_episode(spec, 3, i), {}, {}).layer == spec.planted_layer;
  }
  EXPECT_GE(hits, 9);
}

TEST(SelectSingle, IdenticalLayersTieToDeepest) {
  const auto ep = map_dumps(synth::gen_synthetic_episode(spec_default(), 4, 0),
                            [](store::FeatureDump& d) { copy_layer_everywhere(d, 17); });
  EXPECT_EQ(hls::select_single(ep, {}, {}).layer, 23);
}

TEST(SelectSingle, SingleCandidate) {
  hls::HlsConfig cfg;
  cfg.candidates = {15};
  cfg.anchor_layer = 15;
  EXPECT_EQ(hls::select_single(synth::gen_synthetic_episode(spec_default(), 5, 0), cfg, {}).layer, 15);
}

TEST(SelectSingle, Deterministic) {
  const auto ep = synth::gen_synthetic_episode(spec_default(), 6, 0);
  const auto a = hls::select_single(ep, {}, {});
  const auto b = hls::select_single(ep, {}, {});
  EXPECT_EQ(a.layer, b.layer);
  EXPECT_EQ(a.per_layer_risk, b.per_layer_risk);
}

TEST(FusionWeights, SingletonPool) {
  const auto w = hls::fusion_weights({23}, {{23, 0.7}}, {});
  ASSERT_EQ(w.size(), 1u);
  EXPECT_EQ(w[0], 1.0);
}

TEST(FusionWeights, HandComputedExample) {
  hls::HlsConfig cfg;
  cfg.beta = 10.0;
  cfg.tau_fusion = 2.0;
  const auto w = hls::fusion_weights({17, 23}, {{17, 0.2}, {23, 0.4}}, cfg);
  // logits: -10*0.2 - 6/2 = -5 and -10*0.4 - 0 = -4
  const auto o = oracle::softmax({-5.0, -4.0});
  EXPECT_NEAR(w[0], o[0], 1e-15);
  EXPECT_NEAR(w[0], 1.0 / (1.0 + std::exp(1.0)), 1e-15);
  EXPECT_NEAR(w[1], o[1], 1e-15);
}

TEST(FusionWeights, LimitsAndTauZero) {
  hls::HlsConfig cfg;
  const std::map<int, double> equal{{21, 0.3}, {22, 0.3}, {23, 0.3}};
  cfg.tau_fusion = 1e12;
  for (double w : hls::fusion_weights({21, 22, 23}, equal, cfg)) EXPECT_NEAR(w, 1.0 / 3.0, 1e-9);
  cfg.tau_fusion = 0.0;
  for (double w : hls::fusion_weights({21, 22, 23}, equal, cfg)) EXPECT_NEAR(w, 1.0 / 3.0, 1e-15);
  cfg.beta = 1e4;
  cfg.tau_fusion = 2.0;
  const auto w = hls::fusion_weights({21, 22, 23}, {{21, 0.1}, {22, 0.3}, {23, 0.5}}, cfg);
  EXPECT_GT(w[0], 0.999);
}

TEST(FusionWeights, MissingRiskThrows) { EXPECT_THROW(hls::fusion_weights({17, 23}, {{23, 0.1}}, {}), Error); }

TEST(DefaultPools, ClippedAndDeduplicated) {
  const hls::HlsConfig cfg;
  EXPECT_EQ(hls::default_pools(17, cfg), (std::vector<std::vector<int>>{{17, 23}, {16, 17, 23}, {17, 18, 23}}));
  EXPECT_EQ(hls::default_pools(23, cfg), (std::vector<std::vector<int>>{{22, 23}}));
  EXPECT_EQ(hls::default_pools(12, cfg), (std::vector<std::vector<int>>{{12, 23}, {12, 13, 23}}));
  EXPECT_EQ(hls::default_pools(22, cfg), (std::vector<std::vector<int>>{{22, 23}, {21, 22, 23}}));
}

TEST(Route, NeverWorseThanSingleAndContainsPlanted) {
  const auto spec = spec_default();
  for (int i = 0; i < 6; ++i) {
    const auto ep = synth::gen_synthetic_episode(spec, 7, i);
    const auto d = hls::route(ep, {}, {});
    EXPECT_LE(d.etr, d.single_etr + 1e-12);
    double total = 0.0;
    for (double w : d.rep.weights) {
      EXPECT_GE(w, 0.0);
      total += w;
    }
    EXPECT_NEAR(total, 1.0, 1e-6);
    EXPECT_GE(d.etr, 0.0);
    EXPECT_LE(d.etr, 1.0);
    if (d.single_layer == spec.planted_layer) {
      EXPECT_NE(std::find(d.rep.layers.begin(), d.rep.layers.end(), spec.planted_layer), d.rep.layers.end());
    }
  }
}

TEST(Route, EmptyPoolListIsSingle) {
  hls::HlsConfig cfg;
  cfg.fusion_pools = std::vector<std::vector<int>>{};
  const auto d = hls::route(synth::gen_synthetic_episode(spec_default(), 8, 0), cfg, {});
  EXPECT_EQ(d.rep.kind, hls::RouteKind::Single);
  EXPECT_TRUE(d.fusion_candidates.empty());
}

TEST(Route, FusionWinsOnlyWhenStrictlyBetter) {
  const auto ep = map_dumps(synth::gen_synthetic_episode(spec_default(), 9, 0),
                            [](store::FeatureDump& d) { copy_layer_everywhere(d, 17); });
  const auto d = hls::route(ep, {}, {});
  EXPECT_EQ(d.rep.kind, hls::RouteKind::Single);
  EXPECT_EQ(d.rep.layers.front(), 23);
}

TEST(Route, DisabledRoutesToAnchor) {
  hls::HlsConfig cfg;
  cfg.enabled = false;
  const auto d = hls::route(synth::gen_synthetic_episode(spec_default(), 10, 0), cfg, {});
  EXPECT_EQ(d.rep.layers, std::vector<int>{23});
}

TEST(HlsConfig, Validation) {
  hls::HlsConfig cfg;
  EXPECT_NO_THROW(cfg.validate(24));
  EXPECT_THROW(cfg.validate(20), Error);
  cfg.anchor_layer = 5;
  EXPECT_THROW(cfg.validate(24), Error);
  cfg = {};
  cfg.beta = 0.0;
  EXPECT_THROW(cfg.validate(24), Error);
}

TEST(Representation, FusedFeaturesAreConvexCombination) {
  const auto ep = synth::gen_synthetic_episode(spec_default(), 11, 0);
  const hls::Representation rep{hls::RouteKind::Fusion, {17, 23}, {0.25, 0.75}};
  const Matrix f = hls::representation_features(*ep.query, rep);
  const Matrix e = 0.25 * ep.query->layer_features(17) + 0.75 * ep.query->layer_features(23);
  EXPECT_NEAR((f - e).norm(), 0.0, 1e-12);
  EXPECT_EQ(rep.dominant_layer(), 23);
  const hls::Representation tie{hls::RouteKind::Fusion, {17, 23}, {0.5, 0.5}};
  EXPECT_EQ(tie.dominant_layer(), 23);
}
