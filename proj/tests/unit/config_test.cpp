#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <functional>

#include "hera/config.hpp"
#include "hera/error.hpp"

using namespace hera;

namespace {

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorKind::Io;
}

} // namespace

TEST(Config, DefaultsRoundTrip) {
  RunConfig cfg;
  cfg.synthetic = synth::SyntheticSpec{};
  const std::string a = config_to_json(cfg);
  const std::string b = config_to_json(parse_config(a));
  EXPECT_EQ(a, b);
  EXPECT_NE(a.find("\"tau_f\""), std::string::npos);
}

TEST(Config, OverridesApply) {
  const auto cfg = parse_config(R"({
    "synthetic": {"episodes": 7, "margin": 3.5, "exported_layers": [17, 23]},
    "shot": 1, "seed": 99, "threads": 3, "selector": "grad_delta_max",
    "ssp": {"kappa": 12.5},
    "hls": {"beta": 4.0, "fusion_pools": [[16, 23]], "enabled": false},
    "tta": {"variant": "M1", "augment_views": 3},
    "pgr": {"sigma_loc": 1.5, "enabled": false},
    "pac": {"w_img": 0.0, "gate": {"mode": "auto", "threshold": 1}},
    "static_max": {"w_sem": 0.5, "w_str": 0.25, "w_comp": 0.25}
  })");
  ASSERT_TRUE(cfg.synthetic.has_value());
  EXPECT_EQ(cfg.synthetic->episodes, 7);
  EXPECT_EQ(cfg.synthetic->margin, 3.5);
  EXPECT_EQ(cfg.shot, 1);
  EXPECT_EQ(cfg.seed, 99u);
  EXPECT_EQ(cfg.threads, 3);
  EXPECT_EQ(cfg.selector, SelectorChoice::GradDeltaMax);
  EXPECT_EQ(cfg.ssp.kappa, 12.5);
  EXPECT_EQ(cfg.hls.beta, 4.0);
  ASSERT_TRUE(cfg.hls.fusion_pools.has_value());
  EXPECT_EQ(*cfg.hls.fusion_pools, (std::vector<std::vector<int>>{{16, 23}}));
  EXPECT_FALSE(cfg.hls.enabled);
  EXPECT_EQ(cfg.tta.variant, tta::HeadVariant::M1);
  EXPECT_EQ(cfg.tta.augment_views, 3);
  EXPECT_EQ(cfg.pgr.sigma_loc, 1.5);
  EXPECT_FALSE(cfg.pgr.enabled);
  EXPECT_EQ(cfg.pac.w_img, 0.0);
  EXPECT_EQ(cfg.pac.gate.mode, pac::GateMode::Auto);
  EXPECT_EQ(cfg.pac.gate.threshold, 1);
  EXPECT_EQ(cfg.static_max.w_sem, 0.5);
  EXPECT_EQ(config_to_json(parse_config(config_to_json(cfg))), config_to_json(cfg));
}

TEST(Config, UnknownAndIllTypedKeys) {
  EXPECT_EQ(kind_of([] { parse_config(R"({"synthetic": {}, "bogus": 1})"); }), ErrorKind::BadConfig);
  EXPECT_EQ(kind_of([] { parse_config(R"({"synthetic": {}, "hls": {"betta": 1}})"); }), ErrorKind::BadConfig);
  EXPECT_EQ(kind_of([] { parse_config(R"({"synthetic": {}, "seed": "x"})"); }), ErrorKind::BadConfig);
  EXPECT_EQ(kind_of([] { parse_config(R"({"synthetic": {}, "selector": "best"})"); }), ErrorKind::BadConfig);
  EXPECT_EQ(kind_of([] { parse_config(R"({"synthetic": {}, "tta": {"variant": "M3"}})"); }), ErrorKind::BadConfig);
  EXPECT_EQ(kind_of([] { parse_config(R"({"synthetic": {}, "pac": {"gate": {"mode": "sometimes"}}})"); }),
            ErrorKind::BadConfig);
  EXPECT_EQ(kind_of([] { parse_config("{not json"); }), ErrorKind::BadConfig);
  EXPECT_EQ(kind_of([] { parse_config("[1, 2]"); }), ErrorKind::BadConfig);
}

TEST(Config, SourceRules) {
  EXPECT_EQ(kind_of([] { parse_config(R"({})").validate(); }), ErrorKind::BadConfig);
  EXPECT_EQ(kind_of([] { parse_config(R"({"synthetic": {}, "manifests": ["a.json"]})").validate(); }),
            ErrorKind::BadConfig);
  EXPECT_EQ(kind_of([] { parse_config(R"({"synthetic": {}, "threads": 0})").validate(); }), ErrorKind::BadConfig);
  EXPECT_EQ(kind_of([] { parse_config(R"({"synthetic": {}, "ssp": {"alpha1": 0.7}})").validate(); }),
            ErrorKind::BadConfig);
}

TEST(Config, ManifestPathsResolveAgainstBaseDir) {
  const auto cfg = parse_config(R"({"manifests": ["eps/a.json", "/abs/b.json"]})", "/data/run");
  ASSERT_EQ(cfg.manifests.size(), 2u);
  EXPECT_EQ(cfg.manifests[0], std::filesystem::path("/data/run/eps/a.json"));
  EXPECT_EQ(cfg.manifests[1], std::filesystem::path("/abs/b.json"));
}

TEST(Config, LoadFromFile) {
  const auto dir = std::filesystem::temp_directory_path() / ("hera_cfg_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()));
  std::filesystem::create_directories(dir);
  {
    std::ofstream(dir / "c.json") << R"({"manifests": ["m.json"], "seed": 4})";
  }
  const auto cfg = load_config(dir / "c.json");
  EXPECT_EQ(cfg.manifests.at(0), dir / "m.json");
  EXPECT_EQ(cfg.seed, 4u);
  EXPECT_EQ(kind_of([&] { load_config(dir / "missing.json"); }), ErrorKind::Io);
  std::filesystem::remove_all(dir);
}

TEST(Config, SelectorNames) {
  EXPECT_STREQ(selector_name(SelectorChoice::Hls), "hls");
  EXPECT_STREQ(selector_name(SelectorChoice::StaticMax), "static_max");
  EXPECT_STREQ(selector_name(SelectorChoice::GradDeltaMax), "grad_delta_max");
}
