// hera: episodic driver for the select-regularize-calibrate pipeline.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "hera/config.hpp"
#include "hera/error.hpp"
#include "hera/heatmaps.hpp"
#include "hera/pipeline.hpp"
#include "hera/reports.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CommonFlags {
  std::string config;
  std::vector<std::string> manifests;
  std::optional<std::uint64_t> seed;
  std::optional<int> shot;
  std::optional<int> threads;
  std::string output;
  std::string selector;
  std::string variant;
  bool no_hls = false;
  bool no_pgr = false;
  bool no_pac = false;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("-c,--config", f.config, "JSON run configuration");
  cmd->add_option("-m,--manifest", f.manifests, "episode manifest (repeatable; replaces config sources)");
  cmd->add_option("--seed", f.seed, "base seed");
  cmd->add_option("--shot", f.shot, "support count K");
  cmd->add_option("--threads", f.threads, "episode workers");
  cmd->add_option("-o,--output", f.output, "output directory");
  cmd->add_option("--selector", f.selector, "hls | anchor | static_max | grad_max | grad_delta_max");
  cmd->add_option("--variant", f.variant, "adaptation head: M0 | M1 | M2");
  cmd->add_flag("--no-hls", f.no_hls, "route to the anchor layer");
  cmd->add_flag("--no-pgr", f.no_pgr, "use raw attention");
  cmd->add_flag("--no-pac", f.no_pac, "skip calibration");
}

hera::RunConfig build_config(const CommonFlags& f) {
  hera::RunConfig cfg;
  if (!f.config.empty()) {
    cfg = hera::load_config(f.config);
  }
  json j = json::parse(hera::config_to_json(cfg));
  if (!f.manifests.empty()) {
    j["manifests"] = f.manifests;
    j["synthetic"] = nullptr;
  }
  if (f.seed) j["seed"] = *f.seed;
  if (f.shot) j["shot"] = *f.shot;
  if (f.threads) j["threads"] = *f.threads;
  if (!f.output.empty()) j["output_dir"] = f.output;
  if (!f.selector.empty()) j["selector"] = f.selector;
  if (!f.variant.empty()) j["tta"]["variant"] = f.variant;
  if (f.no_hls) j["hls"]["enabled"] = false;
  if (f.no_pgr) j["pgr"]["enabled"] = false;
  if (f.no_pac) j["pac"]["enabled"] = false;
  if (j["manifests"].empty() && j["synthetic"].is_null()) {
    throw hera::Error(hera::ErrorKind::BadConfig, "give --config with a source or at least one --manifest");
  }
  // Manifest paths are already resolved by load_config or given relative to the working directory.
  return hera::parse_config(j.dump());
}

int fail(const std::string& kind, const std::string& message) {
  std::cerr << json{{"error", kind}, {"message", message}}.dump() << "\n";
  return 1;
}

int cmd_extract_check(const std::vector<std::string>& files) {
  json out = json::array();
  int bad = 0;
  for (const auto& f : files) {
    try {
      const auto d = hera::store::read_dump(f);
      out.push_back({{"path", f},
                     {"ok", true},
                     {"grid", {d.meta.grid.height, d.meta.grid.width}},
                     {"layers", d.layers},
                     {"channels", d.channels},
                     {"heads", d.heads},
                     {"exported_layers", d.meta.exported_layers},
                     {"backbone", d.meta.backbone},
                     {"has_mask", d.mask.has_value()}});
    } catch (const hera::Error& e) {
      ++bad;
      out.push_back({{"path", f}, {"ok", false}, {"error", std::string(e.kind_name())}, {"message", e.what()}});
    }
  }
  std::cout << out.dump(2) << "\n";
  if (bad > 0) return fail("InvalidDump", std::to_string(bad) + " of " + std::to_string(files.size()) + " files failed");
  return 0;
}

int cmd_run(const CommonFlags& f) {
  const auto cfg = build_config(f);
  const auto out = hera::run_benchmark(cfg);
  double ms = 0.0;
  for (const auto& r : out.results) ms += r.timings.total_ms;
  std::cout << hera::report::summary_json(out.summary, cfg);
  std::cerr << "episodes: " << out.summary.episodes << "  wall per episode: " << ms / out.summary.episodes
            << " ms  outputs: " << cfg.output_dir.string() << "\n";
  return 0;
}

int cmd_route(const CommonFlags& f) {
  const auto cfg = build_config(f);
  const hera::EpisodeSource src(cfg);
  std::vector<std::string> reports(static_cast<std::size_t>(src.size()));
  hera::parallel_for(src.size(), cfg.threads, [&](int i) {
    reports[static_cast<std::size_t>(i)] = hera::report::routing_json(hera::route_episode(src.get(i), cfg, i));
  });
  json arr = json::array();
  for (const auto& r : reports) arr.push_back(json::parse(r));
  std::cout << arr.dump(2) << "\n";
  return 0;
}

int cmd_heatmaps(const CommonFlags& f, int episode) {
  const auto cfg = build_config(f);
  const hera::EpisodeSource src(cfg);
  const auto dir = cfg.output_dir / "heatmaps";
  const auto files = hera::heatmap::dump_layer_heatmaps(src.get(episode), dir, cfg.ssp);
  json arr = json::array();
  for (const auto& p : files) arr.push_back(p.generic_string());
  std::cout << arr.dump(2) << "\n";
  return 0;
}

int cmd_selectors(const CommonFlags& f) {
  const auto cfg = build_config(f);
  fs::path csv;
  const auto rows = hera::run_selector_comparison(cfg, &csv);
  std::map<std::string, double> regret;
  for (const auto& r : rows) {
    for (const auto& e : r.entries) regret[e.selector] += e.regret / static_cast<double>(rows.size());
  }
  std::cout << json{{"episodes", rows.size()}, {"mean_regret", regret}, {"csv", csv.generic_string()}}.dump(2) << "\n";
  return 0;
}

int cmd_gen_synthetic(const CommonFlags& f) {
  const auto cfg = build_config(f);
  if (!cfg.synthetic) throw hera::Error(hera::ErrorKind::BadConfig, "gen-synthetic needs a synthetic source");
  const hera::EpisodeSource src(cfg);
  fs::create_directories(cfg.output_dir);
  json listing = json::array();
  for (int i = 0; i < src.size(); ++i) {
    const auto ep = src.get(i);
    char stem[32];
    std::snprintf(stem, sizeof(stem), "ep%04d", i);
    std::vector<std::string> supports;
    for (int k = 0; k < ep.effective_shot(); ++k) {
      const std::string name = std::string(stem) + "_s" + std::to_string(k) + ".hfd";
      hera::store::write_dump(ep.support(k), cfg.output_dir / name);
      supports.push_back(name);
    }
    const std::string query = std::string(stem) + "_q.hfd";
    hera::store::write_dump(*ep.query, cfg.output_dir / query);
    const auto manifest = cfg.output_dir / (std::string(stem) + ".json");
    hera::store::write_manifest(manifest, supports, query, ep.class_id);
    listing.push_back(manifest.generic_string());
  }
  std::cout << listing.dump(2) << "\n";
  return 0;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"hera: layer routing, test-time adaptation and calibration on cached ViT features"};
  app.require_subcommand(1);

  std::vector<std::string> check_files;
  auto* check = app.add_subcommand("extract-check", "validate feature dump files");
  check->add_option("files", check_files, "HFD1 files")->required();

  CommonFlags run_flags;
  auto* run = app.add_subcommand("run", "run the benchmark and write episodes.csv, selectors.csv, summary.json");
  add_common(run, run_flags);

  CommonFlags route_flags;
  auto* route = app.add_subcommand("route", "print the routing report of every episode");
  add_common(route, route_flags);

  CommonFlags heat_flags;
  int heat_episode = 0;
  auto* heat = app.add_subcommand("heatmaps", "write per-layer foreground maps for one episode");
  add_common(heat, heat_flags);
  heat->add_option("--episode", heat_episode, "episode index");

  CommonFlags sel_flags;
  auto* sel = app.add_subcommand("selectors-compare", "compare HLS with the baseline layer selectors");
  add_common(sel, sel_flags);

  CommonFlags gen_flags;
  auto* gen = app.add_subcommand("gen-synthetic", "write synthetic episodes as dumps and manifests");
  add_common(gen, gen_flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << json{{"error", "InvalidArgument"}, {"message", e.what()}}.dump() << "\n";
    return 2;
  }

  try {
    if (*check) return cmd_extract_check(check_files);
    if (*run) return cmd_run(run_flags);
    if (*route) return cmd_route(route_flags);
    if (*heat) return cmd_heatmaps(heat_flags, heat_episode);
    if (*sel) return cmd_selectors(sel_flags);
    if (*gen) return cmd_gen_synthetic(gen_flags);
  } catch (const hera::Error& e) {
    return fail(std::string(e.kind_name()), e.what());
  } catch (const std::exception& e) {
    return fail("Internal", e.what());
  }
  return 0;
}
