#include "hera/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

#include "hera/error.hpp"

namespace hera {
namespace {

using nlohmann::json;

[[noreturn]] void bad(const std::string& what) { throw Error(ErrorKind::BadConfig, what); }

void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) bad(where + " must be an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, _] : j.items()) {
    if (ok.count(key) == 0) bad("unknown key '" + key + "' in " + (where.empty() ? "config" : where));
  }
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  const auto it = j.find(key);
  if (it == j.end()) return;
  try {
    if constexpr (std::is_same_v<T, bool>) {
      if (!it->is_boolean()) bad(where + "." + key + " must be a boolean");
    } else if constexpr (std::is_integral_v<T>) {
      if (!it->is_number_integer()) bad(where + "." + key + " must be an integer");
      if constexpr (std::is_unsigned_v<T>) {
        if (it->is_number_integer() && !it->is_number_unsigned()) bad(where + "." + key + " must be non-negative");
      }
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!it->is_number()) bad(where + "." + key + " must be a number");
    }
    out = it->get<T>();
  } catch (const json::exception& e) {
    bad(where + "." + key + ": " + e.what());
  }
}

tta::HeadVariant parse_variant(const std::string& s) {
  if (s == "M0") return tta::HeadVariant::M0;
  if (s == "M1") return tta::HeadVariant::M1;
  if (s == "M2") return tta::HeadVariant::M2;
  bad("tta.variant must be M0, M1 or M2");
}

const char* variant_name(tta::HeadVariant v) {
  switch (v) {
    case tta::HeadVariant::M0: return "M0";
    case tta::HeadVariant::M1: return "M1";
    case tta::HeadVariant::M2: return "M2";
  }
  return "M2";
}

pac::GateMode parse_gate_mode(const std::string& s) {
  if (s == "default") return pac::GateMode::Default;
  if (s == "always_on") return pac::GateMode::AlwaysOn;
  if (s == "auto") return pac::GateMode::Auto;
  if (s == "off") return pac::GateMode::Off;
  bad("pac.gate.mode must be default, always_on, auto or off");
}

const char* gate_mode_name(pac::GateMode m) {
  switch (m) {
    case pac::GateMode::Default: return "default";
    case pac::GateMode::AlwaysOn: return "always_on";
    case pac::GateMode::Auto: return "auto";
    case pac::GateMode::Off: return "off";
  }
  return "default";
}

SelectorChoice parse_selector(const std::string& s) {
  for (auto c : {SelectorChoice::Hls, SelectorChoice::Anchor, SelectorChoice::StaticMax, SelectorChoice::GradMax,
                 SelectorChoice::GradDeltaMax}) {
    if (s == selector_name(c)) return c;
  }
  bad("selector must be hls, anchor, static_max, grad_max or grad_delta_max");
}

void parse_synthetic(const json& j, synth::SyntheticSpec& s) {
  const std::string w = "synthetic";
  check_keys(j, w,
             {"grid_h", "grid_w", "dim", "layers", "planted_layer", "margin", "noise", "episodes", "shot", "heads",
              "exported_layers", "patch_size", "neighbor_decay", "boundary_corruption", "color_noise",
              "attention_affinity", "attention_noise", "mask_supersample"});
  read(j, "grid_h", s.grid_h, w);
  read(j, "grid_w", s.grid_w, w);
  read(j, "dim", s.dim, w);
  read(j, "layers", s.layers, w);
  read(j, "planted_layer", s.planted_layer, w);
  read(j, "margin", s.margin, w);
  read(j, "noise", s.noise, w);
  read(j, "episodes", s.episodes, w);
  read(j, "shot", s.shot, w);
  read(j, "heads", s.heads, w);
  read(j, "exported_layers", s.exported_layers, w);
  read(j, "patch_size", s.patch_size, w);
  read(j, "neighbor_decay", s.neighbor_decay, w);
  read(j, "boundary_corruption", s.boundary_corruption, w);
  read(j, "color_noise", s.color_noise, w);
  read(j, "attention_affinity", s.attention_affinity, w);
  read(j, "attention_noise", s.attention_noise, w);
  read(j, "mask_supersample", s.mask_supersample, w);
}

json synthetic_json(const synth::SyntheticSpec& s) {
  return json{{"grid_h", s.grid_h},
              {"grid_w", s.grid_w},
              {"dim", s.dim},
              {"layers", s.layers},
              {"planted_layer", s.planted_layer},
              {"margin", s.margin},
              {"noise", s.noise},
              {"episodes", s.episodes},
              {"shot", s.shot},
              {"heads", s.heads},
              {"exported_layers", s.exported_layers},
              {"patch_size", s.patch_size},
              {"neighbor_decay", s.neighbor_decay},
              {"boundary_corruption", s.boundary_corruption},
              {"color_noise", s.color_noise},
              {"attention_affinity", s.attention_affinity},
              {"attention_noise", s.attention_noise},
              {"mask_supersample", s.mask_supersample}};
}

} // namespace

const char* selector_name(SelectorChoice s) {
  switch (s) {
    case SelectorChoice::Hls: return "hls";
    case SelectorChoice::Anchor: return "anchor";
    case SelectorChoice::StaticMax: return "static_max";
    case SelectorChoice::GradMax: return "grad_max";
    case SelectorChoice::GradDeltaMax: return "grad_delta_max";
  }
  return "hls";
}

void RunConfig::validate() const {
  if (manifests.empty() && !synthetic) bad("config needs manifests or a synthetic source");
  if (!manifests.empty() && synthetic) bad("config takes manifests or a synthetic spec, not both");
  if (shot < 0) bad("shot must be non-negative");
  if (threads < 1) bad("threads must be at least 1");
  if (synthetic) synthetic->validate();
  ssp.validate();
  tta.validate();
  if (pgr.enabled) pgr.validate();
  pac.validate();
  static_max.validate();
  if (!(hls.beta > 0.0)) bad("hls beta must be positive");
  if (!(hls.tau_fusion >= 0.0)) bad("hls tau must be non-negative");
}

RunConfig parse_config(const std::string& text, const std::filesystem::path& base_dir) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    bad(std::string("config is not valid JSON: ") + e.what());
  }
  check_keys(j, "",
             {"manifests", "synthetic", "shot", "seed", "threads", "output_dir", "selector", "ssp", "hls", "tta", "pgr",
              "pac", "static_max"});
  RunConfig cfg;
  std::vector<std::string> manifests;
  read(j, "manifests", manifests, "config");
  for (const auto& m : manifests) {
    std::filesystem::path p(m);
    cfg.manifests.push_back(p.is_relative() && !base_dir.empty() ? base_dir / p : p);
  }
  if (j.contains("synthetic") && !j["synthetic"].is_null()) {
    synth::SyntheticSpec s;
    parse_synthetic(j["synthetic"], s);
    cfg.synthetic = s;
  }
  read(j, "shot", cfg.shot, "config");
  read(j, "seed", cfg.seed, "config");
  read(j, "threads", cfg.threads, "config");
  std::string out_dir = cfg.output_dir.string();
  read(j, "output_dir", out_dir, "config");
  cfg.output_dir = out_dir;
  if (j.contains("selector")) {
    std::string s;
    read(j, "selector", s, "config");
    cfg.selector = parse_selector(s);
  }

  if (j.contains("ssp")) {
    const auto& o = j["ssp"];
    check_keys(o, "ssp", {"tau_f", "tau_b", "alpha1", "alpha2", "kappa"});
    read(o, "tau_f", cfg.ssp.tau_f, "ssp");
    read(o, "tau_b", cfg.ssp.tau_b, "ssp");
    read(o, "alpha1", cfg.ssp.alpha1, "ssp");
    read(o, "alpha2", cfg.ssp.alpha2, "ssp");
    read(o, "kappa", cfg.ssp.kappa, "ssp");
  }
  if (j.contains("hls")) {
    const auto& o = j["hls"];
    check_keys(o, "hls", {"candidates", "beta", "tau_fusion", "anchor_layer", "fusion_pools", "enabled"});
    read(o, "candidates", cfg.hls.candidates, "hls");
    read(o, "beta", cfg.hls.beta, "hls");
    read(o, "tau_fusion", cfg.hls.tau_fusion, "hls");
    read(o, "anchor_layer", cfg.hls.anchor_layer, "hls");
    read(o, "enabled", cfg.hls.enabled, "hls");
    if (o.contains("fusion_pools") && !o["fusion_pools"].is_null()) {
      std::vector<std::vector<int>> pools;
      read(o, "fusion_pools", pools, "hls");
      cfg.hls.fusion_pools = pools;
    }
  }
  if (j.contains("tta")) {
    const auto& o = j["tta"];
    check_keys(o, "tta", {"lr", "beta1", "beta2", "eps_adam", "augment_views", "hidden_dim", "variant", "init_seed"});
    read(o, "lr", cfg.tta.lr, "tta");
    read(o, "beta1", cfg.tta.beta1, "tta");
    read(o, "beta2", cfg.tta.beta2, "tta");
    read(o, "eps_adam", cfg.tta.eps_adam, "tta");
    read(o, "augment_views", cfg.tta.augment_views, "tta");
    read(o, "hidden_dim", cfg.tta.hidden_dim, "tta");
    read(o, "init_seed", cfg.tta.init_seed, "tta");
    if (o.contains("variant")) {
      std::string v;
      read(o, "variant", v, "tta");
      cfg.tta.variant = parse_variant(v);
    }
  }
  if (j.contains("pgr")) {
    const auto& o = j["pgr"];
    check_keys(o, "pgr", {"sigma_loc", "sigma_glo", "alpha_gate", "enabled"});
    read(o, "sigma_loc", cfg.pgr.sigma_loc, "pgr");
    read(o, "sigma_glo", cfg.pgr.sigma_glo, "pgr");
    read(o, "alpha_gate", cfg.pgr.alpha_gate, "pgr");
    read(o, "enabled", cfg.pgr.enabled, "pgr");
  }
  if (j.contains("pac")) {
    const auto& o = j["pac"];
    check_keys(o, "pac", {"tau_sim", "tau_attn", "tau_img", "w_sim", "w_attn", "w_img", "gate", "enabled"});
    read(o, "tau_sim", cfg.pac.tau_sim, "pac");
    read(o, "tau_attn", cfg.pac.tau_attn, "pac");
    read(o, "tau_img", cfg.pac.tau_img, "pac");
    read(o, "w_sim", cfg.pac.w_sim, "pac");
    read(o, "w_attn", cfg.pac.w_attn, "pac");
    read(o, "w_img", cfg.pac.w_img, "pac");
    read(o, "enabled", cfg.pac.enabled, "pac");
    if (o.contains("gate")) {
      const auto& g = o["gate"];
      check_keys(g, "pac.gate", {"mode", "threshold"});
      if (g.contains("mode")) {
        std::string m;
        read(g, "mode", m, "pac.gate");
        cfg.pac.gate.mode = parse_gate_mode(m);
      }
      if (g.contains("threshold") && !g["threshold"].is_null()) {
        int t = 0;
        read(g, "threshold", t, "pac.gate");
        cfg.pac.gate.threshold = t;
      }
    }
  }
  if (j.contains("static_max")) {
    const auto& o = j["static_max"];
    check_keys(o, "static_max", {"alpha_sem", "w_sem", "w_str", "w_comp", "eps_norm"});
    read(o, "alpha_sem", cfg.static_max.alpha_sem, "static_max");
    read(o, "w_sem", cfg.static_max.w_sem, "static_max");
    read(o, "w_str", cfg.static_max.w_str, "static_max");
    read(o, "w_comp", cfg.static_max.w_comp, "static_max");
    read(o, "eps_norm", cfg.static_max.eps_norm, "static_max");
  }
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.parent_path());
}

std::string config_to_json(const RunConfig& cfg) {
  json j;
  std::vector<std::string> manifests;
  for (const auto& m : cfg.manifests) manifests.push_back(m.generic_string());
  j["manifests"] = manifests;
  j["synthetic"] = cfg.synthetic ? synthetic_json(*cfg.synthetic) : json(nullptr);
  j["shot"] = cfg.shot;
  j["seed"] = cfg.seed;
  j["threads"] = cfg.threads;
  j["output_dir"] = cfg.output_dir.generic_string();
  j["selector"] = selector_name(cfg.selector);
  j["ssp"] = {{"tau_f", cfg.ssp.tau_f},
              {"tau_b", cfg.ssp.tau_b},
              {"alpha1", cfg.ssp.alpha1},
              {"alpha2", cfg.ssp.alpha2},
              {"kappa", cfg.ssp.kappa}};
  j["hls"] = {{"candidates", cfg.hls.candidates},
              {"beta", cfg.hls.beta},
              {"tau_fusion", cfg.hls.tau_fusion},
              {"anchor_layer", cfg.hls.anchor_layer},
              {"fusion_pools", cfg.hls.fusion_pools ? json(*cfg.hls.fusion_pools) : json(nullptr)},
              {"enabled", cfg.hls.enabled}};
  j["tta"] = {{"lr", cfg.tta.lr},
              {"beta1", cfg.tta.beta1},
              {"beta2", cfg.tta.beta2},
              {"eps_adam", cfg.tta.eps_adam},
              {"augment_views", cfg.tta.augment_views},
              {"hidden_dim", cfg.tta.hidden_dim},
              {"variant", variant_name(cfg.tta.variant)},
              {"init_seed", cfg.tta.init_seed}};
  j["pgr"] = {{"sigma_loc", cfg.pgr.sigma_loc},
              {"sigma_glo", cfg.pgr.sigma_glo},
              {"alpha_gate", cfg.pgr.alpha_gate},
              {"enabled", cfg.pgr.enabled}};
  j["pac"] = {{"tau_sim", cfg.pac.tau_sim},
              {"tau_attn", cfg.pac.tau_attn},
              {"tau_img", cfg.pac.tau_img},
              {"w_sim", cfg.pac.w_sim},
              {"w_attn", cfg.pac.w_attn},
              {"w_img", cfg.pac.w_img},
              {"enabled", cfg.pac.enabled},
              {"gate",
               {{"mode", gate_mode_name(cfg.pac.gate.mode)},
                {"threshold", cfg.pac.gate.threshold ? json(*cfg.pac.gate.threshold) : json(nullptr)}}}};
  j["static_max"] = {{"alpha_sem", cfg.static_max.alpha_sem},
                     {"w_sem", cfg.static_max.w_sem},
                     {"w_str", cfg.static_max.w_str},
                     {"w_comp", cfg.static_max.w_comp},
                     {"eps_norm", cfg.static_max.eps_norm}};
  return j.dump(2);
}

} // namespace hera
