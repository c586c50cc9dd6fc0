#include "hera/reports.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

#include "json.hpp"

namespace hera::report {
namespace {

using nlohmann::json;

const char* gate_mode_name(pac::GateMode m) {
  switch (m) {
    case pac::GateMode::Default: return "default";
    case pac::GateMode::AlwaysOn: return "always_on";
    case pac::GateMode::Auto: return "auto";
    case pac::GateMode::Off: return "off";
  }
  return "default";
}

json num_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json routing_object(const hls::RoutingDecision& d) {
  json risks = json::object();
  for (const auto& [l, r] : d.per_layer_risk) risks[std::to_string(l)] = r;
  json cands = json::array();
  for (const auto& c : d.fusion_candidates) cands.push_back({{"pool", c.pool}, {"weights", c.weights}, {"etr", c.etr}});
  return json{{"kind", d.rep.kind == hls::RouteKind::Single ? "single" : "fusion"},
              {"layers", d.rep.layers},
              {"weights", d.rep.weights},
              {"etr", d.etr},
              {"single_layer", d.single_layer},
              {"single_etr", d.single_etr},
              {"per_layer_risk", risks},
              {"fusion_candidates", cands}};
}

json calibration_object(const pac::GateReport& g, const pac::LogitMaps& m) {
  auto norm = [](const Vector& v) { return v.size() > 0 ? v.norm() : 0.0; };
  return json{{"gate_mode", gate_mode_name(g.gate.mode)},
              {"threshold", g.gate.threshold},
              {"delta_iou", g.delta_iou},
              {"positive_votes", g.positive_votes},
              {"gate_on", g.on},
              {"branch_norms",
               {{"base", norm(m.base)}, {"sim", norm(m.sim)}, {"attn", norm(m.attn)}, {"img", norm(m.img)}}}};
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

template <typename T>
std::string join(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ';';
    if constexpr (std::is_floating_point_v<T>) {
      out += format_double(v[i]);
    } else {
      out += std::to_string(v[i]);
    }
  }
  return out;
}

std::string opt(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }
std::string finite_or_empty(double v) { return std::isnan(v) ? std::string() : format_double(v); }

} // namespace

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string routing_json(const hls::RoutingDecision& decision) { return routing_object(decision).dump(2); }

std::string calibration_json(const pac::GateReport& gate, const pac::LogitMaps& maps) {
  return calibration_object(gate, maps).dump(2);
}

std::string episode_json(const EpisodeResult& r) {
  json j{{"index", r.index},
         {"class_id", r.class_id},
         {"shot", r.shot},
         {"iou", r.iou ? json(*r.iou) : json(nullptr)},
         {"base_iou", r.base_iou ? json(*r.base_iou) : json(nullptr)},
         {"routing", routing_object(r.routing)},
         {"adaptation",
          {{"initial_loss", num_or_null(r.initial_loss)},
           {"final_loss", num_or_null(r.final_loss)},
           {"step_losses", r.step_losses},
           {"aborted", r.adapt_aborted}}},
         {"calibration", calibration_object(r.gate, r.maps)},
         {"foreground_cells", r.prediction.count()}};
  return j.dump(2);
}

std::string summary_json(const BenchmarkSummary& s, const RunConfig& cfg) {
  json j{{"episodes", s.episodes},
         {"evaluated", s.evaluated},
         {"mean_iou", s.mean_iou},
         {"mean_base_iou", s.mean_base_iou},
         {"trigger_rate", s.trigger_rate},
         {"auto_trigger_rate", s.auto_trigger_rate},
         {"auto_episodes", s.auto_episodes},
         {"fusion_rate", s.fusion_rate},
         {"mean_etr", s.mean_etr},
         {"mean_selector_regret", s.mean_regret},
         {"mean_selector_iou_regret", s.mean_iou_regret},
         {"config", json::parse(config_to_json(cfg))}};
  return j.dump(2) + "\n";
}

std::string episodes_csv(const std::vector<EpisodeResult>& results) {
  std::ostringstream out;
  out << "index,class_id,shot,route_kind,layers,weights,etr,single_layer,single_etr,initial_loss,final_loss,"
         "adapt_steps,adapt_aborted,gate_mode,gate_threshold,positive_votes,gate_on,base_iou,iou\n";
  for (const auto& r : results) {
    out << r.index << ',' << csv_field(r.class_id) << ',' << r.shot << ','
        << (r.routing.rep.kind == hls::RouteKind::Single ? "single" : "fusion") << ',' << join(r.routing.rep.layers)
        << ',' << join(r.routing.rep.weights) << ',' << format_double(r.routing.etr) << ',' << r.routing.single_layer
        << ',' << format_double(r.routing.single_etr) << ',' << format_double(r.initial_loss) << ','
        << format_double(r.final_loss) << ',' << r.step_losses.size() << ',' << (r.adapt_aborted ? 1 : 0) << ','
        << gate_mode_name(r.gate.gate.mode) << ',' << r.gate.gate.threshold << ',' << r.gate.positive_votes << ','
        << (r.gate.on ? 1 : 0) << ',' << opt(r.base_iou) << ',' << opt(r.iou) << '\n';
  }
  return out.str();
}

std::string selectors_csv(const std::vector<SelectorComparison>& rows) {
  std::ostringstream out;
  out << "index,selector,layers,etr,oracle_layer,oracle_etr,regret,query_iou,oracle_query_iou,iou_regret\n";
  for (const auto& c : rows) {
    for (const auto& e : c.entries) {
      out << c.index << ',' << e.selector << ',' << join(e.layers) << ',' << format_double(e.etr) << ','
          << c.oracle_layer << ',' << format_double(c.oracle_etr) << ',' << format_double(e.regret) << ','
          << finite_or_empty(e.query_iou) << ',' << finite_or_empty(c.oracle_query_iou) << ','
          << finite_or_empty(e.iou_regret) << '\n';
    }
  }
  return out.str();
}

} // namespace hera::report
