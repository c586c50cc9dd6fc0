#pragma once

#include <string>
#include <vector>

#include "hera/pipeline.hpp"

namespace hera::report {

std::string routing_json(const hls::RoutingDecision& decision);
std::string calibration_json(const pac::GateReport& gate, const pac::LogitMaps& maps);
std::string episode_json(const EpisodeResult& result);
std::string summary_json(const BenchmarkSummary& summary, const RunConfig& cfg);

std::string episodes_csv(const std::vector<EpisodeResult>& results);
std::string selectors_csv(const std::vector<SelectorComparison>& rows);

/// Shortest round-trip decimal form.
std::string format_double(double v);

} // namespace hera::report
