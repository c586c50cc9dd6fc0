#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hera/config.hpp"

namespace hera {

struct Timings {
  double route_ms = 0.0;
  double adapt_ms = 0.0;
  double calibrate_ms = 0.0;
  double total_ms = 0.0;
};

struct EpisodeResult {
  int index = 0;
  std::string class_id;
  int shot = 0;
  BinaryMask prediction;
  BinaryMask base_prediction;
  std::optional<double> iou;
  std::optional<double> base_iou;
  hls::RoutingDecision routing;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  std::vector<double> step_losses;
  bool adapt_aborted = false;
  pac::GateReport gate;
  pac::LogitMaps maps;
  Timings timings;
};

/// The routed, adapted and calibrated prediction for one episode.
EpisodeResult run_episode(const store::Episode& episode, const RunConfig& cfg, int index = 0);

/// The routing stage alone, on the augmented episode.
hls::RoutingDecision route_episode(const store::Episode& episode, const RunConfig& cfg, int index = 0);

/// Augmented episode used by every stage (1-shot episodes gain soft copies).
store::Episode prepare_episode(const store::Episode& episode, const RunConfig& cfg, int index);

struct SelectorEntry {
  std::string selector;
  std::vector<int> layers;
  double etr = 0.0;
  double regret = 0.0;  // etr - oracle_etr
  // Frozen prediction at the chosen representation; NaN without query ground truth.
  double query_iou = 0.0;
  double iou_regret = 0.0;  // best candidate query IoU - query_iou
};

struct SelectorComparison {
  int index = 0;
  std::map<int, double> layer_etr;
  int oracle_layer = 0;
  double oracle_etr = 0.0;
  double oracle_query_iou = 0.0;
  std::vector<SelectorEntry> entries;  // hls, static_max, grad_max, grad_delta_max
};

/// Runs every selector on one episode. `routing` reuses an HLS decision when given.
SelectorComparison compare_selectors(const store::Episode& episode, const RunConfig& cfg, int index,
                                     const hls::RoutingDecision* routing = nullptr);

/// Lazily materialized episode source.
class EpisodeSource {
 public:
  explicit EpisodeSource(const RunConfig& cfg);
  int size() const noexcept { return count_; }
  store::Episode get(int index) const;

 private:
  const RunConfig* cfg_;
  int count_ = 0;
};

struct BenchmarkSummary {
  int episodes = 0;
  int evaluated = 0;
  double mean_iou = 0.0;
  double mean_base_iou = 0.0;
  double trigger_rate = 0.0;
  double auto_trigger_rate = 0.0;
  int auto_episodes = 0;
  double fusion_rate = 0.0;
  double mean_etr = 0.0;
  std::map<std::string, double> mean_regret;
  std::map<std::string, double> mean_iou_regret;
};

struct BenchmarkOutput {
  BenchmarkSummary summary;
  std::vector<EpisodeResult> results;
  std::vector<SelectorComparison> selectors;
  std::filesystem::path episodes_csv;
  std::filesystem::path summary_json;
  std::filesystem::path selectors_csv;
};

/// Runs every episode, ordered by index regardless of worker scheduling, and
/// writes episodes.csv, selectors.csv and summary.json under output_dir.
/// Throws Error{InvalidArgument} for an empty episode set.
BenchmarkOutput run_benchmark(const RunConfig& cfg);

/// Selector comparison only; writes selectors.csv under output_dir.
std::vector<SelectorComparison> run_selector_comparison(const RunConfig& cfg, std::filesystem::path* csv = nullptr);

/// Calls fn(i) for i in [0, n) on `threads` workers.
void parallel_for(int n, int threads, const std::function<void(int)>& fn);

} // namespace hera
