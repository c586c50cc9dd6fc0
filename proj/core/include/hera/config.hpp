#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "hera/hls.hpp"
#include "hera/pac.hpp"
#include "hera/pgr.hpp"
#include "hera/selectors.hpp"
#include "hera/ssp_head.hpp"
#include "hera/synthetic.hpp"
#include "hera/tta.hpp"

namespace hera {

enum class SelectorChoice { Hls, Anchor, StaticMax, GradMax, GradDeltaMax };

const char* selector_name(SelectorChoice s);

struct RunConfig {
  std::vector<std::filesystem::path> manifests;
  std::optional<synth::SyntheticSpec> synthetic;
  int shot = 0;  // 0: keep the source's shot count
  std::uint64_t seed = 0;
  int threads = 1;
  std::filesystem::path output_dir = "hera_out";
  SelectorChoice selector = SelectorChoice::Hls;

  ssp::SspConfig ssp;
  hls::HlsConfig hls;
  tta::TtaConfig tta;
  pgr::PgrConfig pgr;
  pac::PacConfig pac;
  selectors::StaticMaxConfig static_max;

  /// Module-level checks; layer ranges are checked per episode.
  void validate() const;
};

/// Parses one JSON document. Missing keys keep their defaults; unknown keys
/// and ill-typed values raise Error{BadConfig}. Relative manifest paths
/// resolve against `base_dir`.
RunConfig parse_config(const std::string& json, const std::filesystem::path& base_dir = {});
RunConfig load_config(const std::filesystem::path& path);

/// Canonical JSON form of a configuration (sorted keys, every field present).
std::string config_to_json(const RunConfig& cfg);

} // namespace hera
