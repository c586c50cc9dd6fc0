#include "hera/pipeline.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <limits>
#include <mutex>
#include <thread>

#include "hera/error.hpp"
#include "hera/reports.hpp"
#include "hera/seed.hpp"

namespace hera {
namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t).count();
}

constexpr std::uint64_t kAugmentStream = 0xA11;

hls::RoutingDecision route_prepared(const store::Episode& aug, const RunConfig& cfg) {
  const int layers = aug.query->layers;
  switch (cfg.selector) {
    case SelectorChoice::Hls:
      if (cfg.hls.enabled) {
        cfg.hls.validate(layers);
      } else if (cfg.hls.anchor_layer < 0 || cfg.hls.anchor_layer >= layers) {
        throw Error(ErrorKind::BadConfig, "anchor layer out of range");
      }
      return hls::route(aug, cfg.hls, cfg.ssp);
    case SelectorChoice::Anchor:
      if (cfg.hls.anchor_layer < 0 || cfg.hls.anchor_layer >= layers) {
        throw Error(ErrorKind::BadConfig, "anchor layer out of range");
      }
      return hls::fixed_route(aug, cfg.hls.anchor_layer, cfg.ssp);
    case SelectorChoice::StaticMax:
      cfg.hls.validate(layers);
      return hls::fixed_route(aug, selectors::static_max(aug, cfg.hls.candidates, cfg.static_max, cfg.ssp), cfg.ssp);
    case SelectorChoice::GradMax:
      cfg.hls.validate(layers);
      return hls::fixed_route(aug, selectors::grad_max(selectors::grad_norms(aug, cfg.hls.candidates, cfg.ssp)),
                              cfg.ssp);
    case SelectorChoice::GradDeltaMax:
      cfg.hls.validate(layers);
      return hls::fixed_route(
          aug, selectors::grad_delta_max(selectors::grad_norms(aug, cfg.hls.candidates, cfg.ssp)), cfg.ssp);
  }
  throw Error(ErrorKind::BadConfig, "unknown selector");
}

std::vector<const store::FeatureDump*> support_ptrs(const store::Episode& ep) {
  std::vector<const store::FeatureDump*> out;
  for (const auto& s : ep.supports) out.push_back(s.get());
  return out;
}

double frozen_query_iou(const store::Episode& ep, const hls::Representation& rep, const ssp::SspConfig& ssp,
                        const BinaryMask& gt) {
  std::vector<Matrix> feats;
  std::vector<Vector> masks;
  for (int i = 0; i < ep.effective_shot(); ++i) {
    feats.push_back(hls::representation_features(ep.support(i), rep));
    masks.push_back(ep.support(i).soft_mask().values);
  }
  const auto pred =
      ssp::predict_or_trivial(hls::representation_features(*ep.query, rep), ssp::pool_prototypes(feats, masks), ssp);
  return num::binary_iou(pac::mask_from_logits(ep.grid(), pred.base_logit), gt);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot open " + path.string() + " for writing");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::Io, "cannot create " + dir.string() + ": " + ec.message());
}

} // namespace

store::Episode prepare_episode(const store::Episode& episode, const RunConfig& cfg, int index) {
  store::validate_episode(episode);
  if (episode.effective_shot() != 1) return episode;
  return tta::augment_one_shot(episode, cfg.tta.augment_views,
                               derive_seed(cfg.seed, {kAugmentStream, static_cast<std::uint64_t>(index)}));
}

hls::RoutingDecision route_episode(const store::Episode& episode, const RunConfig& cfg, int index) {
  return route_prepared(prepare_episode(episode, cfg, index), cfg);
}

EpisodeResult run_episode(const store::Episode& episode, const RunConfig& cfg, int index) {
  const auto t_start = Clock::now();
  EpisodeResult r;
  r.index = index;
  r.class_id = episode.class_id;
  r.shot = episode.shot;

  const store::Episode aug = prepare_episode(episode, cfg, index);
  r.routing = route_prepared(aug, cfg);
  r.timings.route_ms = ms_since(t_start);

  const auto t_adapt = Clock::now();
  tta::AdaptResult adapted = tta::adapt(aug, r.routing, cfg.tta, cfg.ssp.kappa);
  r.initial_loss = adapted.initial_loss;
  r.final_loss = adapted.final_loss;
  r.step_losses = adapted.step_losses;
  r.adapt_aborted = adapted.aborted;
  r.timings.adapt_ms = ms_since(t_adapt);

  const auto t_cal = Clock::now();
  const auto& rep = r.routing.rep;
  const auto& head = adapted.head;
  const auto supports = support_ptrs(aug);
  const int n = aug.grid().size();
  if (cfg.pac.enabled) {
    const auto in = pac::branch_inputs(*aug.query, supports, rep, head, cfg.pgr);
    r.maps = pac::compute_maps(in, cfg.ssp, cfg.pac);
  } else {
    std::vector<Matrix> feats;
    std::vector<Vector> masks;
    for (const auto* s : supports) {
      feats.push_back(tta::apply_head(head, hls::representation_features(*s, rep)));
      masks.push_back(s->soft_mask().values);
    }
    const Matrix fq = tta::apply_head(head, hls::representation_features(*aug.query, rep));
    r.maps.base = ssp::predict_or_trivial(fq, ssp::pool_prototypes(feats, masks), cfg.ssp).base_logit;
    r.maps.sim = Vector::Zero(n);
    r.maps.attn = Vector::Zero(n);
    r.maps.img = Vector::Zero(n);
  }
  r.gate = pac::decide_gate(aug, rep, head, cfg.ssp, cfg.pgr, cfg.pac);
  r.maps.final = pac::fuse(r.maps, cfg.pac, r.gate.on);
  r.prediction = pac::mask_from_logits(aug.grid(), r.maps.final);
  r.base_prediction = pac::mask_from_logits(aug.grid(), r.maps.base);
  r.timings.calibrate_ms = ms_since(t_cal);

  if (const auto gt = episode.query_ground_truth()) {
    r.iou = num::binary_iou(r.prediction, *gt);
    r.base_iou = num::binary_iou(r.base_prediction, *gt);
  }
  r.timings.total_ms = ms_since(t_start);
  return r;
}

SelectorComparison compare_selectors(const store::Episode& episode, const RunConfig& cfg, int index,
                                     const hls::RoutingDecision* routing) {
  const store::Episode aug = prepare_episode(episode, cfg, index);
  cfg.hls.validate(aug.query->layers);
  SelectorComparison out;
  out.index = index;

  hls::RoutingDecision hls_decision = routing ? *routing : hls::route(aug, cfg.hls, cfg.ssp);
  bool have_all = true;
  for (int l : cfg.hls.candidates) have_all = have_all && hls_decision.per_layer_risk.count(l) != 0;
  out.layer_etr = have_all ? hls_decision.per_layer_risk : hls::select_single(aug, cfg.hls, cfg.ssp).per_layer_risk;

  out.oracle_layer = cfg.hls.candidates.front();
  out.oracle_etr = std::numeric_limits<double>::infinity();
  for (const auto& [l, e] : out.layer_etr) {
    if (e <= out.oracle_etr) {
      out.oracle_etr = e;
      out.oracle_layer = l;
    }
  }

  const auto gt = episode.query_ground_truth();
  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::map<int, double> layer_iou;
  out.oracle_query_iou = nan;
  if (gt) {
    double best = -1.0;
    for (int l : cfg.hls.candidates) {
      layer_iou[l] = frozen_query_iou(aug, hls::Representation::single(l), cfg.ssp, *gt);
      best = std::max(best, layer_iou[l]);
    }
    out.oracle_query_iou = best;
  }

  auto add = [&](const std::string& name, const hls::Representation& rep, double etr_value) {
    SelectorEntry e;
    e.selector = name;
    e.layers = rep.layers;
    e.etr = etr_value;
    e.regret = etr_value - out.oracle_etr;
    if (gt) {
      e.query_iou = rep.kind == hls::RouteKind::Single ? layer_iou.at(rep.layers.front())
                                                       : frozen_query_iou(aug, rep, cfg.ssp, *gt);
      e.iou_regret = out.oracle_query_iou - e.query_iou;
    } else {
      e.query_iou = nan;
      e.iou_regret = nan;
    }
    out.entries.push_back(std::move(e));
  };

  add("hls", hls_decision.rep, hls_decision.etr);
  const int sm = selectors::static_max(aug, cfg.hls.candidates, cfg.static_max, cfg.ssp);
  add("static_max", hls::Representation::single(sm), out.layer_etr.at(sm));
  const auto norms = selectors::grad_norms(aug, cfg.hls.candidates, cfg.ssp);
  const int gm = selectors::grad_max(norms);
  add("grad_max", hls::Representation::single(gm), out.layer_etr.at(gm));
  const int gd = selectors::grad_delta_max(norms);
  add("grad_delta_max", hls::Representation::single(gd), out.layer_etr.at(gd));
  return out;
}

EpisodeSource::EpisodeSource(const RunConfig& cfg) : cfg_(&cfg) {
  count_ = cfg.synthetic ? cfg.synthetic->episodes : static_cast<int>(cfg.manifests.size());
}

store::Episode EpisodeSource::get(int index) const {
  if (index < 0 || index >= count_) throw Error(ErrorKind::InvalidArgument, "episode index out of range");
  if (cfg_->synthetic) {
    synth::SyntheticSpec spec = *cfg_->synthetic;
    if (cfg_->shot > 0) spec.shot = cfg_->shot;
    return synth::gen_synthetic_episode(spec, cfg_->seed, index);
  }
  store::Episode ep = store::load_episode(cfg_->manifests[static_cast<std::size_t>(index)]);
  if (cfg_->shot > 0 && cfg_->shot != ep.shot) {
    if (cfg_->shot > ep.effective_shot()) {
      throw Error(ErrorKind::InsufficientSupports, "manifest " + cfg_->manifests[static_cast<std::size_t>(index)].string() +
                                                       " has fewer supports than the configured shot");
    }
    ep.supports.resize(static_cast<std::size_t>(cfg_->shot));
    ep.shot = cfg_->shot;
  }
  return ep;
}

void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
  if (n <= 0) return;
  const int workers = std::max(1, std::min(threads, n));
  if (workers == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      while (true) {
        const int i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(failure_mutex);
          if (!failure) failure = std::current_exception();
          next.store(n);
          return;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

BenchmarkOutput run_benchmark(const RunConfig& cfg) {
  cfg.validate();
  const EpisodeSource source(cfg);
  if (source.size() == 0) throw Error(ErrorKind::InvalidArgument, "benchmark has no episodes");
  BenchmarkOutput out;
  out.results.resize(static_cast<std::size_t>(source.size()));
  out.selectors.resize(static_cast<std::size_t>(source.size()));
  parallel_for(source.size(), cfg.threads, [&](int i) {
    const store::Episode ep = source.get(i);
    auto& r = out.results[static_cast<std::size_t>(i)];
    r = run_episode(ep, cfg, i);
    out.selectors[static_cast<std::size_t>(i)] =
        compare_selectors(ep, cfg, i, cfg.selector == SelectorChoice::Hls ? &r.routing : nullptr);
  });

  auto& s = out.summary;
  s.episodes = source.size();
  double iou_sum = 0.0;
  double base_sum = 0.0;
  int on = 0;
  int auto_on = 0;
  int fusion = 0;
  double etr_sum = 0.0;
  for (const auto& r : out.results) {
    if (r.iou) {
      ++s.evaluated;
      iou_sum += *r.iou;
      base_sum += *r.base_iou;
    }
    on += r.gate.on ? 1 : 0;
    if (r.gate.gate.mode == pac::GateMode::Auto) {
      ++s.auto_episodes;
      auto_on += r.gate.on ? 1 : 0;
    }
    fusion += r.routing.rep.kind == hls::RouteKind::Fusion ? 1 : 0;
    etr_sum += r.routing.etr;
  }
  if (s.evaluated > 0) {
    s.mean_iou = iou_sum / s.evaluated;
    s.mean_base_iou = base_sum / s.evaluated;
  }
  s.trigger_rate = static_cast<double>(on) / s.episodes;
  s.auto_trigger_rate = s.auto_episodes > 0 ? static_cast<double>(auto_on) / s.auto_episodes : 0.0;
  s.fusion_rate = static_cast<double>(fusion) / s.episodes;
  s.mean_etr = etr_sum / s.episodes;
  std::map<std::string, int> iou_counts;
  for (const auto& c : out.selectors) {
    for (const auto& e : c.entries) {
      s.mean_regret[e.selector] += e.regret / s.episodes;
      if (!std::isnan(e.iou_regret)) {
        s.mean_iou_regret[e.selector] += e.iou_regret;
        ++iou_counts[e.selector];
      }
    }
  }
  for (auto& [name, v] : s.mean_iou_regret) v /= iou_counts[name];

  ensure_dir(cfg.output_dir);
  out.episodes_csv = cfg.output_dir / "episodes.csv";
  out.selectors_csv = cfg.output_dir / "selectors.csv";
  out.summary_json = cfg.output_dir / "summary.json";
  write_text(out.episodes_csv, report::episodes_csv(out.results));
  write_text(out.selectors_csv, report::selectors_csv(out.selectors));
  write_text(out.summary_json, report::summary_json(s, cfg));
  return out;
}

std::vector<SelectorComparison> run_selector_comparison(const RunConfig& cfg, std::filesystem::path* csv) {
  cfg.validate();
  const EpisodeSource source(cfg);
  if (source.size() == 0) throw Error(ErrorKind::InvalidArgument, "comparison has no episodes");
  std::vector<SelectorComparison> rows(static_cast<std::size_t>(source.size()));
  parallel_for(source.size(), cfg.threads,
               [&](int i) { rows[static_cast<std::size_t>(i)] = compare_selectors(source.get(i), cfg, i); });
  ensure_dir(cfg.output_dir);
  const auto path = cfg.output_dir / "selectors.csv";
  write_text(path, report::selectors_csv(rows));
  if (csv) *csv = path;
  return rows;
}

} // namespace hera
