// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "hera/error.hpp"
#include "hera/feature_store.hpp"
#include "hera/hls.hpp"
#include "hera/numerics.hpp"
#include "hera/pac.hpp"
#include "hera/pgr.hpp"
#include "hera/pipeline.hpp"
#include "hera/ssp_head.hpp"
#include "hera/synthetic.hpp"
#include "hera/tta.hpp"
#include "support/oracles.hpp"
#include "support/test_util.hpp"

using namespace hera;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

int failures = 0;

void report(bool ok, const std::string& name, const std::string& detail) {
  std::printf("%s %s: %s\n", ok ? "PASS" : "FAIL", name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof(buf), f, a);
  return buf;
}

double vec_rel_err(const Vector& a, const oracle::Vec& b) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) worst = std::max(worst, oracle::rel_err(a[i], b[static_cast<std::size_t>(i)]));
  return worst;
}

store::Episode planted_episode(const synth::SyntheticSpec& spec, std::uint64_t seed, int index) {
  return synth::gen_synthetic_episode(spec, seed, index);
}

std::vector<const store::FeatureDump*> support_ptrs(const store::Episode& ep) {
  std::vector<const store::FeatureDump*> out;
  for (int i = 0; i < ep.effective_shot(); ++i) out.push_back(&ep.support(i));
  return out;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// One-sided sign test: P(X >= wins) for X ~ Binomial(n, 1/2).
double sign_test_p(int wins, int n) {
  double p = 0.0;
  for (int k = wins; k <= n; ++k) {
    p += std::exp(std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0) - n * std::log(2.0));
  }
  return std::min(1.0, p);
}

void oracle_equivalence() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<int> size(2, 48);
  const pac::PacConfig pac_cfg;
  double worst[7] = {0, 0, 0, 0, 0, 0, 0};
  for (int t = 0; t < 100; ++t) {
    const int n = size(rng);
    const int d = 1 + size(rng) % 24;
    const Matrix f = testutil::random_matrix(rng, n, d);
    const auto rows = testutil::to_rows(f);
    Vector w = testutil::random_unit_interval(rng, n);
    w[0] = 1.0;
    const Vector p = testutil::random_vector(rng, d);
    const Vector q = testutil::random_vector(rng, d);

    worst[0] = std::max(worst[0], vec_rel_err(num::masked_avg_pool(f, w).vec,
                                              oracle::masked_avg_pool(rows, testutil::to_vec(w))));
    worst[1] = std::max(worst[1], vec_rel_err(num::cos_map(f, num::Prototype{p}), oracle::cos_map(rows, testutil::to_vec(p))));

    const Matrix logits = testutil::random_matrix(rng, n, n, 3.0);
    worst[2] = std::max(worst[2], oracle::rel_err(num::row_entropy_mean(logits),
                                                  oracle::row_entropy_mean(testutil::to_rows(logits))));

    num::ProbMap coarse;
    coarse.values = testutil::random_unit_interval(rng, n);
    coarse.values[0] = 0.0;
    const auto bg = ssp::self_support_bg(f, coarse, num::Prototype{q, num::PrototypeKind::Background}, ssp::SspConfig{});
    worst[3] = std::max(worst[3], vec_rel_err(bg.proto.vec, oracle::self_support_bg(rows, testutil::to_vec(coarse.values), 0.6)));

    worst[4] = std::max(worst[4], vec_rel_err(pac::l_sim(f, num::Prototype{p}, num::Prototype{q}, pac_cfg),
                                              oracle::l_sim(rows, testutil::to_vec(p), testutil::to_vec(q), pac_cfg.tau_sim)));
    const Matrix a = num::row_softmax(logits);
    const Vector base = testutil::random_vector(rng, n, 3.0);
    worst[5] = std::max(worst[5], vec_rel_err(pac::l_attn(a, base, pac_cfg),
                                              oracle::l_attn(testutil::to_rows(a), testutil::to_vec(base), pac_cfg.tau_attn)));
    const Matrix v = testutil::random_matrix(rng, n, pac::kAppearanceDim);
    const Vector uf = testutil::random_vector(rng, pac::kAppearanceDim);
    const Vector ub = testutil::random_vector(rng, pac::kAppearanceDim);
    worst[6] = std::max(worst[6], vec_rel_err(pac::l_img(v, num::Prototype{uf}, num::Prototype{ub}, pac_cfg),
                                              oracle::l_img(testutil::to_rows(v), testutil::to_vec(uf), testutil::to_vec(ub),
                                                            pac_cfg.tau_img)));
  }
  const double secs = seconds_since(t0);
  const char* names[7] = {"masked_avg_pool", "cos_map", "row_entropy_mean", "self_support_bg", "l_sim", "l_attn", "l_img"};
  std::string detail;
  bool ok = secs < 10.0;
  for (int i = 0; i < 7; ++i) {
    ok = ok && worst[i] <= 1e-5;
    detail += std::string(names[i]) + fmt("=%.2e ", worst[i]);
  }
  report(ok, "oracle-equivalence", detail + fmt("(100 instances each, %.2fs)", secs));
}

void gradient_check() {
  std::mt19937_64 rng(202);
  double worst = 0.0;
  for (int t = 0; t < 20; ++t) {
    const int d = 4 + static_cast<int>(rng() % 13);  // <= 16
    const int n = 9 + static_cast<int>(rng() % 28);  // <= 36
    const int k = 3 + static_cast<int>(rng() % 2);
    const int h = 2 + static_cast<int>(rng() % 15);
    tta::LooProblem p;
    for (int s = 0; s < k; ++s) {
      p.feats.push_back(testutil::random_matrix(rng, n, d));
      Vector m = testutil::random_unit_interval(rng, n);
      for (int i = 0; i < n; ++i) m[i] = m[i] < 0.4 ? 1.0 : 0.0;
      m[0] = 1.0;
      m[n - 1] = 0.0;
      p.masks.push_back(m);
    }
    auto head = tta::AdaptedHead::zero_init(d, h, tta::HeadVariant::M2, rng());
    head.params.w2 = testutil::random_matrix(rng, h, d, 0.3);
    head.params.b1 = testutil::random_vector(rng, h, 0.3);
    head.params.b2 = testutil::random_vector(rng, d, 0.3);
    const int order = 1 + static_cast<int>(rng() % (k - 1));
    auto lg = tta::combination_loss(p, head, order, true);
    std::vector<double*> params;
    std::vector<double> analytic;
    auto collect = [&](auto& m, const auto& g) {
      for (Eigen::Index i = 0; i < m.size(); ++i) {
        params.push_back(m.data() + i);
        analytic.push_back(g.data()[i]);
      }
    };
    collect(head.params.w1, lg.grad.w1);
    collect(head.params.b1, lg.grad.b1);
    collect(head.params.w2, lg.grad.w2);
    collect(head.params.b2, lg.grad.b2);
    double diff = 0.0;
    double ref = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
      const double orig = *params[i];
      const double step = 1e-5;
      *params[i] = orig + step;
      const double up = tta::combination_loss(p, head, order, false).loss;
      *params[i] = orig - step;
      const double down = tta::combination_loss(p, head, order, false).loss;
      *params[i] = orig;
      const double fd = (up - down) / (2.0 * step);
      diff += (analytic[i] - fd) * (analytic[i] - fd);
      ref += fd * fd;
    }
    worst = std::max(worst, std::sqrt(diff) / std::max(std::sqrt(ref), 1e-12));
  }
  report(worst <= 1e-3, "gradient-check", fmt("max relative error %.2e over 20 heads (D<=16, N<=36)", worst));
}

struct HlsRun {
  std::vector<hls::RoutingDecision> decisions;
};

HlsRun hls_recovery(const synth::SyntheticSpec& spec, std::uint64_t seed) {
  const auto t0 = Clock::now();
  HlsRun run;
  int hits = 0;
  int dominated = 0;
  for (int i = 0; i < spec.episodes; ++i) {
    const auto ep = planted_episode(spec, seed, i);
    auto d = hls::route(ep, {}, {});
    hits += d.single_layer == spec.planted_layer;
    dominated += d.etr <= d.single_etr;
    run.decisions.push_back(std::move(d));
  }
  const double secs = seconds_since(t0);
  const double rate = static_cast<double>(hits) / spec.episodes;
  char buf[256];
  std::snprintf(buf, sizeof(buf), "planted layer chosen %d/%d (%.1f%%), route ETR <= single ETR %d/%d, %.1fs", hits,
                spec.episodes, 100.0 * rate, dominated, spec.episodes, secs);
  report(rate >= 0.95 && dominated == spec.episodes && secs < 120.0, "hls-planted-recovery", buf);
  return run;
}

void fusion_limits(const HlsRun& run) {
  const hls::HlsConfig base;
  double worst_sum = 0.0;
  double min_peak = 1.0;
  double worst_limit[3] = {0, 0, 0};
  const double betas[3] = {1.0, 10.0, 100.0};
  const double taus[3] = {0.5, 2.0, 1e6};
  int pools = 0;
  for (const auto& d : run.decisions) {
    for (const auto& pool : hls::default_pools(d.single_layer, base)) {
      ++pools;
      for (int bi = 0; bi < 3; ++bi) {
        for (double tau : taus) {
          hls::HlsConfig cfg = base;
          cfg.beta = betas[bi];
          cfg.tau_fusion = tau;
          const auto w = hls::fusion_weights(pool, d.per_layer_risk, cfg);
          double total = 0.0;
          for (double x : w) total += x;
          worst_sum = std::max(worst_sum, std::abs(total - 1.0));
          if (betas[bi] == 100.0) {
            std::size_t arg = 0;
            for (std::size_t i = 1; i < pool.size(); ++i) {
              if (d.per_layer_risk.at(pool[i]) < d.per_layer_risk.at(pool[arg])) arg = i;
            }
            min_peak = std::min(min_peak, w[arg]);
          }
          if (tau == 1e6) {
            oracle::Vec z;
            for (int l : pool) z.push_back(-betas[bi] * d.per_layer_risk.at(l));
            const auto ref = oracle::softmax(z);
            for (std::size_t i = 0; i < w.size(); ++i) worst_limit[bi] = std::max(worst_limit[bi], std::abs(w[i] - ref[i]));
          }
        }
      }
    }
  }
  const double limit = std::max({worst_limit[0], worst_limit[1], worst_limit[2]});
  char buf[320];
  std::snprintf(buf, sizeof(buf),
                "%d routed pools; |sum-1| max %.1e; beta=100 min-risk weight min %.4f; tau=1e6 vs softmax(-beta r) "
                "max dev beta=1 %.2e, beta=10 %.2e, beta=100 %.2e",
                pools, worst_sum, min_peak, worst_limit[0], worst_limit[1], worst_limit[2]);
  report(worst_sum <= 1e-6 && min_peak >= 0.99 && limit <= 1e-6, "fusion-weight-limits", buf);
}

void pgr_contracts() {
  std::mt19937_64 rng(303);
  const Grid grid{25, 25};
  const int n = grid.size();
  const pgr::PgrConfig cfg;
  pgr::PgrConfig flat = cfg;
  flat.sigma_loc = 1e8;
  flat.sigma_glo = 1e9;
  double worst_row = 0.0;
  double worst_limit = 0.0;
  int decreased = 0;
  std::uniform_real_distribution<double> scale(0.2, 4.0);
  for (int t = 0; t < 100; ++t) {
    std::vector<Matrix> qk{testutil::random_matrix(rng, n, n, scale(rng))};
    std::vector<Matrix> kk{testutil::random_matrix(rng, n, n, scale(rng))};
    const auto cal = pgr::calibrate_attention(qk, kk, grid, cfg);
    const Matrix& a = cal.heads[0];
    for (int i = 0; i < n; ++i) worst_row = std::max(worst_row, std::abs(a.row(i).sum() - 1.0));
    const Matrix raw = num::row_softmax(qk[0]);
    const double radius = 3.0 * cal.gates[0].sigma;
    decreased += pgr::far_field_mass(a, grid, radius) < pgr::far_field_mass(raw, grid, radius);
    if (t < 20) {
      const auto lim = pgr::calibrate_attention(qk, kk, grid, flat);
      worst_limit = std::max(worst_limit, (lim.heads[0] - raw).cwiseAbs().maxCoeff());
    }
  }
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "row-sum dev %.1e; sigma->inf dev %.1e; far-field mass decreased on %d/100 heads (25x25 grid)", worst_row,
                worst_limit, decreased);
  report(worst_row <= 1e-6 && worst_limit <= 1e-6 && decreased == 100, "pgr-contracts", buf);
}

void pac_contracts() {
  // Zero-weight fusion and gate-off path.
  std::mt19937_64 rng(404);
  bool zero_ok = true;
  for (int t = 0; t < 100; ++t) {
    pac::LogitMaps m;
    const int n = 4 + static_cast<int>(rng() % 200);
    m.base = testutil::random_vector(rng, n, 5.0);
    m.sim = testutil::random_vector(rng, n);
    m.attn = testutil::random_vector(rng, n);
    m.img = testutil::random_vector(rng, n);
    pac::PacConfig zero;
    zero.w_sim = zero.w_attn = zero.w_img = 0.0;
    const Vector a = pac::fuse(m, zero, true);
    const Vector b = pac::fuse(m, pac::PacConfig{}, false);
    zero_ok = zero_ok && std::equal(a.data(), a.data() + n, m.base.data(),
                                    [](double x, double y) { return std::memcmp(&x, &y, sizeof x) == 0; });
    zero_ok = zero_ok && std::equal(b.data(), b.data() + n, m.base.data(),
                                    [](double x, double y) { return std::memcmp(&x, &y, sizeof x) == 0; });
  }

  RunConfig full;
  synth::SyntheticSpec spec;
  spec.boundary_corruption = 0.3;
  spec.episodes = 200;
  full.synthetic = spec;
  full.seed = 4040;
  RunConfig gate_off = full;
  gate_off.pac.gate.mode = pac::GateMode::Off;
  RunConfig base = full;
  base.pac.enabled = false;

  const EpisodeSource src(full);
  bool off_ok = true;
  int wins = 0;
  int losses = 0;
  int triggered = 0;
  double sum_full = 0.0;
  double sum_base = 0.0;
  const auto t0 = Clock::now();
  for (int i = 0; i < src.size(); ++i) {
    const auto ep = src.get(i);
    const auto r_full = run_episode(ep, full, i);
    const auto r_base = run_episode(ep, base, i);
    if (i < 20) {
      const auto r_off = run_episode(ep, gate_off, i);
      off_ok = off_ok && r_off.prediction == r_base.prediction &&
               std::memcmp(r_off.maps.final.data(), r_base.maps.final.data(),
                           sizeof(double) * static_cast<std::size_t>(r_base.maps.final.size())) == 0;
    }
    triggered += r_full.gate.on;
    sum_full += *r_full.iou;
    sum_base += *r_base.iou;
    wins += *r_full.iou > *r_base.iou;
    losses += *r_full.iou < *r_base.iou;
  }
  const double mf = sum_full / src.size();
  const double mb = sum_base / src.size();
  const double p = sign_test_p(wins, wins + losses);
  char buf[320];
  std::snprintf(buf, sizeof(buf),
                "zero-weight bitwise %s; gate-off bitwise %s; corrupted boundaries 200 eps: mean IoU %.4f vs base %.4f, "
                "wins %d losses %d, sign-test p=%.2e, gate on %d/200, %.0fs",
                zero_ok ? "yes" : "no", off_ok ? "yes" : "no", mf, mb, wins, losses, p, triggered, seconds_since(t0));
  report(zero_ok && off_ok && mf >= mb && mf > mb && p < 0.05, "pac-contracts", buf);
}

void tta_progress() {
  synth::SyntheticSpec spec;
  spec.episodes = 100;
  int improved = 0;
  bool same = true;
  for (int i = 0; i < spec.episodes; ++i) {
    const auto ep = planted_episode(spec, 505, i);
    const auto d = hls::route(ep, {}, {});
    const auto r = tta::adapt(ep, d, {}, 10.0);
    improved += r.final_loss < r.initial_loss;
    if (i < 25) {
      const auto sup = support_ptrs(ep);
      std::vector<pac::LogitMaps> maps;
      for (auto v : {tta::HeadVariant::M0, tta::HeadVariant::M1, tta::HeadVariant::M2}) {
        const auto head = tta::AdaptedHead::zero_init(spec.dim, spec.dim, v, 7);
        maps.push_back(pac::compute_maps(pac::branch_inputs(*ep.query, sup, d.rep, head, {}), {}, {}));
      }
      for (int k = 1; k < 3; ++k) {
        for (Vector pac::LogitMaps::*pair : {&pac::LogitMaps::base, &pac::LogitMaps::sim, &pac::LogitMaps::attn, &pac::LogitMaps::img}) {
          const Vector& a = maps[0].*pair;
          const Vector& b = maps[static_cast<std::size_t>(k)].*pair;
          same = same && a.size() == b.size() &&
                 std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
        }
      }
    }
  }
  char buf[256];
  std::snprintf(buf, sizeof(buf), "loss decreased on %d/100 episodes; M0==M1==M2@t0 bitwise on 25 episodes: %s", improved,
                same ? "yes" : "no");
  report(improved >= 90 && same, "tta-progress", buf);
}

void selector_parity(const synth::SyntheticSpec& spec, std::uint64_t seed, const HlsRun& run) {
  RunConfig cfg;
  cfg.synthetic = spec;
  cfg.seed = seed;
  int ok = 0;
  double mean[4] = {0, 0, 0, 0};
  std::string names[4];
  for (int i = 0; i < spec.episodes; ++i) {
    const auto ep = planted_episode(spec, seed, i);
    const auto c = compare_selectors(ep, cfg, i, &run.decisions[static_cast<std::size_t>(i)]);
    bool dominates = true;
    for (std::size_t k = 0; k < c.entries.size(); ++k) {
      names[k] = c.entries[k].selector;
      mean[k] += c.entries[k].regret / spec.episodes;
      if (k > 0) dominates = dominates && c.entries[0].regret <= c.entries[k].regret;
    }
    ok += dominates;
  }
  char buf[320];
  std::snprintf(buf, sizeof(buf),
                "HLS regret <= every baseline on %d/%d episodes; mean regret %s %.4f, %s %.4f, %s %.4f, %s %.4f", ok,
                spec.episodes, names[0].c_str(), mean[0], names[1].c_str(), mean[1], names[2].c_str(), mean[2],
                names[3].c_str(), mean[3]);
  report(ok >= 0.8 * spec.episodes, "selector-parity", buf);
}

void format_roundtrip() {
  std::mt19937_64 rng(606);
  const fs::path dir = fs::temp_directory_path() / "hera_acceptance_format";
  fs::remove_all(dir);
  fs::create_directories(dir);
  int exact = 0;
  for (int i = 0; i < 50; ++i) {
    const Grid g{2 + static_cast<int>(rng() % 6), 2 + static_cast<int>(rng() % 6)};
    const int layers = 1 + static_cast<int>(rng() % 5);
    std::vector<int> exported;
    for (int l = 0; l < layers; ++l) {
      if (rng() % 2) exported.push_back(l);
    }
    if (exported.empty()) exported.push_back(layers - 1);
    const auto d = testutil::random_dump(rng, g, layers, 1 + static_cast<int>(rng() % 8), 1 + static_cast<int>(rng() % 3),
                                         exported, rng() % 2 == 0);
    const auto path = dir / ("d" + std::to_string(i) + ".hfd");
    store::write_dump(d, path);
    const auto back = store::read_dump(path);
    store::write_dump(back, dir / "again.hfd");
    exact += store::bitwise_equal(d, back) && slurp(path) == slurp(dir / "again.hfd");
  }

  const auto bytes = store::encode_dump(testutil::random_dump(rng, {4, 4}, 3, 6, 2, {1, 2}, true));
  int typed = 0;
  int cases = 0;
  int untyped = 0;
  auto attempt = [&](const std::vector<unsigned char>& b) {
    ++cases;
    try {
      store::decode_dump(b);
    } catch (const Error&) {
      ++typed;
    } catch (...) {
      ++untyped;
    }
  };
  for (std::size_t n = 0; n < bytes.size(); ++n) attempt({bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(n)});
  for (int i = 0; i < 4; ++i) {
    auto b = bytes;
    b[static_cast<std::size_t>(i)] ^= 0x55;
    attempt(b);
  }
  {
    std::uint32_t len = 0;
    for (int i = 0; i < 4; ++i) len |= static_cast<std::uint32_t>(bytes[4 + static_cast<std::size_t>(i)]) << (8 * i);
    std::string header(bytes.begin() + 8, bytes.begin() + 8 + len);
    for (const char* big : {"18446744073709551615", "9223372036854775807", "4294967296"}) {
      std::string h = header;
      const auto pos = h.find("\"offset\":");
      const auto end = h.find_first_of(",}", pos);
      h.replace(pos, end - pos, std::string("\"offset\":") + big);
      std::vector<unsigned char> b(bytes.begin(), bytes.begin() + 4);
      const auto n = static_cast<std::uint32_t>(h.size());
      for (int i = 0; i < 4; ++i) b.push_back(static_cast<unsigned char>(n >> (8 * i)));
      b.insert(b.end(), h.begin(), h.end());
      b.insert(b.end(), bytes.begin() + 8 + len, bytes.end());
      attempt(b);
    }
    auto b = bytes;
    for (int i = 0; i < 4; ++i) b[4 + static_cast<std::size_t>(i)] = 0xFF;
    attempt(b);
  }
  int flips_ok = 0;
  for (int t = 0; t < 2000; ++t) {
    auto b = bytes;
    for (int f = 0; f < 3; ++f) b[rng() % b.size()] ^= static_cast<unsigned char>(1u << (rng() % 8));
    try {
      store::decode_dump(b);
      ++flips_ok;
    } catch (const Error&) {
      ++flips_ok;
    } catch (...) {
      ++untyped;
    }
  }
  fs::remove_all(dir);
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "round trip bit-exact %d/50; corrupted inputs rejected with typed errors %d/%d; 2000 bit-flip inputs "
                "without untyped failure %d",
                exact, typed, cases, flips_ok);
  report(exact == 50 && typed == cases && untyped == 0, "format", buf);
}

void determinism() {
  RunConfig cfg;
  synth::SyntheticSpec spec;
  spec.episodes = 6;
  spec.shot = 5;
  cfg.synthetic = spec;
  cfg.seed = 707;
  cfg.output_dir = fs::temp_directory_path() / "hera_acceptance_det";
  fs::remove_all(cfg.output_dir);
  const auto a = run_benchmark(cfg);
  const std::string e1 = slurp(a.episodes_csv), s1 = slurp(a.selectors_csv), j1 = slurp(a.summary_json);
  fs::remove_all(cfg.output_dir);
  auto cfg1 = cfg;
  cfg1.synthetic->shot = 1;
  const auto c = run_benchmark(cfg1);
  const std::string e3 = slurp(c.episodes_csv), s3 = slurp(c.selectors_csv), j3 = slurp(c.summary_json);
  fs::remove_all(cfg.output_dir);
  const auto b = run_benchmark(cfg);
  const bool five = e1 == slurp(b.episodes_csv) && s1 == slurp(b.selectors_csv) && j1 == slurp(b.summary_json);
  fs::remove_all(cfg.output_dir);
  const auto d = run_benchmark(cfg1);
  const bool one = e3 == slurp(d.episodes_csv) && s3 == slurp(d.selectors_csv) && j3 == slurp(d.summary_json);
  fs::remove_all(cfg.output_dir);
  std::string detail = std::string("5-shot rerun byte-identical: ") + (five ? "yes" : "no") +
                       "; 1-shot (soft-copy augmentation) rerun byte-identical: " + (one ? "yes" : "no");
  report(five && one, "determinism", detail);
}

} // namespace

int main() {
  try {
    oracle_equivalence();
    gradient_check();
    synth::SyntheticSpec spec;  // 14x14 grid, D=32, L=24, margin/noise = 4, 5-shot
    spec.episodes = 200;
    const std::uint64_t seed = 2025;
    const auto run = hls_recovery(spec, seed);
    fusion_limits(run);
    pgr_contracts();
    pac_contracts();
    tta_progress();
    selector_parity(spec, seed, run);
    format_roundtrip();
    determinism();
  } catch (const std::exception& e) {
    std::printf("FAIL acceptance: unexpected exception: %s\n", e.what());
    return 1;
  }
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
