#include "hera/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "hera/error.hpp"
#include "hera/numerics.hpp"
#include "hera/seed.hpp"

namespace hera::synth {
namespace {

struct EpisodeLatents {
  Vector e_fg;
  Vector e_bg;
  double color_fg[3];
  double color_bg[3];
};

EpisodeLatents make_latents(const SyntheticSpec& spec, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  EpisodeLatents z;
  z.e_fg = Vector(spec.dim);
  z.e_bg = Vector(spec.dim);
  for (int d = 0; d < spec.dim; ++d) z.e_fg[d] = normal(rng);
  for (int d = 0; d < spec.dim; ++d) z.e_bg[d] = normal(rng);
  z.e_fg.normalize();
  z.e_bg -= z.e_bg.dot(z.e_fg) * z.e_fg;
  z.e_bg.normalize();
  std::uniform_real_distribution<double> unit(0.15, 0.85);
  do {
    for (int c = 0; c < 3; ++c) {
      z.color_fg[c] = unit(rng);
      z.color_bg[c] = unit(rng);
    }
  } while (std::abs(z.color_fg[0] - z.color_bg[0]) + std::abs(z.color_fg[1] - z.color_bg[1]) +
               std::abs(z.color_fg[2] - z.color_bg[2]) <
           0.3);
  return z;
}

double layer_margin(const SyntheticSpec& spec, int layer) {
  if (layer == spec.planted_layer) return spec.margin;
  if (spec.neighbor_decay <= 0.0) return 0.0;
  return spec.margin * std::pow(spec.neighbor_decay, std::abs(layer - spec.planted_layer));
}

std::vector<bool> boundary_cells(const BinaryMask& m) {
  const Grid g = m.grid;
  std::vector<bool> out(static_cast<std::size_t>(g.size()), false);
  for (int i = 0; i < g.size(); ++i) {
    if (!m.values[static_cast<std::size_t>(i)]) continue;
    const int r = g.row(i);
    const int c = g.col(i);
    const int dr[4] = {-1, 1, 0, 0};
    const int dc[4] = {0, 0, -1, 1};
    for (int k = 0; k < 4; ++k) {
      const int rr = r + dr[k];
      const int cc = c + dc[k];
      if (rr < 0 || rr >= g.height || cc < 0 || cc >= g.width) continue;
      if (!m.values[static_cast<std::size_t>(g.index(rr, cc))]) out[static_cast<std::size_t>(i)] = true;
    }
  }
  return out;
}

void fill_attention(const SyntheticSpec& spec, const BinaryMask& mask, std::mt19937_64& rng,
                    std::vector<float>& qk_one, std::vector<float>& kk_one) {
  const Grid g = mask.grid;
  const int n = g.size();
  const auto nn = static_cast<std::size_t>(n) * static_cast<std::size_t>(n);
  qk_one.assign(static_cast<std::size_t>(spec.heads) * nn, 0.0f);
  kk_one.assign(static_cast<std::size_t>(spec.heads) * nn, 0.0f);
  std::normal_distribution<double> normal(0.0, spec.attention_noise);
  for (int h = 0; h < spec.heads; ++h) {
    // Heads alternate between local and diffuse patterns.
    const double bw = 1.5 * std::pow(2.0, h % 4);
    const double kk_bw = (h % 2 == 0) ? bw * 2.0 : bw * 0.5;
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        const double dr = g.row(i) - g.row(j);
        const double dc = g.col(i) - g.col(j);
        const double d2 = dr * dr + dc * dc;
        const bool same = mask.values[static_cast<std::size_t>(i)] == mask.values[static_cast<std::size_t>(j)];
        const std::size_t at = static_cast<std::size_t>(h) * nn + static_cast<std::size_t>(i) * n + j;
        qk_one[at] = static_cast<float>(-d2 / (2.0 * bw * bw) + (same ? spec.attention_affinity : 0.0) + normal(rng));
        kk_one[at] = static_cast<float>(-d2 / (2.0 * kk_bw * kk_bw) + normal(rng));
      }
    }
  }
}

store::FeatureDump make_dump(const SyntheticSpec& spec, const EpisodeLatents& z, const BinaryMask& mask,
                             std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const Grid g = mask.grid;
  const int n = g.size();
  const int d = spec.dim;
  store::FeatureDump dump;
  dump.meta.grid = g;
  dump.meta.patch_size = spec.patch_size;
  dump.meta.backbone = "synthetic";
  dump.meta.exported_layers = spec.resolved_exported_layers();
  dump.layers = spec.layers;
  dump.channels = d;
  dump.heads = spec.heads;
  dump.tokens.resize(static_cast<std::size_t>(spec.layers) * n * d);

  const auto boundary = boundary_cells(mask);
  std::vector<bool> corrupt(static_cast<std::size_t>(n), false);
  for (int i = 0; i < n; ++i) {
    corrupt[static_cast<std::size_t>(i)] = boundary[static_cast<std::size_t>(i)] && unit(rng) < spec.boundary_corruption;
  }
  const double scale = 1.0 / std::sqrt(2.0);
  for (int l = 0; l < spec.layers; ++l) {
    const double m = layer_margin(spec, l);
    const Vector mu_fg = (m * scale) * z.e_fg;
    const Vector mu_bg = (m * scale) * z.e_bg;
    const Vector mu_mid = 0.5 * (mu_fg + mu_bg);
    for (int i = 0; i < n; ++i) {
      const bool fg = mask.values[static_cast<std::size_t>(i)] != 0;
      const Vector& mu = corrupt[static_cast<std::size_t>(i)] ? mu_mid : (fg ? mu_fg : mu_bg);
      float* dst = dump.tokens.data() + (static_cast<std::size_t>(l) * n + i) * d;
      for (int k = 0; k < d; ++k) dst[k] = static_cast<float>(mu[k] + spec.noise * normal(rng));
    }
  }

  dump.image_small.resize(static_cast<std::size_t>(3 * n));
  for (int c = 0; c < 3; ++c) {
    for (int i = 0; i < n; ++i) {
      const double base = mask.values[static_cast<std::size_t>(i)] ? z.color_fg[c] : z.color_bg[c];
      dump.image_small[static_cast<std::size_t>(c * n + i)] =
          static_cast<float>(std::clamp(base + spec.color_noise * normal(rng), 0.0, 1.0));
    }
  }

  std::vector<float> qk_one;
  std::vector<float> kk_one;
  fill_attention(spec, mask, rng, qk_one, kk_one);
  const std::size_t la = dump.meta.exported_layers.size();
  dump.qk_logits.reserve(la * qk_one.size());
  dump.kk_logits.reserve(la * kk_one.size());
  for (std::size_t s = 0; s < la; ++s) {
    dump.qk_logits.insert(dump.qk_logits.end(), qk_one.begin(), qk_one.end());
    dump.kk_logits.insert(dump.kk_logits.end(), kk_one.begin(), kk_one.end());
  }
  dump.mask = mask.values;
  return dump;
}

} // namespace

void SyntheticSpec::validate() const {
  if (grid_h <= 0 || grid_w <= 0 || dim <= 0 || layers <= 0 || heads <= 0 || patch_size <= 0) {
    throw Error(ErrorKind::BadConfig, "synthetic dimensions must be positive");
  }
  if (grid_h * grid_w < 2) throw Error(ErrorKind::BadConfig, "synthetic grid needs at least two cells");
  if (planted_layer < 0 || planted_layer >= layers) throw Error(ErrorKind::BadConfig, "planted layer out of range");
  if (!(margin >= 0.0) || !(noise >= 0.0)) throw Error(ErrorKind::BadConfig, "margin and noise must be non-negative");
  if (episodes < 0) throw Error(ErrorKind::BadConfig, "episode count must be non-negative");
  if (shot < 1) throw Error(ErrorKind::BadConfig, "shot must be at least 1");
  if (!(boundary_corruption >= 0.0 && boundary_corruption <= 1.0)) {
    throw Error(ErrorKind::BadConfig, "boundary_corruption must lie in [0,1]");
  }
  if (mask_supersample < 1) throw Error(ErrorKind::BadConfig, "mask_supersample must be at least 1");
  const auto ex = resolved_exported_layers();
  for (std::size_t i = 0; i < ex.size(); ++i) {
    if (ex[i] < 0 || ex[i] >= layers || (i > 0 && ex[i] <= ex[i - 1])) {
      throw Error(ErrorKind::BadConfig, "exported layers must be increasing and below the layer count");
    }
  }
}

std::vector<int> SyntheticSpec::resolved_exported_layers() const {
  if (!exported_layers.empty()) return exported_layers;
  std::vector<int> out{planted_layer};
  if (layers - 1 != planted_layer) out.push_back(layers - 1);
  return out;
}

BinaryMask random_ellipse_mask(const Grid& grid, int supersample, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const Grid fine{grid.height * supersample, grid.width * supersample};
  for (int attempt = 0;; ++attempt) {
    const double cy = (0.3 + 0.4 * unit(rng)) * fine.height;
    const double cx = (0.3 + 0.4 * unit(rng)) * fine.width;
    const double ry = (0.15 + 0.2 * unit(rng)) * fine.height;
    const double rx = (0.15 + 0.2 * unit(rng)) * fine.width;
    const double theta = std::numbers::pi * unit(rng);
    const double ct = std::cos(theta);
    const double st = std::sin(theta);
    BinaryMask hi{fine, std::vector<std::uint8_t>(static_cast<std::size_t>(fine.size()), 0)};
    for (int r = 0; r < fine.height; ++r) {
      for (int c = 0; c < fine.width; ++c) {
        const double y = r + 0.5 - cy;
        const double x = c + 0.5 - cx;
        const double u = (ct * x + st * y) / rx;
        const double v = (-st * x + ct * y) / ry;
        hi.values[static_cast<std::size_t>(fine.index(r, c))] = (u * u + v * v <= 1.0) ? 1 : 0;
      }
    }
    BinaryMask out = num::binarize(grid, num::resample_mask(hi, grid).values);
    const int fg = out.count();
    if ((fg > 0 && fg < grid.size()) || attempt > 64) {
      if (fg == 0) out.values[static_cast<std::size_t>(grid.size() / 2)] = 1;
      if (fg == grid.size()) out.values[0] = 0;
      return out;
    }
  }
}

store::Episode gen_synthetic_episode(const SyntheticSpec& spec, std::uint64_t seed, int index) {
  spec.validate();
  const std::uint64_t ep_seed = derive_seed(seed, {static_cast<std::uint64_t>(index)});
  std::mt19937_64 rng(derive_seed(ep_seed, {0}));
  const EpisodeLatents z = make_latents(spec, rng);
  const Grid grid{spec.grid_h, spec.grid_w};
  store::Episode ep;
  ep.shot = spec.shot;
  ep.class_id = "synthetic-" + std::to_string(index);
  for (int k = 0; k <= spec.shot; ++k) {
    const auto mask = random_ellipse_mask(grid, spec.mask_supersample, derive_seed(ep_seed, {1, static_cast<std::uint64_t>(k)}));
    auto dump = std::make_shared<const store::FeatureDump>(
        make_dump(spec, z, mask, derive_seed(ep_seed, {2, static_cast<std::uint64_t>(k)})));
    if (k < spec.shot) {
      ep.supports.push_back(std::move(dump));
    } else {
      ep.query = std::move(dump);
    }
  }
  return ep;
}

std::vector<store::Episode> gen_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::vector<store::Episode> out;
  out.reserve(static_cast<std::size_t>(spec.episodes));
  for (int i = 0; i < spec.episodes; ++i) out.push_back(gen_synthetic_episode(spec, seed, i));
  return out;
}

} // namespace hera::synth
