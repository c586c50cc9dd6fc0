#include "hera/heatmaps.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>

#include "hera/error.hpp"
#include "hera/numerics.hpp"

namespace hera::heatmap {
namespace {

void write_bytes(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

} // namespace

Vector layer_probability(const store::Episode& episode, int layer, const ssp::SspConfig& ssp) {
  std::vector<Matrix> feats;
  std::vector<Vector> masks;
  for (int i = 0; i < episode.effective_shot(); ++i) {
    feats.push_back(episode.support(i).layer_features(layer));
    masks.push_back(episode.support(i).soft_mask().values);
  }
  const auto protos = ssp::pool_prototypes(feats, masks);
  const int n = episode.grid().size();
  if (!protos.fg) return Vector::Zero(n);
  if (!protos.bg) return Vector::Ones(n);
  const Matrix fq = episode.query->layer_features(layer);
  const Vector margin = num::cos_map(fq, *protos.fg) - num::cos_map(fq, *protos.bg);
  return (ssp.kappa * margin).unaryExpr([](double x) { return num::sigmoid(x); });
}

std::vector<unsigned char> quantize(const Vector& p) {
  std::vector<unsigned char> out(static_cast<std::size_t>(p.size()));
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    const double v = std::clamp(p[i], 0.0, 1.0);
    out[static_cast<std::size_t>(i)] = static_cast<unsigned char>(std::lround(255.0 * v));
  }
  return out;
}

std::vector<unsigned char> encode_pgm(const Grid& grid, const std::vector<unsigned char>& pixels) {
  if (static_cast<int>(pixels.size()) != grid.size()) throw Error(ErrorKind::InvalidArgument, "pixel count mismatch");
  const std::string header = "P5\n" + std::to_string(grid.width) + " " + std::to_string(grid.height) + "\n255\n";
  std::vector<unsigned char> out(header.begin(), header.end());
  out.insert(out.end(), pixels.begin(), pixels.end());
  return out;
}

std::vector<std::filesystem::path> dump_layer_heatmaps(const store::Episode& episode,
                                                       const std::filesystem::path& out_dir,
                                                       const ssp::SspConfig& ssp) {
  store::validate_episode(episode);
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorKind::Io, "cannot create " + out_dir.string() + ": " + ec.message());
  const Grid grid = episode.grid();
  std::vector<std::filesystem::path> written;
  for (int l = 0; l < episode.query->layers; ++l) {
    const Vector p = layer_probability(episode, l, ssp);
    char stem[32];
    std::snprintf(stem, sizeof(stem), "layer_%02d", l);
    const auto pgm = encode_pgm(grid, quantize(p));
    const auto pgm_path = out_dir / (std::string(stem) + ".pgm");
    write_bytes(pgm_path, std::string(pgm.begin(), pgm.end()));
    std::string csv;
    char cell[32];
    for (int r = 0; r < grid.height; ++r) {
      for (int c = 0; c < grid.width; ++c) {
        std::snprintf(cell, sizeof(cell), "%s%.9g", c ? "," : "", p[grid.index(r, c)]);
        csv += cell;
      }
      csv += '\n';
    }
    write_bytes(out_dir / (std::string(stem) + ".csv"), csv);
    written.push_back(pgm_path);
  }
  return written;
}

} // namespace hera::heatmap
