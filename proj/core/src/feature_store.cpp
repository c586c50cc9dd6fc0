#include "hera/feature_store.hpp"

#include <cmath>
#include <cstring>
#include <limits>

#include "container.hpp"
#include "hera/error.hpp"

namespace hera::store {
namespace {

using detail::RawContainer;
using detail::RawTensor;

[[noreturn]] void invalid(const std::string& what) { throw Error(ErrorKind::InvalidDump, what); }

void require_finite(const std::vector<float>& v, const char* name) {
  for (float x : v) {
    if (!std::isfinite(x)) throw Error(ErrorKind::NonFinite, std::string("non-finite value in ") + name);
  }
}

std::vector<std::uint64_t> shape_of(std::initializer_list<int> dims) {
  std::vector<std::uint64_t> s;
  for (int d : dims) s.push_back(static_cast<std::uint64_t>(d));
  return s;
}

const RawTensor& require_tensor(const RawContainer& c, const std::string& name) {
  const auto* t = c.find(name);
  if (t == nullptr) invalid("missing tensor '" + name + "'");
  return *t;
}

int dim_as_int(const RawTensor& t, std::size_t axis) {
  if (t.shape[axis] > static_cast<std::uint64_t>(std::numeric_limits<int>::max())) {
    invalid("dimension too large in tensor '" + t.name + "'");
  }
  return static_cast<int>(t.shape[axis]);
}

template <typename T>
bool same_bits(const std::vector<T>& a, const std::vector<T>& b) {
  return a.size() == b.size() && (a.empty() || std::memcmp(a.data(), b.data(), a.size() * sizeof(T)) == 0);
}

Matrix square_slice(const std::vector<float>& data, int heads, int n, int slot, int head) {
  const std::size_t nn = static_cast<std::size_t>(n) * n;
  const std::size_t base = (static_cast<std::size_t>(slot) * heads + head) * nn;
  Matrix m(n, n);
  for (std::size_t i = 0; i < nn; ++i) m.data()[i] = data[base + i];
  return m;
}

} // namespace

void FeatureDump::validate() const {
  const Grid g = meta.grid;
  if (g.height <= 0 || g.width <= 0) invalid("grid dims must be positive");
  if (layers <= 0 || channels <= 0 || heads <= 0) invalid("tensor dims must be positive");
  if (meta.patch_size <= 0) invalid("patch size must be positive");
  if (meta.exported_layers.empty()) invalid("at least one attention layer must be exported");
  if (attn_layers() > layers) invalid("more attention layers than token layers");
  for (std::size_t i = 0; i < meta.exported_layers.size(); ++i) {
    const int l = meta.exported_layers[i];
    if (l < 0 || l >= layers) invalid("exported layer index out of range");
    if (i > 0 && l <= meta.exported_layers[i - 1]) invalid("exported layers must be strictly increasing");
  }
  const std::size_t n = static_cast<std::size_t>(g.size());
  if (tokens.size() != static_cast<std::size_t>(layers) * n * channels) invalid("tokens size mismatch");
  const std::size_t attn = static_cast<std::size_t>(attn_layers()) * heads * n * n;
  if (qk_logits.size() != attn) invalid("qk_logits size mismatch");
  if (kk_logits.size() != attn) invalid("kk_logits size mismatch");
  if (image_small.size() != 3 * n) invalid("image_small size mismatch");
  if (mask) {
    if (mask->size() != n) invalid("mask size mismatch");
    for (auto v : *mask) {
      if (v > 1) invalid("mask values must be 0 or 1");
    }
  }
  require_finite(tokens, "tokens");
  require_finite(qk_logits, "qk_logits");
  require_finite(kk_logits, "kk_logits");
  require_finite(image_small, "image_small");
  for (float v : image_small) {
    if (v < 0.0f || v > 1.0f) invalid("image_small values must lie in [0,1]");
  }
}

Matrix FeatureDump::layer_features(int layer) const {
  if (layer < 0 || layer >= layers) throw Error(ErrorKind::InvalidArgument, "layer index out of range");
  const int n = tokens_per_layer();
  Matrix m(n, channels);
  const std::size_t base = static_cast<std::size_t>(layer) * n * channels;
  for (std::size_t i = 0; i < static_cast<std::size_t>(n) * channels; ++i) m.data()[i] = tokens[base + i];
  return m;
}

std::optional<int> FeatureDump::attn_slot(int layer) const {
  for (std::size_t i = 0; i < meta.exported_layers.size(); ++i) {
    if (meta.exported_layers[i] == layer) return static_cast<int>(i);
  }
  return std::nullopt;
}

int FeatureDump::nearest_exported_layer(int layer) const {
  int best = meta.exported_layers.front();
  for (int l : meta.exported_layers) {
    const int d = std::abs(l - layer);
    const int bd = std::abs(best - layer);
    if (d < bd || (d == bd && l > best)) best = l;
  }
  return best;
}

Matrix FeatureDump::qk_head(int slot, int head) const {
  if (slot < 0 || slot >= attn_layers() || head < 0 || head >= heads) {
    throw Error(ErrorKind::InvalidArgument, "attention slot/head out of range");
  }
  return square_slice(qk_logits, heads, tokens_per_layer(), slot, head);
}

Matrix FeatureDump::kk_head(int slot, int head) const {
  if (slot < 0 || slot >= attn_layers() || head < 0 || head >= heads) {
    throw Error(ErrorKind::InvalidArgument, "attention slot/head out of range");
  }
  return square_slice(kk_logits, heads, tokens_per_layer(), slot, head);
}

BinaryMask FeatureDump::binary_mask() const {
  if (!mask) throw Error(ErrorKind::MissingMask, "dump has no mask");
  return BinaryMask{meta.grid, *mask};
}

SoftMask FeatureDump::soft_mask() const {
  if (!mask) throw Error(ErrorKind::MissingMask, "dump has no mask");
  SoftMask m{meta.grid, Vector(meta.grid.size())};
  for (int i = 0; i < meta.grid.size(); ++i) m.values[i] = (*mask)[static_cast<std::size_t>(i)];
  return m;
}

bool bitwise_equal(const FeatureDump& a, const FeatureDump& b) {
  return a.meta == b.meta && a.layers == b.layers && a.channels == b.channels && a.heads == b.heads &&
         same_bits(a.tokens, b.tokens) && same_bits(a.qk_logits, b.qk_logits) &&
         same_bits(a.kk_logits, b.kk_logits) && same_bits(a.image_small, b.image_small) &&
         a.mask.has_value() == b.mask.has_value() && (!a.mask || *a.mask == *b.mask);
}

std::vector<unsigned char> encode_dump(const FeatureDump& dump) {
  dump.validate();
  const Grid g = dump.meta.grid;
  const int n = g.size();
  RawContainer c;
  c.meta = {{"grid_h", g.height},
            {"grid_w", g.width},
            {"patch_size", dump.meta.patch_size},
            {"backbone", dump.meta.backbone},
            {"exported_layers", dump.meta.exported_layers}};
  c.tensors.push_back(detail::make_f32("tokens", shape_of({dump.layers, n, dump.channels}), dump.tokens));
  c.tensors.push_back(
      detail::make_f32("qk_logits", shape_of({dump.attn_layers(), dump.heads, n, n}), dump.qk_logits));
  c.tensors.push_back(
      detail::make_f32("kk_logits", shape_of({dump.attn_layers(), dump.heads, n, n}), dump.kk_logits));
  c.tensors.push_back(detail::make_f32("image_small", shape_of({3, g.height, g.width}), dump.image_small));
  if (dump.mask) c.tensors.push_back(detail::make_u8("mask", shape_of({g.height, g.width}), *dump.mask));
  return detail::encode_container(c);
}

FeatureDump decode_dump(const std::vector<unsigned char>& bytes) {
  const RawContainer c = detail::decode_container(bytes);
  FeatureDump d;
  const auto& meta = c.meta;
  auto meta_int = [&](const char* key) {
    if (!meta.contains(key) || !meta.at(key).is_number_integer()) {
      throw Error(ErrorKind::BadHeader, std::string("meta field '") + key + "' missing");
    }
    const auto v = meta.at(key).get<std::int64_t>();
    if (v <= 0 || v > std::numeric_limits<int>::max()) invalid(std::string("meta field '") + key + "' out of range");
    return static_cast<int>(v);
  };
  d.meta.grid = Grid{meta_int("grid_h"), meta_int("grid_w")};
  d.meta.patch_size = meta_int("patch_size");
  if (!meta.contains("backbone") || !meta.at("backbone").is_string()) {
    throw Error(ErrorKind::BadHeader, "meta field 'backbone' missing");
  }
  d.meta.backbone = meta.at("backbone").get<std::string>();
  if (!meta.contains("exported_layers") || !meta.at("exported_layers").is_array()) {
    throw Error(ErrorKind::BadHeader, "meta field 'exported_layers' missing");
  }
  for (const auto& l : meta.at("exported_layers")) {
    if (!l.is_number_integer()) throw Error(ErrorKind::BadHeader, "exported layer must be an integer");
    const auto v = l.get<std::int64_t>();
    if (v < 0 || v > std::numeric_limits<int>::max()) invalid("exported layer out of range");
    d.meta.exported_layers.push_back(static_cast<int>(v));
  }

  const std::uint64_t n = static_cast<std::uint64_t>(d.meta.grid.height) * d.meta.grid.width;
  const auto& tokens = require_tensor(c, "tokens");
  if (tokens.shape.size() != 3 || tokens.shape[1] != n) invalid("tokens must be [L, N, D] with N = Hg*Wg");
  d.layers = dim_as_int(tokens, 0);
  d.channels = dim_as_int(tokens, 2);
  d.tokens = detail::to_f32(tokens);

  const auto& qk = require_tensor(c, "qk_logits");
  const auto& kk = require_tensor(c, "kk_logits");
  if (qk.shape.size() != 4 || qk.shape[2] != n || qk.shape[3] != n) invalid("qk_logits must be [La, H, N, N]");
  if (kk.shape != qk.shape) invalid("kk_logits shape must equal qk_logits shape");
  if (qk.shape[0] != d.meta.exported_layers.size()) invalid("qk_logits layer count disagrees with meta");
  d.heads = dim_as_int(qk, 1);
  d.qk_logits = detail::to_f32(qk);
  d.kk_logits = detail::to_f32(kk);

  const auto& image = require_tensor(c, "image_small");
  if (image.shape != std::vector<std::uint64_t>{3, static_cast<std::uint64_t>(d.meta.grid.height),
                                                static_cast<std::uint64_t>(d.meta.grid.width)}) {
    invalid("image_small must be [3, Hg, Wg]");
  }
  d.image_small = detail::to_f32(image);

  if (const auto* mask = c.find("mask")) {
    if (mask->shape != std::vector<std::uint64_t>{static_cast<std::uint64_t>(d.meta.grid.height),
                                                  static_cast<std::uint64_t>(d.meta.grid.width)}) {
      invalid("mask must be [Hg, Wg]");
    }
    d.mask = detail::to_u8(*mask);
  }
  d.validate();
  return d;
}

void write_dump(const FeatureDump& dump, const std::filesystem::path& path) {
  const auto bytes = encode_dump(dump);
  detail::write_file(path, bytes);
}

FeatureDump read_dump(const std::filesystem::path& path) { return decode_dump(detail::read_file(path)); }

std::optional<BinaryMask> Episode::query_ground_truth() const {
  if (!query || !query->mask) return std::nullopt;
  return query->binary_mask();
}

void validate_episode(const Episode& episode) {
  if (episode.supports.empty()) throw Error(ErrorKind::InsufficientSupports, "episode needs at least one support");
  if (!episode.query) throw Error(ErrorKind::BadManifest, "episode has no query");
  const FeatureDump& q = *episode.query;
  for (std::size_t i = 0; i < episode.supports.size(); ++i) {
    const FeatureDump& s = *episode.supports[i];
    if (!s.mask) throw Error(ErrorKind::MissingMask, "support " + std::to_string(i) + " has no mask");
    if (s.meta.grid != q.meta.grid || s.channels != q.channels || s.layers != q.layers ||
        s.meta.backbone != q.meta.backbone) {
      throw Error(ErrorKind::GeometryMismatch,
                  "support " + std::to_string(i) + " disagrees with the query on grid, D, L or backbone");
    }
  }
}

Episode load_episode(const std::filesystem::path& manifest) {
  const auto bytes = detail::read_file(manifest);
  const auto j = nlohmann::json::parse(bytes.begin(), bytes.end(), nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw Error(ErrorKind::BadManifest, "manifest is not a JSON object");
  if (!j.contains("supports") || !j.at("supports").is_array() || j.at("supports").empty()) {
    throw Error(ErrorKind::BadManifest, "manifest needs a non-empty 'supports' list");
  }
  if (!j.contains("query") || !j.at("query").is_string()) {
    throw Error(ErrorKind::BadManifest, "manifest needs a 'query' path");
  }
  const auto base = manifest.parent_path();
  auto resolve = [&](const nlohmann::json& p) {
    if (!p.is_string()) throw Error(ErrorKind::BadManifest, "paths must be strings");
    std::filesystem::path path(p.get<std::string>());
    return path.is_absolute() ? path : base / path;
  };

  Episode ep;
  for (const auto& s : j.at("supports")) ep.supports.push_back(std::make_shared<const FeatureDump>(read_dump(resolve(s))));
  ep.query = std::make_shared<const FeatureDump>(read_dump(resolve(j.at("query"))));
  if (j.contains("class_id")) {
    const auto& c = j.at("class_id");
    ep.class_id = c.is_string() ? c.get<std::string>() : c.dump();
  }
  ep.shot = static_cast<int>(ep.supports.size());
  validate_episode(ep);
  return ep;
}

void write_manifest(const std::filesystem::path& manifest, const std::vector<std::string>& supports,
                    const std::string& query, const std::string& class_id) {
  const nlohmann::json j = {{"supports", supports}, {"query", query}, {"class_id", class_id}};
  const std::string text = j.dump(2) + "\n";
  detail::write_file(manifest, std::span(reinterpret_cast<const unsigned char*>(text.data()), text.size()));
}

} // namespace hera::store
