#include <cmath>
#include <string>

#include "container.hpp"
#include "hera/error.hpp"
#include "hera/tta.hpp"

namespace hera::tta {
namespace {

namespace d = store::detail;

const char* variant_tag(HeadVariant v) {
  switch (v) {
    case HeadVariant::M0: return "M0";
    case HeadVariant::M1: return "M1";
    case HeadVariant::M2: return "M2";
  }
  return "M2";
}

void add_params(d::RawContainer& c, const std::string& prefix, const HeadParams& p) {
  const auto dim = static_cast<std::uint64_t>(p.w1.rows());
  const auto hidden = static_cast<std::uint64_t>(p.w1.cols());
  c.tensors.push_back(d::make_f64_as_f32(prefix + "W1", {dim, hidden}, {p.w1.data(), static_cast<std::size_t>(p.w1.size())}));
  c.tensors.push_back(d::make_f64_as_f32(prefix + "b1", {hidden}, {p.b1.data(), static_cast<std::size_t>(p.b1.size())}));
  c.tensors.push_back(d::make_f64_as_f32(prefix + "W2", {hidden, dim}, {p.w2.data(), static_cast<std::size_t>(p.w2.size())}));
  c.tensors.push_back(d::make_f64_as_f32(prefix + "b2", {dim}, {p.b2.data(), static_cast<std::size_t>(p.b2.size())}));
}

void load_block(const d::RawContainer& c, const std::string& name, std::vector<std::uint64_t> shape, double* dst) {
  const auto* t = c.find(name);
  if (!t) throw Error(ErrorKind::BadHeader, "head checkpoint lacks tensor " + name);
  if (t->shape != shape) throw Error(ErrorKind::BadHeader, "head tensor " + name + " has the wrong shape");
  const auto values = d::to_f32(*t);
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) throw Error(ErrorKind::NonFinite, "head tensor " + name + " is not finite");
    dst[i] = values[i];
  }
}

void load_params(const d::RawContainer& c, const std::string& prefix, HeadParams& p) {
  const auto dim = static_cast<std::uint64_t>(p.w1.rows());
  const auto hidden = static_cast<std::uint64_t>(p.w1.cols());
  load_block(c, prefix + "W1", {dim, hidden}, p.w1.data());
  load_block(c, prefix + "b1", {hidden}, p.b1.data());
  load_block(c, prefix + "W2", {hidden, dim}, p.w2.data());
  load_block(c, prefix + "b2", {dim}, p.b2.data());
}

} // namespace

std::vector<unsigned char> encode_head(const AdaptedHead& head) {
  if (!head.params.all_finite()) throw Error(ErrorKind::NonFinite, "head parameters are not finite");
  d::RawContainer c;
  c.meta = {{"kind", "residual_mlp_head"},
            {"variant", variant_tag(head.variant)},
            {"dim", head.params.w1.rows()},
            {"hidden", head.params.w1.cols()},
            {"step", head.step}};
  add_params(c, "head.", head.params);
  add_params(c, "adam.m.", head.adam_m);
  add_params(c, "adam.v.", head.adam_v);
  return d::encode_container(c);
}

AdaptedHead decode_head(const std::vector<unsigned char>& bytes) {
  const auto c = d::decode_container(bytes);
  AdaptedHead h;
  try {
    if (c.meta.at("kind").get<std::string>() != "residual_mlp_head") {
      throw Error(ErrorKind::BadHeader, "container is not a head checkpoint");
    }
    const std::string v = c.meta.at("variant").get<std::string>();
    if (v == "M0") {
      h.variant = HeadVariant::M0;
    } else if (v == "M1") {
      h.variant = HeadVariant::M1;
    } else if (v == "M2") {
      h.variant = HeadVariant::M2;
    } else {
      throw Error(ErrorKind::BadHeader, "unknown head variant " + v);
    }
    const int dim = c.meta.at("dim").get<int>();
    const int hidden = c.meta.at("hidden").get<int>();
    if (dim <= 0 || hidden <= 0) throw Error(ErrorKind::BadHeader, "head dimensions must be positive");
    h.step = c.meta.at("step").get<int>();
    h.params = HeadParams::zeros(dim, hidden);
    h.adam_m = HeadParams::zeros(dim, hidden);
    h.adam_v = HeadParams::zeros(dim, hidden);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::BadHeader, std::string("bad head meta: ") + e.what());
  }
  load_params(c, "head.", h.params);
  load_params(c, "adam.m.", h.adam_m);
  load_params(c, "adam.v.", h.adam_v);
  return h;
}

void write_head(const AdaptedHead& head, const std::filesystem::path& path) {
  const auto bytes = encode_head(head);
  d::write_file(path, bytes);
}

AdaptedHead read_head(const std::filesystem::path& path) { return decode_head(d::read_file(path)); }

} // namespace hera::tta
