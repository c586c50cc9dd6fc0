#include "container.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>

#include "hera/error.hpp"
#include "hera/feature_store.hpp"

namespace hera::store::detail {
namespace {

constexpr std::size_t kPreambleSize = 8;

std::size_t element_size(DType dtype) { return dtype == DType::F32 ? 4 : 1; }

const char* dtype_name(DType dtype) { return dtype == DType::F32 ? "f32" : "u8"; }

void put_u32_le(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFFu));
}

std::uint32_t get_u32_le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

[[noreturn]] void bad_header(const std::string& what) {
  throw Error(ErrorKind::BadHeader, "HFD1 header: " + what);
}

std::uint64_t checked_u64(const nlohmann::json& j, const char* field) {
  if (!j.contains(field) || !j.at(field).is_number_unsigned()) {
    bad_header(std::string("field '") + field + "' must be an unsigned integer");
  }
  return j.at(field).get<std::uint64_t>();
}

} // namespace

std::uint64_t RawTensor::element_count() const {
  std::uint64_t n = 1;
  for (auto d : shape) {
    if (d != 0 && n > std::numeric_limits<std::uint64_t>::max() / d) {
      bad_header("shape product overflows for tensor '" + name + "'");
    }
    n *= d;
  }
  return n;
}

const RawTensor* RawContainer::find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

std::vector<unsigned char> encode_container(const RawContainer& container) {
  nlohmann::json header;
  header["meta"] = container.meta;
  auto list = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& t : container.tensors) {
    const std::uint64_t length = t.element_count() * element_size(t.dtype);
    if (length != t.bytes.size()) {
      throw Error(ErrorKind::InvalidArgument, "tensor '" + t.name + "' payload does not match its shape");
    }
    list.push_back({{"name", t.name},
                    {"dtype", dtype_name(t.dtype)},
                    {"shape", t.shape},
                    {"offset", offset},
                    {"length", length}});
    offset += length;
  }
  header["tensors"] = std::move(list);
  const std::string text = header.dump();
  if (text.size() > std::numeric_limits<std::uint32_t>::max()) {
    throw Error(ErrorKind::InvalidArgument, "HFD1 header exceeds 4 GiB");
  }

  std::vector<unsigned char> out;
  out.reserve(kPreambleSize + text.size() + offset);
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  put_u32_le(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& t : container.tensors) out.insert(out.end(), t.bytes.begin(), t.bytes.end());
  return out;
}

RawContainer decode_container(std::span<const unsigned char> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw Error(ErrorKind::BadMagic, "missing HFD1 magic");
  }
  if (bytes.size() < kPreambleSize) throw Error(ErrorKind::Truncated, "file ends inside the preamble");
  const std::uint64_t header_len = get_u32_le(bytes.data() + 4);
  if (header_len > bytes.size() - kPreambleSize) {
    throw Error(ErrorKind::Truncated, "header length runs past end of file");
  }
  const auto* header_begin = reinterpret_cast<const char*>(bytes.data() + kPreambleSize);
  nlohmann::json header = nlohmann::json::parse(header_begin, header_begin + header_len, nullptr, false);
  if (header.is_discarded() || !header.is_object()) bad_header("not a JSON object");
  if (!header.contains("tensors") || !header.at("tensors").is_array()) bad_header("missing tensor list");

  const std::uint64_t payload_begin = kPreambleSize + header_len;
  const std::uint64_t payload_size = bytes.size() - payload_begin;

  RawContainer out;
  if (header.contains("meta")) {
    if (!header.at("meta").is_object()) bad_header("meta must be an object");
    out.meta = header.at("meta");
  }
  for (const auto& entry : header.at("tensors")) {
    if (!entry.is_object()) bad_header("tensor entry must be an object");
    RawTensor t;
    if (!entry.contains("name") || !entry.at("name").is_string()) bad_header("tensor name missing");
    t.name = entry.at("name").get<std::string>();
    if (!entry.contains("dtype") || !entry.at("dtype").is_string()) bad_header("dtype missing");
    const auto dtype = entry.at("dtype").get<std::string>();
    if (dtype == "f32") {
      t.dtype = DType::F32;
    } else if (dtype == "u8") {
      t.dtype = DType::U8;
    } else {
      bad_header("unknown dtype '" + dtype + "'");
    }
    if (!entry.contains("shape") || !entry.at("shape").is_array()) bad_header("shape missing");
    for (const auto& d : entry.at("shape")) {
      if (!d.is_number_unsigned()) bad_header("shape entries must be unsigned integers");
      t.shape.push_back(d.get<std::uint64_t>());
    }
    const std::uint64_t offset = checked_u64(entry, "offset");
    const std::uint64_t length = checked_u64(entry, "length");
    const std::uint64_t count = t.element_count();
    if (count > std::numeric_limits<std::uint64_t>::max() / element_size(t.dtype) ||
        count * element_size(t.dtype) != length) {
      bad_header("length of tensor '" + t.name + "' disagrees with its shape");
    }
    if (offset > payload_size || length > payload_size - offset) {
      throw Error(ErrorKind::Truncated, "payload of tensor '" + t.name + "' runs past end of file");
    }
    if (out.find(t.name) != nullptr) bad_header("duplicate tensor '" + t.name + "'");
    const auto* first = bytes.data() + payload_begin + offset;
    t.bytes.assign(first, first + length);
    out.tensors.push_back(std::move(t));
  }
  return out;
}

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open '" + path.string() + "'");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw Error(ErrorKind::Io, "read failed for '" + path.string() + "'");
  return bytes;
}

void write_file(const std::filesystem::path& path, std::span<const unsigned char> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot create '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::Io, "write failed for '" + path.string() + "'");
}

RawTensor make_f32(std::string name, std::vector<std::uint64_t> shape, std::span<const float> values) {
  RawTensor t{std::move(name), DType::F32, std::move(shape), {}};
  t.bytes.resize(values.size() * 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto bits = std::bit_cast<std::uint32_t>(values[i]);
    for (int b = 0; b < 4; ++b) t.bytes[4 * i + b] = static_cast<unsigned char>((bits >> (8 * b)) & 0xFFu);
  }
  return t;
}

RawTensor make_f64_as_f32(std::string name, std::vector<std::uint64_t> shape, std::span<const double> values) {
  std::vector<float> narrowed(values.begin(), values.end());
  return make_f32(std::move(name), std::move(shape), narrowed);
}

RawTensor make_u8(std::string name, std::vector<std::uint64_t> shape, std::span<const std::uint8_t> values) {
  return RawTensor{std::move(name), DType::U8, std::move(shape), {values.begin(), values.end()}};
}

std::vector<float> to_f32(const RawTensor& tensor) {
  if (tensor.dtype != DType::F32) bad_header("tensor '" + tensor.name + "' must be f32");
  std::vector<float> out(tensor.bytes.size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::bit_cast<float>(get_u32_le(&tensor.bytes[4 * i]));
  return out;
}

std::vector<std::uint8_t> to_u8(const RawTensor& tensor) {
  if (tensor.dtype != DType::U8) bad_header("tensor '" + tensor.name + "' must be u8");
  return {tensor.bytes.begin(), tensor.bytes.end()};
}

} // namespace hera::store::detail
