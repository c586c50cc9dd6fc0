#pragma once

// Generic HFD1 container: named f32/u8 tensors plus a JSON meta block.
//
//   "HFD1" | u32 LE header length | header JSON (UTF-8) | payloads
//
// Header: {"meta": {...}, "tensors": [{"dtype","length","name","offset",
// "shape"}...]}. Offsets count from the first payload byte. Payloads are
// little-endian, row-major, laid out in header order without padding.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace hera::store::detail {

enum class DType { F32, U8 };

struct RawTensor {
  std::string name;
  DType dtype = DType::F32;
  std::vector<std::uint64_t> shape;
  std::vector<unsigned char> bytes;

  std::uint64_t element_count() const;
};

struct RawContainer {
  nlohmann::json meta = nlohmann::json::object();
  std::vector<RawTensor> tensors;

  const RawTensor* find(const std::string& name) const;
};

std::vector<unsigned char> encode_container(const RawContainer& container);
RawContainer decode_container(std::span<const unsigned char> bytes);

std::vector<unsigned char> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const unsigned char> bytes);

RawTensor make_f32(std::string name, std::vector<std::uint64_t> shape, std::span<const float> values);
RawTensor make_f64_as_f32(std::string name, std::vector<std::uint64_t> shape, std::span<const double> values);
RawTensor make_u8(std::string name, std::vector<std::uint64_t> shape, std::span<const std::uint8_t> values);

std::vector<float> to_f32(const RawTensor& tensor);
std::vector<std::uint8_t> to_u8(const RawTensor& tensor);

} // namespace hera::store::detail
