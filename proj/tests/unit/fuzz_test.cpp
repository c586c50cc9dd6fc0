#include <gtest/gtest.h>

#include <cstring>
#include <random>
#include <string>

#include "hera/error.hpp"
#include "hera/feature_store.hpp"
#include "support/test_util.hpp"

using namespace hera;

namespace {

using Bytes = std::vector<unsigned char>;

Bytes sample_bytes(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return store::encode_dump(testutil::random_dump(rng, {3, 4}, 3, 5, 2, {0, 2}, true));
}

std::uint32_t header_len(const Bytes& b) {
  std::uint32_t n = 0;
  for (int i = 0; i < 4; ++i) n |= static_cast<std::uint32_t>(b[4 + i]) << (8 * i);
  return n;
}

Bytes with_header(const Bytes& b, const std::string& header) {
  const std::uint32_t old = header_len(b);
  Bytes out(b.begin(), b.begin() + 4);
  const auto n = static_cast<std::uint32_t>(header.size());
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(n >> (8 * i)));
  out.insert(out.end(), header.begin(), header.end());
  out.insert(out.end(), b.begin() + 8 + old, b.end());
  return out;
}

std::string header_of(const Bytes& b) { return std::string(b.begin() + 8, b.begin() + 8 + header_len(b)); }

// Decoding either succeeds or raises a library error; anything else fails the test.
bool decodes(const Bytes& b) {
  try {
    store::decode_dump(b);
    return true;
  } catch (const Error&) {
    return false;
  }
}

ErrorKind kind(const Bytes& b) {
  try {
    store::decode_dump(b);
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "decoded";
  return ErrorKind::Io;
}

} // namespace

TEST(Fuzz, RoundTripFiftyDumps) {
  std::mt19937_64 rng(77);
  for (int i = 0; i < 50; ++i) {
    const Grid g{1 + static_cast<int>(rng() % 5), 1 + static_cast<int>(rng() % 5)};
    const int layers = 1 + static_cast<int>(rng() % 4);
    std::vector<int> exported;
    for (int l = 0; l < layers; ++l) {
      if (rng() % 2) exported.push_back(l);
    }
    if (exported.empty()) exported.push_back(layers - 1);
    auto d = testutil::random_dump(rng, g, layers, 1 + static_cast<int>(rng() % 6), 1 + static_cast<int>(rng() % 3),
                                   exported, g.size() >= 2);
    const auto back = store::decode_dump(store::encode_dump(d));
    EXPECT_TRUE(store::bitwise_equal(d, back));
    EXPECT_EQ(store::encode_dump(back), store::encode_dump(d));
  }
}

TEST(Fuzz, EveryTruncationIsTyped) {
  const Bytes full = sample_bytes(1);
  for (std::size_t n = 0; n < full.size(); ++n) {
    const Bytes cut(full.begin(), full.begin() + static_cast<std::ptrdiff_t>(n));
    EXPECT_FALSE(decodes(cut)) << "length " << n;
  }
  EXPECT_EQ(kind(Bytes(full.begin(), full.end() - 1)), ErrorKind::Truncated);
}

TEST(Fuzz, BadMagicVariants) {
  Bytes b = sample_bytes(2);
  for (int i = 0; i < 4; ++i) {
    Bytes c = b;
    c[i] ^= 0x20;
    EXPECT_EQ(kind(c), ErrorKind::BadMagic);
  }
}

TEST(Fuzz, HeaderLengthOverflow) {
  Bytes b = sample_bytes(3);
  for (std::uint32_t len : {0xFFFFFFFFu, 0x7FFFFFFFu, static_cast<std::uint32_t>(b.size())}) {
    Bytes c = b;
    for (int i = 0; i < 4; ++i) c[4 + i] = static_cast<unsigned char>(len >> (8 * i));
    EXPECT_FALSE(decodes(c));
  }
  Bytes zero = b;
  std::memset(zero.data() + 4, 0, 4);
  EXPECT_FALSE(decodes(zero));
}

TEST(Fuzz, OffsetAndLengthOverflow) {
  const Bytes b = sample_bytes(4);
  const std::string h = header_of(b);
  for (const std::string& replacement :
       {std::string("\"offset\":18446744073709551615"), std::string("\"offset\":9223372036854775807"),
        std::string("\"offset\":-5"), std::string("\"offset\":1.5"), std::string("\"offset\":\"x\"")}) {
    const auto pos = h.find("\"offset\":");
    ASSERT_NE(pos, std::string::npos);
    const auto end = h.find_first_of(",}", pos);
    std::string mod = h;
    mod.replace(pos, end - pos, replacement);
    EXPECT_FALSE(decodes(with_header(b, mod))) << replacement;
  }
  const auto pos = h.find("\"length\":");
  ASSERT_NE(pos, std::string::npos);
  const auto end = h.find_first_of(",}", pos);
  std::string mod = h;
  mod.replace(pos, end - pos, "\"length\":4611686018427387904");
  EXPECT_FALSE(decodes(with_header(b, mod)));
}

TEST(Fuzz, MalformedHeaderJson) {
  const Bytes b = sample_bytes(5);
  for (const std::string& h : {std::string("{"), std::string("[]"), std::string("{\"meta\":{}}"),
                               std::string("{\"meta\":{},\"tensors\":[{}]}"), std::string("\xff\xfe")}) {
    EXPECT_FALSE(decodes(with_header(b, h))) << h;
  }
}

TEST(Fuzz, RandomByteFlipsNeverCrash) {
  const Bytes base = sample_bytes(6);
  std::mt19937_64 rng(7);
  int rejected = 0;
  for (int trial = 0; trial < 3000; ++trial) {
    Bytes c = base;
    const int flips = 1 + static_cast<int>(rng() % 4);
    for (int f = 0; f < flips; ++f) c[rng() % c.size()] ^= static_cast<unsigned char>(1u << (rng() % 8));
    rejected += !decodes(c);
  }
  EXPECT_GT(rejected, 0);
}
