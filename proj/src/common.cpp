#include "lnas/common.hpp"

namespace lnas {

namespace {

uint64_t mix64(uint64_t x) {
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return x;
}

}  // namespace

Digest128 fnv128(const void* data, size_t len) {
  const auto* p = static_cast<const unsigned char*>(data);
  const uint64_t prime = 0x100000001b3ULL;
  uint64_t h1 = 0xcbf29ce484222325ULL;
  uint64_t h2 = 0x84222325cbf29ce4ULL;
  for (size_t i = 0; i < len; ++i) {
    h1 = (h1 ^ p[i]) * prime;
    h2 = (h2 ^ (p[i] + 0x9eU)) * prime;
  }
  h1 = (h1 ^ len) * prime;
  h2 = (h2 ^ (len * 3)) * prime;
  return Digest128{mix64(h1), mix64(h2)};
}

std::string Digest128::hex() const {
  static const char* digits = "0123456789abcdef";
  std::string out(32, '0');
  uint64_t parts[2] = {hi, lo};
  for (int w = 0; w < 2; ++w) {
    for (int i = 0; i < 16; ++i) {
      out[w * 16 + i] = digits[(parts[w] >> (60 - 4 * i)) & 0xF];
    }
  }
  return out;
}

Digest128 Digest128::from_hex(const std::string& s) {
  if (s.size() != 32) throw Error("Digest128::from_hex: expected 32 hex chars, got " + std::to_string(s.size()));
  uint64_t parts[2] = {0, 0};
  for (int w = 0; w < 2; ++w) {
    for (int i = 0; i < 16; ++i) {
      char c = s[w * 16 + i];
      uint64_t v;
      if (c >= '0' && c <= '9') v = uint64_t(c - '0');
      else if (c >= 'a' && c <= 'f') v = uint64_t(c - 'a' + 10);
      else if (c >= 'A' && c <= 'F') v = uint64_t(c - 'A' + 10);
      else throw Error(std::string("Digest128::from_hex: bad char '") + c + "'");
      parts[w] = (parts[w] << 4) | v;
    }
  }
  return Digest128{parts[0], parts[1]};
}

double unit_signed(const Digest128& d) {
  return double(d.hi >> 11) * 0x1.0p-53 * 2.0 - 1.0;
}

}  // namespace lnas
