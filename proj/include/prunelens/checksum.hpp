#pragma once

#include <zlib.h>

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <span>
#include <string>
#include <vector>

namespace prunelens {

static_assert(std::endian::native == std::endian::little,
              "on-disk formats are little-endian; big-endian hosts need byte swapping");

class Crc32 {
 public:
  void update(std::span<const std::uint8_t> bytes) {
    // zlib takes uInt lengths; feed large buffers in pieces.
    std::size_t off = 0;
    while (off < bytes.size()) {
      const std::size_t n = std::min<std::size_t>(bytes.size() - off, 1u << 30);
      value_ = crc32(value_, bytes.data() + off, static_cast<uInt>(n));
      off += n;
    }
  }
  std::uint32_t value() const noexcept { return static_cast<std::uint32_t>(value_); }
  std::string hex() const { return to_hex(value()); }

  static std::string to_hex(std::uint32_t v) {
    char buf[9];
    std::snprintf(buf, sizeof buf, "%08x", v);
    return buf;
  }

 private:
  uLong value_ = crc32(0L, Z_NULL, 0);
};

inline std::vector<std::uint8_t> to_f32_bytes(std::span<const double> values) {
  std::vector<std::uint8_t> out(values.size() * 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const float f = static_cast<float>(values[i]);
    std::memcpy(out.data() + 4 * i, &f, 4);
  }
  return out;
}

inline std::vector<double> from_f32_bytes(std::span<const std::uint8_t> bytes) {
  std::vector<double> out(bytes.size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i) {
    float f;
    std::memcpy(&f, bytes.data() + 4 * i, 4);
    out[i] = f;
  }
  return out;
}

inline std::string crc32_hex(std::span<const std::uint8_t> bytes) {
  Crc32 c;
  c.update(bytes);
  return c.hex();
}

}  // namespace prunelens
