#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "mstgcn/data.hpp"
#include "mstgcn/tensor.hpp"

namespace mstgcn::binio {

// Little-endian buffer writer/reader shared by the dataset container
// and the checkpoint format.
struct Writer {
  std::vector<unsigned char> buf;

  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const unsigned char*>(p);
    buf.insert(buf.end(), c, c + n);
  }
  void u8(std::uint8_t v) { bytes(&v, 1); }
  void u16(std::uint16_t v) {
    unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>(v >> 8)};
    bytes(b, 2);
  }
  void u32(std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    bytes(b, 4);
  }
  void u64(std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    bytes(b, 8);
  }
  void f32(float v) {
    std::uint32_t u;
    std::memcpy(&u, &v, 4);
    u32(u);
  }
  void f64(double v) {
    std::uint64_t u;
    std::memcpy(&u, &v, 8);
    u64(u);
  }
  void str(const std::string& s) {
    u16(static_cast<std::uint16_t>(s.size()));
    bytes(s.data(), s.size());
  }
};

struct Reader {
  const unsigned char* p;
  std::size_t len;
  std::size_t pos = 0;

  void need(std::size_t n, const char* what) {
    if (pos + n > len) {
      throw FormatError(std::string("file truncated reading ") + what +
                        " at byte offset " + std::to_string(pos));
    }
  }
  void bytes(void* dst, std::size_t n, const char* what) {
    need(n, what);
    std::memcpy(dst, p + pos, n);
    pos += n;
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return p[pos++];
  }
  std::uint16_t u16(const char* what) {
    need(2, what);
    std::uint16_t v = static_cast<std::uint16_t>(p[pos]) |
                      static_cast<std::uint16_t>(p[pos + 1]) << 8;
    pos += 2;
    return v;
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(p[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(p[pos + i]) << (8 * i);
    pos += 8;
    return v;
  }
  float f32(const char* what) {
    std::uint32_t u = u32(what);
    float v;
    std::memcpy(&v, &u, 4);
    return v;
  }
  double f64(const char* what) {
    std::uint64_t u = u64(what);
    double v;
    std::memcpy(&v, &u, 8);
    return v;
  }
  std::string str(const char* what) {
    const std::uint16_t n = u16(what);
    std::string s(n, '\0');
    bytes(s.data(), n, what);
    return s;
  }
};

std::vector<unsigned char> read_file(const std::string& path);
void write_file(const std::string& path,
                const std::vector<unsigned char>& buf);

}  // namespace mstgcn::binio
