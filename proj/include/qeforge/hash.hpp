#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <iomanip>
#include <span>
#include <sstream>
#include <string>
#include <string_view>

namespace qeforge {

/// Incremental 64-bit FNV-1a. Used for content fingerprints and checkpoint ids,
/// not for anything adversarial.
class Fingerprint {
 public:
  Fingerprint& bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      hash_ ^= p[i];
      hash_ *= 0x100000001B3ULL;
    }
    return *this;
  }

  Fingerprint& text(std::string_view s) {
    u64(s.size());
    return bytes(s.data(), s.size());
  }

  Fingerprint& u64(std::uint64_t v) {
    unsigned char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
    return bytes(buf, 8);
  }

  Fingerprint& f64(double v) { return u64(std::bit_cast<std::uint64_t>(v)); }

  Fingerprint& doubles(std::span<const double> values) {
    u64(values.size());
    for (double v : values) f64(v);
    return *this;
  }

  std::uint64_t value() const { return hash_; }

  std::string hex() const { return to_hex(hash_); }

  static std::string to_hex(std::uint64_t v) {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << v;
    return os.str();
  }

 private:
  std::uint64_t hash_ = 0xCBF29CE484222325ULL;
};

}  // namespace qeforge
