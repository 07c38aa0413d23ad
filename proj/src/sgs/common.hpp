#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace sgs {

// Error taxonomy shared by the library, the C API, and the CLI exit codes.
// Codes: 0 ok, 1 generic, 2 config, 3 data, 4 numeric.
class Error : public std::runtime_error {
 public:
  explicit Error(std::string msg, int code = 1)
      : std::runtime_error(std::move(msg)), code_(code) {}
  int code() const { return code_; }

 private:
  int code_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(std::string msg) : Error(std::move(msg), 2) {}
};

class DataError : public Error {
 public:
  explicit DataError(std::string msg) : Error(std::move(msg), 3) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(std::string msg) : Error(std::move(msg), 4) {}
};

// Numerical floor added to sigma wherever a standard deviation divides.
// Constant feature maps would otherwise produce Inf.
inline constexpr double kStatEps = 1e-5;

// FNV-1a, used for config digests, parameter digests and RNG stream tags.
inline std::uint64_t fnv1a64(const void* bytes, std::size_t n,
                             std::uint64_t h = 1469598103934665603ull) {
  const auto* p = static_cast<const unsigned char*>(bytes);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

inline std::uint64_t fnv1a64(const std::string& s,
                             std::uint64_t h = 1469598103934665603ull) {
  return fnv1a64(s.data(), s.size(), h);
}

inline std::string to_hex(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return out;
}

}  // namespace sgs
