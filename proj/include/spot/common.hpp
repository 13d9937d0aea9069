#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Dense>

namespace spot {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Malformed or inconsistent input data. `line()` is 1-based when known.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what, std::optional<int> line = {})
      : std::runtime_error(line ? "line " + std::to_string(*line) + ": " + what
                                : what),
        line_(line) {}

  std::optional<int> line() const { return line_; }

 private:
  std::optional<int> line_;
};

/// Invalid configuration or argument combination detected before any work.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// 64-bit FNV-1a. `basis` defaults to the standard offset basis.
inline constexpr std::uint64_t kFnvOffsetBasis = 0xcbf29ce484222325ULL;
inline constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

constexpr std::uint64_t fnv1a64(std::string_view bytes,
                                std::uint64_t basis = kFnvOffsetBasis) {
  std::uint64_t h = basis;
  for (char c : bytes) {
    h ^= static_cast<std::uint8_t>(c);
    h *= kFnvPrime;
  }
  return h;
}

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Named sub-seed so each stage draws from an independent stream.
inline std::uint64_t derive_seed(std::uint64_t root, std::string_view name,
                                 std::uint64_t index = 0) {
  return splitmix64(fnv1a64(name, splitmix64(root)) ^ splitmix64(index + 1));
}

/// Shortest decimal text that parses back to exactly `x`.
std::string format_double(double x);

/// Strict decimal parse; throws DataError on trailing junk or non-finite.
double parse_double(std::string_view text);
long long parse_int(std::string_view text);
std::uint64_t parse_uint64(std::string_view text);

/// Hex digest of the file contents (FNV-1a 64).
std::string file_checksum(const std::string& path);
std::string checksum_hex(std::uint64_t h);

}  // namespace spot
