#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>

namespace homlab {

/// Small fixed-size vector; only the first `dim` entries are meaningful.
using Vec = std::array<double, 3>;
/// Small fixed-size matrix; only the leading `dim`x`dim` block is meaningful.
using Mat = std::array<std::array<double, 3>, 3>;

inline constexpr int kMaxDim = 3;

enum class ErrorCode {
  InvalidArgument,
  Config,
  NonConvergence,
  NonFinite,
  Threshold,
  Io,
  ExtendTable,
};

/// Exception carrying a classification used by the C API and the CLI exit codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

inline void require(bool cond, const std::string& what) {
  if (!cond) fail(ErrorCode::InvalidArgument, what);
}

inline double dot(const Vec& a, const Vec& b, int dim) {
  double s = 0.0;
  for (int i = 0; i < dim; ++i) s += a[i] * b[i];
  return s;
}

inline double norm(const Vec& a, int dim) { return std::sqrt(dot(a, a, dim)); }

inline Vec normalized(const Vec& a, int dim) {
  const double n = norm(a, dim);
  Vec out{};
  for (int i = 0; i < dim; ++i) out[i] = a[i] / n;
  return out;
}

inline Vec to_vec(std::span<const double> v) {
  Vec out{};
  for (std::size_t i = 0; i < v.size() && i < 3; ++i) out[i] = v[i];
  return out;
}

// splitmix64 finalizer; used for all counter-based hashing so streams are
// reproducible across platforms and standard libraries.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t hash_combine(std::uint64_t h, std::uint64_t v) { return mix64(h ^ mix64(v)); }

/// Counter-based uniform stream keyed on a 64-bit state.
class SplitMix {
 public:
  explicit SplitMix(std::uint64_t key) : state_(key) {}
  std::uint64_t next() { return mix64(state_++); }
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

 private:
  std::uint64_t state_;
};

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v);

}  // namespace homlab
