// ============================================================================
// rv/common.hpp — shared error types, RNG stream derivation, small utilities
// ============================================================================

#ifndef RV_COMMON_HPP
#define RV_COMMON_HPP

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace rv {

// ── Errors ──────────────────────────────────────────────────────────────────
// All toolkit errors derive from rv::Error so callers can catch one type at
// the CLI boundary and map it to the documented exit codes.

class Error : public std::runtime_error {
public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Malformed input text (formula syntax, CSV rows, JSON documents).
class FormatError : public Error {
public:
  explicit FormatError(const std::string& msg) : Error(msg) {}
};

/// Formula parse failure; carries the character position of the offense.
class ParseError : public FormatError {
public:
  ParseError(const std::string& msg, std::size_t pos)
      : FormatError(msg + " (at position " + std::to_string(pos) + ")"),
        position(pos) {}
  std::size_t position;
};

/// Vector/matrix dimensions disagree with the declared problem sizes.
class DimensionError : public Error {
public:
  explicit DimensionError(const std::string& msg) : Error(msg) {}
};

/// A trace is too short to evaluate a formula at the requested time index.
class HorizonError : public Error {
public:
  explicit HorizonError(const std::string& msg) : Error(msg) {}
};

/// A predicate identifier has no bound evaluation function.
class UnknownPredicateError : public Error {
public:
  explicit UnknownPredicateError(const std::string& name)
      : Error("unknown predicate: " + name) {}
};

/// The reactive bound cuts an empty region out of the disturbance box.
class EmptyPolytopeError : public Error {
public:
  explicit EmptyPolytopeError(const std::string& msg) : Error(msg) {}
};

/// A certificate was requested outside its theorem's hypothesis (p+2 >= N).
class HypothesisError : public Error {
public:
  explicit HypothesisError(const std::string& msg) : Error(msg) {}
};

/// Bad run configuration (missing files, invalid parameter combinations).
class ConfigError : public Error {
public:
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

/// Numeric blow-up during simulation or optimization.
class NumericError : public Error {
public:
  explicit NumericError(const std::string& msg) : Error(msg) {}
};

/// A referenced input file or directory does not exist.
class MissingInputError : public Error {
public:
  explicit MissingInputError(const std::string& msg) : Error(msg) {}
};

// ── RNG streams ─────────────────────────────────────────────────────────────
// Every randomized phase owns an mt19937_64 seeded through splitmix64 so that
// sub-streams (per restart, per episode) are decorrelated yet reproducible
// from a single user-facing seed.

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Derive an independent sub-stream seed from (seed, stream index).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(splitmix64(seed) ^ splitmix64(stream * 0x9e3779b97f4a7c15ULL + 1));
}

inline std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
  return std::mt19937_64(derive_seed(seed, stream));
}

// ── Misc ────────────────────────────────────────────────────────────────────

/// FNV-1a over bytes; used to fingerprint data batches and emitted files.
inline std::uint64_t fnv1a(const void* data, std::size_t len,
                           std::uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t fnv1a(const std::string& s) {
  return fnv1a(s.data(), s.size());
}

/// Shortest round-trip decimal rendering of a double.
std::string format_double(double v);

inline constexpr const char* kToolVersion = "rv 0.1.0";

}  // namespace rv

#endif  // RV_COMMON_HPP
