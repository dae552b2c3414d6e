#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace deckshift {

inline constexpr std::size_t kDeckSize = 8;
inline constexpr int kNumStates = 13;
inline constexpr int kNumSubtypes = 3;

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input file; the message carries the 1-based line number.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what);
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

// Training diverged (non-finite loss).
class DivergenceError : public Error {
 public:
  using Error::Error;
};

// splitmix64 finalizer; the basis of every derived seed.
std::uint64_t mix64(std::uint64_t x) noexcept;

// Derives an independent seed for a stream identified by `index`.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) noexcept;

// Derives a per-entity seed from a string key (e.g. a player id).
std::uint64_t derive_seed(std::uint64_t master, std::string_view key) noexcept;

}  // namespace deckshift
