#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace deepnose {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

enum class ErrorKind {
  MalformedRecord,
  MalformedRow,
  HttpFailure,
  NoRecord,
  NotUnit,
  IndexOutOfRange,
  EmptyMolecule,
  GridMismatch,
  ShapeMismatch,
  InvalidConfig,
  IoFailure,
  BadMagic,
  VersionMismatch,
  DataMissing,
  ConfigMismatch,
  DegenerateVariance,
  ConvergenceFailure,
  DegenerateConfiguration,
};

std::string_view error_kind_name(ErrorKind kind);

class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(error_kind_name(kind)) + ": " + message),
        kind_(kind) {}

  ErrorKind kind() const { return kind_; }

private:
  ErrorKind kind_;
};

[[noreturn]] inline void raise(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

// ---------------------------------------------------------------------------
// Deterministic random numbers
//
// Self-contained xorshift128+ generator plus hand-rolled draw conversions.
// <random> distributions are implementation-defined, so seeded results would
// differ between standard libraries; everything here is pinned bit-for-bit.
// ---------------------------------------------------------------------------

class Rng {
public:
  explicit Rng(std::uint64_t seed) : state_(splitmix(seed)), inc_(splitmix(seed ^ 0x9e3779b97f4a7c15ull) | 1) {}

  std::uint64_t next_u64() {
    // xorshift128+ style step on two splitmix-derived words
    std::uint64_t x = state_;
    std::uint64_t y = inc_;
    state_ = y;
    x ^= x << 23;
    inc_ = x ^ y ^ (x >> 17) ^ (y >> 26);
    return inc_ + y;
  }

  // uniform in [0, 1) with 53 random bits
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // standard normal via Box-Muller, one spare cached
  double normal();

  // unbiased integer in [0, n)
  std::uint64_t below(std::uint64_t n);

  // independent child stream
  Rng split() { return Rng(next_u64()); }

  template <typename T>
  void shuffle(std::vector<T>& xs) {
    for (std::size_t i = xs.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(xs[i - 1], xs[j]);
    }
  }

private:
  static std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
  }

  std::uint64_t state_;
  std::uint64_t inc_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// ---------------------------------------------------------------------------
// Worker pool
// ---------------------------------------------------------------------------

// Global worker count used by parallel_for. 0 picks hardware concurrency.
void set_thread_count(unsigned n);
unsigned thread_count();

// Runs fn(chunk) for chunk in [0, chunks). Chunks are independent; the call
// returns after every chunk completed. With one worker this degenerates to a
// plain loop, so results never depend on scheduling.
void parallel_for(std::size_t chunks, const std::function<void(std::size_t)>& fn);

// Fixed slab count used for deterministic parallel reductions: partial sums
// are accumulated per slab and combined in slab order, so totals do not
// depend on the worker count.
inline constexpr std::size_t kReductionSlabs = 16;

// Splits [0, n) into kReductionSlabs contiguous ranges; range i is
// [slab_begin(n, i), slab_begin(n, i + 1)).
std::size_t slab_begin(std::size_t n, std::size_t slab);

// ---------------------------------------------------------------------------
// Strings / hashing / small file helpers
// ---------------------------------------------------------------------------

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);
// trim + lowercase + collapse internal whitespace runs to single spaces
std::string normalize_descriptor(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);
// drops leading lines starting with '#'; provenance headers on saved artifacts
std::string strip_leading_comments(std::string_view s);
// double-quote a CSV field when it contains separators or quotes
std::string csv_escape(std::string_view s);

std::uint64_t fnv1a64(const void* data, std::size_t n, std::uint64_t seed = 0xcbf29ce484222325ull);
std::string hex64(std::uint64_t v);
std::uint64_t hash_file(const std::string& path);  // IoFailure if unreadable

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, std::string_view content);
// write to <path>.tmp.<pid> then rename; used by cache writers
void write_file_atomic(const std::string& path, std::string_view content);

// 17 significant digits: enough for bit-exact double round-trips
std::string format_double(double v);

}  // namespace deepnose
