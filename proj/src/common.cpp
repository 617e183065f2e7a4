#include "deepnose/common.hpp"

#include <atomic>
#include <cctype>
#include <charconv>
#include <cmath>
#include <condition_variable>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>
#include <unistd.h>

namespace deepnose {

std::string_view error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::MalformedRecord: return "MalformedRecord";
    case ErrorKind::MalformedRow: return "MalformedRow";
    case ErrorKind::HttpFailure: return "HttpFailure";
    case ErrorKind::NoRecord: return "NoRecord";
    case ErrorKind::NotUnit: return "NotUnit";
    case ErrorKind::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorKind::EmptyMolecule: return "EmptyMolecule";
    case ErrorKind::GridMismatch: return "GridMismatch";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::IoFailure: return "IoFailure";
    case ErrorKind::BadMagic: return "BadMagic";
    case ErrorKind::VersionMismatch: return "VersionMismatch";
    case ErrorKind::DataMissing: return "DataMissing";
    case ErrorKind::ConfigMismatch: return "ConfigMismatch";
    case ErrorKind::DegenerateVariance: return "DegenerateVariance";
    case ErrorKind::ConvergenceFailure: return "ConvergenceFailure";
    case ErrorKind::DegenerateConfiguration: return "DegenerateConfiguration";
  }
  return "UnknownError";
}

double Rng::normal() {
  if (have_spare_) {
    have_spare_ = false;
    return spare_;
  }
  double u1 = 0.0;
  do {
    u1 = uniform01();
  } while (u1 <= 0.0);
  double u2 = uniform01();
  double r = std::sqrt(-2.0 * std::log(u1));
  double a = 2.0 * 3.14159265358979323846 * u2;
  spare_ = r * std::sin(a);
  have_spare_ = true;
  return r * std::cos(a);
}

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) raise(ErrorKind::IndexOutOfRange, "Rng::below(0)");
  // rejection sampling on the top range to avoid modulo bias
  std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return x % n;
}

// ---------------------------------------------------------------------------
// Worker pool
// ---------------------------------------------------------------------------

namespace {

std::atomic<unsigned> g_thread_count{0};

struct Pool {
  std::vector<std::thread> workers;
  std::mutex mu;
  std::condition_variable cv_work;
  std::condition_variable cv_done;
  const std::function<void(std::size_t)>* job = nullptr;
  std::size_t job_chunks = 0;
  std::size_t next_chunk = 0;
  std::size_t active = 0;
  std::uint64_t generation = 0;
  bool stop = false;

  explicit Pool(unsigned n) {
    for (unsigned i = 0; i < n; ++i) {
      workers.emplace_back([this] { worker_loop(); });
    }
  }

  ~Pool() {
    {
      std::lock_guard<std::mutex> lk(mu);
      stop = true;
    }
    cv_work.notify_all();
    for (auto& w : workers) w.join();
  }

  static bool& in_parallel() {
    thread_local bool flag = false;
    return flag;
  }

  void worker_loop() {
    in_parallel() = true;  // nested parallel_for calls from workers run inline
    std::uint64_t seen = 0;
    for (;;) {
      std::unique_lock<std::mutex> lk(mu);
      cv_work.wait(lk, [&] { return stop || generation != seen; });
      if (stop) return;
      seen = generation;
      while (next_chunk < job_chunks) {
        std::size_t chunk = next_chunk++;
        lk.unlock();
        (*job)(chunk);
        lk.lock();
      }
      if (--active == 0) cv_done.notify_all();
    }
  }

  void run(std::size_t chunks, const std::function<void(std::size_t)>& fn) {
    std::unique_lock<std::mutex> lk(mu);
    job = &fn;
    job_chunks = chunks;
    next_chunk = 0;
    active = workers.size();
    ++generation;
    cv_work.notify_all();
    // the calling thread helps out
    const bool was_nested = in_parallel();
    in_parallel() = true;
    while (next_chunk < job_chunks) {
      std::size_t chunk = next_chunk++;
      lk.unlock();
      fn(chunk);
      lk.lock();
    }
    in_parallel() = was_nested;
    cv_done.wait(lk, [&] { return active == 0; });
    job = nullptr;
  }
};

Pool* pool_instance(unsigned workers) {
  static Pool* pool = nullptr;
  static unsigned pool_workers = 0;
  if (pool == nullptr || pool_workers != workers) {
    delete pool;
    pool = new Pool(workers);
    pool_workers = workers;
  }
  return pool;
}

std::mutex g_pool_mu;

}  // namespace

void set_thread_count(unsigned n) { g_thread_count.store(n); }

unsigned thread_count() {
  unsigned n = g_thread_count.load();
  if (n == 0) {
    n = std::thread::hardware_concurrency();
    if (n == 0) n = 1;
  }
  return n;
}

void parallel_for(std::size_t chunks, const std::function<void(std::size_t)>& fn) {
  if (chunks == 0) return;
  unsigned n = thread_count();
  if (n <= 1 || chunks == 1 || Pool::in_parallel()) {
    for (std::size_t i = 0; i < chunks; ++i) fn(i);
    return;
  }
  std::lock_guard<std::mutex> lk(g_pool_mu);
  pool_instance(n - 1)->run(chunks, fn);
}

std::size_t slab_begin(std::size_t n, std::size_t slab) {
  return n * slab / kReductionSlabs;
}

// ---------------------------------------------------------------------------
// Strings / hashing / files
// ---------------------------------------------------------------------------

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::string to_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string normalize_descriptor(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool in_space = true;  // leading spaces dropped
  for (char c : s) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      in_space = true;
      continue;
    }
    if (in_space && !out.empty()) out.push_back(' ');
    in_space = false;
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == sep) {
      out.emplace_back(s.substr(start, i - start));
      start = i + 1;
    }
  }
  return out;
}

std::string strip_leading_comments(std::string_view s) {
  std::size_t pos = 0;
  while (pos < s.size() && s[pos] == '#') {
    const std::size_t nl = s.find('\n', pos);
    if (nl == std::string_view::npos) return std::string();
    pos = nl + 1;
  }
  return std::string(s.substr(pos));
}

std::string csv_escape(std::string_view s) {
  if (s.find_first_of(",\"\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::uint64_t fnv1a64(const void* data, std::size_t n, std::uint64_t seed) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return std::string(buf);
}

std::uint64_t hash_file(const std::string& path) {
  std::string content = read_text_file(path);
  return fnv1a64(content.data(), content.size());
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorKind::IoFailure, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) raise(ErrorKind::IoFailure, "read failed for " + path);
  return ss.str();
}

void write_text_file(const std::string& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) raise(ErrorKind::IoFailure, "cannot open " + path + " for writing");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) raise(ErrorKind::IoFailure, "write failed for " + path);
}

void write_file_atomic(const std::string& path, std::string_view content) {
  namespace fs = std::filesystem;
  fs::path target(path);
  if (target.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(target.parent_path(), ec);
  }
  std::string tmp = path + ".tmp." + std::to_string(::getpid());
  write_text_file(tmp, content);
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    fs::remove(tmp, ec);
    raise(ErrorKind::IoFailure, "rename to " + path + " failed");
  }
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return std::string(buf);
}

}  // namespace deepnose
