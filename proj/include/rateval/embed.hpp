#pragma once

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "rateval/error.hpp"
#include "rateval/io.hpp"
#include "rateval/textprep.hpp"

namespace rateval::embed {

/// Fixed-dimension real vector representing one text. All entries finite.
class EmbeddingVector {
 public:
  EmbeddingVector() = default;
  explicit EmbeddingVector(std::vector<double> values) : values_(std::move(values)) {
    if (values_.empty()) throw ProviderError("embedding vector must have positive dimension");
    for (double v : values_) {
      if (!std::isfinite(v)) throw ProviderError("embedding vector has a non-finite entry");
    }
  }

  std::size_t dim() const noexcept { return values_.size(); }
  std::span<const double> values() const noexcept { return values_; }
  double operator[](std::size_t i) const noexcept { return values_[i]; }

  friend bool operator==(const EmbeddingVector&, const EmbeddingVector&) = default;

 private:
  std::vector<double> values_;
};

/// Cache key: SHA-256 of the exact string that was embedded.
inline std::string content_key(std::string_view text) { return io::sha256_hex(text); }

/// Rounds to 9 significant decimal digits, the precision of the store file.
inline double quantize(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::scientific, 8);
  double out = 0.0;
  std::from_chars(buf, res.ptr, out);
  return out;
}

/// Key -> vector map with one shared dimension. Inserted values are rounded
/// to 9 significant digits so the in-memory store and its file agree bit for bit.
class EmbeddingStore {
 public:
  explicit EmbeddingStore(std::size_t dim) : dim_(dim) {
    if (dim == 0) throw ConfigError("embedding store dimension must be positive");
  }

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool contains(const std::string& key) const { return entries_.contains(key); }

  const EmbeddingVector* find(const std::string& key) const {
    auto it = entries_.find(key);
    return it == entries_.end() ? nullptr : &it->second;
  }

  void insert(const std::string& key, const EmbeddingVector& vector) {
    if (vector.dim() != dim_) throw DimensionMismatch(dim_, vector.dim());
    std::vector<double> values(vector.values().begin(), vector.values().end());
    for (auto& v : values) v = quantize(v);
    entries_.insert_or_assign(key, EmbeddingVector(std::move(values)));
  }

  const std::map<std::string, EmbeddingVector>& entries() const noexcept { return entries_; }

  /// One record per line: {"key", "dim", "values"}, sorted by key.
  std::string serialize() const {
    std::string out;
    for (const auto& [key, vec] : entries_) {
      io::json values = io::json::array();
      for (double v : vec.values()) values.push_back(v);
      out += io::to_line(io::json{{"key", key}, {"dim", vec.dim()}, {"values", std::move(values)}});
    }
    return out;
  }

  void save(const std::filesystem::path& path) const { io::write_atomic(path, serialize()); }

  /// Loads a store file; a missing file yields an empty store.
  static EmbeddingStore load(const std::filesystem::path& path, std::size_t dim) {
    EmbeddingStore store(dim);
    if (!std::filesystem::exists(path)) return store;
    const auto file = path.string();
    io::for_each_record(path, [&](const io::json& r, std::size_t line) {
      auto key = io::require_string(r, "key", file, line);
      auto d = r.at("dim").get<std::size_t>();
      const auto& values = r.at("values");
      if (!values.is_array() || values.size() != d) {
        throw ParseError(file, line, "corrupt embedding record: dim does not match value count");
      }
      if (d != dim) {
        throw ParseError(file, line,
                         "embedding record has dim " + std::to_string(d) + ", store expects " + std::to_string(dim));
      }
      std::vector<double> v;
      v.reserve(d);
      for (const auto& x : values) {
        if (!x.is_number()) throw ParseError(file, line, "corrupt embedding record: non-numeric value");
        v.push_back(x.get<double>());
      }
      try {
        store.insert(key, EmbeddingVector(std::move(v)));
      } catch (const ProviderError& e) {
        throw ParseError(file, line, std::string("corrupt embedding record: ") + e.what());
      }
    });
    return store;
  }

 private:
  std::size_t dim_;
  std::map<std::string, EmbeddingVector> entries_;
};

// ---------------------------------------------------------------------------
// Deterministic fallback embedder

namespace detail {

inline constexpr std::uint64_t kBucketSeed = 0x5261746576616c31ULL;
inline constexpr std::uint64_t kSignSeed = 0x9e3779b97f4a7c15ULL;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// FNV-1a over the token bytes, offset basis mixed with `seed`.
inline std::uint64_t seeded_hash(std::string_view token, std::uint64_t seed) {
  std::uint64_t h = 0xcbf29ce484222325ULL ^ seed;
  for (unsigned char c : token) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return splitmix64(h);
}

inline std::vector<std::string_view> whitespace_tokens(std::string_view text) {
  std::vector<std::string_view> tokens;
  std::size_t i = 0;
  auto space = [](char c) { return textprep::detail::is_ascii_space(static_cast<unsigned char>(c)); };
  while (i < text.size()) {
    while (i < text.size() && space(text[i])) ++i;
    std::size_t start = i;
    while (i < text.size() && !space(text[i])) ++i;
    if (i > start) tokens.push_back(text.substr(start, i - start));
  }
  return tokens;
}

}  // namespace detail

/// Bucket index and sign of one token under the fallback feature hash.
struct HashedFeature {
  std::size_t bucket;
  double sign;
};

inline HashedFeature fallback_feature(std::string_view token, std::size_t dim) {
  return {static_cast<std::size_t>(detail::seeded_hash(token, detail::kBucketSeed) % dim),
          (detail::seeded_hash(token, detail::kSignSeed) >> 63) ? -1.0 : 1.0};
}

/// Signed feature-hashed term-frequency vector, L2-normalized.
inline EmbeddingVector fallback_embed(std::string_view text, std::size_t dim) {
  if (dim < 8) throw ConfigError("fallback embedder needs dim >= 8, got " + std::to_string(dim));
  auto tokens = detail::whitespace_tokens(text);
  if (tokens.empty()) throw ProviderError("fallback embedder: text has no tokens");
  std::vector<double> values(dim, 0.0);
  for (auto t : tokens) {
    auto f = fallback_feature(t, dim);
    values[f.bucket] += f.sign;
  }
  double norm2 = 0.0;
  for (double v : values) norm2 += v * v;
  if (norm2 == 0.0) throw ProviderError("fallback embedder: hashed features cancel to a zero vector");
  const double norm = std::sqrt(norm2);
  for (auto& v : values) v /= norm;
  return EmbeddingVector(std::move(values));
}

// ---------------------------------------------------------------------------
// Providers

enum class ProviderKind { file, http, fallback };

inline const char* to_string(ProviderKind kind) {
  switch (kind) {
    case ProviderKind::file:
      return "file";
    case ProviderKind::http:
      return "http";
    case ProviderKind::fallback:
      return "fallback";
  }
  return "?";
}

inline std::optional<ProviderKind> parse_provider_kind(std::string_view text) {
  if (text == "file") return ProviderKind::file;
  if (text == "http") return ProviderKind::http;
  if (text == "fallback") return ProviderKind::fallback;
  return std::nullopt;
}

struct EmbeddingProviderConfig {
  ProviderKind kind = ProviderKind::fallback;
  std::size_t dim = 0;
  /// URL for http; path to a precomputed store file for file.
  std::optional<std::string> endpoint;
  std::optional<std::string> model_name;
  /// Name of the environment variable holding the bearer token (http only).
  std::optional<std::string> api_key_env;
  std::size_t max_parallel = 4;
  std::size_t max_retries = 3;
  std::size_t batch_size = 32;
  std::chrono::milliseconds initial_backoff{500};

  void validate() const {
    if (dim == 0) throw ConfigError("embedding dim is required and must be positive");
    if (kind == ProviderKind::http && (!endpoint || endpoint->empty())) {
      throw ConfigError("http embedding provider requires an endpoint");
    }
    if (kind == ProviderKind::file && (!endpoint || endpoint->empty())) {
      throw ConfigError("file embedding provider requires a path to a precomputed store");
    }
    if (kind == ProviderKind::fallback && dim < 8) throw ConfigError("fallback embedder needs dim >= 8");
    if (max_parallel == 0) throw ConfigError("max_parallel must be positive");
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
  }
};

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  /// Returns one vector per input text, in order. Throws TransportError for
  /// retryable failures and ProviderError for everything else.
  virtual std::vector<EmbeddingVector> embed(std::span<const std::string> texts) = 0;
};

class FallbackProvider final : public EmbeddingProvider {
 public:
  explicit FallbackProvider(std::size_t dim) : dim_(dim) {}

  std::vector<EmbeddingVector> embed(std::span<const std::string> texts) override {
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(fallback_embed(t, dim_));
    return out;
  }

 private:
  std::size_t dim_;
};

/// Serves vectors from a precomputed store file (for example one written by an
/// external sentence-embedding script) keyed by content_key().
class FileProvider final : public EmbeddingProvider {
 public:
  FileProvider(const std::filesystem::path& path, std::size_t dim) : store_(load_existing(path, dim)) {}

  std::vector<EmbeddingVector> embed(std::span<const std::string> texts) override {
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (const auto& t : texts) {
      const auto* v = store_.find(content_key(t));
      if (!v) throw ProviderError("no precomputed embedding for text key " + content_key(t));
      out.push_back(*v);
    }
    return out;
  }

 private:
  static EmbeddingStore load_existing(const std::filesystem::path& path, std::size_t dim) {
    if (!std::filesystem::exists(path)) throw ConfigError("precomputed embedding file not found: " + path.string());
    return EmbeddingStore::load(path, dim);
  }

  EmbeddingStore store_;
};

struct EmbedStats {
  std::size_t requested = 0;
  std::size_t unique = 0;
  std::size_t cached = 0;
  std::size_t fetched = 0;
  std::size_t provider_calls = 0;
  std::size_t retries = 0;
};

using Sleeper = std::function<void(std::chrono::milliseconds)>;

inline void real_sleep(std::chrono::milliseconds d) { std::this_thread::sleep_for(d); }

/// Fills `store` with a vector for every text not already cached. Requests are
/// batched and dispatched on at most `max_parallel` workers; retryable failures
/// back off exponentially from `initial_backoff`. Insertion into the store
/// happens after all workers finish, in key order.
inline EmbedStats embed_batch(std::span<const std::string> texts, EmbeddingProvider& provider,
                              const EmbeddingProviderConfig& config, EmbeddingStore& store,
                              const Sleeper& sleep = real_sleep) {
  if (store.dim() != config.dim) throw DimensionMismatch(config.dim, store.dim());
  EmbedStats stats;
  stats.requested = texts.size();

  std::map<std::string, std::string> pending;  // key -> text
  std::map<std::string, bool> seen;
  for (const auto& t : texts) {
    if (t.empty()) throw ConfigError("embed_batch: empty text (filter empty rationales before embedding)");
    auto key = content_key(t);
    if (!seen.emplace(key, true).second) continue;
    if (store.contains(key)) {
      ++stats.cached;
      continue;
    }
    pending.emplace(std::move(key), t);
  }
  stats.unique = seen.size();
  if (pending.empty()) return stats;

  std::vector<std::vector<std::string>> batches;
  std::vector<std::vector<std::string>> batch_keys;
  for (const auto& [key, text] : pending) {
    if (batches.empty() || batches.back().size() == config.batch_size) {
      batches.emplace_back();
      batch_keys.emplace_back();
    }
    batches.back().push_back(text);
    batch_keys.back().push_back(key);
  }

  std::vector<std::vector<EmbeddingVector>> results(batches.size());
  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> calls{0};
  std::atomic<std::size_t> retries{0};
  std::atomic<bool> failed{false};
  std::exception_ptr first_error;
  std::mutex error_mutex;

  auto worker = [&] {
    while (!failed.load()) {
      std::size_t i = next.fetch_add(1);
      if (i >= batches.size()) return;
      try {
        for (std::size_t attempt = 0;; ++attempt) {
          try {
            ++calls;
            auto vectors = provider.embed(batches[i]);
            if (vectors.size() != batches[i].size()) {
              throw ProviderError("provider returned " + std::to_string(vectors.size()) + " vectors for " +
                                  std::to_string(batches[i].size()) + " texts");
            }
            for (const auto& v : vectors) {
              if (v.dim() != config.dim) throw DimensionMismatch(config.dim, v.dim());
            }
            results[i] = std::move(vectors);
            break;
          } catch (const TransportError& e) {
            if (attempt >= config.max_retries) {
              throw ProviderError("embedding provider unreachable after " + std::to_string(config.max_retries) +
                                  " retries: " + e.what());
            }
            ++retries;
            sleep(config.initial_backoff * (1LL << attempt));
          }
        }
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        failed = true;
      }
    }
  };

  const std::size_t workers = std::min(config.max_parallel, batches.size());
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  }
  stats.provider_calls = calls.load();
  stats.retries = retries.load();
  if (first_error) std::rethrow_exception(first_error);

  for (std::size_t i = 0; i < batches.size(); ++i) {
    for (std::size_t j = 0; j < batches[i].size(); ++j) store.insert(batch_keys[i][j], results[i][j]);
  }
  stats.fetched = pending.size();
  return stats;
}

// ---------------------------------------------------------------------------

/// Maps a raw rationale to the exact string that gets embedded: the
/// preprocessed form by default, or the raw text when preprocessing is off.
struct TextPipeline {
  bool preprocess = true;
  textprep::PrepConfig prep = textprep::PrepConfig::defaults();

  /// nullopt when nothing embeddable remains (empty after preprocessing).
  std::optional<std::string> embed_text(std::string_view raw) const {
    std::string text = preprocess ? textprep::preprocess(raw, prep).str() : std::string(raw);
    if (detail::whitespace_tokens(text).empty()) return std::nullopt;
    return text;
  }
};

/// Store lookup through the pipeline. Returns nullptr when the rationale has no
/// embeddable text or no cached vector.
inline const EmbeddingVector* lookup(const EmbeddingStore& store, const TextPipeline& pipeline,
                                     std::string_view rationale) {
  auto text = pipeline.embed_text(rationale);
  if (!text) return nullptr;
  return store.find(content_key(*text));
}

}  // namespace rateval::embed
