#pragma once

#include <algorithm>
#include <array>
#include <cstdio>
#include <limits>
#include <span>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "rateval/corpus.hpp"
#include "rateval/error.hpp"
#include "rateval/io.hpp"

namespace rateval::fixtures {

/// Probability weights for offsets -2, -1, 0, +1, +2 from the latent score.
using OffsetProfile = std::array<double, 5>;

inline constexpr OffsetProfile kExact = {0.0, 0.0, 1.0, 0.0, 0.0};

enum class RationaleStyle { llm, human, none };

struct FixtureRater {
  std::string rater_id;
  std::string label;
  RaterKind kind = RaterKind::llm;
  OffsetProfile offsets = kExact;
  RationaleStyle style = RationaleStyle::llm;
};

struct FixtureSpec {
  std::size_t n_essays = 30;
  ScoreScale scale{0, 6};
  std::uint64_t seed = 7;
  /// Weights of the latent score over the scale points.
  std::vector<double> latent_weights = {0.04, 0.08, 0.16, 0.24, 0.24, 0.16, 0.08};
  std::vector<FixtureRater> raters = default_raters();

  /// Seven synthetic LLM raters (L1 noiseless, then progressively noisier or
  /// biased), human R1 with rationales and slight noise, human R2 without.
  static std::vector<FixtureRater> default_raters() {
    return {
        {"L1", "Synthetic-1", RaterKind::llm, kExact, RationaleStyle::llm},
        {"L2", "Synthetic-2", RaterKind::llm, {0.0, 0.15, 0.7, 0.15, 0.0}, RationaleStyle::llm},
        {"L3", "Synthetic-3", RaterKind::llm, {0.05, 0.2, 0.5, 0.2, 0.05}, RationaleStyle::llm},
        {"L4", "Synthetic-4", RaterKind::llm, {0.15, 0.2, 0.3, 0.2, 0.15}, RationaleStyle::llm},
        {"L5", "Synthetic-5", RaterKind::llm, {0.2, 0.2, 0.2, 0.2, 0.2}, RationaleStyle::llm},
        {"L6", "Synthetic-6", RaterKind::llm, {0.0, 0.0, 0.45, 0.35, 0.2}, RationaleStyle::llm},
        {"L7", "Synthetic-7", RaterKind::llm, {0.2, 0.35, 0.45, 0.0, 0.0}, RationaleStyle::llm},
        {"R1", "R1", RaterKind::human, {0.0, 0.05, 0.9, 0.05, 0.0}, RationaleStyle::human},
        {"R2", "R2", RaterKind::human, {0.0, 0.15, 0.7, 0.15, 0.0}, RationaleStyle::none},
    };
  }

  void validate() const {
    if (n_essays == 0) throw ConfigError("fixture needs at least one essay");
    if (latent_weights.size() != static_cast<std::size_t>(scale.k())) {
      throw ConfigError("latent weights must have one entry per scale point");
    }
    if (raters.empty()) throw ConfigError("fixture needs at least one rater");
  }
};

/// Descriptor vocabulary ordered from weakest to strongest. Band s draws from
/// groups s and s + 1, so adjacent bands share half their pool.
inline constexpr std::array<std::array<const char*, 6>, 8> kVocabularyGroups = {{
    {"irrelevant", "offtopic", "restates", "blank", "untranslated", "english"},
    {"fragmentary", "incoherent", "disjointed", "minimal", "obscured", "confusing"},
    {"scattered", "limited", "frequent", "errors", "inappropriate", "register"},
    {"partial", "simple", "direct", "incomplete", "inconsistent", "basic"},
    {"relevant", "loosely", "connected", "generally", "coherent", "adequate"},
    {"clear", "logical", "detailed", "appropriate", "minor", "lapses"},
    {"elaborate", "cohesive", "rich", "varied", "precise", "natural"},
    {"sophisticated", "idiomatic", "fluent", "nuanced", "seamless", "exemplary"},
}};

inline std::vector<std::string> band_pool(int band) {
  if (band < 0 || band + 1 >= static_cast<int>(kVocabularyGroups.size())) {
    throw ConfigError("no vocabulary pool for score band " + std::to_string(band));
  }
  std::vector<std::string> pool;
  for (int g : {band, band + 1})
    for (const char* w : kVocabularyGroups[static_cast<std::size_t>(g)]) pool.emplace_back(w);
  return pool;
}

/// Portable draws on top of raw mt19937_64 output (std distributions are
/// implementation-defined, so they would break cross-platform byte identity).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  std::size_t below(std::size_t n) {
    // Rejection sampling keeps the draw unbiased.
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x;
    do x = engine_();
    while (x >= limit);
    return static_cast<std::size_t>(x % n);
  }

  std::size_t categorical(std::span<const double> weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    if (!(total > 0.0)) throw ConfigError("categorical weights must have positive mass");
    const double u = uniform() * total;
    double acc = 0.0;
    std::size_t last = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      if (weights[i] <= 0.0) continue;
      last = i;
      acc += weights[i];
      if (u < acc) return i;
    }
    return last;
  }

 private:
  std::mt19937_64 engine_;
};

struct GeneratedFixture {
  Corpus corpus;
  /// Latent true score per essay, in essay order.
  std::vector<int> latent;
};

inline std::string essay_id_for(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "E%02zu", i + 1);
  return buf;
}

inline std::string rationale_text(RationaleStyle style, int score, int band, Rng& rng) {
  const auto pool = band_pool(band);
  std::array<std::string, 6> w;
  for (auto& word : w) word = pool[rng.below(pool.size())];
  const auto s = std::to_string(score);
  if (style == RationaleStyle::llm) {
    return "Overall, the student essay earns a " + s + ". The response is " + w[0] + " and " + w[1] +
           ". Organization seems " + w[2] + ", with " + w[3] + " transitions. Language use is " + w[4] + " and " +
           w[5] + ".";
  }
  return "Score " + s + ": the response is " + w[0] + " and " + w[1] + "; organization " + w[2] + ", " + w[3] +
         "; language use " + w[4] + ", " + w[5] + ".";
}

/// Latent scores first (essay order), then for each rater in order and each
/// essay: offset draw, then rationale words. The seed fixes everything.
inline GeneratedFixture generate(const FixtureSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  GeneratedFixture out;
  std::vector<Essay> essays;
  for (std::size_t i = 0; i < spec.n_essays; ++i) {
    const int latent = spec.scale.min_score() + static_cast<int>(rng.categorical(spec.latent_weights));
    out.latent.push_back(latent);
    const auto id = essay_id_for(i);
    essays.push_back({id, "ER2",
                      "Synthetic email response " + id + ". 晓红你好，我住的地方气候变化很明显。Latent level " +
                          std::to_string(latent) + "."});
  }
  std::vector<RaterProfile> raters;
  std::vector<Rating> ratings;
  for (const auto& r : spec.raters) {
    raters.push_back({r.rater_id, r.kind, r.label});
    for (std::size_t i = 0; i < spec.n_essays; ++i) {
      const int offset = static_cast<int>(rng.categorical(r.offsets)) - 2;
      const int score = std::clamp(out.latent[i] + offset, spec.scale.min_score(), spec.scale.max_score());
      Rating rating{essays[i].essay_id, r.rater_id, score, std::nullopt};
      if (r.style != RationaleStyle::none) rating.rationale = rationale_text(r.style, score, spec.scale.index(score), rng);
      ratings.push_back(std::move(rating));
    }
  }
  out.corpus = Corpus(spec.scale, std::move(essays), std::move(raters), std::move(ratings));
  return out;
}

/// Writes essays.jsonl, raters.jsonl, ratings.jsonl and latent_scores.jsonl.
inline GeneratedFixture write_fixture(const FixtureSpec& spec, const std::filesystem::path& dir) {
  auto fixture = generate(spec);
  std::filesystem::create_directories(dir);
  save_corpus(fixture.corpus, CorpusPaths::in_directory(dir));
  std::string latent;
  const auto& essays = fixture.corpus.essays();
  for (std::size_t i = 0; i < essays.size(); ++i) {
    latent += io::to_line({{"essay_id", essays[i].essay_id}, {"score", fixture.latent[i]}});
  }
  io::write_atomic(dir / "latent_scores.jsonl", latent);
  return fixture;
}

}  // namespace rateval::fixtures
