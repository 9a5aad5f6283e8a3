#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "rateval/error.hpp"
#include "rateval/io.hpp"

namespace rateval {

/// Inclusive integer rubric range, e.g. [0, 6].
class ScoreScale {
 public:
  ScoreScale() = default;
  ScoreScale(int min_score, int max_score) : min_(min_score), max_(max_score) {
    if (min_score >= max_score) {
      throw ConfigError("score scale needs min < max, got [" + std::to_string(min_score) + ", " +
                        std::to_string(max_score) + "]");
    }
  }

  int min_score() const noexcept { return min_; }
  int max_score() const noexcept { return max_; }
  /// Number of categories on the scale.
  int k() const noexcept { return max_ - min_ + 1; }
  bool contains(int score) const noexcept { return score >= min_ && score <= max_; }
  /// Zero-based category index of a score.
  int index(int score) const noexcept { return score - min_; }

  friend bool operator==(const ScoreScale&, const ScoreScale&) = default;

 private:
  int min_ = 0;
  int max_ = 6;
};

struct Essay {
  std::string essay_id;
  std::string prompt_id;
  std::string text;

  friend bool operator==(const Essay&, const Essay&) = default;
};

enum class RaterKind { human, llm };

inline const char* to_string(RaterKind kind) { return kind == RaterKind::human ? "human" : "llm"; }

inline std::optional<RaterKind> parse_rater_kind(std::string_view text) {
  if (text == "human") return RaterKind::human;
  if (text == "llm") return RaterKind::llm;
  return std::nullopt;
}

struct RaterProfile {
  std::string rater_id;
  RaterKind kind = RaterKind::human;
  std::string label;

  friend bool operator==(const RaterProfile&, const RaterProfile&) = default;
};

struct Rating {
  std::string essay_id;
  std::string rater_id;
  int score = 0;
  std::optional<std::string> rationale;

  friend bool operator==(const Rating&, const Rating&) = default;
};

using ScorePair = std::pair<int, int>;

/// Validated, immutable collection of essays, raters and ratings on one scale.
/// Construction checks every referential, uniqueness and range invariant.
class Corpus {
 public:
  Corpus() = default;

  Corpus(ScoreScale scale, std::vector<Essay> essays, std::vector<RaterProfile> raters,
         std::vector<Rating> ratings)
      : scale_(scale), essays_(std::move(essays)), raters_(std::move(raters)), ratings_(std::move(ratings)) {
    for (std::size_t i = 0; i < essays_.size(); ++i) {
      const auto& e = essays_[i];
      if (e.essay_id.empty()) throw IntegrityError("essay with empty essay_id");
      if (e.text.empty()) throw IntegrityError("essay '" + e.essay_id + "' has empty text");
      if (!essay_index_.emplace(e.essay_id, i).second) {
        throw IntegrityError("duplicate essay_id '" + e.essay_id + "'");
      }
    }
    for (std::size_t i = 0; i < raters_.size(); ++i) {
      const auto& r = raters_[i];
      if (r.rater_id.empty()) throw IntegrityError("rater with empty rater_id");
      if (!rater_index_.emplace(r.rater_id, i).second) {
        throw IntegrityError("duplicate rater_id '" + r.rater_id + "'");
      }
    }
    for (std::size_t i = 0; i < ratings_.size(); ++i) {
      const auto& r = ratings_[i];
      const auto where = "rating (essay '" + r.essay_id + "', rater '" + r.rater_id + "')";
      if (!essay_index_.contains(r.essay_id)) throw IntegrityError(where + " references unknown essay");
      if (!rater_index_.contains(r.rater_id)) throw IntegrityError(where + " references unknown rater");
      if (!scale_.contains(r.score)) {
        throw IntegrityError(where + " has score " + std::to_string(r.score) + " outside [" +
                             std::to_string(scale_.min_score()) + ", " + std::to_string(scale_.max_score()) +
                             "]");
      }
      if (!rating_index_.emplace(std::make_pair(r.essay_id, r.rater_id), i).second) {
        throw IntegrityError("duplicate " + where);
      }
    }
  }

  const ScoreScale& scale() const noexcept { return scale_; }
  const std::vector<Essay>& essays() const noexcept { return essays_; }
  const std::vector<RaterProfile>& raters() const noexcept { return raters_; }
  const std::vector<Rating>& ratings() const noexcept { return ratings_; }

  bool has_rater(const std::string& rater_id) const { return rater_index_.contains(rater_id); }
  bool has_essay(const std::string& essay_id) const { return essay_index_.contains(essay_id); }

  const RaterProfile& rater(const std::string& rater_id) const {
    auto it = rater_index_.find(rater_id);
    if (it == rater_index_.end()) throw ConfigError("unknown rater id '" + rater_id + "'");
    return raters_[it->second];
  }

  const Essay& essay(const std::string& essay_id) const {
    auto it = essay_index_.find(essay_id);
    if (it == essay_index_.end()) throw IntegrityError("unknown essay id '" + essay_id + "'");
    return essays_[it->second];
  }

  const Rating* find_rating(const std::string& essay_id, const std::string& rater_id) const {
    auto it = rating_index_.find(std::make_pair(essay_id, rater_id));
    return it == rating_index_.end() ? nullptr : &ratings_[it->second];
  }

  /// Essay ids in lexicographic order; the canonical order of every analysis.
  std::vector<std::string> sorted_essay_ids() const {
    std::vector<std::string> ids;
    ids.reserve(essays_.size());
    for (const auto& e : essays_) ids.push_back(e.essay_id);
    std::sort(ids.begin(), ids.end());
    return ids;
  }

  friend bool operator==(const Corpus& a, const Corpus& b) {
    return a.scale_ == b.scale_ && a.essays_ == b.essays_ && a.raters_ == b.raters_ &&
           a.ratings_ == b.ratings_;
  }

 private:
  ScoreScale scale_;
  std::vector<Essay> essays_;
  std::vector<RaterProfile> raters_;
  std::vector<Rating> ratings_;
  std::unordered_map<std::string, std::size_t> essay_index_;
  std::unordered_map<std::string, std::size_t> rater_index_;
  std::map<std::pair<std::string, std::string>, std::size_t> rating_index_;
};

struct CorpusPaths {
  std::filesystem::path essays;
  std::filesystem::path raters;
  std::filesystem::path ratings;

  /// Conventional file names inside a corpus directory.
  static CorpusPaths in_directory(const std::filesystem::path& dir) {
    return {dir / "essays.jsonl", dir / "raters.jsonl", dir / "ratings.jsonl"};
  }
};

namespace detail {

inline int require_int(const io::json& record, const char* field, const std::string& file, std::size_t line) {
  auto it = record.find(field);
  if (it == record.end() || !it->is_number_integer()) {
    throw ParseError(file, line, std::string("missing or non-integer field '") + field + "'");
  }
  return it->get<int>();
}

}  // namespace detail

inline std::vector<Essay> read_essays(const std::filesystem::path& path) {
  std::vector<Essay> out;
  const auto file = path.string();
  io::for_each_record(path, [&](const io::json& r, std::size_t line) {
    out.push_back({io::require_string(r, "essay_id", file, line), io::require_string(r, "prompt_id", file, line),
                   io::require_string(r, "text", file, line)});
  });
  return out;
}

inline std::vector<RaterProfile> read_raters(const std::filesystem::path& path) {
  std::vector<RaterProfile> out;
  const auto file = path.string();
  io::for_each_record(path, [&](const io::json& r, std::size_t line) {
    auto kind_text = io::require_string(r, "kind", file, line);
    auto kind = parse_rater_kind(kind_text);
    if (!kind) throw ParseError(file, line, "rater kind must be \"human\" or \"llm\", got \"" + kind_text + "\"");
    out.push_back({io::require_string(r, "rater_id", file, line), *kind, io::require_string(r, "label", file, line)});
  });
  return out;
}

inline Rating rating_from_json(const io::json& r, const std::string& file, std::size_t line) {
  Rating rating{io::require_string(r, "essay_id", file, line), io::require_string(r, "rater_id", file, line),
                detail::require_int(r, "score", file, line), std::nullopt};
  if (auto it = r.find("rationale"); it != r.end() && !it->is_null()) {
    if (!it->is_string()) throw ParseError(file, line, "field 'rationale' must be a string");
    rating.rationale = it->get<std::string>();
  }
  return rating;
}

inline io::json to_json(const Rating& r) {
  io::json j{{"essay_id", r.essay_id}, {"rater_id", r.rater_id}, {"score", r.score}};
  if (r.rationale) j["rationale"] = *r.rationale;
  return j;
}

inline io::json to_json(const Essay& e) {
  return {{"essay_id", e.essay_id}, {"prompt_id", e.prompt_id}, {"text", e.text}};
}

inline io::json to_json(const RaterProfile& r) {
  return {{"rater_id", r.rater_id}, {"kind", to_string(r.kind)}, {"label", r.label}};
}

inline std::vector<Rating> read_ratings(const std::filesystem::path& path) {
  std::vector<Rating> out;
  const auto file = path.string();
  io::for_each_record(path, [&](const io::json& r, std::size_t line) { out.push_back(rating_from_json(r, file, line)); });
  return out;
}

inline Corpus load_corpus(const CorpusPaths& paths, ScoreScale scale) {
  return Corpus(scale, read_essays(paths.essays), read_raters(paths.raters), read_ratings(paths.ratings));
}

inline Corpus load_corpus(const std::filesystem::path& dir, ScoreScale scale) {
  return load_corpus(CorpusPaths::in_directory(dir), scale);
}

template <typename Range>
std::string to_jsonl(const Range& items) {
  std::string out;
  for (const auto& item : items) out += io::to_line(to_json(item));
  return out;
}

inline void save_corpus(const Corpus& corpus, const CorpusPaths& paths) {
  io::write_atomic(paths.essays, to_jsonl(corpus.essays()));
  io::write_atomic(paths.raters, to_jsonl(corpus.raters()));
  io::write_atomic(paths.ratings, to_jsonl(corpus.ratings()));
}

/// One (score_a, score_b) pair per essay rated by both raters, in essay_id order.
inline std::vector<ScorePair> paired_scores(const Corpus& corpus, const std::string& rater_a,
                                            const std::string& rater_b) {
  corpus.rater(rater_a);
  corpus.rater(rater_b);
  std::vector<ScorePair> pairs;
  for (const auto& id : corpus.sorted_essay_ids()) {
    const auto* a = corpus.find_rating(id, rater_a);
    const auto* b = corpus.find_rating(id, rater_b);
    if (a && b) pairs.emplace_back(a->score, b->score);
  }
  return pairs;
}

struct ScoreSummary {
  double mean = 0.0;
  /// Sample standard deviation (n - 1 divisor); absent when n < 2.
  std::optional<double> std_dev;
  std::size_t n = 0;
};

inline ScoreSummary summarize_scores(std::span<const int> scores) {
  if (scores.empty()) throw AnalysisError("score summary of zero ratings: mean undefined");
  ScoreSummary s;
  s.n = scores.size();
  double sum = 0.0;
  for (int v : scores) sum += v;
  s.mean = sum / static_cast<double>(s.n);
  if (s.n >= 2) {
    double ss = 0.0;
    for (int v : scores) ss += (v - s.mean) * (v - s.mean);
    s.std_dev = std::sqrt(ss / static_cast<double>(s.n - 1));
  }
  return s;
}

inline ScoreSummary score_summary(const Corpus& corpus, const std::string& rater_id) {
  corpus.rater(rater_id);
  std::vector<int> scores;
  for (const auto& id : corpus.sorted_essay_ids()) {
    if (const auto* r = corpus.find_rating(id, rater_id)) scores.push_back(r->score);
  }
  if (scores.empty()) throw AnalysisError("rater '" + rater_id + "' has no ratings");
  return summarize_scores(scores);
}

}  // namespace rateval
