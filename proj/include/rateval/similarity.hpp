#pragma once

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <optional>
#include <string>
#include <vector>

#include "rateval/corpus.hpp"
#include "rateval/embed.hpp"
#include "rateval/error.hpp"
#include "rateval/matrix.hpp"

namespace rateval::similarity {

using embed::EmbeddingStore;
using embed::EmbeddingVector;
using embed::TextPipeline;

/// (u . v) / (|u| |v|), clamped into [-1, 1].
inline double cosine(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) {
    throw AnalysisError("cosine: dimension mismatch (" + std::to_string(u.size()) + " vs " +
                        std::to_string(v.size()) + ")");
  }
  double uv = 0.0, uu = 0.0, vv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    uv += u[i] * v[i];
    uu += u[i] * u[i];
    vv += v[i] * v[i];
  }
  if (uu == 0.0 || vv == 0.0) throw AnalysisError("cosine: zero-norm vector");
  return std::clamp(uv / (std::sqrt(uu) * std::sqrt(vv)), -1.0, 1.0);
}

inline double cosine(const EmbeddingVector& u, const EmbeddingVector& v) { return cosine(u.values(), v.values()); }

struct SimilarityRecord {
  std::string essay_id;
  std::string rater_a;
  std::string rater_b;
  double cosine = 0.0;
  int abs_score_diff = 0;
};

/// Essays skipped because one side lacked an embeddable rationale.
struct SkipReport {
  std::vector<std::string> missing_a;
  std::vector<std::string> missing_b;

  std::size_t total() const noexcept {
    // An essay missing both rationales appears in both lists once.
    std::vector<std::string> all = missing_a;
    all.insert(all.end(), missing_b.begin(), missing_b.end());
    std::sort(all.begin(), all.end());
    return static_cast<std::size_t>(std::unique(all.begin(), all.end()) - all.begin());
  }
};

struct PairwiseSimilarity {
  std::vector<SimilarityRecord> records;
  SkipReport skipped;
};

namespace detail {

inline bool has_rationale(const Rating* r, const TextPipeline& pipeline) {
  return r && r->rationale && pipeline.embed_text(*r->rationale).has_value();
}

inline const EmbeddingVector& require_embedding(const EmbeddingStore& store, const TextPipeline& pipeline,
                                                const Rating& r) {
  const auto* v = embed::lookup(store, pipeline, *r.rationale);
  if (!v) {
    throw AnalysisError("embed stage: missing embedding for rationale of essay '" + r.essay_id + "', rater '" +
                        r.rater_id + "'");
  }
  return *v;
}

}  // namespace detail

/// One record per essay (in essay_id order) where both raters gave a score and
/// an embeddable rationale. Other essays rated by both land in the skip report.
inline PairwiseSimilarity pairwise_rationale_similarity(const Corpus& corpus, const EmbeddingStore& store,
                                                        const TextPipeline& pipeline, const std::string& rater_a,
                                                        const std::string& rater_b) {
  corpus.rater(rater_a);
  corpus.rater(rater_b);
  PairwiseSimilarity out;
  for (const auto& id : corpus.sorted_essay_ids()) {
    const auto* a = corpus.find_rating(id, rater_a);
    const auto* b = corpus.find_rating(id, rater_b);
    if (!a || !b) continue;
    const bool ok_a = detail::has_rationale(a, pipeline);
    const bool ok_b = detail::has_rationale(b, pipeline);
    if (!ok_a) out.skipped.missing_a.push_back(id);
    if (!ok_b) out.skipped.missing_b.push_back(id);
    if (!ok_a || !ok_b) continue;
    const auto& ua = detail::require_embedding(store, pipeline, *a);
    const auto& ub = detail::require_embedding(store, pipeline, *b);
    out.records.push_back({id, rater_a, rater_b, cosine(ua, ub), std::abs(a->score - b->score)});
  }
  return out;
}

enum class StdConvention { sample, population };

struct SimilaritySummary {
  int abs_score_diff = 0;
  std::size_t count = 0;
  double max = 0.0;
  double min = 0.0;
  double mean = 0.0;
  /// Sample (n - 1) deviation by default; 0 for a single record; absent when empty.
  std::optional<double> std_dev;

  bool empty() const noexcept { return count == 0; }
};

inline SimilaritySummary conditional_summary(std::span<const SimilarityRecord> records, int diff,
                                             StdConvention convention = StdConvention::sample) {
  if (diff < 0) throw AnalysisError("score difference must be non-negative");
  SimilaritySummary s;
  s.abs_score_diff = diff;
  std::vector<double> values;
  for (const auto& r : records) {
    if (r.abs_score_diff == diff) values.push_back(r.cosine);
  }
  s.count = values.size();
  if (values.empty()) return s;
  s.max = *std::max_element(values.begin(), values.end());
  s.min = *std::min_element(values.begin(), values.end());
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  if (values.size() == 1) {
    s.std_dev = 0.0;
  } else {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    const double divisor =
        static_cast<double>(convention == StdConvention::sample ? values.size() - 1 : values.size());
    s.std_dev = std::sqrt(ss / divisor);
  }
  return s;
}

/// Cross-essay similarity grid for one LLM rater against one human rater.
/// cells(i, j) compares the LLM rationale for essay i with the human rationale
/// for essay j; labels(i, j) = |llm score_i - human score_j|. The diagonal is
/// the matched-essay comparison.
struct HeatmapMatrix {
  std::vector<std::string> essay_order;
  Matrix cells;
  std::vector<std::vector<int>> labels;
};

/// Uses every essay (sorted by id) where both raters supplied a score and an
/// embeddable rationale, i.e. the essays of pairwise_rationale_similarity().
inline HeatmapMatrix similarity_heatmap_matrix(const Corpus& corpus, const EmbeddingStore& store,
                                               const TextPipeline& pipeline, const std::string& llm_rater,
                                               const std::string& human_rater) {
  corpus.rater(llm_rater);
  corpus.rater(human_rater);
  std::vector<const Rating*> llm, human;
  HeatmapMatrix h;
  for (const auto& id : corpus.sorted_essay_ids()) {
    const auto* a = corpus.find_rating(id, llm_rater);
    const auto* b = corpus.find_rating(id, human_rater);
    if (!detail::has_rationale(a, pipeline) || !detail::has_rationale(b, pipeline)) continue;
    h.essay_order.push_back(id);
    llm.push_back(a);
    human.push_back(b);
  }
  const std::size_t n = h.essay_order.size();
  std::vector<const EmbeddingVector*> ua(n), ub(n);
  for (std::size_t i = 0; i < n; ++i) {
    ua[i] = &detail::require_embedding(store, pipeline, *llm[i]);
    ub[i] = &detail::require_embedding(store, pipeline, *human[i]);
  }
  h.cells = Matrix(n, n);
  h.labels.assign(n, std::vector<int>(n, 0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      h.cells(i, j) = cosine(*ua[i], *ub[j]);
      h.labels[i][j] = std::abs(llm[i]->score - human[j]->score);
    }
  }
  return h;
}

}  // namespace rateval::similarity
