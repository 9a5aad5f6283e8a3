#pragma once

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "rateval/agreement.hpp"
#include "rateval/chat_http.hpp"
#include "rateval/corpus.hpp"
#include "rateval/embed.hpp"
#include "rateval/embed_http.hpp"
#include "rateval/error.hpp"
#include "rateval/io.hpp"
#include "rateval/raterclient.hpp"
#include "rateval/reduce.hpp"
#include "rateval/report.hpp"
#include "rateval/similarity.hpp"
#include "rateval/textprep.hpp"

namespace rateval::pipeline {

using io::json;

inline const std::vector<std::string>& all_stages() {
  static const std::vector<std::string> stages = {"agreement", "embed", "similarity", "pca", "heatmaps"};
  return stages;
}

struct PrepSettings {
  bool enabled = true;
  std::optional<std::string> stopwords_file;
  std::optional<std::string> domain_stopwords_file;
  /// Replaces the built-in domain list when set.
  std::optional<std::vector<std::string>> domain_stopwords;
  bool strip_non_ascii = true;
};

struct RunConfig {
  std::string corpus_dir;
  ScoreScale scale{0, 6};
  std::string reference_rater = "R1";
  /// Raters the consistency table compares against; empty means every human rater.
  std::vector<std::string> consistency_references;
  agreement::CategoryIndexing qwk_indexing = agreement::CategoryIndexing::full_scale;
  PrepSettings prep;
  embed::EmbeddingProviderConfig embedding;
  std::set<std::string> stages{all_stages().begin(), all_stages().end()};
  std::vector<int> similarity_diffs = {0, 1, 2};
  similarity::StdConvention similarity_std = similarity::StdConvention::sample;
  bool pca_include_reference = true;
  reduce::CovarianceDivisor pca_divisor = reduce::CovarianceDivisor::n;
  std::string out_dir;
  std::uint64_t seed = 7;

  bool stage_enabled(const std::string& s) const { return stages.contains(s); }

  void validate() const {
    if (corpus_dir.empty()) throw ConfigError("corpus directory is required");
    if (out_dir.empty()) throw ConfigError("output directory is required");
    if (reference_rater.empty()) throw ConfigError("reference rater is required");
    for (const auto& s : stages) {
      if (std::find(all_stages().begin(), all_stages().end(), s) == all_stages().end()) {
        throw ConfigError("unknown stage '" + s + "'");
      }
    }
    for (int d : similarity_diffs) {
      if (d < 0 || d > scale.max_score() - scale.min_score()) {
        throw ConfigError("similarity diff " + std::to_string(d) + " outside the scale span");
      }
    }
    const bool needs_embeddings = stage_enabled("embed");
    if (needs_embeddings || stage_enabled("similarity") || stage_enabled("pca") || stage_enabled("heatmaps")) {
      embedding.validate();
    }
  }

  /// Effective configuration; credentials appear only as variable names.
  json to_json() const {
    json prep_j{{"enabled", prep.enabled}, {"strip_non_ascii", prep.strip_non_ascii}};
    prep_j["stopwords_file"] = prep.stopwords_file ? json(*prep.stopwords_file) : json(nullptr);
    prep_j["domain_stopwords_file"] = prep.domain_stopwords_file ? json(*prep.domain_stopwords_file) : json(nullptr);
    prep_j["domain_stopwords"] = prep.domain_stopwords ? json(*prep.domain_stopwords) : json(nullptr);
    json emb{{"provider", embed::to_string(embedding.kind)},
             {"dim", embedding.dim},
             {"max_parallel", embedding.max_parallel},
             {"max_retries", embedding.max_retries},
             {"batch_size", embedding.batch_size},
             {"initial_backoff_ms", embedding.initial_backoff.count()}};
    emb["endpoint"] = embedding.endpoint ? json(*embedding.endpoint) : json(nullptr);
    emb["model_name"] = embedding.model_name ? json(*embedding.model_name) : json(nullptr);
    emb["api_key_env"] = embedding.api_key_env ? json(*embedding.api_key_env) : json(nullptr);
    return json{{"corpus", corpus_dir},
                {"scale", {{"min", scale.min_score()}, {"max", scale.max_score()}}},
                {"reference_rater", reference_rater},
                {"consistency_references", consistency_references},
                {"qwk_indexing", agreement::to_string(qwk_indexing)},
                {"prep", prep_j},
                {"embedding", emb},
                {"stages", std::vector<std::string>(stages.begin(), stages.end())},
                {"similarity", {{"diffs", similarity_diffs},
                                {"std", similarity_std == similarity::StdConvention::sample ? "sample" : "population"}}},
                {"pca", {{"include_reference", pca_include_reference},
                         {"divisor", reduce::to_string(pca_divisor)},
                         {"fit", "per_score_level"}}},
                {"out", out_dir},
                {"seed", seed}};
  }

  /// Overlays the keys present in `j` onto this config.
  void merge_json(const json& j) {
    try {
      if (j.contains("corpus")) corpus_dir = j.at("corpus").get<std::string>();
      if (j.contains("scale")) scale = ScoreScale(j.at("scale").at("min").get<int>(), j.at("scale").at("max").get<int>());
      if (j.contains("reference_rater")) reference_rater = j.at("reference_rater").get<std::string>();
      if (j.contains("consistency_references")) {
        consistency_references = j.at("consistency_references").get<std::vector<std::string>>();
      }
      if (j.contains("qwk_indexing")) {
        const auto v = j.at("qwk_indexing").get<std::string>();
        if (v == "full_scale") {
          qwk_indexing = agreement::CategoryIndexing::full_scale;
        } else if (v == "observed") {
          qwk_indexing = agreement::CategoryIndexing::observed;
        } else {
          throw ConfigError("qwk_indexing must be full_scale or observed");
        }
      }
      if (auto p = j.find("prep"); p != j.end()) {
        prep.enabled = p->value("enabled", prep.enabled);
        prep.strip_non_ascii = p->value("strip_non_ascii", prep.strip_non_ascii);
        if (p->contains("stopwords_file") && !p->at("stopwords_file").is_null()) {
          prep.stopwords_file = p->at("stopwords_file").get<std::string>();
        }
        if (p->contains("domain_stopwords_file") && !p->at("domain_stopwords_file").is_null()) {
          prep.domain_stopwords_file = p->at("domain_stopwords_file").get<std::string>();
        }
        if (p->contains("domain_stopwords") && !p->at("domain_stopwords").is_null()) {
          prep.domain_stopwords = p->at("domain_stopwords").get<std::vector<std::string>>();
        }
      }
      if (auto e = j.find("embedding"); e != j.end()) {
        if (e->contains("provider")) {
          auto kind = embed::parse_provider_kind(e->at("provider").get<std::string>());
          if (!kind) throw ConfigError("unknown embedding provider '" + e->at("provider").get<std::string>() + "'");
          embedding.kind = *kind;
        }
        embedding.dim = e->value("dim", embedding.dim);
        if (e->contains("endpoint") && !e->at("endpoint").is_null()) embedding.endpoint = e->at("endpoint").get<std::string>();
        if (e->contains("model_name") && !e->at("model_name").is_null()) {
          embedding.model_name = e->at("model_name").get<std::string>();
        }
        if (e->contains("api_key_env") && !e->at("api_key_env").is_null()) {
          embedding.api_key_env = e->at("api_key_env").get<std::string>();
        }
        embedding.max_parallel = e->value("max_parallel", embedding.max_parallel);
        embedding.max_retries = e->value("max_retries", embedding.max_retries);
        embedding.batch_size = e->value("batch_size", embedding.batch_size);
        embedding.initial_backoff =
            std::chrono::milliseconds(e->value("initial_backoff_ms", embedding.initial_backoff.count()));
      }
      if (j.contains("stages")) set_stages(j.at("stages").get<std::vector<std::string>>());
      if (auto s = j.find("similarity"); s != j.end()) {
        if (s->contains("diffs")) similarity_diffs = s->at("diffs").get<std::vector<int>>();
        if (s->contains("std")) {
          const auto v = s->at("std").get<std::string>();
          if (v != "sample" && v != "population") throw ConfigError("similarity.std must be sample or population");
          similarity_std = v == "sample" ? similarity::StdConvention::sample : similarity::StdConvention::population;
        }
      }
      if (auto p = j.find("pca"); p != j.end()) {
        pca_include_reference = p->value("include_reference", pca_include_reference);
        if (p->contains("divisor")) {
          const auto v = p->at("divisor").get<std::string>();
          if (v != "n" && v != "n-1") throw ConfigError("pca.divisor must be n or n-1");
          pca_divisor = v == "n" ? reduce::CovarianceDivisor::n : reduce::CovarianceDivisor::n_minus_1;
        }
      }
      if (j.contains("out")) out_dir = j.at("out").get<std::string>();
      if (j.contains("seed")) seed = j.at("seed").get<std::uint64_t>();
    } catch (const json::exception& e) {
      throw ConfigError(std::string("malformed run config: ") + e.what());
    }
  }

  void set_stages(const std::vector<std::string>& list) {
    stages.clear();
    for (const auto& s : list) {
      if (s == "all") {
        stages.insert(all_stages().begin(), all_stages().end());
      } else if (!s.empty()) {
        stages.insert(s);
      }
    }
  }

  static RunConfig from_file(const std::filesystem::path& path) {
    RunConfig c;
    try {
      c.merge_json(json::parse(io::read_file(path)));
    } catch (const json::parse_error& e) {
      throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
    }
    return c;
  }

  embed::TextPipeline text_pipeline() const {
    embed::TextPipeline p;
    p.preprocess = prep.enabled;
    if (prep.stopwords_file) p.prep.stopwords = textprep::load_word_file(*prep.stopwords_file);
    if (prep.domain_stopwords_file) p.prep.domain_stopwords = textprep::load_word_file(*prep.domain_stopwords_file);
    if (prep.domain_stopwords) {
      p.prep.domain_stopwords.clear();
      for (const auto& w : *prep.domain_stopwords) p.prep.domain_stopwords.insert(textprep::detail::ascii_lower(w));
    }
    p.prep.strip_non_ascii = prep.strip_non_ascii;
    return p;
  }
};

// ---------------------------------------------------------------------------

struct RunResult {
  ExitCode exit = ExitCode::exit_ok;
  std::filesystem::path run_dir;
  report::RunManifest manifest;
  /// "stage: message" for every failed stage.
  std::vector<std::string> errors;
};

/// Wall-clock stamp, or SOURCE_DATE_EPOCH when set for reproducible runs.
inline std::string run_timestamp() {
  if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH"); epoch && *epoch) {
    std::time_t t = static_cast<std::time_t>(std::strtoll(epoch, nullptr, 10));
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
  }
  return report::utc_timestamp();
}

/// Every rationale's embeddable text, in corpus rating order.
inline std::vector<std::string> embeddable_texts(const Corpus& corpus, const embed::TextPipeline& pipeline) {
  std::vector<std::string> out;
  for (const auto& r : corpus.ratings()) {
    if (!r.rationale) continue;
    if (auto t = pipeline.embed_text(*r.rationale)) out.push_back(std::move(*t));
  }
  return out;
}

inline report::Legend legend_for(const Corpus& corpus) {
  report::Legend legend;
  for (const auto& r : corpus.raters()) legend.emplace_back(r.rater_id, report::display_label(r));
  return legend;
}

inline json similarity_records_json(const std::vector<similarity::SimilarityRecord>& records) {
  json j = json::array();
  for (const auto& r : records) {
    j.push_back({{"essay_id", r.essay_id},
                 {"rater_a", r.rater_a},
                 {"rater_b", r.rater_b},
                 {"cosine", r.cosine},
                 {"abs_score_diff", r.abs_score_diff}});
  }
  return j;
}

inline json heatmap_json(const similarity::HeatmapMatrix& h, const std::string& llm, const std::string& human) {
  json cells = json::array();
  for (std::size_t i = 0; i < h.cells.rows(); ++i) {
    json row = json::array();
    for (std::size_t c = 0; c < h.cells.cols(); ++c) row.push_back(h.cells(i, c));
    cells.push_back(std::move(row));
  }
  return {{"llm_rater", llm},
          {"human_rater", human},
          {"rows", "llm essay"},
          {"columns", "human essay"},
          {"essay_order", h.essay_order},
          {"cells", cells},
          {"labels", h.labels}};
}

inline json projection_json(const reduce::ScoreProjection& p) {
  json points = json::array();
  for (const auto& pt : p.points) {
    points.push_back({{"rater_id", pt.rater_id}, {"essay_id", pt.essay_id}, {"x", pt.x}, {"y", pt.y}});
  }
  return {{"score_level", p.score_level},
          {"method", p.model.method == reduce::PcaMethod::dual ? "dual" : "direct"},
          {"divisor", reduce::to_string(p.model.divisor)},
          {"eigenvalues", p.model.eigenvalues},
          {"points", points}};
}

/// Runs the enabled stages in dependency order and writes the run directory.
/// A failed stage is recorded and its dependents skipped; independent stages
/// still run. The manifest is always written once the corpus has loaded.
inline RunResult run_analyze(const RunConfig& config, std::ostream* log = nullptr) {
  RunResult result;
  auto fail = [&](const std::string& stage, const Error& e) {
    result.errors.push_back(stage + ": " + e.what());
    if (result.exit == ExitCode::exit_ok) result.exit = exit_code_for(e.category());
  };

  try {
    config.validate();
  } catch (const Error& e) {
    fail("config", e);
    return result;
  }

  const auto paths = CorpusPaths::in_directory(config.corpus_dir);
  Corpus corpus;
  embed::TextPipeline pipeline;
  std::vector<std::string> references;
  try {
    corpus = load_corpus(paths, config.scale);
    pipeline = config.text_pipeline();
  } catch (const Error& e) {
    fail("ingest", e);
    return result;
  }
  try {
    corpus.rater(config.reference_rater);
    references = config.consistency_references;
    if (references.empty()) {
      for (const auto& r : corpus.raters()) {
        if (r.kind == RaterKind::human) references.push_back(r.rater_id);
      }
    }
    for (const auto& r : references) corpus.rater(r);
  } catch (const Error& e) {
    fail("config", e);
    return result;
  }

  auto& manifest = result.manifest;
  manifest.started_at = run_timestamp();
  manifest.config = config.to_json();
  for (const auto& p : {paths.essays, paths.raters, paths.ratings}) manifest.inputs.emplace_back(p.string(), io::file_digest(p));
  {
    std::string seed = manifest.config.dump();
    for (const auto& [p, d] : manifest.inputs) seed += "\n" + d;
    manifest.run_id = io::sha256_hex(seed).substr(0, 16);
  }
  manifest.notes["pca"] = json::object();
  manifest.notes["heatmaps"] = json::object();

  result.run_dir = config.out_dir;
  std::filesystem::create_directories(result.run_dir);
  report::ArtifactWriter writer(result.run_dir, manifest);
  auto say = [&](const std::string& line) {
    if (log) *log << line << "\n";
  };

  std::set<std::string> failed;
  auto run_stage = [&](const std::string& name, const std::vector<std::string>& deps, const std::function<void()>& body) {
    if (!config.stage_enabled(name)) {
      manifest.stages.push_back({name, "disabled", ""});
      return;
    }
    for (const auto& d : deps) {
      if (failed.contains(d)) {
        failed.insert(name);
        manifest.stages.push_back({name, "skipped", "depends on failed stage " + d});
        return;
      }
    }
    try {
      body();
      manifest.stages.push_back({name, "ok", ""});
      say("[" + name + "] ok");
    } catch (const Error& e) {
      failed.insert(name);
      fail(name, e);
      manifest.stages.push_back({name, "failed", e.what()});
      say("[" + name + "] failed: " + std::string(e.what()));
    }
  };

  run_stage("agreement", {}, [&] {
    auto table = report::emit_consistency_table(corpus, references, config.qwk_indexing);
    writer.write("tables/consistency.csv", table.table.to_csv(), "table");
    writer.write("tables/consistency.json", table.to_json().dump(2) + "\n", "table");
    for (const auto& u : table.undefined) manifest.undefined_metrics.push_back(u);
  });

  const auto cache_path = std::filesystem::path("cache") / "embeddings.jsonl";
  std::optional<embed::EmbeddingStore> store;
  auto load_store = [&]() -> embed::EmbeddingStore& {
    if (!store) store = embed::EmbeddingStore::load(result.run_dir / cache_path, config.embedding.dim);
    return *store;
  };

  run_stage("embed", {}, [&] {
    auto& s = load_store();
    auto provider = embed::make_provider(config.embedding);
    const auto texts = embeddable_texts(corpus, pipeline);
    auto stats = embed::embed_batch(texts, *provider, config.embedding, s);
    writer.write(cache_path.string(), s.serialize(), "cache");
    manifest.notes["embed"] = {{"requested", stats.requested},
                               {"unique", stats.unique},
                               {"cached", stats.cached},
                               {"fetched", stats.fetched}};
    say("[embed] " + std::to_string(stats.unique) + " unique texts, " + std::to_string(stats.cached) + " cached, " +
        std::to_string(stats.fetched) + " fetched");
  });

  std::vector<std::string> llm_raters;
  for (const auto& r : corpus.raters()) {
    if (r.kind == RaterKind::llm && r.rater_id != config.reference_rater) llm_raters.push_back(r.rater_id);
  }

  run_stage("similarity", {"embed"}, [&] {
    const auto& s = load_store();
    std::vector<similarity::SimilarityRecord> all;
    std::vector<report::ModelSummary> summaries;
    json skipped = json::object();
    for (const auto& id : llm_raters) {
      auto pw = similarity::pairwise_rationale_similarity(corpus, s, pipeline, id, config.reference_rater);
      if (pw.skipped.total() > 0) {
        skipped[id] = {{"missing_llm", pw.skipped.missing_a}, {"missing_reference", pw.skipped.missing_b}};
      }
      for (int diff : config.similarity_diffs) {
        summaries.push_back({id, report::display_label(corpus.rater(id)),
                             similarity::conditional_summary(pw.records, diff, config.similarity_std)});
      }
      all.insert(all.end(), pw.records.begin(), pw.records.end());
    }
    writer.write("tables/similarity_records.json", similarity_records_json(all).dump(2) + "\n", "table");
    for (const auto& t : report::emit_similarity_tables(summaries, config.similarity_diffs)) {
      writer.write("tables/" + t.table.name + ".csv", t.table.to_csv(), "table");
      writer.write("tables/" + t.table.name + ".json", t.to_json().dump(2) + "\n", "table");
    }
    manifest.notes["similarity_skipped"] = skipped;
  });

  run_stage("pca", {"embed"}, [&] {
    const auto& s = load_store();
    const auto legend = legend_for(corpus);
    for (int level = config.scale.min_score(); level <= config.scale.max_score(); ++level) {
      auto p = reduce::matched_score_projection(corpus, s, pipeline, level, config.reference_rater,
                                                config.pca_include_reference, config.pca_divisor);
      const auto key = std::to_string(level);
      if (!p) {
        manifest.notes["pca"][key] = "insufficient data";
        continue;
      }
      manifest.notes["pca"][key] = {{"points", p->points.size()}};
      writer.write("tables/pca_score_" + key + ".json", projection_json(*p).dump(2) + "\n", "table");
      writer.write("figures/pca_score_" + key + ".svg", report::render_pca_scatter(p->points, level, legend), "figure");
    }
  });

  run_stage("heatmaps", {"embed"}, [&] {
    const auto& s = load_store();
    for (const auto& id : llm_raters) {
      auto h = similarity::similarity_heatmap_matrix(corpus, s, pipeline, id, config.reference_rater);
      if (h.essay_order.empty()) {
        manifest.notes["heatmaps"][id] = "no essays with rationales from both raters";
        continue;
      }
      manifest.notes["heatmaps"][id] = {{"essays", h.essay_order.size()}};
      writer.write("tables/heatmap_" + id + ".json", heatmap_json(h, id, config.reference_rater).dump(2) + "\n",
                   "table");
      const auto title = report::display_label(corpus.rater(id)) + " vs " +
                         report::display_label(corpus.rater(config.reference_rater));
      writer.write("figures/heatmap_" + id + ".svg", report::render_heatmap(h.cells, h.labels, h.essay_order, title),
                   "figure");
    }
  });

  manifest.complete = failed.empty();
  manifest.finished_at = run_timestamp();
  try {
    writer.write_manifest();
  } catch (const std::exception& e) {
    result.errors.push_back(std::string("manifest: ") + e.what());
    if (result.exit == ExitCode::exit_ok) result.exit = ExitCode::exit_failure;
  }
  return result;
}

// ---------------------------------------------------------------------------
// Grading

struct GradeConfig {
  std::string corpus_dir;
  ScoreScale scale{0, 6};
  std::string rubric_path;
  std::vector<raterclient::ChatModelConfig> models;
  /// Where ratings are appended; defaults to the corpus ratings file.
  std::optional<std::string> ratings_path;
  std::string out_dir;
  bool resume = false;

  static GradeConfig from_json(const json& j) {
    try {
      GradeConfig g;
      g.corpus_dir = j.value("corpus", "");
      if (j.contains("scale")) g.scale = ScoreScale(j.at("scale").at("min").get<int>(), j.at("scale").at("max").get<int>());
      g.rubric_path = j.value("rubric", "");
      for (const auto& m : j.value("models", json::array())) g.models.push_back(raterclient::ChatModelConfig::from_json(m));
      if (j.contains("ratings")) g.ratings_path = j.at("ratings").get<std::string>();
      g.out_dir = j.value("out", "");
      g.resume = j.value("resume", false);
      return g;
    } catch (const json::exception& e) {
      throw ConfigError(std::string("malformed grade config: ") + e.what());
    }
  }
};

struct GradeRun {
  ExitCode exit = ExitCode::exit_ok;
  raterclient::GradeReport report;
  std::vector<std::string> errors;
};

/// Grades the corpus with every configured model. Transports (and so
/// credentials) are resolved before the first request; any failed cell makes
/// the exit code nonzero.
inline GradeRun run_grade(const GradeConfig& config, std::ostream* log = nullptr,
                          const embed::Sleeper& sleep = embed::real_sleep,
                          std::function<std::shared_ptr<raterclient::ChatTransport>(const raterclient::ChatModelConfig&)>
                              transport_factory = {}) {
  GradeRun run;
  try {
    if (config.corpus_dir.empty()) throw ConfigError("corpus directory is required");
    if (config.rubric_path.empty()) throw ConfigError("rubric path is required");
    if (config.models.empty()) throw ConfigError("at least one model is required");
    const auto paths = CorpusPaths::in_directory(config.corpus_dir);
    const auto rubric = raterclient::load_rubric(config.rubric_path);
    rubric.validate(config.scale);
    std::vector<raterclient::ModelEndpoint> endpoints;
    for (const auto& m : config.models) {
      endpoints.push_back({m, transport_factory ? transport_factory(m) : raterclient::make_transport(m, config.scale)});
    }
    const auto corpus = load_corpus(paths, config.scale);
    for (const auto& m : config.models) {
      if (!corpus.has_rater(m.rater_id)) {
        throw ConfigError("model rater '" + m.rater_id + "' is not listed in raters.jsonl");
      }
    }
    const std::filesystem::path out = config.out_dir.empty() ? std::filesystem::path(config.corpus_dir) : std::filesystem::path(config.out_dir);
    raterclient::GradePaths gp{config.ratings_path ? std::filesystem::path(*config.ratings_path) : paths.ratings,
                               out / "grade_raw.jsonl", out / "grade_failures.jsonl"};
    run.report = raterclient::grade_corpus(corpus, rubric, endpoints, gp, config.resume, sleep);
    for (const auto& m : run.report.models) {
      if (log) {
        *log << m.rater_id << ": " << m.succeeded << " graded, " << m.failed << " failed, " << m.skipped
             << " already present, " << m.requests << " requests\n";
      }
    }
    if (!run.report.failures.empty()) {
      run.exit = ExitCode::exit_provider;
      run.errors.push_back("grade: " + std::to_string(run.report.failures.size()) + " cells failed");
    }
  } catch (const Error& e) {
    run.exit = exit_code_for(e.category());
    run.errors.push_back(std::string("grade: ") + e.what());
  }
  return run;
}

}  // namespace rateval::pipeline
