// rateval: command-line front end for the rater-agreement toolkit.

#include <CLI11.hpp>

#include <iostream>
#include <sstream>

#include "rateval/rateval.hpp"

namespace {

using namespace rateval;

std::vector<std::string> split_list(const std::string& list) {
  std::vector<std::string> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

struct AnalyzeFlags {
  std::string config;
  std::string corpus;
  std::string reference;
  std::string out;
  std::string provider;
  std::size_t dim = 0;
  std::string stages;
  std::string endpoint;
};

void add_analyze_flags(CLI::App* cmd, AnalyzeFlags& f, bool with_stages) {
  cmd->add_option("--config", f.config, "JSON run configuration");
  cmd->add_option("--corpus", f.corpus, "Corpus directory (essays/raters/ratings .jsonl)");
  cmd->add_option("--reference-rater", f.reference, "Reference rater id");
  cmd->add_option("--out", f.out, "Run directory");
  cmd->add_option("--provider", f.provider, "Embedding provider: file, http or fallback");
  cmd->add_option("--dim", f.dim, "Embedding dimension");
  cmd->add_option("--endpoint", f.endpoint, "Embedding endpoint URL, or store path for the file provider");
  if (with_stages) cmd->add_option("--stages", f.stages, "Comma-separated stages or 'all'");
}

/// Config file first, then flags on top.
pipeline::RunConfig resolve(const AnalyzeFlags& f) {
  pipeline::RunConfig c = f.config.empty() ? pipeline::RunConfig{} : pipeline::RunConfig::from_file(f.config);
  if (!f.corpus.empty()) c.corpus_dir = f.corpus;
  if (!f.reference.empty()) c.reference_rater = f.reference;
  if (!f.out.empty()) c.out_dir = f.out;
  if (!f.provider.empty()) {
    auto kind = embed::parse_provider_kind(f.provider);
    if (!kind) throw ConfigError("unknown provider '" + f.provider + "'");
    c.embedding.kind = *kind;
  }
  if (f.dim) c.embedding.dim = f.dim;
  if (!f.endpoint.empty()) c.embedding.endpoint = f.endpoint;
  if (!f.stages.empty()) c.set_stages(split_list(f.stages));
  return c;
}

int report_run(const pipeline::RunResult& r) {
  for (const auto& e : r.errors) std::cerr << "error: " << e << "\n";
  if (!r.run_dir.empty()) std::cout << "run " << r.manifest.run_id << " -> " << r.run_dir.string() << "\n";
  return r.exit;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rateval: rater agreement and rationale similarity analysis"};
  app.require_subcommand(1);

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Validate a corpus and print per-rater counts");
  std::string ingest_corpus, ingest_out;
  int scale_min = 0, scale_max = 6;
  ingest->add_option("--corpus", ingest_corpus, "Corpus directory")->required();
  ingest->add_option("--out", ingest_out, "Write a normalized copy here");
  ingest->add_option("--scale-min", scale_min, "Lowest score");
  ingest->add_option("--scale-max", scale_max, "Highest score");

  // grade
  auto* grade = app.add_subcommand("grade", "Grade essays with chat models");
  std::string grade_config, grade_corpus, grade_rubric, grade_out;
  bool grade_resume = false;
  grade->add_option("--config", grade_config, "JSON grading configuration (models, rubric)")->required();
  grade->add_option("--corpus", grade_corpus, "Corpus directory");
  grade->add_option("--rubric", grade_rubric, "Rubric file");
  grade->add_option("--out", grade_out, "Directory for raw responses and failures");
  grade->add_flag("--resume", grade_resume, "Skip cells that already have a rating");

  // prep
  auto* prep = app.add_subcommand("prep", "Write preprocessed rationales");
  AnalyzeFlags prep_flags;
  add_analyze_flags(prep, prep_flags, false);

  // embed
  auto* embed_cmd = app.add_subcommand("embed", "Fill the run's embedding cache");
  AnalyzeFlags embed_flags;
  add_analyze_flags(embed_cmd, embed_flags, false);

  // analyze
  auto* analyze = app.add_subcommand("analyze", "Run the analysis stages and write tables and figures");
  AnalyzeFlags analyze_flags;
  add_analyze_flags(analyze, analyze_flags, true);

  // selftest
  auto* selftest_cmd = app.add_subcommand("selftest", "Run the built-in oracle suites");
  bool perturb = false;
  selftest_cmd->add_flag("--perturb-weights", perturb, "Fault injection: corrupt one QWK weight")
      ->group("");

  // fixture
  auto* fixture = app.add_subcommand("fixture", "Generate a deterministic synthetic corpus");
  std::string fixture_out;
  std::uint64_t fixture_seed = 7;
  std::size_t fixture_essays = 30;
  fixture->add_option("--out", fixture_out, "Output directory")->required();
  fixture->add_option("--seed", fixture_seed, "Generator seed");
  fixture->add_option("--essays", fixture_essays, "Number of essays");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : exit_config;
  }

  try {
    if (*ingest) {
      const ScoreScale scale(scale_min, scale_max);
      const auto corpus = load_corpus(ingest_corpus, scale);
      std::cout << corpus.essays().size() << " essays, " << corpus.raters().size() << " raters, "
                << corpus.ratings().size() << " ratings\n";
      for (const auto& r : corpus.raters()) {
        std::size_t n = 0, with_rationale = 0;
        for (const auto& rating : corpus.ratings()) {
          if (rating.rater_id != r.rater_id) continue;
          ++n;
          if (rating.rationale) ++with_rationale;
        }
        std::cout << "  " << r.rater_id << " (" << to_string(r.kind) << "): " << n << " ratings, " << with_rationale
                  << " with rationale\n";
      }
      if (!ingest_out.empty()) {
        std::filesystem::create_directories(ingest_out);
        save_corpus(corpus, CorpusPaths::in_directory(ingest_out));
      }
      return exit_ok;
    }

    if (*grade) {
      auto config = pipeline::GradeConfig::from_json(io::json::parse(io::read_file(grade_config)));
      if (!grade_corpus.empty()) config.corpus_dir = grade_corpus;
      if (!grade_rubric.empty()) config.rubric_path = grade_rubric;
      if (!grade_out.empty()) config.out_dir = grade_out;
      if (grade_resume) config.resume = true;
      auto run = pipeline::run_grade(config, &std::cout);
      for (const auto& e : run.errors) std::cerr << "error: " << e << "\n";
      return run.exit;
    }

    if (*prep) {
      auto config = resolve(prep_flags);
      if (config.corpus_dir.empty() || config.out_dir.empty()) throw ConfigError("prep needs --corpus and --out");
      const auto corpus = load_corpus(config.corpus_dir, config.scale);
      const auto pipe = config.text_pipeline();
      std::string out;
      for (const auto& r : corpus.ratings()) {
        if (!r.rationale) continue;
        const auto clean = textprep::preprocess(*r.rationale, pipe.prep);
        out += io::to_line({{"essay_id", r.essay_id}, {"rater_id", r.rater_id}, {"clean", clean.str()}});
      }
      io::write_atomic(std::filesystem::path(config.out_dir) / "prep" / "rationales.jsonl", out);
      return exit_ok;
    }

    if (*embed_cmd) {
      auto config = resolve(embed_flags);
      config.stages = {"embed"};
      return report_run(pipeline::run_analyze(config, &std::cout));
    }

    if (*analyze) {
      return report_run(pipeline::run_analyze(resolve(analyze_flags), &std::cout));
    }

    if (*selftest_cmd) {
      selftest::Options options;
      options.perturb_weights = perturb;
      const auto report = selftest::run(options);
      std::cout << report.text();
      return report.passed() ? exit_ok : exit_failure;
    }

    if (*fixture) {
      fixtures::FixtureSpec spec;
      spec.seed = fixture_seed;
      spec.n_essays = fixture_essays;
      const auto f = fixtures::write_fixture(spec, fixture_out);
      std::cout << f.corpus.essays().size() << " essays, " << f.corpus.raters().size() << " raters, "
                << f.corpus.ratings().size() << " ratings -> " << fixture_out << "\n";
      return exit_ok;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.category());
  } catch (const io::json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_config;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_failure;
  }
  return exit_failure;
}
