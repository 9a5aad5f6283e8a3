#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "rateval/corpus.hpp"
#include "rateval/embed.hpp"
#include "rateval/error.hpp"
#include "rateval/io.hpp"

namespace rateval::raterclient {

using io::json;

// ---------------------------------------------------------------------------
// Rubric

struct Descriptors {
  std::string task_completion;
  std::string delivery;
  std::string language_use;
};

struct RubricLevel {
  int score = 0;
  std::string label;
  Descriptors descriptors;
  std::string sample;
  /// Where the exemplar came from, e.g. "guidelines" or "rater-scored".
  std::string sample_provenance;
};

struct Rubric {
  std::string task_prompt;
  std::vector<RubricLevel> levels;

  /// Level scores must be exactly the scale's points; levels >= 1 need all
  /// three descriptors.
  void validate(const ScoreScale& scale) const {
    std::vector<int> scores;
    for (const auto& l : levels) scores.push_back(l.score);
    std::vector<int> expected;
    for (int s = scale.min_score(); s <= scale.max_score(); ++s) expected.push_back(s);
    auto sorted = scores;
    std::sort(sorted.begin(), sorted.end());
    if (sorted != expected) throw ConfigError("rubric levels do not cover the score scale exactly");
    for (const auto& l : levels) {
      if (l.score >= 1 && (l.descriptors.task_completion.empty() || l.descriptors.delivery.empty() ||
                           l.descriptors.language_use.empty())) {
        throw ConfigError("rubric level " + std::to_string(l.score) + " is missing a descriptor");
      }
    }
    if (task_prompt.empty()) throw ConfigError("rubric task_prompt is empty");
  }
};

inline Rubric rubric_from_json(const json& j) {
  try {
    Rubric r;
    r.task_prompt = j.at("task_prompt").get<std::string>();
    for (const auto& l : j.at("levels")) {
      RubricLevel level;
      level.score = l.at("score").get<int>();
      level.label = l.value("label", "");
      if (auto d = l.find("descriptors"); d != l.end()) {
        level.descriptors.task_completion = d->value("task_completion", "");
        level.descriptors.delivery = d->value("delivery", "");
        level.descriptors.language_use = d->value("language_use", "");
      }
      level.sample = l.value("sample", "");
      level.sample_provenance = l.value("sample_provenance", "");
      r.levels.push_back(std::move(level));
    }
    std::sort(r.levels.begin(), r.levels.end(), [](const auto& a, const auto& b) { return a.score < b.score; });
    return r;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed rubric: ") + e.what());
  }
}

inline Rubric load_rubric(const std::filesystem::path& path) {
  try {
    return rubric_from_json(json::parse(io::read_file(path)));
  } catch (const json::parse_error& e) {
    throw ConfigError("rubric " + path.string() + " is not valid JSON: " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Prompt assembly

struct ChatMessage {
  std::string role;
  std::string content;

  friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

struct ChatRequest {
  std::string model;
  std::vector<ChatMessage> messages;
  double temperature = 0.0;

  json to_json() const {
    json j{{"model", model}, {"messages", json::array()}, {"temperature", temperature}};
    for (const auto& m : messages) j["messages"].push_back({{"role", m.role}, {"content", m.content}});
    return j;
  }
};

struct ChatResponse {
  std::string content;
  std::string finish_reason;
  std::size_t prompt_tokens = 0;
  std::size_t completion_tokens = 0;
};

/// Backtick fence one longer than the longest backtick run in `text` (min 3),
/// so fenced content can never terminate its own fence.
inline std::string fence_for(std::string_view text) {
  std::size_t longest = 0, run = 0;
  for (char c : text) {
    run = c == '`' ? run + 1 : 0;
    longest = std::max(longest, run);
  }
  return std::string(std::max<std::size_t>(3, longest + 1), '`');
}

inline std::string fenced(std::string_view text) {
  auto f = fence_for(text);
  return f + "\n" + std::string(text) + "\n" + f;
}

/// Inverse of fenced() for a block that starts at the beginning of `block`.
inline std::optional<std::string> unfence(std::string_view block) {
  auto nl = block.find('\n');
  if (nl == std::string_view::npos) return std::nullopt;
  auto f = block.substr(0, nl);
  if (f.size() < 3 || f.find_first_not_of('`') != std::string_view::npos) return std::nullopt;
  const std::string closing = "\n" + std::string(f);
  auto end = block.find(closing, nl + 1);
  // The closing fence is the first line consisting of exactly the fence.
  while (end != std::string_view::npos) {
    const auto after = end + closing.size();
    if (after == block.size() || block[after] == '\n') break;
    end = block.find(closing, end + 1);
  }
  if (end == std::string_view::npos || end < nl) return std::nullopt;
  return std::string(block.substr(nl + 1, end - nl - 1));
}

inline constexpr const char* kEssayHeader = "Essay to grade:\n";

inline std::string format_instruction(const ScoreScale& scale) {
  return "Reply with the first line exactly `Score: <integer " + std::to_string(scale.min_score()) + "-" +
         std::to_string(scale.max_score()) +
         ">`, then your rationale for the score on the following lines. Do not put anything before the score line.";
}

/// System message: grading instructions, task prompt, every level's
/// descriptors and fenced sample (ascending score), and the output format.
/// User message: the essay, fenced.
inline std::vector<ChatMessage> assemble_prompt(const Rubric& rubric, const Essay& essay, const ScoreScale& scale = {}) {
  std::string sys;
  sys += "You are a certified rater scoring student essays. Grade the essay in the next message holistically "
         "using the task prompt and scoring guidelines below. Each guideline level includes a scored sample "
         "response; use the samples to calibrate your scores.\n\n";
  sys += "=== TASK PROMPT ===\n";
  sys += fenced(rubric.task_prompt) + "\n\n";
  sys += "=== SCORING GUIDELINES ===\n";
  sys += "Scores range from " + std::to_string(scale.min_score()) + " to " + std::to_string(scale.max_score()) +
         " and are judged on three criteria: Task Completion, Delivery, Language Use.\n";
  for (const auto& level : rubric.levels) {
    sys += "\n--- Score " + std::to_string(level.score) + (level.label.empty() ? "" : ": " + level.label) + " ---\n";
    if (!level.descriptors.task_completion.empty()) {
      sys += "Task Completion: " + level.descriptors.task_completion + "\n";
    }
    if (!level.descriptors.delivery.empty()) sys += "Delivery: " + level.descriptors.delivery + "\n";
    if (!level.descriptors.language_use.empty()) sys += "Language Use: " + level.descriptors.language_use + "\n";
    if (!level.sample.empty()) sys += "Sample response scored " + std::to_string(level.score) + ":\n" + fenced(level.sample) + "\n";
  }
  sys += "\n=== OUTPUT FORMAT ===\n" + format_instruction(scale) + "\n";

  return {{"system", sys}, {"user", kEssayHeader + fenced(essay.text)}};
}

inline std::string format_reminder(const ScoreScale& scale) {
  return "Your previous reply did not follow the required format. " + format_instruction(scale);
}

// ---------------------------------------------------------------------------
// Response parsing

enum class FailureKind { missing_score_line, score_out_of_range, empty_rationale, transport, provider };

inline const char* to_string(FailureKind kind) {
  switch (kind) {
    case FailureKind::missing_score_line:
      return "missing_score_line";
    case FailureKind::score_out_of_range:
      return "score_out_of_range";
    case FailureKind::empty_rationale:
      return "empty_rationale";
    case FailureKind::transport:
      return "transport";
    case FailureKind::provider:
      return "provider";
  }
  return "?";
}

struct ParsedGrade {
  int score = 0;
  std::string rationale;
  std::string raw;
};

struct ParseResult {
  std::optional<ParsedGrade> grade;
  FailureKind failure = FailureKind::missing_score_line;
  std::string message;

  bool ok() const noexcept { return grade.has_value(); }
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace detail

/// Finds the first line of the form `Score: <int>` (case-insensitive, optional
/// markdown emphasis); the rationale is everything after that line, trimmed.
inline ParseResult parse_grade(const std::string& raw, const ScoreScale& scale) {
  static const std::regex kScoreLine(R"(^\s*[*_]*\s*score\s*[*_]*\s*:\s*[*_]*\s*(-?\d+)\s*[*_]*\s*$)",
                                     std::regex::icase);
  ParseResult out;
  std::size_t pos = 0;
  while (pos <= raw.size()) {
    auto nl = raw.find('\n', pos);
    const auto end = nl == std::string::npos ? raw.size() : nl;
    std::string line = raw.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::smatch m;
    if (std::regex_match(line, m, kScoreLine)) {
      int score = 0;
      try {
        score = std::stoi(m[1].str());
      } catch (const std::exception&) {
        out.failure = FailureKind::score_out_of_range;
        out.message = "score does not fit an integer";
        return out;
      }
      if (!scale.contains(score)) {
        out.failure = FailureKind::score_out_of_range;
        out.message = "score " + std::to_string(score) + " outside [" + std::to_string(scale.min_score()) + ", " +
                      std::to_string(scale.max_score()) + "]";
        return out;
      }
      auto rationale = detail::trim(nl == std::string::npos ? std::string_view{} : std::string_view(raw).substr(nl + 1));
      if (rationale.empty()) {
        out.failure = FailureKind::empty_rationale;
        out.message = "no rationale after the score line";
        return out;
      }
      out.grade = ParsedGrade{score, std::move(rationale), raw};
      return out;
    }
    if (nl == std::string::npos) break;
    pos = nl + 1;
  }
  out.failure = FailureKind::missing_score_line;
  out.message = "no line of the form 'Score: <integer>'";
  return out;
}

// ---------------------------------------------------------------------------
// Transport

class ChatTransport {
 public:
  virtual ~ChatTransport() = default;
  /// Throws TransportError for retryable failures, ProviderError otherwise.
  virtual ChatResponse complete(const ChatRequest& request) = 0;
};

/// Offline endpoint: answers every request with a well-formed grade whose
/// score is a deterministic function of the model name and the essay.
class StubChatTransport final : public ChatTransport {
 public:
  explicit StubChatTransport(ScoreScale scale = {}) : scale_(scale) {}

  ChatResponse complete(const ChatRequest& request) override {
    ++calls_;
    const auto& essay = request.messages.back().content;
    const auto h = embed::detail::seeded_hash(request.model + "\n" + essay, 0x5354554255ULL);
    const int score = scale_.min_score() + static_cast<int>(h % static_cast<std::uint64_t>(scale_.k()));
    return {"Score: " + std::to_string(score) + "\nThe response addresses the prompt at level " +
                std::to_string(score) + "; organization and language use are consistent with that level.",
            "stop", 0, 0};
  }

  std::size_t calls() const noexcept { return calls_.load(); }

 private:
  ScoreScale scale_;
  std::atomic<std::size_t> calls_{0};
};

/// Token bucket: `rate` requests per second with a burst of max(1, rate).
/// A rate of 0 disables limiting.
class TokenBucket {
 public:
  explicit TokenBucket(double rate) : rate_(rate), capacity_(std::max(1.0, rate)), tokens_(capacity_) {}

  void acquire() {
    if (rate_ <= 0.0) return;
    std::unique_lock lock(mutex_);
    for (;;) {
      const auto now = std::chrono::steady_clock::now();
      tokens_ = std::min(capacity_, tokens_ + std::chrono::duration<double>(now - last_).count() * rate_);
      last_ = now;
      if (tokens_ >= 1.0) {
        tokens_ -= 1.0;
        return;
      }
      const auto wait = std::chrono::duration<double>((1.0 - tokens_) / rate_);
      lock.unlock();
      std::this_thread::sleep_for(wait);
      lock.lock();
    }
  }

 private:
  double rate_;
  double capacity_;
  double tokens_;
  std::chrono::steady_clock::time_point last_ = std::chrono::steady_clock::now();
  std::mutex mutex_;
};

struct ChatModelConfig {
  std::string rater_id;
  std::string label;
  std::string model_name;
  /// "stub" selects the offline StubChatTransport.
  std::string endpoint = "stub";
  std::optional<std::string> api_key_env;
  double temperature = 0.0;
  std::size_t max_retries = 3;
  std::size_t max_parallel = 4;
  double requests_per_second = 1.0;
  std::chrono::milliseconds initial_backoff{500};

  bool is_stub() const noexcept { return endpoint == "stub"; }

  json to_json() const {
    json j{{"rater_id", rater_id},
           {"label", label},
           {"model_name", model_name},
           {"endpoint", endpoint},
           {"temperature", temperature},
           {"max_retries", max_retries},
           {"max_parallel", max_parallel},
           {"requests_per_second", requests_per_second},
           {"initial_backoff_ms", initial_backoff.count()}};
    if (api_key_env) j["api_key_env"] = *api_key_env;
    return j;
  }

  static ChatModelConfig from_json(const json& j) {
    try {
      ChatModelConfig c;
      c.rater_id = j.at("rater_id").get<std::string>();
      c.label = j.value("label", c.rater_id);
      c.model_name = j.value("model_name", c.rater_id);
      c.endpoint = j.value("endpoint", std::string("stub"));
      if (j.contains("api_key_env")) c.api_key_env = j.at("api_key_env").get<std::string>();
      c.temperature = j.value("temperature", 0.0);
      c.max_retries = j.value("max_retries", std::size_t{3});
      c.max_parallel = j.value("max_parallel", std::size_t{4});
      c.requests_per_second = j.value("requests_per_second", 1.0);
      c.initial_backoff = std::chrono::milliseconds(j.value("initial_backoff_ms", 500));
      if (c.max_parallel == 0) throw ConfigError("model " + c.rater_id + ": max_parallel must be positive");
      return c;
    } catch (const json::exception& e) {
      throw ConfigError(std::string("malformed model config: ") + e.what());
    }
  }
};

/// Raw responses are handed to this sink (essay_id, rater_id, attempt, text)
/// before they are parsed.
using RawSink = std::function<void(const std::string&, const std::string&, std::size_t, const std::string&)>;

struct GradeOutcome {
  std::optional<ParsedGrade> grade;
  FailureKind failure = FailureKind::missing_score_line;
  std::string message;
  std::size_t requests = 0;
  std::vector<std::string> raw_responses;

  bool ok() const noexcept { return grade.has_value(); }
};

/// Sends the assembled prompt and parses the reply. A malformed reply is
/// retried (up to max_retries) with the bad answer and a format reminder
/// appended; transport errors are retried with exponential backoff.
inline GradeOutcome grade_essay(ChatTransport& transport, const ChatModelConfig& model, const Rubric& rubric,
                                const Essay& essay, const ScoreScale& scale, const RawSink& raw_sink = {},
                                TokenBucket* limiter = nullptr, const embed::Sleeper& sleep = embed::real_sleep) {
  GradeOutcome out;
  ChatRequest request{model.model_name, assemble_prompt(rubric, essay, scale), model.temperature};
  std::size_t transport_failures = 0;
  std::size_t format_failures = 0;
  for (;;) {
    if (limiter) limiter->acquire();
    ++out.requests;
    ChatResponse response;
    try {
      response = transport.complete(request);
    } catch (const TransportError& e) {
      out.failure = FailureKind::transport;
      out.message = e.what();
      if (transport_failures++ >= model.max_retries) return out;
      sleep(model.initial_backoff * (1LL << (transport_failures - 1)));
      continue;
    } catch (const ProviderError& e) {
      out.failure = FailureKind::provider;
      out.message = e.what();
      return out;
    }
    out.raw_responses.push_back(response.content);
    if (raw_sink) raw_sink(essay.essay_id, model.rater_id, out.requests, response.content);
    auto parsed = parse_grade(response.content, scale);
    if (parsed.ok()) {
      out.grade = std::move(parsed.grade);
      return out;
    }
    out.failure = parsed.failure;
    out.message = parsed.message;
    if (format_failures++ >= model.max_retries) return out;
    request.messages.push_back({"assistant", response.content});
    request.messages.push_back({"user", format_reminder(scale)});
  }
}

// ---------------------------------------------------------------------------
// Corpus grading

struct ModelEndpoint {
  ChatModelConfig config;
  std::shared_ptr<ChatTransport> transport;
};

struct GradePaths {
  std::filesystem::path ratings;
  /// Every raw response, one JSON record per line.
  std::filesystem::path raw_log;
  /// One record per failed cell.
  std::filesystem::path failures;
};

struct CellFailure {
  std::string essay_id;
  std::string rater_id;
  FailureKind kind = FailureKind::missing_score_line;
  std::string message;
};

struct ModelProgress {
  std::string rater_id;
  std::size_t skipped = 0;
  std::size_t succeeded = 0;
  std::size_t failed = 0;
  std::size_t requests = 0;
};

struct GradeReport {
  std::vector<ModelProgress> models;
  std::vector<CellFailure> failures;

  std::size_t succeeded() const {
    std::size_t n = 0;
    for (const auto& m : models) n += m.succeeded;
    return n;
  }
  std::size_t requests() const {
    std::size_t n = 0;
    for (const auto& m : models) n += m.requests;
    return n;
  }
};

/// Grades every (essay, model) cell not already present in the ratings file,
/// appending one Rating per success. Cells that fail are recorded and the run
/// continues. With resume off, existing ratings for these models are an error.
inline GradeReport grade_corpus(const Corpus& corpus, const Rubric& rubric, const std::vector<ModelEndpoint>& models,
                                const GradePaths& paths, bool resume, const embed::Sleeper& sleep = embed::real_sleep) {
  rubric.validate(corpus.scale());
  std::set<std::pair<std::string, std::string>> done;
  std::set<std::string> model_ids;
  for (const auto& m : models) {
    if (!m.transport) throw ConfigError("model " + m.config.rater_id + " has no transport");
    if (!model_ids.insert(m.config.rater_id).second) throw ConfigError("duplicate model " + m.config.rater_id);
  }
  for (const auto& r : corpus.ratings()) done.emplace(r.essay_id, r.rater_id);
  if (std::filesystem::exists(paths.ratings)) {
    for (const auto& r : read_ratings(paths.ratings)) done.emplace(r.essay_id, r.rater_id);
  }
  if (!resume) {
    for (const auto& [essay, rater] : done) {
      if (model_ids.contains(rater)) {
        throw ConfigError("ratings for model '" + rater + "' already exist; rerun with resume to fill missing cells");
      }
    }
  }

  for (const auto& p : {paths.ratings, paths.raw_log, paths.failures}) {
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  }
  std::mutex file_mutex;
  std::ofstream ratings_out(paths.ratings, std::ios::app | std::ios::binary);
  std::ofstream raw_out(paths.raw_log, std::ios::app | std::ios::binary);
  std::ofstream failures_out(paths.failures, std::ios::app | std::ios::binary);
  if (!ratings_out || !raw_out || !failures_out) throw ConfigError("cannot open grading output files");

  RawSink sink = [&](const std::string& essay_id, const std::string& rater_id, std::size_t attempt,
                     const std::string& raw) {
    std::lock_guard lock(file_mutex);
    raw_out << io::to_line({{"essay_id", essay_id}, {"rater_id", rater_id}, {"attempt", attempt}, {"raw", raw}});
    raw_out.flush();
  };

  GradeReport report;
  report.models.resize(models.size());
  std::mutex report_mutex;
  const auto essay_ids = corpus.sorted_essay_ids();

  auto run_model = [&](std::size_t mi) {
    const auto& model = models[mi];
    auto& progress = report.models[mi];
    progress.rater_id = model.config.rater_id;
    std::vector<const Essay*> todo;
    for (const auto& id : essay_ids) {
      if (done.contains({id, model.config.rater_id})) {
        ++progress.skipped;
      } else {
        todo.push_back(&corpus.essay(id));
      }
    }
    TokenBucket limiter(model.config.requests_per_second);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= todo.size()) return;
        const Essay& essay = *todo[i];
        auto outcome = grade_essay(*model.transport, model.config, rubric, essay, corpus.scale(), sink, &limiter, sleep);
        std::lock_guard lock(file_mutex);
        std::lock_guard rlock(report_mutex);
        progress.requests += outcome.requests;
        if (outcome.ok()) {
          Rating rating{essay.essay_id, model.config.rater_id, outcome.grade->score, outcome.grade->rationale};
          ratings_out << io::to_line(to_json(rating));
          ratings_out.flush();
          ++progress.succeeded;
        } else {
          CellFailure f{essay.essay_id, model.config.rater_id, outcome.failure, outcome.message};
          failures_out << io::to_line({{"essay_id", f.essay_id},
                                       {"rater_id", f.rater_id},
                                       {"kind", to_string(f.kind)},
                                       {"message", f.message}});
          failures_out.flush();
          report.failures.push_back(std::move(f));
          ++progress.failed;
        }
      }
    };
    const std::size_t workers = std::min(model.config.max_parallel, todo.size());
    if (workers <= 1) {
      worker();
    } else {
      std::vector<std::jthread> pool;
      for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    }
  };

  {
    std::vector<std::jthread> model_threads;
    for (std::size_t mi = 0; mi < models.size(); ++mi) model_threads.emplace_back(run_model, mi);
  }
  std::sort(report.failures.begin(), report.failures.end(), [](const auto& a, const auto& b) {
    return std::tie(a.rater_id, a.essay_id) < std::tie(b.rater_id, b.essay_id);
  });
  return report;
}

}  // namespace rateval::raterclient
