#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "rateval/agreement.hpp"
#include "rateval/fixtures.hpp"
#include "rateval/reduce.hpp"
#include "rateval/textprep.hpp"

namespace rateval::selftest {

struct Options {
  /// Fault injection: perturb one off-diagonal QWK weight before comparing.
  bool perturb_weights = false;
  std::uint64_t seed = 20240601;
};

struct SuiteResult {
  std::string name;
  std::size_t checks = 0;
  /// Names of violated invariants, first occurrence only.
  std::vector<std::string> failures;

  bool passed() const noexcept { return failures.empty(); }

  void check(bool ok, const std::string& invariant) {
    ++checks;
    if (!ok && std::find(failures.begin(), failures.end(), invariant) == failures.end()) failures.push_back(invariant);
  }
};

struct Report {
  std::vector<SuiteResult> suites;

  bool passed() const {
    return std::all_of(suites.begin(), suites.end(), [](const auto& s) { return s.passed(); });
  }

  std::string text() const {
    std::string out;
    for (const auto& s : suites) {
      out += (s.passed() ? "PASS " : "FAIL ") + s.name + " (" + std::to_string(s.checks) + " checks)\n";
      for (const auto& f : s.failures) out += "  violated: " + f + "\n";
    }
    out += passed() ? "selftest: all suites passed\n" : "selftest: FAILED\n";
    return out;
  }
};

namespace detail {

inline std::vector<ScorePair> random_pairs(fixtures::Rng& rng, std::size_t n, int k) {
  std::vector<ScorePair> pairs;
  for (std::size_t i = 0; i < n; ++i) {
    pairs.emplace_back(static_cast<int>(rng.below(static_cast<std::size_t>(k))),
                       static_cast<int>(rng.below(static_cast<std::size_t>(k))));
  }
  return pairs;
}

/// Triple loop straight from the definition: counts, marginals, weights.
inline double brute_qwk(const std::vector<ScorePair>& pairs, int k) {
  const double n = static_cast<double>(pairs.size());
  double num = 0.0, den = 0.0;
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < k; ++j) {
      double o = 0.0, a = 0.0, b = 0.0;
      for (const auto& [x, y] : pairs) {
        if (x == i && y == j) o += 1.0;
        if (x == i) a += 1.0;
        if (y == j) b += 1.0;
      }
      const double w = static_cast<double>((i - j) * (i - j)) / static_cast<double>((k - 1) * (k - 1));
      num += w * o;
      den += w * a * b / n;
    }
  }
  return 1.0 - num / den;
}

}  // namespace detail

inline SuiteResult agreement_suite(const Options& options) {
  SuiteResult s{"agreement-brute-force", 0, {}};
  fixtures::Rng rng(options.seed);
  const ScoreScale scale{0, 6};
  for (int trial = 0; trial < 50; ++trial) {
    const auto n = 2 + rng.below(40);
    auto pairs = detail::random_pairs(rng, n, scale.k());
    auto table = agreement::build_table(pairs, scale);
    if (options.perturb_weights) table.weights(0, 1) += 0.25;
    double got;
    try {
      got = agreement::qwk(table);
    } catch (const UndefinedMetric&) {
      continue;
    }
    s.check(std::abs(got - detail::brute_qwk(pairs, scale.k())) <= 1e-12, "qwk equals brute-force definition");
    s.check(std::abs(agreement::nmi(pairs) - agreement::nmi(std::vector<ScorePair>(
                                                  [&] {
                                                    std::vector<ScorePair> swapped;
                                                    for (auto [a, b] : pairs) swapped.emplace_back(b, a);
                                                    return swapped;
                                                  }()))) <= 1e-12,
            "nmi symmetric");
  }
  const std::vector<ScorePair> shifted = {{1, 2}, {2, 3}, {3, 4}, {4, 5}};
  s.check(std::abs(agreement::qwk(shifted, scale) - 5.0 / 7.0) <= 1e-12, "qwk shifted-by-one hand case");
  const std::vector<ScorePair> same = {{0, 0}, {3, 3}, {6, 6}};
  s.check(agreement::qwk(same, scale) == 1.0, "qwk identity is 1");
  return s;
}

inline SuiteResult eigen_suite(const Options& options) {
  SuiteResult s{"eigen-residuals", 0, {}};
  fixtures::Rng rng(options.seed ^ 0xe1);
  for (int trial = 0; trial < 30; ++trial) {
    const auto d = 1 + rng.below(8);
    Matrix c(d, d);
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = 0; j <= i; ++j) {
        const double v = rng.uniform() * 2.0 - 1.0;
        c(i, j) = v;
        c(j, i) = v;
      }
    }
    const auto e = reduce::symmetric_eigen(c);
    const double norm = std::max(1.0, c.frobenius_norm());
    double trace = 0.0, sum = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      trace += c(i, i);
      sum += e.values[i];
    }
    s.check(std::abs(trace - sum) <= 1e-8 * norm, "eigenvalues sum to trace");
    for (std::size_t k = 0; k < d; ++k) {
      double residual = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        double cv = 0.0;
        for (std::size_t j = 0; j < d; ++j) cv += c(i, j) * e.vectors(k, j);
        residual += (cv - e.values[k] * e.vectors(k, i)) * (cv - e.values[k] * e.vectors(k, i));
      }
      s.check(std::sqrt(residual) <= 1e-8 * norm, "residual |Cv - lambda v| small");
      for (std::size_t m = 0; m < d; ++m) {
        const double dot = rateval::dot(e.vectors.row(k), e.vectors.row(m));
        s.check(std::abs(dot - (k == m ? 1.0 : 0.0)) <= 1e-8, "eigenvectors orthonormal");
      }
      if (k + 1 < d) s.check(e.values[k] >= e.values[k + 1], "eigenvalues descending");
    }
  }
  Matrix closed(2, 2);
  closed(0, 0) = 5;
  closed(0, 1) = closed(1, 0) = 1;
  closed(1, 1) = 1;
  const auto e = reduce::symmetric_eigen(closed);
  s.check(std::abs(e.values[0] - (3 + std::sqrt(5.0))) <= 1e-10 && std::abs(e.values[1] - (3 - std::sqrt(5.0))) <= 1e-10,
          "[[5,1],[1,1]] eigenvalues 3 +- sqrt 5");
  return s;
}

inline SuiteResult preprocessing_suite() {
  SuiteResult s{"preprocessing-goldens", 0, {}};
  static const std::vector<std::pair<const char*, const char*>> goldens = {
      {"The student's essay is GOOD!", "students essay good"},
      {"Overall, the response addresses the email.", "response addresses"},
      {"我住的地方 climate change 很明显", "climate change"},
      {"Score: 4 -- well organized", "score 4 well organized"},
      {"   ", ""},
      {"For example, it lacks detail.", "lacks detail"},
      {"Tab\tseparated\nlines", "tab separated lines"},
  };
  const auto config = textprep::PrepConfig::defaults();
  for (const auto& [in, want] : goldens) {
    const auto once = textprep::preprocess(in, config);
    s.check(once.str() == want, std::string("golden: \"") + in + "\"");
    s.check(textprep::preprocess(once.str(), config).str() == once.str(), "preprocess idempotent");
  }
  return s;
}

inline Report run(const Options& options = {}) {
  Report r;
  r.suites.push_back(agreement_suite(options));
  r.suites.push_back(eigen_suite(options));
  r.suites.push_back(preprocessing_suite());
  return r;
}

}  // namespace rateval::selftest
