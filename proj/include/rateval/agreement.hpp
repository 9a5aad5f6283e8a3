#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "rateval/corpus.hpp"
#include "rateval/error.hpp"
#include "rateval/matrix.hpp"

namespace rateval::agreement {

/// Which categories index the agreement matrices.
enum class CategoryIndexing {
  /// Every point of the rubric scale, whether or not it was used (default).
  full_scale,
  /// Only the score values that appear in the sample.
  observed,
};

inline const char* to_string(CategoryIndexing indexing) {
  return indexing == CategoryIndexing::full_scale ? "full_scale" : "observed";
}

/// Quadratic disagreement weights W(i,j) = (i - j)^2 / (k - 1)^2.
inline Matrix weight_matrix(int k) {
  if (k < 2) throw AnalysisError("weight matrix needs at least 2 categories, got " + std::to_string(k));
  Matrix w(k, k);
  const double denom = static_cast<double>(k - 1) * static_cast<double>(k - 1);
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) w(i, j) = static_cast<double>((i - j) * (i - j)) / denom;
  return w;
}

/// Observed counts O, chance-expected counts E and weights W over k categories.
struct AgreementTable {
  int k = 0;
  std::size_t n = 0;
  /// Score value of each category index.
  std::vector<int> categories;
  CategoryIndexing indexing = CategoryIndexing::full_scale;
  Matrix observed;
  Matrix expected;
  /// Squared distances (i - j)^2. The 1/(k - 1)^2 factor of weight_matrix
  /// cancels in the kappa ratio, so it is left out to keep the sums exact.
  Matrix weights;
};

/// E(i,j) = n * p_a(i) * p_b(j), the outer product of the two raters'
/// empirical marginals scaled back to counts.
inline AgreementTable build_table(std::span<const ScorePair> pairs, const ScoreScale& scale,
                                  CategoryIndexing indexing = CategoryIndexing::full_scale) {
  if (pairs.empty()) throw AnalysisError("agreement table needs at least one score pair");
  for (const auto& [a, b] : pairs) {
    if (!scale.contains(a) || !scale.contains(b)) {
      throw IntegrityError("score pair (" + std::to_string(a) + ", " + std::to_string(b) + ") outside scale");
    }
  }

  AgreementTable t;
  t.indexing = indexing;
  t.n = pairs.size();
  if (indexing == CategoryIndexing::full_scale) {
    for (int s = scale.min_score(); s <= scale.max_score(); ++s) t.categories.push_back(s);
  } else {
    for (const auto& [a, b] : pairs) {
      t.categories.push_back(a);
      t.categories.push_back(b);
    }
    std::sort(t.categories.begin(), t.categories.end());
    t.categories.erase(std::unique(t.categories.begin(), t.categories.end()), t.categories.end());
  }
  t.k = static_cast<int>(t.categories.size());
  auto index_of = [&](int score) {
    return static_cast<std::size_t>(std::lower_bound(t.categories.begin(), t.categories.end(), score) -
                                    t.categories.begin());
  };

  const auto k = static_cast<std::size_t>(t.k);
  t.observed = Matrix(k, k);
  for (const auto& [a, b] : pairs) t.observed(index_of(a), index_of(b)) += 1.0;

  std::vector<double> row_counts(k, 0.0), col_counts(k, 0.0);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      row_counts[i] += t.observed(i, j);
      col_counts[j] += t.observed(i, j);
    }
  }
  const double n = static_cast<double>(t.n);
  t.expected = Matrix(k, k);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) t.expected(i, j) = row_counts[i] * col_counts[j] / n;

  // A single observed category has no ordinal spread; its lone weight is zero.
  t.weights = Matrix(t.k, t.k);
  for (int i = 0; i < t.k; ++i)
    for (int j = 0; j < t.k; ++j) t.weights(i, j) = static_cast<double>((i - j) * (i - j));
  return t;
}

/// 1 - sum(O*W) / sum(E*W). Throws UndefinedMetric when the chance
/// disagreement mass is zero (for instance both raters constant and equal).
inline double qwk(const AgreementTable& table) {
  double observed = 0.0;
  double expected = 0.0;
  const auto k = static_cast<std::size_t>(table.k);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      observed += table.observed(i, j) * table.weights(i, j);
      expected += table.expected(i, j) * table.weights(i, j);
    }
  }
  if (!(expected > 0.0)) throw UndefinedMetric("QWK undefined: zero expected weighted disagreement");
  return 1.0 - observed / expected;
}

inline double qwk(std::span<const ScorePair> pairs, const ScoreScale& scale,
                  CategoryIndexing indexing = CategoryIndexing::full_scale) {
  return qwk(build_table(pairs, scale, indexing));
}

/// Empirical joint P(x, y) over the observed score values, with marginals.
struct DiscreteJoint {
  std::vector<int> x_values;
  std::vector<int> y_values;
  Matrix joint;
  std::vector<double> marginal_x;
  std::vector<double> marginal_y;
};

inline DiscreteJoint joint_distribution(std::span<const ScorePair> pairs) {
  if (pairs.empty()) throw AnalysisError("joint distribution needs at least one score pair");
  DiscreteJoint j;
  for (const auto& [a, b] : pairs) {
    j.x_values.push_back(a);
    j.y_values.push_back(b);
  }
  for (auto* v : {&j.x_values, &j.y_values}) {
    std::sort(v->begin(), v->end());
    v->erase(std::unique(v->begin(), v->end()), v->end());
  }
  auto pos = [](const std::vector<int>& values, int v) {
    return static_cast<std::size_t>(std::lower_bound(values.begin(), values.end(), v) - values.begin());
  };
  j.joint = Matrix(j.x_values.size(), j.y_values.size());
  const double mass = 1.0 / static_cast<double>(pairs.size());
  for (const auto& [a, b] : pairs) j.joint(pos(j.x_values, a), pos(j.y_values, b)) += mass;

  j.marginal_x.assign(j.x_values.size(), 0.0);
  j.marginal_y.assign(j.y_values.size(), 0.0);
  for (std::size_t r = 0; r < j.joint.rows(); ++r) {
    for (std::size_t c = 0; c < j.joint.cols(); ++c) {
      j.marginal_x[r] += j.joint(r, c);
      j.marginal_y[c] += j.joint(r, c);
    }
  }
  return j;
}

namespace detail {

inline void check_distribution(std::span<const double> p, double tolerance, const char* what) {
  double sum = 0.0;
  for (double v : p) {
    if (!(v >= 0.0)) throw AnalysisError(std::string(what) + ": negative or NaN probability");
    sum += v;
  }
  if (std::abs(sum - 1.0) > tolerance) throw AnalysisError(std::string(what) + ": probabilities do not sum to 1");
}

}  // namespace detail

/// Shannon entropy with 0 log 0 = 0. Natural log unless `base` is given.
inline double entropy(std::span<const double> p, double base = std::numbers::e) {
  detail::check_distribution(p, 1e-9, "entropy");
  const double scale = std::log(base);
  double h = 0.0;
  for (double v : p) {
    if (v > 0.0) h -= v * std::log(v);
  }
  return std::max(0.0, h / scale);
}

inline double mutual_information(const DiscreteJoint& j, double base = std::numbers::e) {
  const std::size_t rows = j.joint.rows();
  const std::size_t cols = j.joint.cols();
  if (j.marginal_x.size() != rows || j.marginal_y.size() != cols) {
    throw AnalysisError("mutual information: marginal sizes do not match joint");
  }
  std::vector<double> flat;
  flat.reserve(rows * cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) flat.push_back(j.joint(r, c));
  detail::check_distribution(flat, 1e-12, "mutual information");
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += j.joint(r, c);
    if (std::abs(s - j.marginal_x[r]) > 1e-12) throw AnalysisError("mutual information: row marginal mismatch");
  }
  for (std::size_t c = 0; c < cols; ++c) {
    double s = 0.0;
    for (std::size_t r = 0; r < rows; ++r) s += j.joint(r, c);
    if (std::abs(s - j.marginal_y[c]) > 1e-12) throw AnalysisError("mutual information: column marginal mismatch");
  }

  double mi = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const double p = j.joint(r, c);
      if (p > 0.0) mi += p * std::log(p / (j.marginal_x[r] * j.marginal_y[c]));
    }
  }
  return std::max(0.0, mi / std::log(base));
}

/// 2 MI / (H(X) + H(Y)), clamped to [0, 1]. Both labelings constant gives 1;
/// exactly one constant gives 0.
inline double nmi(std::span<const ScorePair> pairs, double base = std::numbers::e) {
  auto j = joint_distribution(pairs);
  const bool x_constant = j.x_values.size() == 1;
  const bool y_constant = j.y_values.size() == 1;
  if (x_constant && y_constant) return 1.0;
  if (x_constant || y_constant) return 0.0;
  const double hx = entropy(j.marginal_x, base);
  const double hy = entropy(j.marginal_y, base);
  const double mi = mutual_information(j, base);
  return std::clamp(2.0 * mi / (hx + hy), 0.0, 1.0);
}

}  // namespace rateval::agreement
