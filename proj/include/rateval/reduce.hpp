#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "rateval/corpus.hpp"
#include "rateval/embed.hpp"
#include "rateval/error.hpp"
#include "rateval/matrix.hpp"

namespace rateval::reduce {

struct RowKey {
  std::string essay_id;
  std::string rater_id;

  friend bool operator==(const RowKey&, const RowKey&) = default;
};

/// n observations of dimension d, one key per row.
struct DataMatrix {
  Matrix rows;
  std::vector<RowKey> keys;
};

struct Centered {
  Matrix data;
  std::vector<double> mean;
};

inline Centered mean_center(const Matrix& x) {
  if (x.rows() == 0) throw AnalysisError("mean_center needs at least one row");
  const std::size_t n = x.rows(), d = x.cols();
  Centered out{x, std::vector<double>(d, 0.0)};
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c) out.mean[c] += x(r, c);
  for (auto& m : out.mean) m /= static_cast<double>(n);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c) out.data(r, c) -= out.mean[c];
  return out;
}

enum class CovarianceDivisor { n, n_minus_1 };

inline const char* to_string(CovarianceDivisor d) { return d == CovarianceDivisor::n ? "n" : "n-1"; }

/// C = X^T X / n for mean-centered X (or n - 1 when asked).
inline Matrix covariance(const Matrix& centered, CovarianceDivisor divisor = CovarianceDivisor::n) {
  const std::size_t n = centered.rows(), d = centered.cols();
  if (n == 0) throw AnalysisError("covariance of an empty matrix");
  double denom = static_cast<double>(n);
  if (divisor == CovarianceDivisor::n_minus_1) {
    if (n < 2) throw AnalysisError("n - 1 covariance needs at least two rows");
    denom -= 1.0;
  }
  Matrix c(d, d);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = i; j < d; ++j) {
      double s = 0.0;
      for (std::size_t r = 0; r < n; ++r) s += centered(r, i) * centered(r, j);
      c(i, j) = c(j, i) = s / denom;
    }
  }
  return c;
}

/// Eigenpairs in descending eigenvalue order; vectors.row(i) pairs with values[i].
struct EigenDecomposition {
  std::vector<double> values;
  Matrix vectors;
  int sweeps = 0;
};

namespace detail {

/// Flips `v` so its largest-magnitude entry is positive; ties go to the lowest index.
inline void canonical_sign(std::span<double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (std::abs(v[i]) > std::abs(v[best]) + 1e-12) best = i;
  }
  if (!v.empty() && v[best] < 0.0) {
    for (auto& x : v) x = -x;
  }
}

inline double off_diagonal_norm(const Matrix& a) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j)
      if (i != j) s += a(i, j) * a(i, j);
  return std::sqrt(s);
}

}  // namespace detail

inline constexpr int kMaxJacobiSweeps = 100;

/// Cyclic Jacobi rotations until the off-diagonal Frobenius norm drops below
/// 1e-12 |C|_F. Eigenvectors follow the canonical sign rule; equal eigenvalues
/// keep their Jacobi order.
inline EigenDecomposition symmetric_eigen(const Matrix& c, int max_sweeps = kMaxJacobiSweeps) {
  const std::size_t n = c.rows();
  if (c.cols() != n) throw AnalysisError("symmetric_eigen needs a square matrix");
  const double norm = c.frobenius_norm();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (std::abs(c(i, j) - c(j, i)) > 1e-9 * std::max(1.0, norm)) {
        throw AnalysisError("symmetric_eigen: input is not symmetric");
      }
    }
  }

  Matrix a = c;
  Matrix v = Matrix::identity(n);
  const double target = 1e-12 * norm;
  int sweep = 0;
  while (detail::off_diagonal_norm(a) > target) {
    if (sweep == max_sweeps) {
      throw AnalysisError("symmetric_eigen: Jacobi did not converge in " + std::to_string(max_sweeps) + " sweeps");
    }
    ++sweep;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double cs = 1.0 / std::sqrt(t * t + 1.0);
        const double sn = t * cs;
        // A <- J^T A J with J the (p, q) rotation.
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = cs * akp - sn * akq;
          a(k, q) = sn * akp + cs * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = cs * apk - sn * aqk;
          a(q, k) = sn * apk + cs * aqk;
        }
        a(p, q) = a(q, p) = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = cs * vkp - sn * vkq;
          v(k, q) = sn * vkp + cs * vkq;
        }
      }
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return a(x, x) > a(y, y); });

  EigenDecomposition out;
  out.sweeps = sweep;
  out.values.reserve(n);
  out.vectors = Matrix(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    out.values.push_back(a(order[i], order[i]));
    for (std::size_t k = 0; k < n; ++k) out.vectors(i, k) = v(k, order[i]);
    detail::canonical_sign(out.vectors.row(i));
  }
  return out;
}

enum class PcaMethod {
  /// Direct covariance when n >= d, Gram-matrix (dual) path otherwise.
  automatic,
  direct,
  dual,
};

/// Mean, top-k orthonormal components (rows) and their eigenvalues.
struct PcaModel {
  std::vector<double> mean;
  Matrix components;
  std::vector<double> eigenvalues;
  PcaMethod method = PcaMethod::direct;
  CovarianceDivisor divisor = CovarianceDivisor::n;
};

namespace detail {

inline double clamp_eigenvalue(double lambda, double scale) {
  if (lambda >= 0.0) return lambda;
  if (lambda >= -1e-10 * std::max(1.0, scale)) return 0.0;
  throw AnalysisError("negative eigenvalue " + std::to_string(lambda) + " in a covariance matrix");
}

/// Next standard basis vector, orthogonalized against `basis`, that keeps a
/// usable norm. Spans an eigenspace of zero variance deterministically.
inline std::vector<double> complete_basis(const std::vector<std::vector<double>>& basis, std::size_t d) {
  for (std::size_t j = 0; j < d; ++j) {
    std::vector<double> w(d, 0.0);
    w[j] = 1.0;
    for (int pass = 0; pass < 2; ++pass) {
      for (const auto& b : basis) {
        const double proj = dot(w, b);
        for (std::size_t i = 0; i < d; ++i) w[i] -= proj * b[i];
      }
    }
    const double norm = std::sqrt(dot(w, w));
    if (norm > 1e-6) {
      for (auto& x : w) x /= norm;
      return w;
    }
  }
  throw AnalysisError("cannot complete an orthonormal basis");
}

}  // namespace detail

inline PcaModel pca_fit(const Matrix& x, std::size_t k, PcaMethod method = PcaMethod::automatic,
                        CovarianceDivisor divisor = CovarianceDivisor::n) {
  const std::size_t n = x.rows(), d = x.cols();
  if (k < 1 || k > std::min(n, d)) {
    throw AnalysisError("pca_fit: k = " + std::to_string(k) + " outside [1, min(n, d) = " +
                        std::to_string(std::min(n, d)) + "]");
  }
  auto centered = mean_center(x);
  if (method == PcaMethod::automatic) method = n < d ? PcaMethod::dual : PcaMethod::direct;

  PcaModel model;
  model.mean = std::move(centered.mean);
  model.method = method;
  model.divisor = divisor;
  model.components = Matrix(k, d);

  if (method == PcaMethod::direct) {
    const auto c = covariance(centered.data, divisor);
    double trace = 0.0;
    for (std::size_t i = 0; i < d; ++i) trace += c(i, i);
    const auto eig = symmetric_eigen(c);
    for (std::size_t i = 0; i < k; ++i) {
      model.eigenvalues.push_back(detail::clamp_eigenvalue(eig.values[i], trace));
      for (std::size_t j = 0; j < d; ++j) model.components(i, j) = eig.vectors(i, j);
    }
    return model;
  }

  // Dual path: G = X X^T / n shares its nonzero eigenvalues with C; the
  // component for eigenvector u is X^T u, normalized.
  const Matrix& xc = centered.data;
  double denom = static_cast<double>(n);
  if (divisor == CovarianceDivisor::n_minus_1) {
    if (n < 2) throw AnalysisError("n - 1 covariance needs at least two rows");
    denom -= 1.0;
  }
  Matrix g(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) g(i, j) = g(j, i) = dot(xc.row(i), xc.row(j)) / denom;
  }
  double trace = 0.0;
  for (std::size_t i = 0; i < n; ++i) trace += g(i, i);
  const auto eig = symmetric_eigen(g);
  const double lead = std::max(eig.values.empty() ? 0.0 : eig.values[0], 0.0);

  std::vector<std::vector<double>> basis;
  for (std::size_t i = 0; i < k; ++i) {
    const double lambda = detail::clamp_eigenvalue(eig.values[i], trace);
    model.eigenvalues.push_back(lambda);
    std::vector<double> w(d, 0.0);
    bool usable = lead > 0.0 && lambda > 1e-10 * lead;
    if (usable) {
      for (std::size_t r = 0; r < n; ++r) {
        const double u = eig.vectors(i, r);
        for (std::size_t j = 0; j < d; ++j) w[j] += u * xc(r, j);
      }
      for (int pass = 0; pass < 2; ++pass) {
        for (const auto& b : basis) {
          const double proj = dot(w, b);
          for (std::size_t j = 0; j < d; ++j) w[j] -= proj * b[j];
        }
      }
      const double norm = std::sqrt(dot(w, w));
      usable = norm > 0.0;
      if (usable) {
        for (auto& v : w) v /= norm;
      }
    }
    if (!usable) w = detail::complete_basis(basis, d);
    detail::canonical_sign(w);
    basis.push_back(w);
    for (std::size_t j = 0; j < d; ++j) model.components(i, j) = w[j];
  }
  return model;
}

/// (rows - mean) . components^T, an n x k coordinate matrix.
inline Matrix pca_project(const PcaModel& model, const Matrix& x) {
  const std::size_t d = model.mean.size();
  if (x.cols() != d) {
    throw AnalysisError("pca_project: data has dimension " + std::to_string(x.cols()) + ", model expects " +
                        std::to_string(d));
  }
  const std::size_t k = model.components.rows();
  Matrix out(x.rows(), k);
  std::vector<double> centered(d);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t j = 0; j < d; ++j) centered[j] = x(r, j) - model.mean[j];
    for (std::size_t c = 0; c < k; ++c) out(r, c) = dot(centered, model.components.row(c));
  }
  return out;
}

// ---------------------------------------------------------------------------

struct ProjectedPoint {
  std::string rater_id;
  std::string essay_id;
  double x = 0.0;
  double y = 0.0;
};

/// 2-D points for one score level, ordered by (rater_id, essay_id).
struct ScoreProjection {
  int score_level = 0;
  std::vector<ProjectedPoint> points;
  PcaModel model;
};

/// Pools the rationale embeddings of every LLM rater whose score equals the
/// reference rater's score equals `score_level` on the same essay, plus the
/// reference rater's own rationales for those essays when `include_reference`.
/// Fits a 2-component PCA on that set. Returns nullopt ("insufficient data")
/// when fewer than two points qualify.
inline std::optional<ScoreProjection> matched_score_projection(const Corpus& corpus, const embed::EmbeddingStore& store,
                                                               const embed::TextPipeline& pipeline, int score_level,
                                                               const std::string& reference_rater,
                                                               bool include_reference = true,
                                                               CovarianceDivisor divisor = CovarianceDivisor::n) {
  if (!corpus.scale().contains(score_level)) {
    throw ConfigError("score level " + std::to_string(score_level) + " outside the scale");
  }
  corpus.rater(reference_rater);

  struct Selected {
    RowKey key;
    const embed::EmbeddingVector* vector;
  };
  std::vector<Selected> selected;
  auto take = [&](const Rating& r) {
    if (!r.rationale || !pipeline.embed_text(*r.rationale)) return;
    const auto* v = embed::lookup(store, pipeline, *r.rationale);
    if (!v) {
      throw AnalysisError("embed stage: missing embedding for rationale of essay '" + r.essay_id + "', rater '" +
                          r.rater_id + "'");
    }
    selected.push_back({{r.essay_id, r.rater_id}, v});
  };

  for (const auto& id : corpus.sorted_essay_ids()) {
    const auto* ref = corpus.find_rating(id, reference_rater);
    if (!ref || ref->score != score_level) continue;
    bool matched = false;
    for (const auto& rater : corpus.raters()) {
      if (rater.kind != RaterKind::llm || rater.rater_id == reference_rater) continue;
      const auto* r = corpus.find_rating(id, rater.rater_id);
      if (!r || r->score != score_level) continue;
      matched = true;
      take(*r);
    }
    if (matched && include_reference) take(*ref);
  }
  if (selected.size() < 2) return std::nullopt;

  std::sort(selected.begin(), selected.end(), [](const Selected& a, const Selected& b) {
    return std::tie(a.key.rater_id, a.key.essay_id) < std::tie(b.key.rater_id, b.key.essay_id);
  });
  const std::size_t d = store.dim();
  Matrix x(selected.size(), d);
  for (std::size_t r = 0; r < selected.size(); ++r) {
    auto values = selected[r].vector->values();
    std::copy(values.begin(), values.end(), x.row(r).begin());
  }

  ScoreProjection out;
  out.score_level = score_level;
  out.model = pca_fit(x, 2, PcaMethod::automatic, divisor);
  const auto coords = pca_project(out.model, x);
  for (std::size_t r = 0; r < selected.size(); ++r) {
    out.points.push_back({selected[r].key.rater_id, selected[r].key.essay_id, coords(r, 0), coords(r, 1)});
  }
  return out;
}

}  // namespace rateval::reduce
