#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "rateval/pipeline.hpp"
#include "rateval/reduce.hpp"
#include "test_util.hpp"

using namespace rateval;
using namespace rateval::reduce;

namespace {

Matrix from_rows(const std::vector<std::vector<double>>& rows) {
  Matrix m(rows.size(), rows.empty() ? 0 : rows[0].size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) m(i, j) = rows[i][j];
  return m;
}

Matrix random_matrix(std::mt19937_64& rng, std::size_t n, std::size_t d) {
  Matrix m(n, d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) m(i, j) = test_util::draw_real(rng, -3, 3);
  return m;
}

Matrix random_symmetric(std::mt19937_64& rng, std::size_t d) {
  Matrix m(d, d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j <= i; ++j) m(i, j) = m(j, i) = test_util::draw_real(rng, -2, 2);
  return m;
}

Eigen::MatrixXd to_eigen(const Matrix& m) {
  Eigen::MatrixXd e(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) e(i, j) = m(i, j);
  return e;
}

/// |<a, b>| close to 1 means equal up to sign for unit vectors.
double abs_dot(std::span<const double> a, const Eigen::VectorXd& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b(static_cast<Eigen::Index>(i));
  return std::abs(s);
}

}  // namespace

TEST(MeanCenter, Examples) {
  const auto c = mean_center(from_rows({{1, 1}, {3, 3}}));
  EXPECT_EQ(c.data, from_rows({{-1, -1}, {1, 1}}));
  EXPECT_EQ(c.mean, (std::vector<double>{2, 2}));
  const auto single = mean_center(from_rows({{4, -2, 7}}));
  EXPECT_EQ(single.data, Matrix(1, 3));
  EXPECT_EQ(single.mean, (std::vector<double>{4, -2, 7}));
}

TEST(MeanCenter, ColumnsHaveZeroMeanAndIdempotent) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const auto x = random_matrix(rng, test_util::draw(rng, 1, 12), test_util::draw(rng, 1, 12));
    const auto c = mean_center(x);
    for (std::size_t j = 0; j < x.cols(); ++j) {
      double s = 0;
      for (std::size_t i = 0; i < x.rows(); ++i) s += c.data(i, j);
      EXPECT_NEAR(s / x.rows(), 0.0, 1e-10);
    }
    const auto again = mean_center(c.data);
    for (std::size_t i = 0; i < x.rows(); ++i)
      for (std::size_t j = 0; j < x.cols(); ++j) EXPECT_NEAR(again.data(i, j), c.data(i, j), 1e-12);
  }
}

TEST(Covariance, HandExampleAndTrace) {
  const auto c = covariance(from_rows({{3, 1}, {-3, -1}, {1, -1}, {-1, 1}}));
  EXPECT_EQ(c, from_rows({{5, 1}, {1, 1}}));
  EXPECT_EQ(covariance(Matrix(3, 2)), Matrix(2, 2));
  const auto sample = covariance(from_rows({{3, 1}, {-3, -1}, {1, -1}, {-1, 1}}), CovarianceDivisor::n_minus_1);
  EXPECT_NEAR(sample(0, 0), 20.0 / 3.0, 1e-12);

  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    const auto xc = mean_center(random_matrix(rng, test_util::draw(rng, 1, 10), test_util::draw(rng, 1, 10))).data;
    const auto cv = covariance(xc);
    double trace = 0, rows = 0;
    for (std::size_t j = 0; j < cv.rows(); ++j) trace += cv(j, j);
    for (std::size_t i = 0; i < xc.rows(); ++i) rows += dot(xc.row(i), xc.row(i));
    EXPECT_NEAR(trace, rows / xc.rows(), 1e-10);
    for (std::size_t i = 0; i < cv.rows(); ++i)
      for (std::size_t j = 0; j < cv.cols(); ++j) EXPECT_NEAR(cv(i, j), cv(j, i), 1e-12);
  }
}

TEST(SymmetricEigen, ClosedForm2x2) {
  const auto e = symmetric_eigen(from_rows({{5, 1}, {1, 1}}));
  EXPECT_NEAR(e.values[0], 3 + std::sqrt(5.0), 1e-12);
  EXPECT_NEAR(e.values[1], 3 - std::sqrt(5.0), 1e-12);
  // Eigenvector for 3 + sqrt 5 is proportional to (2 + sqrt 5, 1).
  const double a = 2 + std::sqrt(5.0), n = std::sqrt(a * a + 1);
  EXPECT_NEAR(e.vectors(0, 0), a / n, 1e-12);
  EXPECT_NEAR(e.vectors(0, 1), 1 / n, 1e-12);
}

TEST(SymmetricEigen, IdentityAndDiagonal) {
  const auto id = symmetric_eigen(Matrix::identity(4));
  EXPECT_EQ(id.values, (std::vector<double>{1, 1, 1, 1}));
  EXPECT_EQ(id.vectors, Matrix::identity(4));
  const auto diag = symmetric_eigen(from_rows({{4, 0, 0}, {0, 9, 0}, {0, 0, 1}}));
  EXPECT_EQ(diag.values, (std::vector<double>{9, 4, 1}));
  EXPECT_EQ(diag.vectors, from_rows({{0, 1, 0}, {1, 0, 0}, {0, 0, 1}}));
}

TEST(SymmetricEigen, SignRule) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 50; ++trial) {
    const auto e = symmetric_eigen(random_symmetric(rng, test_util::draw(rng, 1, 8)));
    for (std::size_t k = 0; k < e.values.size(); ++k) {
      std::size_t best = 0;
      const auto v = e.vectors.row(k);
      for (std::size_t i = 1; i < v.size(); ++i)
        if (std::abs(v[i]) > std::abs(v[best]) + 1e-12) best = i;
      EXPECT_GT(v[best], 0.0);
    }
  }
}

TEST(SymmetricEigen, RejectsAsymmetricAndNonSquare) {
  EXPECT_THROW(symmetric_eigen(from_rows({{1, 2}, {0, 1}})), AnalysisError);
  EXPECT_THROW(symmetric_eigen(Matrix(2, 3)), AnalysisError);
}

TEST(SymmetricEigen, MatchesDenseOracleOnRandomMatrices) {
  std::mt19937_64 rng(14);
  for (int trial = 0; trial < 150; ++trial) {
    const auto d = static_cast<std::size_t>(test_util::draw(rng, 1, 12));
    const auto c = random_symmetric(rng, d);
    const auto got = symmetric_eigen(c);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> oracle(to_eigen(c));
    ASSERT_EQ(oracle.info(), Eigen::Success);
    const double norm = std::max(1.0, c.frobenius_norm());
    double trace = 0, sum = 0;
    for (std::size_t i = 0; i < d; ++i) {
      trace += c(i, i);
      sum += got.values[i];
    }
    EXPECT_NEAR(sum, trace, 1e-8 * norm);
    for (std::size_t k = 0; k < d; ++k) {
      // Eigen sorts ascending.
      const auto idx = static_cast<Eigen::Index>(d - 1 - k);
      EXPECT_NEAR(got.values[k], oracle.eigenvalues()(idx), 1e-8 * norm);
      if (k + 1 < d) {
        EXPECT_GE(got.values[k], got.values[k + 1]);
      }
      const double gap_prev = k > 0 ? got.values[k - 1] - got.values[k] : INFINITY;
      const double gap_next = k + 1 < d ? got.values[k] - got.values[k + 1] : INFINITY;
      if (std::min(gap_prev, gap_next) > 1e-4) {
        EXPECT_NEAR(abs_dot(got.vectors.row(k), oracle.eigenvectors().col(idx)), 1.0, 1e-8);
      }
      for (std::size_t m = 0; m < d; ++m) {
        EXPECT_NEAR(dot(got.vectors.row(k), got.vectors.row(m)), k == m ? 1.0 : 0.0, 1e-8);
      }
      double residual = 0;
      for (std::size_t i = 0; i < d; ++i) {
        double cv = 0;
        for (std::size_t j = 0; j < d; ++j) cv += c(i, j) * got.vectors(k, j);
        residual += std::pow(cv - got.values[k] * got.vectors(k, i), 2);
      }
      EXPECT_LE(std::sqrt(residual), 1e-8 * norm);
    }
  }
}

TEST(PcaFit, RankOneData) {
  const auto model = pca_fit(from_rows({{1, 1}, {2, 2}, {3, 3}, {5, 5}}), 2);
  EXPECT_NEAR(model.components(0, 0), 1 / std::sqrt(2.0), 1e-12);
  EXPECT_NEAR(model.components(0, 1), 1 / std::sqrt(2.0), 1e-12);
  EXPECT_NEAR(model.eigenvalues[1], 0.0, 1e-12);
  const auto coords = pca_project(model, from_rows({{1, 1}, {2, 2}, {3, 3}, {5, 5}}));
  for (std::size_t i = 0; i < 4; ++i) EXPECT_LT(std::abs(coords(i, 1)), 1e-8);
}

TEST(PcaFit, KOutOfRange) {
  const auto x = from_rows({{1, 2, 3}, {4, 5, 6}});
  EXPECT_THROW(pca_fit(x, 0), AnalysisError);
  EXPECT_THROW(pca_fit(x, 3), AnalysisError);
  EXPECT_NO_THROW(pca_fit(x, 2));
}

TEST(PcaFit, MatchesDenseCovarianceOracle) {
  std::mt19937_64 rng(15);
  for (int trial = 0; trial < 100; ++trial) {
    const auto n = static_cast<std::size_t>(test_util::draw(rng, 2, 12));
    const auto d = static_cast<std::size_t>(test_util::draw(rng, 1, 12));
    const auto x = random_matrix(rng, n, d);
    const auto k = std::min(n, d);
    const auto model = pca_fit(x, k);
    Eigen::MatrixXd ex = to_eigen(x);
    Eigen::MatrixXd centered = ex.rowwise() - ex.colwise().mean();
    Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(n);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> oracle(cov);
    for (std::size_t c = 0; c < k; ++c) {
      const auto idx = static_cast<Eigen::Index>(d - 1 - c);
      EXPECT_NEAR(model.eigenvalues[c], std::max(0.0, oracle.eigenvalues()(idx)), 1e-8);
      const double lambda = oracle.eigenvalues()(idx);
      const double prev = c > 0 ? oracle.eigenvalues()(idx + 1) - lambda : INFINITY;
      const double next = idx > 0 ? lambda - oracle.eigenvalues()(idx - 1) : INFINITY;
      if (std::min(prev, next) > 1e-4 && lambda > 1e-6) {
        EXPECT_NEAR(abs_dot(model.components.row(c), oracle.eigenvectors().col(idx)), 1.0, 1e-8);
      }
    }
  }
}

TEST(PcaFit, DualMatchesDirect) {
  std::mt19937_64 rng(16);
  for (int trial = 0; trial < 40; ++trial) {
    const auto n = static_cast<std::size_t>(test_util::draw(rng, 2, 8));
    const auto d = static_cast<std::size_t>(test_util::draw(rng, 1, 10));
    const auto x = random_matrix(rng, n, d);
    const auto k = std::min(n, d);
    const auto direct = pca_fit(x, k, PcaMethod::direct);
    const auto dual = pca_fit(x, k, PcaMethod::dual);
    for (std::size_t c = 0; c < k; ++c) {
      EXPECT_NEAR(direct.eigenvalues[c], dual.eigenvalues[c], 1e-8);
      if (direct.eigenvalues[c] > 1e-6 && (c + 1 == k || direct.eigenvalues[c] - direct.eigenvalues[c + 1] > 1e-4) &&
          (c == 0 || direct.eigenvalues[c - 1] - direct.eigenvalues[c] > 1e-4)) {
        for (std::size_t j = 0; j < d; ++j) EXPECT_NEAR(direct.components(c, j), dual.components(c, j), 1e-8);
      }
    }
    for (std::size_t a = 0; a < k; ++a)
      for (std::size_t b = 0; b < k; ++b)
        EXPECT_NEAR(dot(dual.components.row(a), dual.components.row(b)), a == b ? 1.0 : 0.0, 1e-8);
  }
}

TEST(PcaFit, WideFixtureUsesDualPath) {
  std::mt19937_64 rng(384);
  const auto x = random_matrix(rng, 3, 384);
  const auto automatic = pca_fit(x, 2);
  EXPECT_EQ(automatic.method, PcaMethod::dual);
  const auto direct = pca_fit(x, 2, PcaMethod::direct);
  for (std::size_t c = 0; c < 2; ++c) EXPECT_NEAR(automatic.eigenvalues[c], direct.eigenvalues[c], 1e-8);
}

TEST(PcaProject, VarianceEqualsEigenvalue) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 30; ++trial) {
    const auto n = static_cast<std::size_t>(test_util::draw(rng, 2, 12));
    const auto d = static_cast<std::size_t>(test_util::draw(rng, 2, 12));
    const auto x = random_matrix(rng, n, d);
    const auto k = std::min<std::size_t>(2, std::min(n, d));
    const auto model = pca_fit(x, k);
    const auto coords = pca_project(model, x);
    for (std::size_t c = 0; c < k; ++c) {
      double s = 0, ss = 0;
      for (std::size_t i = 0; i < n; ++i) {
        s += coords(i, c);
        ss += coords(i, c) * coords(i, c);
      }
      EXPECT_NEAR(s / n, 0.0, 1e-10);
      EXPECT_NEAR(ss / n, model.eigenvalues[c], 1e-8);
    }
  }
}

TEST(PcaProject, MeanMapsToOriginAndHandCoordinates) {
  const auto x = from_rows({{3, 1}, {-3, -1}, {1, -1}, {-1, 1}});
  const auto model = pca_fit(x, 2);
  const auto origin = pca_project(model, from_rows({model.mean}));
  EXPECT_NEAR(origin(0, 0), 0.0, 1e-15);
  EXPECT_NEAR(origin(0, 1), 0.0, 1e-15);
  const double a = 2 + std::sqrt(5.0), n = std::sqrt(a * a + 1);
  const auto coords = pca_project(model, x);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_NEAR(coords(i, 0), (x(i, 0) * a + x(i, 1)) / n, 1e-12);
  }
  EXPECT_THROW(pca_project(model, Matrix(1, 3)), AnalysisError);
}

namespace {

struct ClusterCorpus {
  Corpus corpus;
  std::map<std::string, int> cluster;  // rater_id -> cluster
};

ClusterCorpus two_cluster_corpus() {
  const std::vector<std::string> a = {"vivid", "coherent", "fluent", "precise", "polished", "nuanced", "rich", "elegant"};
  const std::vector<std::string> b = {"choppy", "vague", "sparse", "awkward", "garbled", "thin", "halting", "muddled"};
  std::mt19937_64 rng(21);
  std::vector<Essay> essays;
  for (int i = 1; i <= 6; ++i) essays.push_back({"E" + std::to_string(i), "p", "essay"});
  std::vector<RaterProfile> raters = {{"R1", RaterKind::human, ""}};
  ClusterCorpus out;
  out.cluster["R1"] = 0;
  for (int r = 1; r <= 4; ++r) {
    raters.push_back({"L" + std::to_string(r), RaterKind::llm, ""});
    out.cluster["L" + std::to_string(r)] = r <= 2 ? 0 : 1;
  }
  std::vector<Rating> ratings;
  for (const auto& rater : raters) {
    const auto& pool = out.cluster[rater.rater_id] == 0 ? a : b;
    for (const auto& e : essays) {
      std::string text;
      for (int w = 0; w < 5; ++w) text += pool[static_cast<std::size_t>(test_util::draw(rng, 0, 7))] + " ";
      ratings.push_back({e.essay_id, rater.rater_id, 3, text});
    }
  }
  out.corpus = Corpus({0, 6}, essays, raters, ratings);
  return out;
}

embed::EmbeddingStore embed_all(const Corpus& corpus, std::size_t dim) {
  embed::EmbeddingStore store(dim);
  embed::FallbackProvider provider(dim);
  embed::EmbeddingProviderConfig config;
  config.dim = dim;
  embed::embed_batch(pipeline::embeddable_texts(corpus, {}), provider, config, store);
  return store;
}

/// Mean silhouette over points with Euclidean distance.
double silhouette(const std::vector<std::pair<double, double>>& pts, const std::vector<int>& label) {
  double total = 0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    double in = 0, out = 0;
    int n_in = 0, n_out = 0;
    for (std::size_t j = 0; j < pts.size(); ++j) {
      if (i == j) continue;
      const double dist = std::hypot(pts[i].first - pts[j].first, pts[i].second - pts[j].second);
      if (label[i] == label[j]) {
        in += dist;
        ++n_in;
      } else {
        out += dist;
        ++n_out;
      }
    }
    const double a = in / n_in, b = out / n_out;
    total += (b - a) / std::max(a, b);
  }
  return total / static_cast<double>(pts.size());
}

}  // namespace

TEST(MatchedScoreProjection, SeparatedClustersHaveHighSilhouette) {
  const auto cc = two_cluster_corpus();
  const auto store = embed_all(cc.corpus, 256);
  const auto proj = matched_score_projection(cc.corpus, store, {}, 3, "R1");
  ASSERT_TRUE(proj.has_value());
  EXPECT_EQ(proj->points.size(), 30u);
  std::vector<std::pair<double, double>> pts;
  std::vector<int> labels;
  for (const auto& p : proj->points) {
    pts.emplace_back(p.x, p.y);
    labels.push_back(cc.cluster.at(p.rater_id));
  }
  EXPECT_GT(silhouette(pts, labels), 0.5);
  for (std::size_t i = 1; i < proj->points.size(); ++i) {
    const auto& prev = proj->points[i - 1];
    const auto& cur = proj->points[i];
    EXPECT_LT(std::tie(prev.rater_id, prev.essay_id), std::tie(cur.rater_id, cur.essay_id));
  }
}

TEST(MatchedScoreProjection, InsufficientDataAndReferenceToggle) {
  const auto cc = two_cluster_corpus();
  const auto store = embed_all(cc.corpus, 256);
  EXPECT_FALSE(matched_score_projection(cc.corpus, store, {}, 5, "R1").has_value());
  EXPECT_THROW(matched_score_projection(cc.corpus, store, {}, 9, "R1"), ConfigError);
  const auto without = matched_score_projection(cc.corpus, store, {}, 3, "R1", false);
  ASSERT_TRUE(without.has_value());
  EXPECT_EQ(without->points.size(), 24u);
}

TEST(MatchedScoreProjection, IdenticalTextsCollapseToOrigin) {
  const Corpus corpus({0, 6}, {{"E1", "p", "t"}, {"E2", "p", "t"}},
                      {{"R1", RaterKind::human, ""}, {"L1", RaterKind::llm, ""}},
                      {{"E1", "R1", 2, "clear ideas"}, {"E2", "R1", 2, "clear ideas"},
                       {"E1", "L1", 2, "Clear ideas."}, {"E2", "L1", 2, "clear, ideas"}});
  const auto store = embed_all(corpus, 64);
  const auto proj = matched_score_projection(corpus, store, {}, 2, "R1");
  ASSERT_TRUE(proj.has_value());
  ASSERT_EQ(proj->points.size(), 4u);
  for (const auto& p : proj->points) {
    EXPECT_EQ(p.x, 0.0);
    EXPECT_EQ(p.y, 0.0);
  }
}
