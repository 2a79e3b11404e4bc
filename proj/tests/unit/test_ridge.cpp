#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <numeric>
#include <random>

#include "helpers.hpp"

using namespace scatter_ra;

namespace {

FeatureMatrix random_features(std::mt19937_64& rng, std::size_t rows, std::size_t cols) {
  std::normal_distribution<double> n(0.0, 1.0);
  FeatureMatrix f(rows, cols);
  for (auto& v : f.values) v = n(rng);
  return f;
}

std::vector<double> random_labels(std::mt19937_64& rng, std::size_t n) {
  std::normal_distribution<double> d(1.5, 0.5);
  std::vector<double> y(n);
  for (auto& v : y) v = d(rng);
  return y;
}

// Column means and population sds, computed independently of the library.
Eigen::MatrixXd zscore(const FeatureMatrix& f) {
  Eigen::MatrixXd x(f.rows, f.cols);
  for (std::size_t r = 0; r < f.rows; ++r)
    for (std::size_t c = 0; c < f.cols; ++c) x(r, c) = f.values[r * f.cols + c];
  const Eigen::RowVectorXd mean = x.colwise().mean();
  x.rowwise() -= mean;
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    const double sd = std::sqrt(x.col(c).squaredNorm() / static_cast<double>(x.rows()));
    if (sd > 1e-12) x.col(c) /= sd;
  }
  return x;
}

Eigen::VectorXd normal_equation(const Eigen::MatrixXd& z, const std::vector<double>& y, double lambda) {
  Eigen::VectorXd yc = Eigen::Map<const Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size()));
  yc.array() -= yc.mean();
  const Eigen::MatrixXd a = z.transpose() * z + lambda * Eigen::MatrixXd::Identity(z.cols(), z.cols());
  return a.ldlt().solve(z.transpose() * yc);
}

void expect_matches_normal_equation(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const auto f = random_features(rng, rows, cols);
  const auto y = random_labels(rng, rows);
  const Eigen::MatrixXd z = zscore(f);
  for (double lambda : default_lambda_grid()) {
    const std::vector<double> grid{lambda};
    const auto model = ridge_fit(f, y, grid);
    const auto w = normal_equation(z, y, lambda);
    ASSERT_EQ(model.weights.size(), cols);
    for (std::size_t c = 0; c < cols; ++c) EXPECT_NEAR(model.weights[c], w(c), 1e-9) << "lambda " << lambda;
    EXPECT_NEAR(model.intercept, std::accumulate(y.begin(), y.end(), 0.0) / rows, 1e-12);
  }
}

}  // namespace

TEST(RidgeGrid, TenLogSpacedValues) {
  const auto g = default_lambda_grid();
  ASSERT_EQ(g.size(), 10u);
  EXPECT_NEAR(g.front(), 1e-3, 1e-15);
  EXPECT_NEAR(g.back(), 1e3, 1e-9);
  for (std::size_t i = 1; i < g.size(); ++i) EXPECT_NEAR(std::log10(g[i] / g[i - 1]), 6.0 / 9.0, 1e-12);
}

TEST(RidgeFit, MatchesNormalEquationTallSystem) {
  for (std::uint64_t s = 0; s < 5; ++s) expect_matches_normal_equation(50, 10, s);
}

TEST(RidgeFit, MatchesNormalEquationSmallSystem) { expect_matches_normal_equation(5, 3, 11); }

TEST(RidgeFit, MatchesNormalEquationWideSystem) { expect_matches_normal_equation(12, 40, 12); }

TEST(RidgeFit, LeaveOneOutMatchesBruteForceRefit) {
  for (std::uint64_t seed = 20; seed < 24; ++seed) {
    std::mt19937_64 rng(seed);
    const std::size_t n = 20;
    const std::size_t p = 5;
    const auto f = random_features(rng, n, p);
    const auto y = random_labels(rng, n);
    const auto model = ridge_fit(f, y);
    const Eigen::MatrixXd z = zscore(f);

    std::vector<double> brute(model.lambda_grid.size());
    for (std::size_t g = 0; g < model.lambda_grid.size(); ++g) {
      double sse = 0.0;
      for (std::size_t out = 0; out < n; ++out) {
        // Refit on the other rows: free intercept plus penalised weights.
        Eigen::MatrixXd a = Eigen::MatrixXd::Zero(p + 1, p + 1);
        Eigen::VectorXd b = Eigen::VectorXd::Zero(p + 1);
        for (std::size_t r = 0; r < n; ++r) {
          if (r == out) continue;
          Eigen::VectorXd x(p + 1);
          x(0) = 1.0;
          x.tail(p) = z.row(r).transpose();
          a += x * x.transpose();
          b += x * y[r];
        }
        for (std::size_t c = 1; c <= p; ++c) a(c, c) += model.lambda_grid[g];
        const Eigen::VectorXd beta = a.ldlt().solve(b);
        const double pred = beta(0) + z.row(out).dot(beta.tail(p));
        sse += (y[out] - pred) * (y[out] - pred);
      }
      brute[g] = sse / n;
      EXPECT_NEAR(model.loo_mse[g], brute[g], 1e-10 * std::max(1.0, brute[g]));
    }
    const auto best = static_cast<std::size_t>(std::min_element(brute.begin(), brute.end()) - brute.begin());
    EXPECT_EQ(model.lambda, model.lambda_grid[best]);
  }
}

TEST(RidgeFit, RealizableTargetRecoveredAtSmallLambda) {
  std::mt19937_64 rng(30);
  const auto f = random_features(rng, 60, 4);
  const std::vector<double> beta{0.5, -1.0, 2.0, 0.25};
  std::vector<double> y(60);
  for (std::size_t r = 0; r < 60; ++r) {
    y[r] = 1.0;
    for (std::size_t c = 0; c < 4; ++c) y[r] += beta[c] * f.values[r * 4 + c];
  }
  const std::vector<double> grid{1e-3};
  const auto model = ridge_fit(f, y, grid);
  const auto pred = ridge_predict(model, f);
  for (std::size_t r = 0; r < 60; ++r) EXPECT_NEAR(pred[r], y[r], 1e-3);
}

TEST(RidgeFit, ConstantLabelsPredictThatConstant) {
  std::mt19937_64 rng(31);
  const auto f = random_features(rng, 15, 6);
  const std::vector<double> y(15, 1.25);
  const auto model = ridge_fit(f, y);
  for (double w : model.weights) EXPECT_NEAR(w, 0.0, 1e-12);
  for (double p : ridge_predict(model, random_features(rng, 4, 6))) EXPECT_NEAR(p, 1.25, 1e-12);
}

TEST(RidgeFit, StationarityOfObjective) {
  std::mt19937_64 rng(32);
  const auto f = random_features(rng, 40, 8);
  const auto y = random_labels(rng, 40);
  const std::vector<double> grid{0.7};
  const auto model = ridge_fit(f, y, grid);
  const Eigen::MatrixXd z = zscore(f);
  const Eigen::VectorXd w = Eigen::Map<const Eigen::VectorXd>(model.weights.data(), 8);
  Eigen::VectorXd resid(40);
  for (int r = 0; r < 40; ++r) resid(r) = y[r] - model.intercept - z.row(r).dot(w);
  const Eigen::VectorXd grad = -z.transpose() * resid + 0.7 * w;
  EXPECT_LT(grad.norm(), 1e-8);
  EXPECT_NEAR(resid.sum(), 0.0, 1e-9);
}

TEST(RidgeFit, RowPermutationInvariance) {
  std::mt19937_64 rng(33);
  const auto f = random_features(rng, 25, 7);
  const auto y = random_labels(rng, 25);
  std::vector<std::size_t> perm(25);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  FeatureMatrix fp(25, 7);
  std::vector<double> yp(25);
  for (std::size_t r = 0; r < 25; ++r) {
    std::copy_n(f.values.begin() + perm[r] * 7, 7, fp.values.begin() + r * 7);
    yp[r] = y[perm[r]];
  }
  const auto a = ridge_fit(f, y);
  const auto b = ridge_fit(fp, yp);
  EXPECT_EQ(a.lambda, b.lambda);
  const auto test = random_features(rng, 6, 7);
  const auto pa = ridge_predict(a, test);
  const auto pb = ridge_predict(b, test);
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_NEAR(pa[i], pb[i], 1e-10);
}

TEST(RidgeFit, DuplicateRowsPredictIdentically) {
  std::mt19937_64 rng(34);
  auto f = random_features(rng, 10, 5);
  std::copy_n(f.values.begin(), 5, f.values.begin() + 5);
  const auto y = random_labels(rng, 10);
  const auto pred = ridge_predict(ridge_fit(f, y), f);
  EXPECT_EQ(pred[0], pred[1]);
}

TEST(RidgeFit, ConstantFeatureColumnIsHarmless) {
  std::mt19937_64 rng(35);
  auto f = random_features(rng, 30, 4);
  for (std::size_t r = 0; r < 30; ++r) f.values[r * 4 + 2] = 3.0;
  const auto y = random_labels(rng, 30);
  const auto model = ridge_fit(f, y);
  EXPECT_EQ(model.feature_scale[2], 1.0);
  EXPECT_NEAR(model.weights[2], 0.0, 1e-12);
}

TEST(RidgeFit, Errors) {
  std::mt19937_64 rng(36);
  const auto f = random_features(rng, 10, 3);
  const std::vector<double> short_y(9, 1.0);
  try {
    (void)ridge_fit(f, short_y);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::length_mismatch);
  }
  auto bad = f;
  bad.values[4] = std::numeric_limits<double>::quiet_NaN();
  try {
    (void)ridge_fit(bad, std::vector<double>(10, 1.0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::non_finite);
  }
  const auto model = ridge_fit(f, random_labels(rng, 10));
  try {
    (void)ridge_predict(model, random_features(rng, 2, 4));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::length_mismatch);
  }
}
