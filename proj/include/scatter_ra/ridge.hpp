#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "error.hpp"

namespace scatter_ra {

/// Row-major feature matrix: one row per reading.
struct FeatureMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  FeatureMatrix() = default;
  FeatureMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), values(r * c, 0.0) {}

  std::span<double> row(std::size_t r) { return {values.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {values.data() + r * cols, cols}; }

  friend bool operator==(const FeatureMatrix&, const FeatureMatrix&) = default;
};

inline std::vector<double> default_lambda_grid() {
  // 10 points, log-spaced over [1e-3, 1e3]
  std::vector<double> grid(10);
  for (std::size_t i = 0; i < grid.size(); ++i) grid[i] = std::pow(10.0, -3.0 + 6.0 * static_cast<double>(i) / 9.0);
  return grid;
}

struct RidgeModel {
  std::vector<double> weights;  // on standardised features
  double intercept = 0.0;
  double lambda = 1.0;
  std::vector<double> feature_mean;
  std::vector<double> feature_scale;
  std::vector<double> lambda_grid;
  std::vector<double> loo_mse;  // leave-one-out MSE per grid entry

  friend bool operator==(const RidgeModel&, const RidgeModel&) = default;
};

/// Per-column mean and population standard deviation; columns with sd below
/// 1e-12 get scale 1 (they are constant and become zero after centring).
inline void feature_standardization(const FeatureMatrix& f, std::vector<double>& mean, std::vector<double>& scale) {
  mean.assign(f.cols, 0.0);
  scale.assign(f.cols, 0.0);
  const double n = static_cast<double>(f.rows);
  for (std::size_t r = 0; r < f.rows; ++r) {
    const auto row = f.row(r);
    for (std::size_t c = 0; c < f.cols; ++c) mean[c] += row[c];
  }
  for (double& m : mean) m /= n;
  for (std::size_t r = 0; r < f.rows; ++r) {
    const auto row = f.row(r);
    for (std::size_t c = 0; c < f.cols; ++c) {
      const double d = row[c] - mean[c];
      scale[c] += d * d;
    }
  }
  for (double& s : scale) {
    s = std::sqrt(s / n);
    if (!(s > 1e-12)) s = 1.0;
  }
}

inline Eigen::MatrixXd standardize(const FeatureMatrix& f, const std::vector<double>& mean,
                                   const std::vector<double>& scale) {
  Eigen::MatrixXd z(static_cast<Eigen::Index>(f.rows), static_cast<Eigen::Index>(f.cols));
  for (std::size_t r = 0; r < f.rows; ++r) {
    const auto row = f.row(r);
    for (std::size_t c = 0; c < f.cols; ++c) {
      z(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = (row[c] - mean[c]) / scale[c];
    }
  }
  return z;
}

/// Ridge regression with an unpenalised intercept on standardised features.
///
/// One symmetric eigendecomposition of the smaller Gram matrix (Z Z^T when
/// rows < cols, Z^T Z otherwise) serves every lambda: with Z = U S V^T the
/// fitted values are U diag(s^2/(s^2+lambda)) U^T y_c and the hat diagonal
/// follows from the same factors, giving the exact leave-one-out residual
/// e_i / (1 - h_ii - 1/n) for each grid point. The lambda with the smallest
/// leave-one-out MSE is kept (first one on ties).
inline RidgeModel ridge_fit(const FeatureMatrix& f, std::span<const double> y,
                            std::span<const double> lambda_grid = {}) {
  if (f.rows != y.size()) throw Error(ErrorCode::length_mismatch, "feature rows and label count differ");
  if (f.rows < 2) throw Error(ErrorCode::empty_input, "ridge needs at least 2 rows");
  if (f.cols == 0) throw Error(ErrorCode::invalid_argument, "ridge needs at least one feature");
  for (double v : f.values) {
    if (!std::isfinite(v)) throw Error(ErrorCode::non_finite, "feature matrix contains non-finite values");
  }
  std::vector<double> grid(lambda_grid.begin(), lambda_grid.end());
  if (grid.empty()) grid = default_lambda_grid();
  for (double l : grid) {
    if (!(l > 0.0)) throw Error(ErrorCode::invalid_argument, "lambda values must be > 0");
  }

  RidgeModel model;
  model.lambda_grid = grid;
  feature_standardization(f, model.feature_mean, model.feature_scale);
  const Eigen::MatrixXd z = standardize(f, model.feature_mean, model.feature_scale);

  const auto n = static_cast<Eigen::Index>(f.rows);
  // Serial sum: a vectorised reduction over caller memory would peel by
  // pointer alignment and change the rounding from run to run.
  const double y_mean = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
  Eigen::VectorXd yc(n);
  for (Eigen::Index i = 0; i < n; ++i) yc(i) = y[static_cast<std::size_t>(i)] - y_mean;
  const bool dual = f.rows < f.cols;

  // u: orthonormal basis of the fitted-value space (columns), s2: squared
  // singular values, uty: u^T y_c.
  Eigen::MatrixXd u;
  Eigen::VectorXd s2;
  Eigen::MatrixXd v;  // primal only
  if (dual) {
    Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(n, n);
    gram.selfadjointView<Eigen::Lower>().rankUpdate(z);
    gram = gram.selfadjointView<Eigen::Lower>();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
    u = eig.eigenvectors();
    s2 = eig.eigenvalues().cwiseMax(0.0);
  } else {
    const auto p = static_cast<Eigen::Index>(f.cols);
    Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(p, p);
    gram.selfadjointView<Eigen::Lower>().rankUpdate(z.transpose());
    gram = gram.selfadjointView<Eigen::Lower>();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
    v = eig.eigenvectors();
    s2 = eig.eigenvalues().cwiseMax(0.0);
    // Z V = U S; keep Z V directly and fold 1/s into the shrinkage factors.
    u = z * v;
  }
  const Eigen::VectorXd uty = u.transpose() * yc;
  const Eigen::MatrixXd u_sq = u.array().square();

  const double inv_n = 1.0 / static_cast<double>(n);
  double best = std::numeric_limits<double>::infinity();
  std::size_t best_index = 0;
  model.loo_mse.resize(grid.size());
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const double lambda = grid[g];
    // Dual: fitted = U diag(s2/(s2+l)) U^T y. Primal (u = Z V): fitted =
    // (Z V) diag(1/(s2+l)) (Z V)^T y.
    Eigen::VectorXd shrink;
    if (dual) {
      shrink = (s2.array() / (s2.array() + lambda)).matrix();
    } else {
      shrink = (1.0 / (s2.array() + lambda)).matrix();
    }
    const Eigen::VectorXd fitted = u * shrink.cwiseProduct(uty);
    const Eigen::VectorXd hat = u_sq * shrink;
    double sse = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double denom = 1.0 - hat(i) - inv_n;
      const double e = (yc(i) - fitted(i)) / denom;
      sse += e * e;
    }
    model.loo_mse[g] = sse * inv_n;
    if (model.loo_mse[g] < best) {
      best = model.loo_mse[g];
      best_index = g;
    }
  }

  model.lambda = grid[best_index];
  Eigen::VectorXd w;
  if (dual) {
    const Eigen::VectorXd coef = (1.0 / (s2.array() + model.lambda)).matrix().cwiseProduct(uty);
    w = z.transpose() * (u * coef);
  } else {
    const Eigen::VectorXd coef = (1.0 / (s2.array() + model.lambda)).matrix().cwiseProduct(uty);
    w = v * coef;
  }
  model.weights.assign(w.data(), w.data() + w.size());
  model.intercept = y_mean;
  return model;
}

inline std::vector<double> ridge_predict(const RidgeModel& model, const FeatureMatrix& f) {
  if (f.cols != model.weights.size()) {
    throw Error(ErrorCode::length_mismatch,
                "feature matrix has " + std::to_string(f.cols) + " columns, model expects " +
                    std::to_string(model.weights.size()));
  }
  std::vector<double> out(f.rows);
  for (std::size_t r = 0; r < f.rows; ++r) {
    const auto row = f.row(r);
    double acc = model.intercept;
    for (std::size_t c = 0; c < f.cols; ++c) {
      acc += (row[c] - model.feature_mean[c]) / model.feature_scale[c] * model.weights[c];
    }
    out[r] = acc;
  }
  return out;
}

}  // namespace scatter_ra
