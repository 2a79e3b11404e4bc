#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "core_data.hpp"
#include "error.hpp"
#include "rng.hpp"

namespace scatter_ra {

// ---------------------------------------------------------------------------
// Split protocols
// ---------------------------------------------------------------------------

enum class Protocol { per_sample_20, kfold_steel };

inline std::string to_string(Protocol p) { return p == Protocol::per_sample_20 ? "per_sample_20" : "kfold_steel"; }

inline Protocol parse_protocol(const std::string& s) {
  if (s == "per_sample_20" || s == "per20") return Protocol::per_sample_20;
  if (s == "kfold_steel" || s == "kfold") return Protocol::kfold_steel;
  throw Error(ErrorCode::invalid_argument, "unknown protocol '" + s + "' (expected per20 or kfold)");
}

struct SplitPlan {
  Protocol protocol = Protocol::per_sample_20;
  std::vector<std::string> train_ids;
  std::vector<std::string> test_ids;
  std::optional<std::size_t> fold_index;
  std::uint64_t seed = 0;

  friend bool operator==(const SplitPlan&, const SplitPlan&) = default;
};

/// Holds out ceil(20%) of each sample's readings, chosen uniformly at random.
inline SplitPlan split_per_sample_20(const Dataset& ds, std::uint64_t seed) {
  SplitPlan plan;
  plan.protocol = Protocol::per_sample_20;
  plan.seed = seed;
  for (std::size_t s = 0; s < ds.samples.size(); ++s) {
    const auto& sample = ds.samples[s];
    const std::size_t n = sample.readings.size();
    if (n < 2) {
      throw Error(ErrorCode::invalid_argument,
                  "sample '" + sample.sample_id + "' has fewer than 2 readings; cannot split");
    }
    const std::size_t n_test = (n + 4) / 5;
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(seed, {s}));
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<bool> is_test(n, false);
    for (std::size_t i = 0; i < n_test; ++i) is_test[order[i]] = true;
    for (std::size_t r = 0; r < n; ++r) {
      (is_test[r] ? plan.test_ids : plan.train_ids).push_back(sample.readings[r].id());
    }
  }
  return plan;
}

/// One plan per steel sample: that sample's readings form the test set.
inline std::vector<SplitPlan> kfold_per_steel(const Dataset& ds) {
  if (ds.samples.size() < 2) throw Error(ErrorCode::invalid_argument, "k-fold needs at least 2 samples");
  std::vector<SplitPlan> plans(ds.samples.size());
  for (std::size_t fold = 0; fold < ds.samples.size(); ++fold) {
    auto& plan = plans[fold];
    plan.protocol = Protocol::kfold_steel;
    plan.fold_index = fold;
    plan.seed = ds.seed;
    for (std::size_t s = 0; s < ds.samples.size(); ++s) {
      for (const auto& r : ds.samples[s].readings) {
        (s == fold ? plan.test_ids : plan.train_ids).push_back(r.id());
      }
    }
  }
  return plans;
}

/// Checks that every id exists in the dataset and that train and test are
/// disjoint.
inline void validate_plan(const SplitPlan& plan, const Dataset& ds) {
  std::set<std::string> known;
  for (const auto& s : ds.samples)
    for (const auto& r : s.readings) known.insert(r.id());
  std::set<std::string> train;
  for (const auto& id : plan.train_ids) {
    if (!known.contains(id)) throw Error(ErrorCode::plan_mismatch, "plan names unknown reading '" + id + "'");
    train.insert(id);
  }
  for (const auto& id : plan.test_ids) {
    if (!known.contains(id)) throw Error(ErrorCode::plan_mismatch, "plan names unknown reading '" + id + "'");
    if (train.contains(id)) throw Error(ErrorCode::plan_mismatch, "reading '" + id + "' is in train and test");
  }
}

inline void to_json(nlohmann::json& j, const SplitPlan& p) {
  j = {{"protocol", to_string(p.protocol)}, {"seed", p.seed}, {"train", p.train_ids}, {"test", p.test_ids}};
  if (p.fold_index) j["fold_index"] = *p.fold_index;
}

inline void from_json(const nlohmann::json& j, SplitPlan& p) {
  p.protocol = parse_protocol(j.at("protocol").get<std::string>());
  p.seed = j.at("seed").get<std::uint64_t>();
  p.train_ids = j.at("train").get<std::vector<std::string>>();
  p.test_ids = j.at("test").get<std::vector<std::string>>();
  if (j.contains("fold_index")) p.fold_index = j.at("fold_index").get<std::size_t>();
}

// ---------------------------------------------------------------------------
// Normalisation
// ---------------------------------------------------------------------------

enum class NormMode { per_channel, global };

inline constexpr double kStdFloor = 1e-8;

namespace detail {
inline std::size_t channels_of(const RealMatrix& m) { return m.channels; }
inline std::size_t timesteps_of(const RealMatrix& m) { return m.timesteps; }
inline std::size_t channels_of(const LaserReading& r) { return r.channels(); }
inline std::size_t timesteps_of(const LaserReading& r) { return r.timesteps(); }
}  // namespace detail

struct NormStats {
  NormMode mode = NormMode::per_channel;
  std::array<double, kSensorCount> mean{};
  std::array<double, kSensorCount> stddev{};

  friend bool operator==(const NormStats&, const NormStats&) = default;
};

/// z-score statistics over every timestep of the training readings. In
/// global mode all channels share one mean/sd pair. Accepts any matrix type
/// exposing channels()/timesteps()/row(c) (LaserReading) or the RealMatrix
/// fields.
template <class Matrix>
NormStats fit_norm(std::span<const Matrix> train, NormMode mode = NormMode::per_channel) {
  if (train.empty()) throw Error(ErrorCode::empty_input, "cannot fit normalisation on an empty train set");
  std::array<double, kSensorCount> sum{};
  std::array<double, kSensorCount> count{};
  for (const auto& x : train) {
    if (detail::channels_of(x) != kSensorCount) {
      throw Error(ErrorCode::dimension_out_of_range, "expected 20 channels");
    }
    for (std::size_t c = 0; c < kSensorCount; ++c) {
      for (auto v : x.row(c)) sum[c] += static_cast<double>(v);
      count[c] += static_cast<double>(detail::timesteps_of(x));
    }
  }
  NormStats stats;
  stats.mode = mode;
  if (mode == NormMode::global) {
    const double m = std::accumulate(sum.begin(), sum.end(), 0.0) / std::accumulate(count.begin(), count.end(), 0.0);
    stats.mean.fill(m);
  } else {
    for (std::size_t c = 0; c < kSensorCount; ++c) stats.mean[c] = sum[c] / count[c];
  }
  std::array<double, kSensorCount> sq{};
  for (const auto& x : train) {
    for (std::size_t c = 0; c < kSensorCount; ++c) {
      for (auto v : x.row(c)) {
        const double d = static_cast<double>(v) - stats.mean[c];
        sq[c] += d * d;
      }
    }
  }
  if (mode == NormMode::global) {
    const double sd = std::sqrt(std::accumulate(sq.begin(), sq.end(), 0.0) /
                                std::accumulate(count.begin(), count.end(), 0.0));
    stats.stddev.fill(std::max(sd, kStdFloor));
  } else {
    for (std::size_t c = 0; c < kSensorCount; ++c) stats.stddev[c] = std::max(std::sqrt(sq[c] / count[c]), kStdFloor);
  }
  return stats;
}

inline NormStats fit_norm(const std::vector<RealMatrix>& train, NormMode mode = NormMode::per_channel) {
  return fit_norm(std::span<const RealMatrix>(train), mode);
}

template <class Matrix>
RealMatrix apply_norm(const NormStats& stats, const Matrix& x) {
  const std::size_t channels = detail::channels_of(x);
  const std::size_t timesteps = detail::timesteps_of(x);
  if (channels != kSensorCount) throw Error(ErrorCode::dimension_out_of_range, "expected 20 channels");
  RealMatrix out(channels, timesteps);
  for (std::size_t c = 0; c < channels; ++c) {
    const auto in = x.row(c);
    auto dst = out.row(c);
    const double mean = stats.mean[c];
    const double inv_sd = 1.0 / stats.stddev[c];
    for (std::size_t t = 0; t < timesteps; ++t) dst[t] = (static_cast<double>(in[t]) - mean) * inv_sd;
  }
  return out;
}

inline void to_json(nlohmann::json& j, const NormStats& s) {
  j = {{"mode", s.mode == NormMode::global ? "global" : "per_channel"}, {"mean", s.mean}, {"stddev", s.stddev}};
}

inline void from_json(const nlohmann::json& j, NormStats& s) {
  s.mode = j.at("mode").get<std::string>() == "global" ? NormMode::global : NormMode::per_channel;
  s.mean = j.at("mean").get<std::array<double, kSensorCount>>();
  s.stddev = j.at("stddev").get<std::array<double, kSensorCount>>();
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

namespace detail {
inline void check_pair(std::span<const double> y, std::span<const double> yhat) {
  if (y.size() != yhat.size()) throw Error(ErrorCode::length_mismatch, "metric inputs differ in length");
  if (y.empty()) throw Error(ErrorCode::empty_input, "metric inputs are empty");
}
}  // namespace detail

inline double mse(std::span<const double> y, std::span<const double> yhat) {
  detail::check_pair(y, yhat);
  double acc = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) acc += (y[i] - yhat[i]) * (y[i] - yhat[i]);
  return acc / static_cast<double>(y.size());
}

inline double rmse(std::span<const double> y, std::span<const double> yhat) { return std::sqrt(mse(y, yhat)); }

inline double max_error(std::span<const double> y, std::span<const double> yhat) {
  detail::check_pair(y, yhat);
  double m = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) m = std::max(m, std::abs(y[i] - yhat[i]));
  return m;
}

/// Sample Pearson correlation.
inline double pearson(std::span<const double> y, std::span<const double> yhat) {
  detail::check_pair(y, yhat);
  if (y.size() < 2) throw Error(ErrorCode::undefined_correlation, "correlation needs at least 2 points");
  const double n = static_cast<double>(y.size());
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  const double mh = std::accumulate(yhat.begin(), yhat.end(), 0.0) / n;
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double a = y[i] - my;
    const double b = yhat[i] - mh;
    sxy += a * b;
    sxx += a * a;
    syy += b * b;
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) {
    throw Error(ErrorCode::undefined_correlation, "correlation is undefined for a constant input");
  }
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

struct PredictionRecord {
  std::string reading_id;
  std::string sample_id;
  double truth = 0.0;
  double prediction = 0.0;

  friend bool operator==(const PredictionRecord&, const PredictionRecord&) = default;
};

/// Fraction of predictions inside their sample's closed [min, max] stylus Ra.
inline double coverage(std::span<const PredictionRecord> records, std::span<const SteelSample> samples) {
  if (records.empty()) throw Error(ErrorCode::empty_input, "coverage of an empty record set");
  std::map<std::string, std::pair<double, double>> bounds;
  for (const auto& s : samples) bounds[s.sample_id] = {s.min_ra(), s.max_ra()};
  std::size_t inside = 0;
  for (const auto& r : records) {
    const auto it = bounds.find(r.sample_id);
    if (it == bounds.end()) throw Error(ErrorCode::unknown_sample, "unknown sample_id '" + r.sample_id + "'");
    if (r.prediction >= it->second.first && r.prediction <= it->second.second) ++inside;
  }
  return static_cast<double>(inside) / static_cast<double>(records.size());
}

struct EvalReport {
  double rmse = 0.0;
  double mse = 0.0;
  double pearson_r = 0.0;
  double max_error = 0.0;
  double pred_coverage = 0.0;
  std::vector<PredictionRecord> records;

  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

/// Computes the metric block over records. Correlation is reported as NaN
/// when undefined (constant predictions).
inline EvalReport make_report(std::vector<PredictionRecord> records, std::span<const SteelSample> samples) {
  EvalReport report;
  std::vector<double> y(records.size());
  std::vector<double> yhat(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    y[i] = records[i].truth;
    yhat[i] = records[i].prediction;
  }
  report.mse = mse(y, yhat);
  report.rmse = std::sqrt(report.mse);
  report.max_error = max_error(y, yhat);
  try {
    report.pearson_r = pearson(y, yhat);
  } catch (const Error&) {
    report.pearson_r = std::numeric_limits<double>::quiet_NaN();
  }
  report.pred_coverage = coverage(records, samples);
  report.records = std::move(records);
  return report;
}

// ---------------------------------------------------------------------------
// Receptive field of a stacked dilated-convolution network
// ---------------------------------------------------------------------------

/// 2 * sum_{i < layers} (kernel_size - 1) * base^i : two convolutions per
/// block, dilation growing geometrically.
inline std::uint64_t tcn_receptive_field(std::uint64_t kernel_size, std::uint64_t layers,
                                         std::uint64_t dilation_base = 2) {
  if (kernel_size < 2) throw Error(ErrorCode::invalid_argument, "kernel size must be >= 2");
  if (layers < 1) throw Error(ErrorCode::invalid_argument, "layer count must be >= 1");
  if (dilation_base < 1) throw Error(ErrorCode::invalid_argument, "dilation base must be >= 1");
  std::uint64_t total = 0;
  std::uint64_t d = 1;
  for (std::uint64_t i = 0; i < layers; ++i) {
    const std::uint64_t term = (kernel_size - 1) * d;
    if (term / d != kernel_size - 1 || total + term < total) {
      throw Error(ErrorCode::invalid_argument, "receptive field overflows 64 bits");
    }
    total += term;
    if (i + 1 < layers) {
      if (d > std::numeric_limits<std::uint64_t>::max() / dilation_base) {
        throw Error(ErrorCode::invalid_argument, "receptive field overflows 64 bits");
      }
      d *= dilation_base;
    }
  }
  if (total > std::numeric_limits<std::uint64_t>::max() / 2) {
    throw Error(ErrorCode::invalid_argument, "receptive field overflows 64 bits");
  }
  return 2 * total;
}

}  // namespace scatter_ra
