#pragma once

#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "baseline.hpp"
#include "core_data.hpp"
#include "error.hpp"
#include "evaluation.hpp"
#include "minirocket.hpp"
#include "parallel.hpp"
#include "ridge.hpp"
#include "rng.hpp"
#include "rocket.hpp"

namespace scatter_ra {

enum class Method { baseline, baseline_calibrated, rocket_ridge, minirocket_ridge };

inline std::string to_string(Method m) {
  switch (m) {
    case Method::baseline: return "baseline";
    case Method::baseline_calibrated: return "baseline_calibrated";
    case Method::rocket_ridge: return "rocket_ridge";
    case Method::minirocket_ridge: return "minirocket_ridge";
  }
  return "unknown";
}

inline Method parse_method(const std::string& s) {
  if (s == "baseline") return Method::baseline;
  if (s == "baseline_calibrated" || s == "calibrated") return Method::baseline_calibrated;
  if (s == "rocket" || s == "rocket_ridge") return Method::rocket_ridge;
  if (s == "minirocket" || s == "minirocket_ridge") return Method::minirocket_ridge;
  throw Error(ErrorCode::invalid_argument,
              "unknown method '" + s + "' (expected baseline, baseline_calibrated, rocket, minirocket)");
}

inline bool uses_features(Method m) { return m == Method::rocket_ridge || m == Method::minirocket_ridge; }

struct ExperimentConfig {
  BaselineParams baseline;
  std::size_t rocket_kernels = kRocketDefaultKernels;
  MiniRocketConfig minirocket;
  std::vector<double> lambda_grid = default_lambda_grid();
  std::uint64_t extractor_seed = 0;
  NormMode norm_mode = NormMode::per_channel;
  std::size_t jobs = 1;
};

inline void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  j = {{"theta", c.baseline.theta},
       {"cutoff_um", c.baseline.cutoff_um},
       {"rocket_kernels", c.rocket_kernels},
       {"minirocket_num_features", c.minirocket.num_features},
       {"minirocket_max_dilations_per_kernel", c.minirocket.max_dilations_per_kernel},
       {"lambda_grid", c.lambda_grid},
       {"extractor_seed", c.extractor_seed},
       {"norm_mode", c.norm_mode == NormMode::global ? "global" : "per_channel"}};
}

inline void from_json(const nlohmann::json& j, ExperimentConfig& c) {
  c.baseline.theta = j.value("theta", c.baseline.theta);
  c.baseline.cutoff_um = j.value("cutoff_um", c.baseline.cutoff_um);
  c.rocket_kernels = j.value("rocket_kernels", c.rocket_kernels);
  c.minirocket.num_features = j.value("minirocket_num_features", c.minirocket.num_features);
  c.minirocket.max_dilations_per_kernel =
      j.value("minirocket_max_dilations_per_kernel", c.minirocket.max_dilations_per_kernel);
  c.lambda_grid = j.value("lambda_grid", c.lambda_grid);
  c.extractor_seed = j.value("extractor_seed", c.extractor_seed);
  if (j.contains("norm_mode")) {
    const auto mode = j.at("norm_mode").get<std::string>();
    if (mode == "global") {
      c.norm_mode = NormMode::global;
    } else if (mode == "per_channel") {
      c.norm_mode = NormMode::per_channel;
    } else {
      throw Error(ErrorCode::invalid_argument, "norm_mode must be per_channel or global");
    }
  }
}

/// Extractor seed used when none is given: a fixed child of the run seed.
inline std::uint64_t default_extractor_seed(std::uint64_t run_seed) { return derive_seed(run_seed, {0x6b65726eULL}); }

// ---------------------------------------------------------------------------
// Per-dataset cache shared by all folds of a run
// ---------------------------------------------------------------------------

class ExperimentContext {
 public:
  ExperimentContext(const Dataset& ds, ExperimentConfig config) : ds_(ds), config_(std::move(config)) {
    refs_ = flatten(ds_);
    for (std::size_t i = 0; i < refs_.size(); ++i) {
      const auto& r = reading(i);
      if (!index_.emplace(r.id(), i).second) {
        throw Error(ErrorCode::manifest_mismatch, "duplicate reading id '" + r.id() + "'");
      }
    }
    labels_.resize(refs_.size());
    for (std::size_t i = 0; i < refs_.size(); ++i) labels_[i] = mean_ra_label(ds_.samples[refs_[i].sample]);
  }

  [[nodiscard]] const Dataset& dataset() const noexcept { return ds_; }
  [[nodiscard]] const ExperimentConfig& config() const noexcept { return config_; }
  [[nodiscard]] std::size_t size() const noexcept { return refs_.size(); }
  [[nodiscard]] const LaserReading& reading(std::size_t i) const {
    return ds_.samples[refs_[i].sample].readings[refs_[i].reading];
  }
  [[nodiscard]] const SteelSample& sample_of(std::size_t i) const { return ds_.samples[refs_[i].sample]; }
  [[nodiscard]] double label(std::size_t i) const { return labels_[i]; }

  [[nodiscard]] std::vector<std::size_t> indices(const std::vector<std::string>& ids) const {
    std::vector<std::size_t> out;
    out.reserve(ids.size());
    for (const auto& id : ids) {
      const auto it = index_.find(id);
      if (it == index_.end()) throw Error(ErrorCode::plan_mismatch, "plan names unknown reading '" + id + "'");
      out.push_back(it->second);
    }
    return out;
  }

  /// Thresholded 8-bit readings, computed once.
  const std::vector<LaserReading>& thresholded() {
    if (thresholded_.empty() && !refs_.empty()) {
      std::vector<LaserReading> out(refs_.size());
      run_per_reading(refs_.size(), [&](std::size_t i) { out[i] = threshold_counts(reading(i), config_.baseline.theta); });
      thresholded_ = std::move(out);
    }
    return thresholded_;
  }

  /// Uncalibrated baseline Ra per reading, computed once.
  const std::vector<double>& baseline_values() {
    if (baseline_.empty() && !refs_.empty()) {
      std::vector<double> out(refs_.size());
      const auto geom = build_sensor_geometry();
      run_per_reading(refs_.size(), [&](std::size_t i) { out[i] = baseline_ra(reading(i), config_.baseline, geom); });
      baseline_ = std::move(out);
    }
    return baseline_;
  }

  /// Runs fn over [0, n) with the configured job count, prefixing any error
  /// with the reading id it concerns.
  template <class Fn>
  void run_per_reading(std::size_t n, Fn&& fn, const std::vector<std::size_t>* map = nullptr) const {
    parallel_for(n, config_.jobs, [&](std::size_t k) {
      const std::size_t i = map ? (*map)[k] : k;
      try {
        fn(k);
      } catch (const Error& e) {
        throw Error(e.code(), "reading '" + reading(i).id() + "': " + e.what());
      }
    });
  }

 private:
  const Dataset& ds_;
  ExperimentConfig config_;
  std::vector<ReadingRef> refs_;
  std::map<std::string, std::size_t> index_;
  std::vector<double> labels_;
  std::vector<LaserReading> thresholded_;
  std::vector<double> baseline_;
};

// ---------------------------------------------------------------------------
// Trained models
// ---------------------------------------------------------------------------

struct TrainedModel {
  Method method = Method::baseline;
  BaselineParams baseline;
  SplitPlan plan;
  std::uint64_t dataset_seed = 0;
  std::optional<AffineCalibration> calibration;
  // feature methods
  std::uint64_t extractor_seed = 0;
  std::size_t input_length = 0;
  std::size_t rocket_kernels = 0;
  std::optional<MiniRocketParams> minirocket;
  NormStats norm;
  std::optional<RidgeModel> ridge;
};

inline nlohmann::json extractor_json(const TrainedModel& m) {
  nlohmann::json j;
  if (m.method == Method::rocket_ridge) {
    j = {{"kind", "rocket"}, {"seed", m.extractor_seed}, {"input_length", m.input_length}, {"kernels", m.rocket_kernels},
         {"channels", kSensorCount}};
  } else if (m.method == Method::minirocket_ridge && m.minirocket) {
    const auto& p = *m.minirocket;
    j = {{"kind", "minirocket"},
         {"seed", p.seed},
         {"input_length", p.input_length},
         {"channels", p.channel_count},
         {"dilations", p.dilations},
         {"features_per_dilation", p.features_per_dilation},
         {"channel_subsets", p.channel_subsets},
         {"biases", p.biases}};
  }
  return j;
}

/// FNV-1a 64 over the compact extractor JSON, as 16 hex digits.
inline std::string extractor_fingerprint(const nlohmann::json& extractor) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : extractor.dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace detail {

struct FeatureExtractor {
  std::optional<KernelBank> rocket;
  const MiniRocketParams* minirocket = nullptr;

  [[nodiscard]] std::size_t width() const {
    return rocket ? rocket->feature_count() : minirocket->feature_count();
  }
  [[nodiscard]] std::vector<double> operator()(const RealMatrix& x) const {
    return rocket ? rocket_transform(x, *rocket) : minirocket_transform(x, *minirocket);
  }
};

inline FeatureExtractor make_extractor(const TrainedModel& m) {
  FeatureExtractor fx;
  if (m.method == Method::rocket_ridge) {
    fx.rocket = generate_rocket_kernels(m.extractor_seed, m.rocket_kernels, m.input_length, kSensorCount);
  } else {
    fx.minirocket = &*m.minirocket;
  }
  return fx;
}

inline FeatureMatrix extract_features(ExperimentContext& ctx, const TrainedModel& m, const FeatureExtractor& fx,
                                      const std::vector<std::size_t>& rows) {
  const auto& thr = ctx.thresholded();
  FeatureMatrix f(rows.size(), fx.width());
  ctx.run_per_reading(
      rows.size(),
      [&](std::size_t k) {
        const auto features = fx(apply_norm(m.norm, thr[rows[k]]));
        std::ranges::copy(features, f.row(k).begin());
      },
      &rows);
  return f;
}

}  // namespace detail

/// Fits the chosen method on the plan's training readings.
inline TrainedModel train_model(ExperimentContext& ctx, const SplitPlan& plan, Method method) {
  const auto& config = ctx.config();
  validate_plan(plan, ctx.dataset());
  const auto train = ctx.indices(plan.train_ids);
  if (train.empty()) throw Error(ErrorCode::empty_input, "plan has no training readings");

  TrainedModel m;
  m.method = method;
  m.baseline = config.baseline;
  m.plan = plan;
  m.dataset_seed = ctx.dataset().seed;

  if (method == Method::baseline) return m;

  std::vector<double> y(train.size());
  for (std::size_t k = 0; k < train.size(); ++k) y[k] = ctx.label(train[k]);

  if (method == Method::baseline_calibrated) {
    const auto& base = ctx.baseline_values();
    std::vector<double> x(train.size());
    for (std::size_t k = 0; k < train.size(); ++k) x[k] = base[train[k]];
    m.calibration = fit_affine_calibration(x, y);
    return m;
  }

  const auto& thr = ctx.thresholded();
  std::vector<LaserReading> train_thr;
  train_thr.reserve(train.size());
  for (auto i : train) train_thr.push_back(thr[i]);
  m.norm = fit_norm(std::span<const LaserReading>(train_thr), config.norm_mode);
  train_thr.clear();
  m.extractor_seed = config.extractor_seed;
  m.input_length = thr[train.front()].timesteps();

  if (method == Method::rocket_ridge) {
    m.rocket_kernels = config.rocket_kernels;
  } else {
    std::vector<RealMatrix> normalized;
    // MiniRocket draws bias examples from the training readings only; the
    // normalised copies are held just for the fit.
    normalized.reserve(train.size());
    for (auto i : train) normalized.push_back(apply_norm(m.norm, thr[i]));
    m.minirocket = minirocket_fit(normalized, config.extractor_seed, config.minirocket);
  }

  const auto fx = detail::make_extractor(m);
  const auto features = detail::extract_features(ctx, m, fx, train);
  m.ridge = ridge_fit(features, y, config.lambda_grid);
  return m;
}

/// Predicts Ra for the given reading indices.
inline std::vector<double> predict(ExperimentContext& ctx, const TrainedModel& m, const std::vector<std::size_t>& rows) {
  std::vector<double> out(rows.size());
  if (m.method == Method::baseline || m.method == Method::baseline_calibrated) {
    const auto& base = ctx.baseline_values();
    for (std::size_t k = 0; k < rows.size(); ++k) {
      out[k] = m.calibration ? m.calibration->apply(base[rows[k]]) : base[rows[k]];
    }
    return out;
  }
  const auto fx = detail::make_extractor(m);
  const auto features = detail::extract_features(ctx, m, fx, rows);
  return ridge_predict(*m.ridge, features);
}

inline std::vector<PredictionRecord> predict_records(ExperimentContext& ctx, const TrainedModel& m,
                                                     const std::vector<std::string>& ids) {
  const auto rows = ctx.indices(ids);
  const auto pred = predict(ctx, m, rows);
  std::vector<PredictionRecord> records(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    records[k] = {ctx.reading(rows[k]).id(), ctx.sample_of(rows[k]).sample_id, ctx.label(rows[k]), pred[k]};
  }
  return records;
}

/// Trains and evaluates one method under one protocol. For k-fold, one model
/// per steel sample; the report pools every fold's test predictions.
inline EvalReport run_experiment(ExperimentContext& ctx, Protocol protocol, Method method, std::uint64_t seed) {
  std::vector<SplitPlan> plans;
  if (protocol == Protocol::per_sample_20) {
    plans.push_back(split_per_sample_20(ctx.dataset(), seed));
  } else {
    plans = kfold_per_steel(ctx.dataset());
  }
  std::vector<PredictionRecord> records;
  for (const auto& plan : plans) {
    const auto model = train_model(ctx, plan, method);
    auto fold = predict_records(ctx, model, plan.test_ids);
    records.insert(records.end(), fold.begin(), fold.end());
  }
  return make_report(std::move(records), ctx.dataset().samples);
}

inline EvalReport run_experiment(const Dataset& ds, Protocol protocol, Method method, std::uint64_t seed,
                                 const ExperimentConfig& config = {}) {
  ExperimentContext ctx(ds, config);
  return run_experiment(ctx, protocol, method, seed);
}

// ---------------------------------------------------------------------------
// Serialisation
// ---------------------------------------------------------------------------

inline nlohmann::json model_json(const TrainedModel& m) {
  nlohmann::json j = {{"method", to_string(m.method)},
                      {"theta", m.baseline.theta},
                      {"cutoff_um", m.baseline.cutoff_um},
                      {"plan", m.plan},
                      {"dataset_seed", m.dataset_seed}};
  if (m.calibration) j["calibration"] = {{"scale", m.calibration->scale}, {"offset", m.calibration->offset}};
  if (uses_features(m.method)) {
    const auto extractor = extractor_json(m);
    j["extractor"] = extractor;
    j["extractor_fingerprint"] = extractor_fingerprint(extractor);
    j["norm"] = m.norm;
    const auto& r = *m.ridge;
    j["ridge"] = {{"weights", r.weights},
                  {"intercept", r.intercept},
                  {"lambda", r.lambda},
                  {"feature_mean", r.feature_mean},
                  {"feature_scale", r.feature_scale},
                  {"lambda_grid", r.lambda_grid},
                  {"loo_mse", r.loo_mse}};
  }
  return j;
}

inline TrainedModel model_from_json(const nlohmann::json& j) {
  TrainedModel m;
  try {
    m.method = parse_method(j.at("method").get<std::string>());
    m.baseline.theta = j.at("theta").get<std::size_t>();
    m.baseline.cutoff_um = j.at("cutoff_um").get<double>();
    m.plan = j.at("plan").get<SplitPlan>();
    m.dataset_seed = j.at("dataset_seed").get<std::uint64_t>();
    if (j.contains("calibration")) {
      m.calibration = AffineCalibration{j["calibration"].at("scale").get<double>(),
                                        j["calibration"].at("offset").get<double>()};
    }
    if (uses_features(m.method)) {
      const auto& e = j.at("extractor");
      if (extractor_fingerprint(e) != j.at("extractor_fingerprint").get<std::string>()) {
        throw Error(ErrorCode::plan_mismatch, "model extractor does not match its fingerprint");
      }
      m.extractor_seed = e.at("seed").get<std::uint64_t>();
      m.input_length = e.at("input_length").get<std::size_t>();
      if (m.method == Method::rocket_ridge) {
        m.rocket_kernels = e.at("kernels").get<std::size_t>();
      } else {
        MiniRocketParams p;
        p.seed = m.extractor_seed;
        p.input_length = m.input_length;
        p.channel_count = e.at("channels").get<std::size_t>();
        p.dilations = e.at("dilations").get<std::vector<std::size_t>>();
        p.features_per_dilation = e.at("features_per_dilation").get<std::vector<std::size_t>>();
        p.channel_subsets = e.at("channel_subsets").get<std::vector<std::vector<std::uint16_t>>>();
        p.biases = e.at("biases").get<std::vector<double>>();
        m.minirocket = std::move(p);
      }
      m.norm = j.at("norm").get<NormStats>();
      const auto& r = j.at("ridge");
      RidgeModel ridge;
      ridge.weights = r.at("weights").get<std::vector<double>>();
      ridge.intercept = r.at("intercept").get<double>();
      ridge.lambda = r.at("lambda").get<double>();
      ridge.feature_mean = r.at("feature_mean").get<std::vector<double>>();
      ridge.feature_scale = r.at("feature_scale").get<std::vector<double>>();
      ridge.lambda_grid = r.at("lambda_grid").get<std::vector<double>>();
      ridge.loo_mse = r.at("loo_mse").get<std::vector<double>>();
      m.ridge = std::move(ridge);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::invalid_argument, std::string("malformed model file: ") + e.what());
  }
  return m;
}

inline nlohmann::json metrics_json(const EvalReport& r) {
  return {{"rmse", r.rmse}, {"mse", r.mse}, {"pearson_r", r.pearson_r}, {"max_error", r.max_error},
          {"pred_coverage", r.pred_coverage}};
}

inline nlohmann::json report_json(const EvalReport& r) {
  nlohmann::json records = nlohmann::json::array();
  for (const auto& rec : r.records) {
    records.push_back({{"reading_id", rec.reading_id},
                       {"sample_id", rec.sample_id},
                       {"truth", rec.truth},
                       {"prediction", rec.prediction}});
  }
  return {{"metrics", metrics_json(r)}, {"records", records}};
}

/// Scatter-plot table: one row per prediction with the sample's stylus range.
inline void write_records_csv(const EvalReport& r, std::span<const SteelSample> samples, std::ostream& out) {
  std::map<std::string, const SteelSample*> by_id;
  for (const auto& s : samples) by_id[s.sample_id] = &s;
  out << "reading_id,sample_id,truth_ra_um,pred_ra_um,sample_min_ra,sample_max_ra\n";
  char line[256];
  for (const auto& rec : r.records) {
    const auto it = by_id.find(rec.sample_id);
    if (it == by_id.end()) throw Error(ErrorCode::unknown_sample, "unknown sample_id '" + rec.sample_id + "'");
    std::snprintf(line, sizeof(line), ",%.10g,%.10g,%.10g,%.10g\n", rec.truth, rec.prediction, it->second->min_ra(),
                  it->second->max_ra());
    out << rec.reading_id << ',' << rec.sample_id << line;
  }
}

// ---------------------------------------------------------------------------
// Feature matrix files: little-endian f64 payload + JSON sidecar
// ---------------------------------------------------------------------------

inline void write_feature_matrix(const FeatureMatrix& f, const std::filesystem::path& path, const std::string& extractor,
                                 std::uint64_t seed) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io_failure, "cannot open '" + path.string() + "'");
  for (double v : f.values) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    detail::put_le<std::uint64_t>(out, bits);
  }
  std::ofstream side(path.string() + ".json", std::ios::trunc);
  side << nlohmann::json{{"rows", f.rows}, {"cols", f.cols}, {"extractor", extractor}, {"seed", seed}}.dump(2) << '\n';
  if (!out || !side) throw Error(ErrorCode::io_failure, "failed writing feature matrix");
}

inline FeatureMatrix read_feature_matrix(const std::filesystem::path& path) {
  std::ifstream side(path.string() + ".json");
  if (!side) throw Error(ErrorCode::missing_file, "no sidecar for '" + path.string() + "'");
  nlohmann::json meta;
  side >> meta;
  FeatureMatrix f(meta.at("rows").get<std::size_t>(), meta.at("cols").get<std::size_t>());
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::missing_file, "cannot open '" + path.string() + "'");
  std::vector<unsigned char> bytes(f.values.size() * 8);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (static_cast<std::size_t>(in.gcount()) != bytes.size()) {
    throw Error(ErrorCode::truncated_payload, "feature matrix '" + path.string() + "' is truncated");
  }
  for (std::size_t i = 0; i < f.values.size(); ++i) {
    const auto bits = detail::get_le<std::uint64_t>(bytes.data() + 8 * i);
    std::memcpy(&f.values[i], &bits, sizeof(bits));
  }
  return f;
}

}  // namespace scatter_ra
