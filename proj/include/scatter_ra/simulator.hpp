#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "baseline.hpp"
#include "core_data.hpp"
#include "error.hpp"
#include "fft.hpp"
#include "parallel.hpp"
#include "rng.hpp"

namespace scatter_ra {

struct Waviness {
  double amplitude_um = 0.0;
  double wavelength_um = 0.0;
};

struct SurfaceSpec {
  double target_ra = 1.0;        // um, Ra of the band-limited component
  double lambda_min_um = 20.0;   // roughness band
  double lambda_max_um = 78.0;
  std::optional<Waviness> waviness;
  std::size_t length_steps = 4096;
  double step_um = kDefaultStepUm;
  // Amplitude of bin k goes as k^-spectral_exponent; 1 gives a flat slope spectrum.
  double spectral_exponent = 1.0;
};

struct ScatterSpec {
  double lobe_sigma_deg = 8.0;
  double peak_intensity = 200.0;
  double dropout_rate = 0.0;
  double noise_sigma = 0.0;
};

inline void validate(const SurfaceSpec& spec) {
  if (!(spec.target_ra > 0.0)) throw Error(ErrorCode::invalid_argument, "target_ra must be > 0");
  if (spec.length_steps < 2) throw Error(ErrorCode::invalid_argument, "length_steps must be >= 2");
  if (!(spec.step_um > 0.0)) throw Error(ErrorCode::invalid_argument, "step_um must be > 0");
  if (spec.lambda_min_um < 2.0 * spec.step_um) {
    throw Error(ErrorCode::invalid_argument, "lambda_min below the Nyquist wavelength 2*step");
  }
  if (!(spec.lambda_max_um >= spec.lambda_min_um)) {
    throw Error(ErrorCode::invalid_argument, "lambda_max must be >= lambda_min");
  }
  if (!(spec.lambda_max_um < kDefaultCutoffUm)) {
    throw Error(ErrorCode::invalid_argument, "roughness band must lie below the 80 um waviness cutoff");
  }
  if (spec.waviness && !(spec.waviness->wavelength_um > 0.0)) {
    throw Error(ErrorCode::invalid_argument, "waviness wavelength must be > 0");
  }
}

inline void validate(const ScatterSpec& spec) {
  if (!(spec.lobe_sigma_deg > 0.0)) throw Error(ErrorCode::invalid_argument, "lobe_sigma_deg must be > 0");
  if (!(spec.peak_intensity > 0.0 && spec.peak_intensity <= 255.0)) {
    throw Error(ErrorCode::invalid_argument, "peak_intensity must be in (0, 255]");
  }
  if (!(spec.dropout_rate >= 0.0 && spec.dropout_rate <= 1.0)) {
    throw Error(ErrorCode::invalid_argument, "dropout_rate must be in [0, 1]");
  }
  if (!(spec.noise_sigma >= 0.0)) throw Error(ErrorCode::invalid_argument, "noise_sigma must be >= 0");
}

/// Random-phase spectral synthesis. The band-limited part is rescaled to Ra =
/// target_ra; the optional waviness sinusoid is added afterwards, so the
/// roughness part for a given seed does not depend on the waviness setting.
inline SurfaceProfile synthesize_surface(const SurfaceSpec& spec, std::uint64_t seed) {
  validate(spec);
  const std::size_t n = spec.length_steps;
  const double extent = static_cast<double>(n) * spec.step_um;

  std::vector<std::size_t> bins;
  for (std::size_t k = 1; k <= n / 2; ++k) {
    const double lambda = extent / static_cast<double>(k);
    if (lambda >= spec.lambda_min_um && lambda <= spec.lambda_max_um) bins.push_back(k);
  }
  if (bins.empty()) {
    throw Error(ErrorCode::infeasible_band,
                "no DFT bin of a " + std::to_string(n) + "-step profile falls in the roughness band");
  }

  Rng rng(seed);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);

  fft::RealTransform tr(n);
  auto spectrum = tr.spectrum();
  std::ranges::fill(spectrum, std::complex<double>(0.0, 0.0));
  for (std::size_t k : bins) {
    const double amp = std::pow(static_cast<double>(k), -spec.spectral_exponent);
    const double phi = phase(rng);
    // inverse() divides by n; a cosine of amplitude amp needs amp*n/2 in bin k
    // (amp*n in the Nyquist bin, which is real).
    const double mag = (2 * k == n) ? amp * static_cast<double>(n) : amp * static_cast<double>(n) / 2.0;
    spectrum[k] = std::polar(mag, phi);
    if (2 * k == n) spectrum[k] = mag * std::cos(phi);
  }
  tr.inverse();

  SurfaceProfile profile;
  profile.step_um = spec.step_um;
  profile.heights.assign(tr.real().begin(), tr.real().end());
  const double scale = spec.target_ra / ra(std::span<const double>(profile.heights));
  for (double& h : profile.heights) h *= scale;

  if (spec.waviness) {
    const double phi = phase(rng);
    const double w = 2.0 * std::numbers::pi / spec.waviness->wavelength_um;
    for (std::size_t j = 0; j < n; ++j) {
      profile.heights[j] +=
          spec.waviness->amplitude_um * std::sin(w * static_cast<double>(j) * spec.step_um + phi);
    }
  }
  return profile;
}

struct ScatterResult {
  LaserReading reading;
  std::size_t out_of_arc_columns = 0;  // reflected angle beyond the last sensor + 3 sigma
};

/// Simulates the sensor array over a profile: forward-difference slope,
/// reflection at twice the surface angle, a Gaussian lobe sampled at each
/// sensor, additive noise, quantisation and whole-column dropout.
inline ScatterResult forward_scatter(const SurfaceProfile& profile, const SensorGeometry& geom,
                                     const ScatterSpec& spec, std::uint64_t seed,
                                     std::string reading_id = {}) {
  validate(spec);
  const std::size_t n = profile.heights.size();
  if (n == 0) throw Error(ErrorCode::empty_input, "cannot scatter an empty profile");
  if (!profile.is_finite()) throw Error(ErrorCode::non_finite, "profile contains non-finite heights");

  Rng rng(seed);
  std::normal_distribution<double> noise(0.0, spec.noise_sigma > 0.0 ? spec.noise_sigma : 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const double arc_limit = geom.angles_deg.back() + 3.0 * spec.lobe_sigma_deg;
  const double inv_two_var = 1.0 / (2.0 * spec.lobe_sigma_deg * spec.lobe_sigma_deg);

  ScatterResult result;
  std::vector<std::uint8_t> data(kSensorCount * n, 0);
  double slope = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    if (j + 1 < n) slope = (profile.heights[j + 1] - profile.heights[j]) / profile.step_um;
    const double reflected = 2.0 * rad_to_deg(std::atan(slope));
    if (std::abs(reflected) > arc_limit) ++result.out_of_arc_columns;
    for (std::size_t i = 0; i < kSensorCount; ++i) {
      const double d = geom.angles_deg[i] - reflected;
      double v = spec.peak_intensity * std::exp(-d * d * inv_two_var);
      if (spec.noise_sigma > 0.0) v += noise(rng);
      data[i * n + j] = static_cast<std::uint8_t>(std::clamp(std::round(v), 0.0, 255.0));
    }
    if (spec.dropout_rate > 0.0 && unit(rng) < spec.dropout_rate) {
      for (std::size_t i = 0; i < kSensorCount; ++i) data[i * n + j] = 0;
    }
  }
  result.reading = LaserReading(std::move(reading_id), n, std::move(data), profile.step_um);
  return result;
}

// ---------------------------------------------------------------------------
// Dataset generation
// ---------------------------------------------------------------------------

/// `samples` steel samples that each carry `readings` laser readings.
struct CountGroup {
  std::size_t samples = 0;
  std::size_t readings = 0;
};

/// Readings-per-sample distribution of the reference 49-sample collection.
inline std::vector<CountGroup> reference_count_groups() {
  return {{4, 5}, {24, 10}, {1, 23}, {2, 24}, {13, 25}, {3, 26}};
}

struct DatasetConfig {
  std::vector<CountGroup> count_groups = reference_count_groups();
  // When set, overrides the sample count; per-sample reading counts are then
  // taken cyclically from the expanded count_groups list.
  std::optional<std::size_t> samples;
  std::optional<std::size_t> readings_per_sample;
  std::size_t other_coating_samples = 3;
  std::size_t timesteps = 4096;
  double step_um = kDefaultStepUm;
  double ra_min = 0.5;
  double ra_max = 2.5;
  std::size_t stylus_tracks = 6;
  double track_jitter = 0.05;  // relative sd of per-track Ra around the nominal
  std::size_t stylus_length_steps = 4096;
  double lambda_min_um = 20.0;
  double lambda_max_um = 78.0;
  double spectral_exponent = 1.0;
  double waviness_amplitude_min_um = 1.0;
  double waviness_amplitude_max_um = 5.0;
  double waviness_wavelength_min_um = 300.0;
  double waviness_wavelength_max_um = 800.0;
  ScatterSpec galvanized{8.0, 200.0, 0.02, 2.0};
  ScatterSpec other{11.0, 150.0, 0.05, 3.0};
};

inline std::vector<std::size_t> readings_per_sample_plan(const DatasetConfig& config) {
  std::vector<std::size_t> expanded;
  for (const auto& g : config.count_groups) expanded.insert(expanded.end(), g.samples, g.readings);
  if (expanded.empty()) throw Error(ErrorCode::invalid_argument, "count_groups is empty");
  const std::size_t n = config.samples.value_or(expanded.size());
  std::vector<std::size_t> plan(n);
  for (std::size_t i = 0; i < n; ++i) {
    plan[i] = config.readings_per_sample.value_or(expanded[i % expanded.size()]);
  }
  return plan;
}

inline void validate(const DatasetConfig& c) {
  if (c.samples && *c.samples == 0) throw Error(ErrorCode::invalid_argument, "samples must be > 0");
  if (c.readings_per_sample && *c.readings_per_sample == 0) {
    throw Error(ErrorCode::invalid_argument, "readings_per_sample must be > 0");
  }
  if (c.timesteps < 16) throw Error(ErrorCode::invalid_argument, "timesteps must be >= 16");
  if (!(c.ra_min > 0.0 && c.ra_max >= c.ra_min)) {
    throw Error(ErrorCode::invalid_argument, "Ra range must satisfy 0 < ra_min <= ra_max");
  }
  if (c.stylus_tracks == 0) throw Error(ErrorCode::invalid_argument, "stylus_tracks must be > 0");
  if (!(c.track_jitter >= 0.0 && c.track_jitter < 0.5)) {
    throw Error(ErrorCode::invalid_argument, "track_jitter must be in [0, 0.5)");
  }
  if (c.waviness_amplitude_max_um < c.waviness_amplitude_min_um ||
      c.waviness_wavelength_max_um < c.waviness_wavelength_min_um) {
    throw Error(ErrorCode::invalid_argument, "waviness ranges must have min <= max");
  }
  validate(c.galvanized);
  validate(c.other);
  const std::size_t n = readings_per_sample_plan(c).size();
  if (c.other_coating_samples > n) {
    throw Error(ErrorCode::invalid_argument, "other_coating_samples exceeds the sample count");
  }
}

namespace detail {

inline constexpr std::uint64_t kStylusStream = 1;
inline constexpr std::uint64_t kLaserStream = 2;

struct TrackPlan {
  SurfaceSpec surface;
  std::uint64_t surface_seed = 0;
  std::uint64_t scatter_seed = 0;
};

inline TrackPlan plan_track(const DatasetConfig& c, double nominal_ra, std::size_t length,
                            std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> jitter(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  TrackPlan plan;
  plan.surface.target_ra = nominal_ra * std::max(0.05, 1.0 + c.track_jitter * jitter(rng));
  plan.surface.lambda_min_um = c.lambda_min_um;
  plan.surface.lambda_max_um = c.lambda_max_um;
  plan.surface.spectral_exponent = c.spectral_exponent;
  plan.surface.length_steps = length;
  plan.surface.step_um = c.step_um;
  const double amp = c.waviness_amplitude_min_um +
                     unit(rng) * (c.waviness_amplitude_max_um - c.waviness_amplitude_min_um);
  const double wl = c.waviness_wavelength_min_um +
                    unit(rng) * (c.waviness_wavelength_max_um - c.waviness_wavelength_min_um);
  if (amp > 0.0) plan.surface.waviness = Waviness{amp, wl};
  plan.surface_seed = rng();
  plan.scatter_seed = rng();
  return plan;
}

}  // namespace detail

inline std::string sample_id_for(std::size_t index) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "S%03zu", index + 1);
  return buf;
}

/// Generates a synthetic collection of steel samples. Each sample gets a
/// nominal Ra; stylus tracks and laser tracks are independent surface
/// realisations around it, so no laser track corresponds to a stylus track.
/// Every random stream is derived from (seed, sample, track), which makes the
/// result independent of `jobs`.
inline Dataset generate_dataset(const DatasetConfig& config, std::uint64_t seed, std::size_t jobs = 1) {
  validate(config);
  const auto counts = readings_per_sample_plan(config);
  const std::size_t n_samples = counts.size();

  Rng rng(derive_seed(seed, {0}));
  std::uniform_real_distribution<double> nominal(config.ra_min, config.ra_max);
  std::vector<double> nominal_ra(n_samples);
  for (double& v : nominal_ra) v = nominal(rng);

  std::vector<std::size_t> order(n_samples);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<Coating> coating(n_samples, Coating::galvanized);
  for (std::size_t i = 0; i < config.other_coating_samples; ++i) coating[order[i]] = Coating::other;

  struct Job {
    std::size_t sample;
    std::uint64_t stream;
    std::size_t track;
  };
  std::vector<Job> jobs_list;
  for (std::size_t s = 0; s < n_samples; ++s) {
    for (std::size_t t = 0; t < config.stylus_tracks; ++t) jobs_list.push_back({s, detail::kStylusStream, t});
    for (std::size_t t = 0; t < counts[s]; ++t) jobs_list.push_back({s, detail::kLaserStream, t});
  }

  Dataset ds;
  ds.seed = seed;
  ds.step_um = config.step_um;
  ds.samples.resize(n_samples);
  for (std::size_t s = 0; s < n_samples; ++s) {
    ds.samples[s].sample_id = sample_id_for(s);
    ds.samples[s].coating = coating[s];
    ds.samples[s].stylus_ra.resize(config.stylus_tracks);
    ds.samples[s].readings.resize(counts[s]);
  }

  const auto geom = build_sensor_geometry();
  parallel_for(jobs_list.size(), jobs, [&](std::size_t i) {
    const Job& job = jobs_list[i];
    auto& sample = ds.samples[job.sample];
    const bool stylus = job.stream == detail::kStylusStream;
    const auto plan = detail::plan_track(
        config, nominal_ra[job.sample], stylus ? config.stylus_length_steps : config.timesteps,
        derive_seed(seed, {1, job.sample, job.stream, job.track}));
    const auto surface = synthesize_surface(plan.surface, plan.surface_seed);
    if (stylus) {
      sample.stylus_ra[job.track] = ra(highpass_roughness(surface));
    } else {
      char id[48];
      std::snprintf(id, sizeof(id), "%s_L%02zu", sample.sample_id.c_str(), job.track + 1);
      const auto& scatter = sample.coating == Coating::galvanized ? config.galvanized : config.other;
      sample.readings[job.track] = forward_scatter(surface, geom, scatter, plan.scatter_seed, id).reading;
    }
  });
  return ds;
}

// ---------------------------------------------------------------------------
// JSON config (field names mirror the structs)
// ---------------------------------------------------------------------------

inline void from_json(const nlohmann::json& j, ScatterSpec& s) {
  s.lobe_sigma_deg = j.value("lobe_sigma_deg", s.lobe_sigma_deg);
  s.peak_intensity = j.value("peak_intensity", s.peak_intensity);
  s.dropout_rate = j.value("dropout_rate", s.dropout_rate);
  s.noise_sigma = j.value("noise_sigma", s.noise_sigma);
}

inline void to_json(nlohmann::json& j, const ScatterSpec& s) {
  j = {{"lobe_sigma_deg", s.lobe_sigma_deg},
       {"peak_intensity", s.peak_intensity},
       {"dropout_rate", s.dropout_rate},
       {"noise_sigma", s.noise_sigma}};
}

inline void from_json(const nlohmann::json& j, DatasetConfig& c) {
  if (j.contains("count_groups")) {
    c.count_groups.clear();
    for (const auto& g : j.at("count_groups")) {
      c.count_groups.push_back({g.at("samples").get<std::size_t>(), g.at("readings").get<std::size_t>()});
    }
  }
  if (j.contains("samples")) c.samples = j.at("samples").get<std::size_t>();
  if (j.contains("readings_per_sample")) c.readings_per_sample = j.at("readings_per_sample").get<std::size_t>();
  c.other_coating_samples = j.value("other_coating_samples", c.other_coating_samples);
  c.timesteps = j.value("timesteps", c.timesteps);
  c.step_um = j.value("step_um", c.step_um);
  c.ra_min = j.value("ra_min", c.ra_min);
  c.ra_max = j.value("ra_max", c.ra_max);
  c.stylus_tracks = j.value("stylus_tracks", c.stylus_tracks);
  c.track_jitter = j.value("track_jitter", c.track_jitter);
  c.stylus_length_steps = j.value("stylus_length_steps", c.stylus_length_steps);
  c.lambda_min_um = j.value("lambda_min_um", c.lambda_min_um);
  c.lambda_max_um = j.value("lambda_max_um", c.lambda_max_um);
  c.spectral_exponent = j.value("spectral_exponent", c.spectral_exponent);
  c.waviness_amplitude_min_um = j.value("waviness_amplitude_min_um", c.waviness_amplitude_min_um);
  c.waviness_amplitude_max_um = j.value("waviness_amplitude_max_um", c.waviness_amplitude_max_um);
  c.waviness_wavelength_min_um = j.value("waviness_wavelength_min_um", c.waviness_wavelength_min_um);
  c.waviness_wavelength_max_um = j.value("waviness_wavelength_max_um", c.waviness_wavelength_max_um);
  if (j.contains("galvanized")) from_json(j.at("galvanized"), c.galvanized);
  if (j.contains("other")) from_json(j.at("other"), c.other);
}

inline void to_json(nlohmann::json& j, const DatasetConfig& c) {
  nlohmann::json groups = nlohmann::json::array();
  for (const auto& g : c.count_groups) groups.push_back({{"samples", g.samples}, {"readings", g.readings}});
  j = {{"count_groups", groups},
       {"other_coating_samples", c.other_coating_samples},
       {"timesteps", c.timesteps},
       {"step_um", c.step_um},
       {"ra_min", c.ra_min},
       {"ra_max", c.ra_max},
       {"stylus_tracks", c.stylus_tracks},
       {"track_jitter", c.track_jitter},
       {"stylus_length_steps", c.stylus_length_steps},
       {"lambda_min_um", c.lambda_min_um},
       {"lambda_max_um", c.lambda_max_um},
       {"spectral_exponent", c.spectral_exponent},
       {"waviness_amplitude_min_um", c.waviness_amplitude_min_um},
       {"waviness_amplitude_max_um", c.waviness_amplitude_max_um},
       {"waviness_wavelength_min_um", c.waviness_wavelength_min_um},
       {"waviness_wavelength_max_um", c.waviness_wavelength_max_um},
       {"galvanized", c.galvanized},
       {"other", c.other}};
  if (c.samples) j["samples"] = *c.samples;
  if (c.readings_per_sample) j["readings_per_sample"] = *c.readings_per_sample;
}

}  // namespace scatter_ra
