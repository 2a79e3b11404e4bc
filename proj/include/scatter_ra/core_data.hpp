#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "error.hpp"

namespace scatter_ra {

inline constexpr std::size_t kSensorCount = 20;
inline constexpr double kDefaultStepUm = 0.8;
inline constexpr int kSchemaVersion = 1;

// ---------------------------------------------------------------------------
// Sensor geometry
// ---------------------------------------------------------------------------

/// Angles of the 20 photodiodes in degrees from the laser axis (surface
/// normal), ordered negative to positive. Adjacent sensors are 6.7 degrees
/// apart except across the laser, where the gap is 6.8 degrees.
struct SensorGeometry {
  std::array<double, kSensorCount> angles_deg{};

  friend bool operator==(const SensorGeometry&, const SensorGeometry&) = default;
};

inline SensorGeometry build_sensor_geometry() {
  // Decimal literals rather than 3.4 + 6.7 * i so the table is exact to the
  // printed precision.
  static constexpr std::array<double, kSensorCount / 2> kPositive = {
      3.4, 10.1, 16.8, 23.5, 30.2, 36.9, 43.6, 50.3, 57.0, 63.7};
  SensorGeometry geom;
  for (std::size_t i = 0; i < kPositive.size(); ++i) {
    geom.angles_deg[kSensorCount / 2 + i] = kPositive[i];
    geom.angles_deg[kSensorCount / 2 - 1 - i] = -kPositive[i];
  }
  return geom;
}

// ---------------------------------------------------------------------------
// Matrices and readings
// ---------------------------------------------------------------------------

/// Dense real matrix stored channel-major (one contiguous row per channel).
struct RealMatrix {
  std::size_t channels = 0;
  std::size_t timesteps = 0;
  std::vector<double> values;

  RealMatrix() = default;
  RealMatrix(std::size_t c, std::size_t t, double fill = 0.0)
      : channels(c), timesteps(t), values(c * t, fill) {}

  std::span<double> row(std::size_t c) { return {values.data() + c * timesteps, timesteps}; }
  std::span<const double> row(std::size_t c) const {
    return {values.data() + c * timesteps, timesteps};
  }
  double& at(std::size_t c, std::size_t t) { return values[c * timesteps + t]; }
  double at(std::size_t c, std::size_t t) const { return values[c * timesteps + t]; }

  friend bool operator==(const RealMatrix&, const RealMatrix&) = default;
};

/// One laser scan: 20 channels x T timesteps of 8-bit intensities.
class LaserReading {
 public:
  LaserReading() = default;

  LaserReading(std::string reading_id, std::size_t timesteps,
               std::vector<std::uint8_t> intensities, double step_um = kDefaultStepUm)
      : id_(std::move(reading_id)),
        timesteps_(timesteps),
        data_(std::move(intensities)),
        step_um_(step_um) {
    validate();
  }

  /// Builds a reading from wider integers, refusing anything outside [0, 255].
  static LaserReading from_counts(std::string reading_id, std::size_t timesteps,
                                  std::span<const int> counts,
                                  double step_um = kDefaultStepUm) {
    std::vector<std::uint8_t> data(counts.size());
    for (std::size_t i = 0; i < counts.size(); ++i) {
      if (counts[i] < 0 || counts[i] > 255) {
        throw Error(ErrorCode::value_out_of_range,
                    "intensity " + std::to_string(counts[i]) + " at index " +
                        std::to_string(i) + " is outside [0, 255]");
      }
      data[i] = static_cast<std::uint8_t>(counts[i]);
    }
    return LaserReading(std::move(reading_id), timesteps, std::move(data), step_um);
  }

  [[nodiscard]] const std::string& id() const noexcept { return id_; }
  void set_id(std::string id) { id_ = std::move(id); }
  [[nodiscard]] constexpr std::size_t channels() const noexcept { return kSensorCount; }
  [[nodiscard]] std::size_t timesteps() const noexcept { return timesteps_; }
  [[nodiscard]] double step_um() const noexcept { return step_um_; }
  [[nodiscard]] std::span<const std::uint8_t> data() const noexcept { return data_; }
  [[nodiscard]] std::span<const std::uint8_t> row(std::size_t c) const {
    return {data_.data() + c * timesteps_, timesteps_};
  }
  [[nodiscard]] std::uint8_t at(std::size_t c, std::size_t t) const {
    return data_[c * timesteps_ + t];
  }

  friend bool operator==(const LaserReading&, const LaserReading&) = default;

 private:
  void validate() const {
    if (timesteps_ == 0) {
      throw Error(ErrorCode::dimension_out_of_range, "reading must have T > 0");
    }
    if (data_.size() != kSensorCount * timesteps_) {
      throw Error(ErrorCode::dimension_out_of_range,
                  "reading payload has " + std::to_string(data_.size()) +
                      " values, expected 20 x " + std::to_string(timesteps_));
    }
    if (!(step_um_ > 0.0) || !std::isfinite(step_um_)) {
      throw Error(ErrorCode::invalid_argument, "step_um must be positive");
    }
  }

  std::string id_;
  std::size_t timesteps_ = 0;
  std::vector<std::uint8_t> data_;
  double step_um_ = kDefaultStepUm;
};

inline RealMatrix to_real(const LaserReading& reading) {
  RealMatrix m(reading.channels(), reading.timesteps());
  std::ranges::copy(reading.data(), m.values.begin());
  return m;
}

// ---------------------------------------------------------------------------
// Profiles
// ---------------------------------------------------------------------------

/// Height profile in micrometres sampled every step_um.
struct SurfaceProfile {
  std::vector<double> heights;
  double step_um = kDefaultStepUm;

  [[nodiscard]] bool is_finite() const {
    return std::ranges::all_of(heights, [](double h) { return std::isfinite(h); });
  }
  friend bool operator==(const SurfaceProfile&, const SurfaceProfile&) = default;
};

/// Profile after waviness removal; same length as its source surface.
struct RoughnessProfile {
  std::vector<double> heights;
  double step_um = kDefaultStepUm;

  friend bool operator==(const RoughnessProfile&, const RoughnessProfile&) = default;
};

// ---------------------------------------------------------------------------
// Samples and datasets
// ---------------------------------------------------------------------------

enum class Coating { galvanized, other };

inline std::string to_string(Coating c) { return c == Coating::galvanized ? "galvanized" : "other"; }

inline Coating parse_coating(const std::string& s) {
  if (s == "galvanized") return Coating::galvanized;
  if (s == "other") return Coating::other;
  throw Error(ErrorCode::invalid_argument, "unknown coating '" + s + "'");
}

struct SteelSample {
  std::string sample_id;
  Coating coating = Coating::galvanized;
  std::vector<double> stylus_ra;  // um, one per stylus track
  std::vector<LaserReading> readings;

  [[nodiscard]] double min_ra() const { return *std::ranges::min_element(stylus_ra); }
  [[nodiscard]] double max_ra() const { return *std::ranges::max_element(stylus_ra); }

  friend bool operator==(const SteelSample&, const SteelSample&) = default;
};

/// Label shared by every reading of a sample: the mean of its stylus Ra values.
inline double mean_ra_label(std::span<const double> stylus_ra) {
  if (stylus_ra.empty()) {
    throw Error(ErrorCode::empty_input, "sample has no stylus Ra values");
  }
  return std::accumulate(stylus_ra.begin(), stylus_ra.end(), 0.0) /
         static_cast<double>(stylus_ra.size());
}

inline double mean_ra_label(const SteelSample& sample) {
  if (sample.stylus_ra.empty()) {
    throw Error(ErrorCode::empty_input, "sample '" + sample.sample_id + "' has no stylus Ra values");
  }
  return mean_ra_label(std::span<const double>(sample.stylus_ra));
}

struct Dataset {
  std::vector<SteelSample> samples;
  std::uint64_t seed = 0;
  int schema_version = kSchemaVersion;
  double step_um = kDefaultStepUm;

  [[nodiscard]] std::size_t reading_count() const {
    std::size_t n = 0;
    for (const auto& s : samples) n += s.readings.size();
    return n;
  }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// Flat (sample index, reading index) view over a dataset in manifest order.
struct ReadingRef {
  std::size_t sample = 0;
  std::size_t reading = 0;
};

inline std::vector<ReadingRef> flatten(const Dataset& ds) {
  std::vector<ReadingRef> refs;
  refs.reserve(ds.reading_count());
  for (std::size_t s = 0; s < ds.samples.size(); ++s) {
    for (std::size_t r = 0; r < ds.samples[s].readings.size(); ++r) refs.push_back({s, r});
  }
  return refs;
}

inline void validate_dataset(const Dataset& ds) {
  std::set<std::string> sample_ids;
  std::set<std::string> reading_ids;
  for (const auto& s : ds.samples) {
    if (!sample_ids.insert(s.sample_id).second) {
      throw Error(ErrorCode::duplicate_sample_id, "duplicate sample_id '" + s.sample_id + "'");
    }
    if (s.stylus_ra.empty()) {
      throw Error(ErrorCode::empty_input, "sample '" + s.sample_id + "' has no stylus Ra values");
    }
    for (double v : s.stylus_ra) {
      if (!(v > 0.0) || !std::isfinite(v)) {
        throw Error(ErrorCode::value_out_of_range,
                    "sample '" + s.sample_id + "' has non-positive stylus Ra");
      }
    }
    for (const auto& r : s.readings) {
      if (!reading_ids.insert(r.id()).second) {
        throw Error(ErrorCode::manifest_mismatch, "duplicate reading id '" + r.id() + "'");
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Reading file format (little-endian):
//   "SRRD" | u16 version = 1 | u16 C | u32 T | C*T bytes, channel-major
// ---------------------------------------------------------------------------

inline constexpr std::array<char, 4> kReadingMagic = {'S', 'R', 'R', 'D'};
inline constexpr std::uint16_t kReadingVersion = 1;
inline constexpr std::size_t kReadingHeaderBytes = 12;

namespace detail {

template <class T>
void put_le(std::ostream& out, T value) {
  char bytes[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    bytes[i] = static_cast<char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xFFu);
  }
  out.write(bytes, sizeof(T));
}

template <class T>
T get_le(const unsigned char* bytes) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return static_cast<T>(v);
}

}  // namespace detail

inline std::size_t write_reading(const LaserReading& reading, std::ostream& out) {
  if (reading.timesteps() > 0xFFFFFFFFull) {
    throw Error(ErrorCode::dimension_out_of_range, "T does not fit in u32");
  }
  out.write(kReadingMagic.data(), kReadingMagic.size());
  detail::put_le<std::uint16_t>(out, kReadingVersion);
  detail::put_le<std::uint16_t>(out, static_cast<std::uint16_t>(reading.channels()));
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(reading.timesteps()));
  out.write(reinterpret_cast<const char*>(reading.data().data()),
            static_cast<std::streamsize>(reading.data().size()));
  if (!out) throw Error(ErrorCode::io_failure, "failed writing reading '" + reading.id() + "'");
  return kReadingHeaderBytes + reading.data().size();
}

inline std::size_t write_reading(const LaserReading& reading, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io_failure, "cannot open '" + path.string() + "' for writing");
  return write_reading(reading, out);
}

inline LaserReading read_reading(std::istream& in, std::string reading_id = {},
                                 double step_um = kDefaultStepUm) {
  unsigned char header[kReadingHeaderBytes];
  in.read(reinterpret_cast<char*>(header), kReadingHeaderBytes);
  if (in.gcount() < 4 || !std::equal(kReadingMagic.begin(), kReadingMagic.end(), header,
                                     [](char a, unsigned char b) { return a == static_cast<char>(b); })) {
    throw Error(ErrorCode::bad_magic, "reading '" + reading_id + "' does not start with SRRD");
  }
  if (in.gcount() < static_cast<std::streamsize>(kReadingHeaderBytes)) {
    throw Error(ErrorCode::truncated_payload, "reading '" + reading_id + "' has a truncated header");
  }
  const auto version = detail::get_le<std::uint16_t>(header + 4);
  if (version != kReadingVersion) {
    throw Error(ErrorCode::unsupported_version,
                "reading '" + reading_id + "' has unsupported version " + std::to_string(version));
  }
  const auto channels = detail::get_le<std::uint16_t>(header + 6);
  const auto timesteps = detail::get_le<std::uint32_t>(header + 8);
  if (channels != kSensorCount || timesteps == 0) {
    throw Error(ErrorCode::dimension_out_of_range,
                "reading '" + reading_id + "' has C=" + std::to_string(channels) +
                    " T=" + std::to_string(timesteps));
  }
  std::vector<std::uint8_t> data(static_cast<std::size_t>(channels) * timesteps);
  in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (static_cast<std::size_t>(in.gcount()) != data.size()) {
    throw Error(ErrorCode::truncated_payload,
                "reading '" + reading_id + "' payload has " + std::to_string(in.gcount()) +
                    " bytes, expected " + std::to_string(data.size()));
  }
  return LaserReading(std::move(reading_id), timesteps, std::move(data), step_um);
}

inline LaserReading read_reading(const std::filesystem::path& path, double step_um = kDefaultStepUm) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::missing_file, "cannot open reading file '" + path.string() + "'");
  return read_reading(in, path.stem().string(), step_um);
}

// ---------------------------------------------------------------------------
// Dataset directory: dataset.json manifest plus one .srrd file per reading.
// ---------------------------------------------------------------------------

inline constexpr const char* kManifestName = "dataset.json";

inline nlohmann::json manifest_json(const Dataset& ds) {
  nlohmann::json samples = nlohmann::json::array();
  for (const auto& s : ds.samples) {
    nlohmann::json files = nlohmann::json::array();
    for (const auto& r : s.readings) files.push_back(r.id() + ".srrd");
    samples.push_back({{"sample_id", s.sample_id},
                       {"coating", to_string(s.coating)},
                       {"stylus_ra", s.stylus_ra},
                       {"readings", files}});
  }
  return {{"schema_version", ds.schema_version},
          {"seed", ds.seed},
          {"step_um", ds.step_um},
          {"samples", samples}};
}

inline void save_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  validate_dataset(ds);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::io_failure, "cannot create '" + dir.string() + "': " + ec.message());
  for (const auto& s : ds.samples) {
    for (const auto& r : s.readings) write_reading(r, dir / (r.id() + ".srrd"));
  }
  std::ofstream out(dir / kManifestName, std::ios::trunc);
  if (!out) throw Error(ErrorCode::io_failure, "cannot write manifest in '" + dir.string() + "'");
  out << manifest_json(ds).dump(2) << '\n';
  if (!out) throw Error(ErrorCode::io_failure, "failed writing manifest");
}

inline Dataset load_dataset(const std::filesystem::path& dir) {
  const auto manifest_path = dir / kManifestName;
  std::ifstream in(manifest_path);
  if (!in) throw Error(ErrorCode::missing_manifest, "no " + std::string(kManifestName) + " in '" + dir.string() + "'");

  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::manifest_mismatch, std::string("malformed manifest: ") + e.what());
  }

  Dataset ds;
  try {
    ds.schema_version = j.at("schema_version").get<int>();
    ds.seed = j.at("seed").get<std::uint64_t>();
    ds.step_um = j.at("step_um").get<double>();
    if (ds.schema_version != kSchemaVersion) {
      throw Error(ErrorCode::unsupported_version,
                  "manifest schema_version " + std::to_string(ds.schema_version) + " is not supported");
    }
    std::size_t timesteps = 0;
    for (const auto& js : j.at("samples")) {
      SteelSample s;
      s.sample_id = js.at("sample_id").get<std::string>();
      s.coating = parse_coating(js.at("coating").get<std::string>());
      s.stylus_ra = js.at("stylus_ra").get<std::vector<double>>();
      for (const auto& file : js.at("readings")) {
        const auto name = file.get<std::string>();
        const auto path = dir / name;
        if (!std::filesystem::exists(path)) {
          throw Error(ErrorCode::missing_file,
                      "manifest references missing reading file '" + name + "'");
        }
        auto reading = read_reading(path, ds.step_um);
        if (timesteps == 0) timesteps = reading.timesteps();
        if (reading.timesteps() != timesteps) {
          throw Error(ErrorCode::manifest_mismatch,
                      "reading '" + name + "' has T=" + std::to_string(reading.timesteps()) +
                          " but the dataset uses T=" + std::to_string(timesteps));
        }
        s.readings.push_back(std::move(reading));
      }
      ds.samples.push_back(std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::manifest_mismatch, std::string("malformed manifest: ") + e.what());
  }
  validate_dataset(ds);
  return ds;
}

}  // namespace scatter_ra
