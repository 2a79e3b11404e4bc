#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <unistd.h>
#include <vector>

#include "scatter_ra/scatter_ra.hpp"

namespace test_util {

// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("scatter_ra_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  [[nodiscard]] const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline scatter_ra::LaserReading random_reading(std::mt19937_64& rng, std::size_t t, const std::string& id = "r") {
  std::uniform_int_distribution<int> v(0, 255);
  std::vector<std::uint8_t> data(scatter_ra::kSensorCount * t);
  for (auto& x : data) x = static_cast<std::uint8_t>(v(rng));
  return scatter_ra::LaserReading(id, t, std::move(data));
}

inline scatter_ra::RealMatrix random_matrix(std::mt19937_64& rng, std::size_t c, std::size_t t) {
  std::normal_distribution<double> n(0.0, 1.0);
  scatter_ra::RealMatrix m(c, t);
  for (auto& x : m.values) x = n(rng);
  return m;
}

// Small dataset generated quickly for protocol and pipeline tests.
inline scatter_ra::Dataset small_dataset(std::size_t samples, std::size_t timesteps, std::uint64_t seed) {
  scatter_ra::DatasetConfig c;
  c.samples = samples;
  c.other_coating_samples = 1;
  c.timesteps = timesteps;
  c.stylus_length_steps = 2048;
  return scatter_ra::generate_dataset(c, seed);
}

}  // namespace test_util
