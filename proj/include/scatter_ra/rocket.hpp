#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "core_data.hpp"
#include "error.hpp"
#include "rng.hpp"

namespace scatter_ra {

inline constexpr std::size_t kRocketDefaultKernels = 10000;
inline constexpr std::array<std::size_t, 3> kRocketKernelLengths = {7, 9, 11};

struct RocketKernel {
  std::vector<double> weights;  // mean-centred
  std::size_t dilation = 1;
  std::size_t padding = 0;
  double bias = 0.0;
  std::vector<std::uint16_t> channels;  // summed before convolution

  friend bool operator==(const RocketKernel&, const RocketKernel&) = default;
};

struct KernelBank {
  std::vector<RocketKernel> kernels;
  std::uint64_t seed = 0;
  std::size_t input_length = 0;
  std::size_t channel_count = 0;

  [[nodiscard]] std::size_t feature_count() const noexcept { return 2 * kernels.size(); }

  friend bool operator==(const KernelBank&, const KernelBank&) = default;
};

/// Random kernel bank: length from {7, 9, 11}, N(0,1) weights centred to zero
/// mean, bias ~ U(-1, 1), dilation 2^U(0, log2((L-1)/(len-1))) floored,
/// zero or "same" padding with equal probability, and a random channel subset
/// of size 2^U(0, log2(C+1)) floored.
inline KernelBank generate_rocket_kernels(std::uint64_t seed, std::size_t count, std::size_t input_length,
                                          std::size_t n_channels = kSensorCount) {
  if (input_length <= kRocketKernelLengths.back()) {
    throw Error(ErrorCode::input_too_short,
                "input length " + std::to_string(input_length) + " must exceed the longest kernel (11)");
  }
  if (n_channels == 0 || n_channels > 0xFFFF) {
    throw Error(ErrorCode::invalid_argument, "channel count out of range");
  }

  Rng rng(seed);
  std::uniform_int_distribution<std::size_t> pick_length(0, kRocketKernelLengths.size() - 1);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> bias(-1.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::bernoulli_distribution coin(0.5);

  std::vector<std::uint16_t> all_channels(n_channels);
  std::iota(all_channels.begin(), all_channels.end(), std::uint16_t{0});

  KernelBank bank;
  bank.seed = seed;
  bank.input_length = input_length;
  bank.channel_count = n_channels;
  bank.kernels.resize(count);
  for (auto& k : bank.kernels) {
    const std::size_t len = kRocketKernelLengths[pick_length(rng)];
    k.weights.resize(len);
    for (double& w : k.weights) w = normal(rng);
    const double mean = std::accumulate(k.weights.begin(), k.weights.end(), 0.0) / static_cast<double>(len);
    for (double& w : k.weights) w -= mean;
    k.bias = bias(rng);

    const double max_exp = std::log2(static_cast<double>(input_length - 1) / static_cast<double>(len - 1));
    k.dilation = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(std::exp2(unit(rng) * max_exp))));
    k.padding = coin(rng) ? ((len - 1) * k.dilation) / 2 : 0;

    const double max_ch_exp = std::log2(static_cast<double>(n_channels) + 1.0);
    auto n_sel = static_cast<std::size_t>(std::floor(std::exp2(unit(rng) * max_ch_exp)));
    n_sel = std::clamp<std::size_t>(n_sel, 1, n_channels);
    auto pool = all_channels;
    std::shuffle(pool.begin(), pool.end(), rng);
    k.channels.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n_sel));
    std::ranges::sort(k.channels);
  }
  return bank;
}

struct ConvPooling {
  double max = -std::numeric_limits<double>::infinity();
  double ppv = 0.0;
};

/// Dilated convolution of one signal with zero padding, minus bias, pooled
/// into max and proportion of strictly positive outputs.
inline ConvPooling rocket_pool(std::span<const double> signal, const RocketKernel& k) {
  const auto n = static_cast<std::ptrdiff_t>(signal.size());
  const auto len = static_cast<std::ptrdiff_t>(k.weights.size());
  const auto d = static_cast<std::ptrdiff_t>(k.dilation);
  const auto pad = static_cast<std::ptrdiff_t>(k.padding);
  const std::ptrdiff_t out_len = n + 2 * pad - (len - 1) * d;
  ConvPooling pooled;
  if (out_len <= 0) {
    pooled.max = 0.0;
    return pooled;
  }
  std::size_t positive = 0;
  for (std::ptrdiff_t t = 0; t < out_len; ++t) {
    double sum = -k.bias;
    const std::ptrdiff_t start = t - pad;
    if (start >= 0 && start + (len - 1) * d < n) {
      const double* base = signal.data() + start;
      for (std::ptrdiff_t j = 0; j < len; ++j) sum += k.weights[static_cast<std::size_t>(j)] * base[j * d];
    } else {
      for (std::ptrdiff_t j = 0; j < len; ++j) {
        const std::ptrdiff_t idx = start + j * d;
        if (idx >= 0 && idx < n) sum += k.weights[static_cast<std::size_t>(j)] * signal[static_cast<std::size_t>(idx)];
      }
    }
    if (sum > 0.0) ++positive;
    pooled.max = std::max(pooled.max, sum);
  }
  pooled.ppv = static_cast<double>(positive) / static_cast<double>(out_len);
  return pooled;
}

/// Feature row [max_0, ppv_0, max_1, ppv_1, ...] for a normalised reading.
inline std::vector<double> rocket_transform(const RealMatrix& x, const KernelBank& bank) {
  std::vector<double> features;
  features.reserve(bank.feature_count());
  std::vector<double> summed(x.timesteps);
  for (const auto& k : bank.kernels) {
    std::ranges::fill(summed, 0.0);
    for (auto c : k.channels) {
      if (c >= x.channels) {
        throw Error(ErrorCode::dimension_out_of_range,
                    "kernel channel " + std::to_string(c) + " exceeds the reading's channel count");
      }
      const auto row = x.row(c);
      for (std::size_t t = 0; t < x.timesteps; ++t) summed[t] += row[t];
    }
    const auto pooled = rocket_pool(summed, k);
    features.push_back(pooled.max);
    features.push_back(pooled.ppv);
  }
  return features;
}

}  // namespace scatter_ra
