#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "core_data.hpp"
#include "error.hpp"
#include "rng.hpp"

namespace scatter_ra {

inline constexpr std::size_t kMiniRocketKernels = 84;
inline constexpr std::size_t kMiniRocketKernelLength = 9;

/// Positions holding weight 2 for each of the 84 kernels, in lexicographic
/// order of 3-subsets of {0..8}. All other positions hold -1.
constexpr std::array<std::array<std::uint8_t, 3>, kMiniRocketKernels> minirocket_kernel_taps() {
  std::array<std::array<std::uint8_t, 3>, kMiniRocketKernels> taps{};
  std::size_t n = 0;
  for (std::uint8_t a = 0; a < 9; ++a)
    for (std::uint8_t b = a + 1; b < 9; ++b)
      for (std::uint8_t c = b + 1; c < 9; ++c) taps[n++] = {a, b, c};
  return taps;
}

inline constexpr auto kMiniRocketTaps = minirocket_kernel_taps();

constexpr std::array<double, kMiniRocketKernelLength> minirocket_weights(std::size_t kernel) {
  std::array<double, kMiniRocketKernelLength> w{};
  for (double& v : w) v = -1.0;
  for (auto i : kMiniRocketTaps[kernel]) w[i] = 2.0;
  return w;
}

struct MiniRocketConfig {
  std::size_t num_features = 10000;
  std::size_t max_dilations_per_kernel = 32;
};

struct MiniRocketParams {
  std::size_t input_length = 0;
  std::size_t channel_count = 0;
  std::uint64_t seed = 0;
  std::vector<std::size_t> dilations;
  std::vector<std::size_t> features_per_dilation;
  // One subset per (dilation, kernel) combination, dilation-major.
  std::vector<std::vector<std::uint16_t>> channel_subsets;
  std::vector<double> biases;  // one per feature, in feature order

  [[nodiscard]] std::size_t feature_count() const noexcept { return biases.size(); }

  friend bool operator==(const MiniRocketParams&, const MiniRocketParams&) = default;
};

/// Exponentially spaced dilations for an input length. Candidates are
/// floor(2^(e * i / (m-1))) for i < m with e = log2((L-1)/8); duplicates
/// collapse and their multiplicity (scaled to the per-kernel feature budget)
/// becomes the number of biases for that dilation.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> minirocket_dilations(
    std::size_t input_length, const MiniRocketConfig& config = {}) {
  if (input_length < kMiniRocketKernelLength) {
    throw Error(ErrorCode::input_too_short, "input length must be at least 9");
  }
  const std::size_t per_kernel = config.num_features / kMiniRocketKernels;
  if (per_kernel == 0) throw Error(ErrorCode::invalid_argument, "num_features must be >= 84");
  const std::size_t m = std::max<std::size_t>(1, std::min(per_kernel, config.max_dilations_per_kernel));
  const double multiplier = static_cast<double>(per_kernel) / static_cast<double>(m);
  const double max_exp = std::log2(static_cast<double>(input_length - 1) / 8.0);

  std::vector<std::size_t> dilations;
  std::vector<std::size_t> counts;
  for (std::size_t i = 0; i < m; ++i) {
    const double e = m == 1 ? 0.0 : max_exp * static_cast<double>(i) / static_cast<double>(m - 1);
    const auto d = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(std::exp2(e))));
    if (!dilations.empty() && dilations.back() == d) {
      ++counts.back();
    } else {
      dilations.push_back(d);
      counts.push_back(1);
    }
  }
  std::size_t total = 0;
  for (auto& c : counts) {
    c = static_cast<std::size_t>(static_cast<double>(c) * multiplier);
    total += c;
  }
  for (std::size_t i = 0; total < per_kernel; i = (i + 1) % counts.size(), ++total) ++counts[i];
  return {dilations, counts};
}

/// Low-discrepancy quantile sequence (i * golden ratio) mod 1, i = 1..n.
inline std::vector<double> minirocket_quantiles(std::size_t n) {
  const double phi = (std::sqrt(5.0) + 1.0) / 2.0;
  std::vector<double> q(n);
  for (std::size_t i = 0; i < n; ++i) q[i] = std::fmod(static_cast<double>(i + 1) * phi, 1.0);
  return q;
}

namespace detail {

// Holds one reading zero-padded by `pad` on both sides and, for the current
// dilation, the per-channel sum over all nine dilated taps. With weights
// -1 / 2 the kernel output is 3 * (sum of the three "2" taps) - (sum of all
// nine taps), so only additions are needed.
class MiniRocketWorkspace {
 public:
  MiniRocketWorkspace(const RealMatrix& x, std::size_t max_dilation)
      : channels_(x.channels), length_(x.timesteps), pad_(4 * max_dilation) {
    // Odd cache-line multiples keep rows of different channels from
    // landing on the same cache sets.
    stride_ = skew(length_ + 2 * pad_);
    tap_stride_ = skew(length_);
    padded_.assign(channels_ * stride_, 0.0);
    for (std::size_t c = 0; c < channels_; ++c) {
      std::ranges::copy(x.row(c), padded_.begin() + static_cast<std::ptrdiff_t>(c * stride_ + pad_));
    }
    nine_tap_.assign(channels_ * tap_stride_, 0.0);
    have_nine_tap_.assign(channels_, 0);
    scratch_.resize(length_ + 8 * max_dilation);
  }

  void set_dilation(std::size_t d) {
    if (4 * d > pad_) throw Error(ErrorCode::invalid_argument, "dilation exceeds workspace padding");
    dilation_ = d;
    std::ranges::fill(have_nine_tap_, std::uint8_t{0});
  }

  /// Writes the length-T "same" convolution output of kernel `kernel` over the
  /// sum of `channels` into `out`.
  void convolve(std::span<const std::uint16_t> channels, std::size_t kernel, std::span<double> out) {
    convolve(channels, kernel, 0, length_, out.data());
  }

  /// Output positions [t0, t1) only, written to out[0, t1 - t0).
  void convolve(std::span<const std::uint16_t> channels, std::size_t kernel, std::size_t t0, std::size_t t1,
                double* out) {
    const std::size_t d = dilation_;
    const std::size_t origin = pad_ - 4 * d + t0;
    const std::size_t n = t1 - t0;
    const auto& taps = kMiniRocketTaps[kernel];
    for (auto c : channels) {
      if (c >= channels_) {
        throw Error(ErrorCode::dimension_out_of_range,
                    "channel " + std::to_string(c) + " exceeds the reading's channel count");
      }
    }
    std::fill_n(out, n, 0.0);
    // Channels are taken two at a time to halve traffic on `out`.
    std::size_t i = 0;
    for (; i + 2 <= channels.size(); i += 2) {
      const double* src = padded_.data() + channels[i] * stride_ + origin;
      const double* srd = padded_.data() + channels[i + 1] * stride_ + origin;
      const double* a = nine_tap(channels[i]) + t0;
      const double* b = nine_tap(channels[i + 1]) + t0;
      const double* s0 = src + taps[0] * d;
      const double* s1 = src + taps[1] * d;
      const double* s2 = src + taps[2] * d;
      const double* r0 = srd + taps[0] * d;
      const double* r1 = srd + taps[1] * d;
      const double* r2 = srd + taps[2] * d;
      for (std::size_t t = 0; t < n; ++t) {
        out[t] += (3.0 * (s0[t] + s1[t] + s2[t]) - a[t]) + (3.0 * (r0[t] + r1[t] + r2[t]) - b[t]);
      }
    }
    if (i < channels.size()) {
      const double* src = padded_.data() + channels[i] * stride_ + origin;
      const double* a = nine_tap(channels[i]) + t0;
      const double* s0 = src + taps[0] * d;
      const double* s1 = src + taps[1] * d;
      const double* s2 = src + taps[2] * d;
      for (std::size_t t = 0; t < n; ++t) out[t] += 3.0 * (s0[t] + s1[t] + s2[t]) - a[t];
    }
  }

  [[nodiscard]] std::size_t length() const noexcept { return length_; }

 private:
  static std::size_t skew(std::size_t n) { return (((n + 7) / 8) | 1) * 8; }

  // Sum of the nine dilated taps for channel c, built by doubling:
  // pairs, then quads, then eights, plus the last tap.
  const double* nine_tap(std::size_t c) {
    double* a = nine_tap_.data() + c * tap_stride_;
    if (!have_nine_tap_[c]) {
      const std::size_t d = dilation_;
      const double* src = padded_.data() + c * stride_ + pad_ - 4 * d;
      const std::size_t n2 = length_ + 6 * d;
      const std::size_t n4 = length_ + 4 * d;
      for (std::size_t t = 0; t < n2; ++t) scratch_[t] = src[t] + src[t + d];
      for (std::size_t t = 0; t < n4; ++t) scratch_[t] = scratch_[t] + scratch_[t + 2 * d];
      const double* last = src + 8 * d;
      for (std::size_t t = 0; t < length_; ++t) a[t] = (scratch_[t] + scratch_[t + 4 * d]) + last[t];
      have_nine_tap_[c] = 1;
    }
    return a;
  }

  std::size_t channels_;
  std::size_t length_;
  std::size_t pad_;
  std::size_t stride_ = 0;
  std::size_t tap_stride_ = 0;
  std::size_t dilation_ = 1;
  std::vector<double> padded_;
  std::vector<double> nine_tap_;
  std::vector<std::uint8_t> have_nine_tap_;
  std::vector<double> scratch_;
};

// Kept out of line so the compiler vectorises over t rather than over the
// caller's bias loop.
[[gnu::noinline]] inline std::int64_t count_above(const double* v, std::size_t n, double bias) {
  std::int64_t positive = 0;
  for (std::size_t t = 0; t < n; ++t) positive += static_cast<std::int64_t>(v[t] > bias);
  return positive;
}

}  // namespace detail

/// "Same"-length output of one MiniRocket kernel over the sum of the given
/// channels, computed with the addition-only scheme used by the transform.
inline std::vector<double> minirocket_convolution(const RealMatrix& x, std::span<const std::uint16_t> channels,
                                                  std::size_t kernel, std::size_t dilation) {
  if (kernel >= kMiniRocketKernels) throw Error(ErrorCode::invalid_argument, "kernel index out of range");
  if (dilation == 0) throw Error(ErrorCode::invalid_argument, "dilation must be >= 1");
  detail::MiniRocketWorkspace ws(x, dilation);
  ws.set_dilation(dilation);
  std::vector<double> out(x.timesteps);
  ws.convolve(channels, kernel, out);
  return out;
}

/// Fits dilations, channel subsets and bias quantiles from training readings
/// (already thresholded and normalised).
inline MiniRocketParams minirocket_fit(std::span<const RealMatrix> training, std::uint64_t seed,
                                       const MiniRocketConfig& config = {}) {
  if (training.empty()) throw Error(ErrorCode::empty_input, "MiniRocket needs at least one training reading");
  const std::size_t length = training.front().timesteps;
  const std::size_t channels = training.front().channels;
  for (const auto& x : training) {
    if (x.timesteps != length || x.channels != channels) {
      throw Error(ErrorCode::length_mismatch, "training readings differ in shape");
    }
  }

  MiniRocketParams p;
  p.input_length = length;
  p.channel_count = channels;
  p.seed = seed;
  std::tie(p.dilations, p.features_per_dilation) = minirocket_dilations(length, config);

  Rng rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const std::size_t max_channels = std::min<std::size_t>(channels, 9);
  const double max_ch_exp = std::log2(static_cast<double>(max_channels) + 1.0);
  std::vector<std::uint16_t> pool(channels);
  std::iota(pool.begin(), pool.end(), std::uint16_t{0});

  const std::size_t combos = p.dilations.size() * kMiniRocketKernels;
  p.channel_subsets.resize(combos);
  for (auto& subset : p.channel_subsets) {
    auto n = static_cast<std::size_t>(std::floor(std::exp2(unit(rng) * max_ch_exp)));
    n = std::clamp<std::size_t>(n, 1, max_channels);
    std::ranges::shuffle(pool, rng);
    subset.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n));
    std::ranges::sort(subset);
  }

  std::size_t total = 0;
  for (auto c : p.features_per_dilation) total += c * kMiniRocketKernels;
  const auto quantiles = minirocket_quantiles(total);

  std::uniform_int_distribution<std::size_t> pick(0, training.size() - 1);
  std::vector<std::size_t> example(combos);
  for (auto& e : example) e = pick(rng);

  // Quantile offsets of each combination's first bias.
  std::vector<std::size_t> first_q(combos);
  for (std::size_t di = 0, q = 0; di < p.dilations.size(); ++di) {
    for (std::size_t k = 0; k < kMiniRocketKernels; ++k, q += p.features_per_dilation[di]) {
      first_q[di * kMiniRocketKernels + k] = q;
    }
  }
  p.biases.assign(total, 0.0);

  // Visit combinations grouped by example so each example is padded once.
  std::vector<std::size_t> order(combos);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::ranges::stable_sort(order, {}, [&](std::size_t c) { return example[c]; });
  const std::size_t max_dilation = p.dilations.empty() ? 1 : p.dilations.back();
  std::optional<detail::MiniRocketWorkspace> ws;
  std::size_t loaded = training.size();
  std::vector<double> out(length);
  for (auto combo : order) {
    if (example[combo] != loaded) {
      loaded = example[combo];
      ws.emplace(training[loaded], max_dilation);
    }
    const std::size_t di = combo / kMiniRocketKernels;
    ws->set_dilation(p.dilations[di]);
    ws->convolve(p.channel_subsets[combo], combo % kMiniRocketKernels, out);
    for (std::size_t f = 0; f < p.features_per_dilation[di]; ++f) {
      const std::size_t q = first_q[combo] + f;
      const double pos = quantiles[q] * static_cast<double>(length - 1);
      const auto lo = static_cast<std::size_t>(std::floor(pos));
      const std::size_t hi = std::min(lo + 1, length - 1);
      auto lo_it = out.begin() + static_cast<std::ptrdiff_t>(lo);
      std::nth_element(out.begin(), lo_it, out.end());
      const double v_lo = *lo_it;
      const double v_hi = hi == lo ? v_lo : *std::min_element(lo_it + 1, out.end());
      p.biases[q] = v_lo + (pos - static_cast<double>(lo)) * (v_hi - v_lo);
    }
  }
  return p;
}

/// PPV features, one per (dilation, kernel, bias). Even (dilation index +
/// kernel index) pools over the full padded output, odd over the unpadded
/// interior only.
inline std::vector<double> minirocket_transform(const RealMatrix& x, const MiniRocketParams& p) {
  if (x.timesteps != p.input_length || x.channels != p.channel_count) {
    throw Error(ErrorCode::length_mismatch,
                "reading shape " + std::to_string(x.channels) + "x" + std::to_string(x.timesteps) +
                    " does not match the fitted " + std::to_string(p.channel_count) + "x" +
                    std::to_string(p.input_length));
  }
  std::vector<double> features(p.feature_count(), 0.0);
  detail::MiniRocketWorkspace ws(x, p.dilations.empty() ? 1 : p.dilations.back());
  // Blocks of output positions keep each kernel's working set in cache;
  // counts accumulate across blocks.
  constexpr std::size_t kBlock = 1024;
  std::vector<double> out(kBlock);
  std::vector<std::int64_t> counts;
  std::size_t f0 = 0;
  for (std::size_t di = 0; di < p.dilations.size(); ++di) {
    const std::size_t d = p.dilations[di];
    const std::size_t per = p.features_per_dilation[di];
    ws.set_dilation(d);
    const std::size_t pad = 4 * d;
    counts.assign(kMiniRocketKernels * per, 0);
    for (std::size_t t0 = 0; t0 < x.timesteps; t0 += kBlock) {
      const std::size_t t1 = std::min(t0 + kBlock, x.timesteps);
      for (std::size_t k = 0; k < kMiniRocketKernels; ++k) {
        const bool interior = (di + k) % 2 == 1;
        const std::size_t begin = std::max(t0, interior ? pad : std::size_t{0});
        const std::size_t end = std::min(t1, interior ? x.timesteps - pad : x.timesteps);
        if (begin >= end) continue;
        ws.convolve(p.channel_subsets[di * kMiniRocketKernels + k], k, begin, end, out.data());
        const std::size_t n = end - begin;
        for (std::size_t b = 0; b < per; ++b) {
          const double bias = p.biases[f0 + k * per + b];
          counts[k * per + b] += detail::count_above(out.data(), n, bias);
        }
      }
    }
    for (std::size_t k = 0; k < kMiniRocketKernels; ++k) {
      const bool interior = (di + k) % 2 == 1;
      const double count = static_cast<double>(interior ? x.timesteps - 2 * pad : x.timesteps);
      for (std::size_t b = 0; b < per; ++b) features[f0 + k * per + b] = static_cast<double>(counts[k * per + b]) / count;
    }
    f0 += kMiniRocketKernels * per;
  }
  return features;
}

}  // namespace scatter_ra
