#pragma once

// Digital stage: powerline notch, Butterworth band-pass (biquad cascade via
// the bilinear transform with pre-warping), and the moving-window RMS.

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "emgsel/error.hpp"

namespace emgsel {

/// One second-order section, a0 normalized to 1.
struct Biquad {
  double b0 = 1.0, b1 = 0.0, b2 = 0.0;
  double a1 = 0.0, a2 = 0.0;

  /// Largest pole magnitude (roots of z^2 + a1 z + a2).
  double pole_radius() const {
    const std::complex<double> disc = std::sqrt(std::complex<double>(a1 * a1 - 4.0 * a2, 0.0));
    const auto p1 = (-a1 + disc) / 2.0;
    const auto p2 = (-a1 - disc) / 2.0;
    return std::max(std::abs(p1), std::abs(p2));
  }

  std::complex<double> response(double freq_hz, double fs) const {
    const std::complex<double> z1 = std::polar(1.0, -2.0 * std::numbers::pi * freq_hz / fs);
    const auto z2 = z1 * z1;
    return (b0 + b1 * z1 + b2 * z2) / (1.0 + a1 * z1 + a2 * z2);
  }
};

struct BiquadCascade {
  std::vector<Biquad> sections;

  bool stable(double margin = 1e-9) const {
    return std::all_of(sections.begin(), sections.end(),
                       [&](const Biquad& s) { return s.pole_radius() < 1.0 - margin; });
  }

  std::complex<double> response(double freq_hz, double fs) const {
    std::complex<double> h{1.0, 0.0};
    for (const auto& s : sections) h *= s.response(freq_hz, fs);
    return h;
  }

  double magnitude(double freq_hz, double fs) const { return std::abs(response(freq_hz, fs)); }

  void append(const BiquadCascade& other) {
    sections.insert(sections.end(), other.sections.begin(), other.sections.end());
  }
};

struct FilterSpec {
  double notch_hz = 50.0;
  double notch_q = 35.0;
  bool notch_enabled = true;
  double band_lo_hz = 30.0;
  double band_hi_hz = 300.0;
  int order = 4;
  double sample_rate_hz = 20000.0;
  /// Forward-backward (zero-phase) filtering; off to match causal firmware.
  bool zero_phase = false;
  /// Post-filter decimation target rate; 0 disables.
  double decimate_to_hz = 0.0;
};

inline void validate(const FilterSpec& f) {
  const double nyq = f.sample_rate_hz / 2.0;
  if (!(f.sample_rate_hz > 0)) throw ConfigError("sample rate must be positive");
  if (f.notch_enabled && !(f.notch_hz > 0 && f.notch_hz < nyq)) throw ConfigError("notch frequency must lie in (0, fs/2)");
  if (f.notch_enabled && !(f.notch_q > 0)) throw ConfigError("notch Q must be positive");
  if (!(f.band_lo_hz > 0 && f.band_lo_hz < f.band_hi_hz && f.band_hi_hz < nyq))
    throw ConfigError("band edges must satisfy 0 < lo < hi < fs/2");
  if (f.order < 2 || f.order % 2 != 0) throw ConfigError("filter order must be even and >= 2");
  if (f.decimate_to_hz < 0) throw ConfigError("decimation rate must be non-negative");
  if (f.decimate_to_hz > 0) {
    const double ratio = f.sample_rate_hz / f.decimate_to_hz;
    if (ratio < 1.0 || std::abs(ratio - std::round(ratio)) > 1e-9)
      throw ConfigError("decimation target must divide the sample rate");
    if (f.band_hi_hz >= f.decimate_to_hz / 2.0) throw ConfigError("decimation target must exceed twice the band edge");
  }
}

/// Second-order IIR notch with -3 dB width f0/q. Gain is exactly one in the
/// numerator/denominator sense at DC and Nyquist; zeros sit on the unit circle at f0.
inline BiquadCascade design_notch(double f0, double fs, double q) {
  if (!(fs > 0)) throw ConfigError("sample rate must be positive");
  if (!(f0 > 0 && f0 < fs / 2.0)) throw ConfigError("notch frequency must lie in (0, fs/2)");
  if (!(q > 0)) throw ConfigError("notch Q must be positive");
  const double w0 = 2.0 * std::numbers::pi * f0 / fs;
  const double beta = std::tan(w0 / (2.0 * q));
  const double gain = 1.0 / (1.0 + beta);
  const double c = std::cos(w0);
  Biquad s;
  s.b0 = gain;
  s.b1 = -2.0 * gain * c;
  s.b2 = gain;
  s.a1 = -2.0 * gain * c;
  s.a2 = 2.0 * gain - 1.0;
  return BiquadCascade{{s}};
}

namespace detail {

// Q of section k of an order-n Butterworth prototype.
inline double butterworth_q(int n, int k) {
  return 1.0 / (2.0 * std::sin(std::numbers::pi * (2.0 * k + 1.0) / (2.0 * n)));
}

inline Biquad lowpass_section(double fc, double fs, double q) {
  const double w0 = 2.0 * std::numbers::pi * fc / fs;
  const double alpha = std::sin(w0) / (2.0 * q);
  const double c = std::cos(w0);
  const double a0 = 1.0 + alpha;
  Biquad s;
  s.b0 = (1.0 - c) / 2.0 / a0;
  s.b1 = (1.0 - c) / a0;
  s.b2 = s.b0;
  s.a1 = -2.0 * c / a0;
  s.a2 = (1.0 - alpha) / a0;
  return s;
}

inline Biquad highpass_section(double fc, double fs, double q) {
  const double w0 = 2.0 * std::numbers::pi * fc / fs;
  const double alpha = std::sin(w0) / (2.0 * q);
  const double c = std::cos(w0);
  const double a0 = 1.0 + alpha;
  Biquad s;
  s.b0 = (1.0 + c) / 2.0 / a0;
  s.b1 = -(1.0 + c) / a0;
  s.b2 = s.b0;
  s.a1 = -2.0 * c / a0;
  s.a2 = (1.0 - alpha) / a0;
  return s;
}

}  // namespace detail

/// Butterworth band-pass as an order-`order` high-pass at `lo` followed by an
/// order-`order` low-pass at `hi`, each realized as order/2 biquads.
inline BiquadCascade design_bandpass(double lo, double hi, double fs, int order) {
  if (!(fs > 0)) throw ConfigError("sample rate must be positive");
  if (!(lo > 0 && lo < hi && hi < fs / 2.0)) throw ConfigError("band edges must satisfy 0 < lo < hi < fs/2");
  if (order < 2 || order % 2 != 0) throw ConfigError("filter order must be even and >= 2");
  BiquadCascade c;
  for (int k = 0; k < order / 2; ++k) c.sections.push_back(detail::highpass_section(lo, fs, detail::butterworth_q(order, k)));
  for (int k = 0; k < order / 2; ++k) c.sections.push_back(detail::lowpass_section(hi, fs, detail::butterworth_q(order, k)));
  return c;
}

/// Notch (when enabled) followed by the band-pass.
inline BiquadCascade design_chain(const FilterSpec& f) {
  validate(f);
  BiquadCascade c;
  if (f.notch_enabled) c.append(design_notch(f.notch_hz, f.sample_rate_hz, f.notch_q));
  c.append(design_bandpass(f.band_lo_hz, f.band_hi_hz, f.sample_rate_hz, f.order));
  return c;
}

/// In-place causal filtering, transposed direct form II, zero initial state.
/// No finiteness check; see apply_filter.
inline void filter_in_place(const BiquadCascade& c, std::span<double> x) {
  for (const auto& s : c.sections) {
    double z1 = 0.0, z2 = 0.0;
    for (double& v : x) {
      const double in = v;
      const double out = s.b0 * in + z1;
      z1 = s.b1 * in - s.a1 * out + z2;
      z2 = s.b2 * in - s.a2 * out;
      v = out;
    }
  }
}

inline void check_finite(std::span<const double> x) {
  for (std::size_t i = 0; i < x.size(); ++i)
    if (!std::isfinite(x[i])) throw DataError("non-finite input sample at index " + std::to_string(i));
}

inline std::vector<double> apply_filter(const BiquadCascade& c, std::span<const double> x) {
  check_finite(x);
  std::vector<double> y(x.begin(), x.end());
  filter_in_place(c, y);
  return y;
}

/// Forward then time-reversed pass; zero phase, squared magnitude response.
inline std::vector<double> apply_filter_zero_phase(const BiquadCascade& c, std::span<const double> x) {
  check_finite(x);
  std::vector<double> y(x.begin(), x.end());
  filter_in_place(c, y);
  std::reverse(y.begin(), y.end());
  filter_in_place(c, y);
  std::reverse(y.begin(), y.end());
  return y;
}

/// Keeps every factor-th sample.
inline std::vector<double> decimate(std::span<const double> x, std::size_t factor) {
  if (factor == 0) throw ConfigError("decimation factor must be positive");
  std::vector<double> y;
  y.reserve(x.size() / factor + 1);
  for (std::size_t i = 0; i < x.size(); i += factor) y.push_back(x[i]);
  return y;
}

/// Full digital stage for one channel: filter chain, then optional decimation.
/// Returns the processed signal and its sample rate.
inline std::pair<std::vector<double>, double> preprocess_channel(const BiquadCascade& chain, const FilterSpec& f,
                                                                 std::span<const double> x) {
  auto y = f.zero_phase ? apply_filter_zero_phase(chain, x) : apply_filter(chain, x);
  if (f.decimate_to_hz > 0) {
    const auto factor = static_cast<std::size_t>(std::llround(f.sample_rate_hz / f.decimate_to_hz));
    return {decimate(y, factor), f.sample_rate_hz / static_cast<double>(factor)};
  }
  return {std::move(y), f.sample_rate_hz};
}

// ---------------------------------------------------------------------------
// Moving RMS

struct RmsParams {
  double window_s = 0.020;
  double hop_s = 0.005;
};

struct RmsSeries {
  std::vector<double> values;
  double hop_s = 0.0;
  double window_s = 0.0;
  double start_time_s = 0.0;  // start of window 0
  std::size_t window_samples = 0;
  std::size_t hop_samples = 0;

  /// Start time of window k.
  double window_start(std::size_t k) const { return start_time_s + static_cast<double>(k) * hop_s; }
};

inline std::pair<std::size_t, std::size_t> rms_geometry(double fs, const RmsParams& p) {
  if (!(p.window_s > 0) || !(p.hop_s > 0)) throw ConfigError("RMS window and hop must be positive");
  if (p.hop_s > p.window_s) throw ConfigError("RMS hop must not exceed the window");
  const auto w = std::llround(p.window_s * fs);
  const auto h = std::llround(p.hop_s * fs);
  if (w < 1) throw ConfigError("RMS window shorter than one sample");
  if (h < 1) throw ConfigError("RMS hop shorter than one sample");
  return {static_cast<std::size_t>(w), static_cast<std::size_t>(h)};
}

/// value[k] = sqrt(mean(x[k*hop, k*hop + W)^2)); floor((len - W) / hop) + 1 values.
inline RmsSeries moving_rms(std::span<const double> x, double fs, const RmsParams& p) {
  const auto [w, h] = rms_geometry(fs, p);
  if (x.size() < w)
    throw DataError("RMS window (" + std::to_string(w) + " samples) longer than signal (" + std::to_string(x.size()) + ")");
  RmsSeries r;
  r.window_samples = w;
  r.hop_samples = h;
  r.window_s = static_cast<double>(w) / fs;
  r.hop_s = static_cast<double>(h) / fs;
  const std::size_t count = (x.size() - w) / h + 1;
  r.values.resize(count);
  for (std::size_t k = 0; k < count; ++k) {
    const double* p0 = x.data() + k * h;
    double acc = 0.0;
    for (std::size_t i = 0; i < w; ++i) acc += p0[i] * p0[i];
    r.values[k] = std::sqrt(acc / static_cast<double>(w));
  }
  return r;
}

}  // namespace emgsel
