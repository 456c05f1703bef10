#pragma once

// Per-channel peak RMS extraction and ratio normalization.

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "emgsel/core.hpp"
#include "emgsel/dataset_io.hpp"
#include "emgsel/dsp.hpp"
#include "emgsel/parallel.hpp"

namespace emgsel {

inline constexpr double kDefaultNormalizerEps = 1e-9;

struct PeakProfile {
  std::string trial_id;
  ActionLabel label;
  std::vector<double> peaks;      // baseline-corrected max RMS, one per channel
  std::vector<double> baselines;  // median RMS over the relaxation segment
};

struct FeatureVector {
  int normalizer_channel = 0;
  std::vector<double> values;  // n - 1 ratios, ascending channel order
  ActionLabel label;
};

namespace detail {

inline double median(std::vector<double> v) {
  const std::size_t n = v.size();
  auto mid = v.begin() + static_cast<std::ptrdiff_t>(n / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (n % 2 == 1) return *mid;
  const double hi = *mid;
  const double lo = *std::max_element(v.begin(), mid);
  return 0.5 * (lo + hi);
}

}  // namespace detail

/// Baseline and peak for one RMS envelope. Windows lying entirely inside the
/// first `relax_samples` samples form the baseline; windows starting at or
/// after it form the action segment.
inline std::pair<double, double> baseline_and_peak(const RmsSeries& r, std::size_t relax_samples,
                                                   const std::string& trial_id) {
  std::vector<double> rest;
  double active_max = -1.0;
  for (std::size_t k = 0; k < r.values.size(); ++k) {
    const std::size_t start = k * r.hop_samples;
    if (start + r.window_samples <= relax_samples) rest.push_back(r.values[k]);
    if (start >= relax_samples) active_max = std::max(active_max, r.values[k]);
  }
  if (rest.empty()) throw DataError("trial '" + trial_id + "': relaxation segment shorter than one RMS window");
  if (active_max < 0) throw DataError("trial '" + trial_id + "': no RMS window after the relaxation segment");
  const double base = detail::median(std::move(rest));
  return {base, std::max(0.0, active_max - base)};
}

/// Filters every channel (notch, band-pass), takes its moving RMS, and reduces
/// it to a baseline-corrected peak. The trial's own sample rate overrides
/// fspec.sample_rate_hz.
inline PeakProfile extract_peaks(const TrialRecord& trial, FilterSpec fspec, const RmsParams& rms) {
  if (!(trial.duration_s > trial.relaxation_s))
    throw DataError("trial '" + trial.trial_id + "': duration must exceed relaxation");
  fspec.sample_rate_hz = trial.sample_rate_hz;
  const auto chain = design_chain(fspec);
  PeakProfile p;
  p.trial_id = trial.trial_id;
  p.label = trial.label;
  p.peaks.resize(trial.channel_count());
  p.baselines.resize(trial.channel_count());
  for (std::size_t c = 0; c < trial.channel_count(); ++c) {
    auto [y, fs] = preprocess_channel(chain, fspec, trial.channel(c));
    const auto series = moving_rms(y, fs, rms);
    const auto relax = static_cast<std::size_t>(std::llround(trial.relaxation_s * fs));
    std::tie(p.baselines[c], p.peaks[c]) = baseline_and_peak(series, relax, trial.trial_id);
  }
  return p;
}

/// Ratio of every other channel's peak to the normalizer channel's peak.
/// Throws NormalizerTooSmall when that peak is below eps.
inline FeatureVector normalize(const PeakProfile& p, int normalizer, double eps = kDefaultNormalizerEps) {
  if (normalizer < 0 || static_cast<std::size_t>(normalizer) >= p.peaks.size())
    throw ConfigError("normalizer channel " + std::to_string(normalizer) + " out of range");
  const double denom = p.peaks[static_cast<std::size_t>(normalizer)];
  if (!(denom >= eps)) throw NormalizerTooSmall(p.trial_id, normalizer, denom);
  FeatureVector f;
  f.normalizer_channel = normalizer;
  f.label = p.label;
  f.values.reserve(p.peaks.size() - 1);
  for (std::size_t i = 0; i < p.peaks.size(); ++i)
    if (static_cast<int>(i) != normalizer) f.values.push_back(p.peaks[i] / denom);
  return f;
}

// ---------------------------------------------------------------------------
// Profile tables: the per-trial peaks of a whole dataset, computed once and
// shared by every (subset, normalizer) evaluation.

struct ProfileTable {
  std::vector<ChannelId> channels;
  std::vector<ActionLabel> classes;
  std::vector<PeakProfile> profiles;
  std::vector<int> class_of;  // index into classes, aligned with profiles

  std::size_t size() const { return profiles.size(); }
  std::size_t channel_count() const { return channels.size(); }
};

/// Builds a table from `count` trials produced on demand by make(i). Trials
/// are processed in parallel and discarded after peak extraction.
inline ProfileTable compute_profiles(std::size_t count, const std::function<TrialRecord(std::size_t)>& make,
                                     std::vector<ChannelId> channels, std::vector<ActionLabel> classes,
                                     const FilterSpec& fspec, const RmsParams& rms, unsigned jobs = 1) {
  ProfileTable t;
  t.channels = std::move(channels);
  t.classes = std::move(classes);
  t.profiles.resize(count);
  parallel_for(count, jobs, [&](std::size_t i) {
    const TrialRecord trial = make(i);
    if (trial.channel_count() != t.channels.size())
      throw DataError("trial '" + trial.trial_id + "' has " + std::to_string(trial.channel_count()) +
                      " channels, expected " + std::to_string(t.channels.size()));
    t.profiles[i] = extract_peaks(trial, fspec, rms);
  });
  t.class_of.reserve(count);
  for (const auto& p : t.profiles) {
    auto it = std::lower_bound(t.classes.begin(), t.classes.end(), p.label);
    if (it == t.classes.end() || !(*it == p.label)) throw DataError("trial '" + p.trial_id + "' label not in class list");
    t.class_of.push_back(static_cast<int>(it - t.classes.begin()));
  }
  return t;
}

inline ProfileTable compute_profiles(const Dataset& ds, const FilterSpec& fspec, const RmsParams& rms, unsigned jobs = 1) {
  return compute_profiles(
      ds.trials.size(), [&](std::size_t i) { return ds.trials[i]; }, ds.channels, ds.classes, fspec, rms, jobs);
}

inline ProfileTable compute_profiles(const DatasetReader& reader, const FilterSpec& fspec, const RmsParams& rms,
                                     unsigned jobs = 1) {
  return compute_profiles(
      reader.size(), [&](std::size_t i) { return reader.read(i); }, reader.channels(), reader.classes(), fspec, rms,
      jobs);
}

struct DesignMatrix {
  Matrix x;
  std::vector<int> y;               // class indices
  std::vector<std::size_t> source;  // row -> profile position
  std::size_t dropped = 0;          // rows lost to NormalizerTooSmall
};

/// One row per profile with normalized features over `subset` (channel
/// positions, strictly increasing). `normalizer` is a channel position that
/// must belong to the subset.
inline DesignMatrix build_design_matrix(const ProfileTable& t, std::span<const int> subset, int normalizer,
                                        double eps = kDefaultNormalizerEps) {
  validate_subset(subset, t.channel_count());
  if (subset.size() < 2) throw ConfigError("ratio features need at least 2 channels");
  const auto it = std::find(subset.begin(), subset.end(), normalizer);
  if (it == subset.end()) throw ConfigError("normalizer " + std::to_string(normalizer) + " not in subset");
  const int local = static_cast<int>(it - subset.begin());
  DesignMatrix m;
  PeakProfile restricted;
  restricted.peaks.resize(subset.size());
  for (std::size_t r = 0; r < t.size(); ++r) {
    const auto& p = t.profiles[r];
    restricted.trial_id = p.trial_id;
    for (std::size_t i = 0; i < subset.size(); ++i) restricted.peaks[i] = p.peaks[static_cast<std::size_t>(subset[i])];
    try {
      const auto f = normalize(restricted, local, eps);
      m.x.append_row(f.values);
      m.y.push_back(t.class_of[r]);
      m.source.push_back(r);
    } catch (const NormalizerTooSmall&) {
      ++m.dropped;
    }
  }
  if (m.y.empty()) throw DataError("normalizer unusable: channel " + std::to_string(normalizer) + " too small in every trial");
  return m;
}

/// Raw (unnormalized) peaks over `subset`; used for single-channel subsets.
inline DesignMatrix build_raw_matrix(const ProfileTable& t, std::span<const int> subset) {
  validate_subset(subset, t.channel_count());
  DesignMatrix m;
  std::vector<double> row(subset.size());
  for (std::size_t r = 0; r < t.size(); ++r) {
    for (std::size_t i = 0; i < subset.size(); ++i) row[i] = t.profiles[r].peaks[static_cast<std::size_t>(subset[i])];
    m.x.append_row(row);
    m.y.push_back(t.class_of[r]);
    m.source.push_back(r);
  }
  return m;
}

inline DesignMatrix build_design_matrix(const Dataset& ds, std::span<const int> subset, int normalizer,
                                        const FilterSpec& fspec, const RmsParams& rms,
                                        double eps = kDefaultNormalizerEps, unsigned jobs = 1) {
  validate_subset(subset, ds.channel_count());
  return build_design_matrix(compute_profiles(ds, fspec, rms, jobs), subset, normalizer, eps);
}

/// CSV export: trial_id,normalizer,f0..fk,label. The normalizer column holds
/// the channel's ChannelId index.
inline std::string design_matrix_csv(const ProfileTable& t, const DesignMatrix& m, int normalizer) {
  std::string out = "trial_id,normalizer";
  for (std::size_t j = 0; j < m.x.cols(); ++j) out += ",f" + std::to_string(j);
  out += ",label\n";
  const int normalizer_id = t.channels.at(static_cast<std::size_t>(normalizer)).index;
  for (std::size_t r = 0; r < m.x.rows(); ++r) {
    out += t.profiles[m.source[r]].trial_id;
    out += ',' + std::to_string(normalizer_id);
    for (double v : m.x.row(r)) {
      out += ',';
      detail::append_number(out, v, 17);
    }
    out += ',' + to_string(t.classes[static_cast<std::size_t>(m.y[r])]) + '\n';
  }
  return out;
}

}  // namespace emgsel
