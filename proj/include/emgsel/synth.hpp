#pragma once

// Deterministic synthetic multi-channel sEMG.
//
// Each channel of a trial is
//   white Gaussian baseline noise
// + a mains sinusoid (random phase; per-channel pickup amplitude that drifts
//   piecewise-linearly between random knots)
// + during the burst: carrier * envelope * gain * (1 + shared jitter) * (1 + channel jitter)
//
// The carrier is a random-phase multitone whose components are the harmonics
// of `carrier_spacing_hz` lying strictly inside the carrier band. With the
// default 50 Hz spacing every component completes whole cycles in a 20 ms
// window, so the windowed RMS of the carrier is exactly 1 regardless of the
// window position.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "emgsel/core.hpp"
#include "emgsel/dataset_io.hpp"
#include "emgsel/rng.hpp"

namespace emgsel {

enum class Envelope { hann, trapezoid };

struct SynthConfig {
  double sample_rate_hz = 20000.0;
  double duration_s = 15.0;
  double relaxation_s = 5.0;
  double burst_start_s = 6.0;
  double burst_len_s = 2.0;
  Envelope envelope = Envelope::hann;
  double carrier_lo_hz = 70.0;
  double carrier_hi_hz = 250.0;
  double carrier_spacing_hz = 50.0;
  double mains_hz = 50.0;
  double mains_amp = 20e-6;            // volts, peak
  double mains_amp_jitter_rel = 0.5;   // per-channel pickup spread
  double mains_drift_rel = 0.2;        // slow pickup drift within a trial
  double mains_drift_interval_s = 1.0; // knot spacing of the drift
  double baseline_noise_rms = 5e-6;    // volts, broadband
  double gain_jitter_rel = 0.15;       // shared per trial
  double channel_jitter_rel = 0.05;    // independent per channel
  std::uint64_t seed = 0;
  std::string subject_id = "synthetic";
};

/// Carrier component frequencies: multiples of the spacing strictly inside the band.
inline std::vector<double> carrier_tones(const SynthConfig& c) {
  std::vector<double> tones;
  if (!(c.carrier_spacing_hz > 0)) return tones;
  for (int m = 1;; ++m) {
    const double f = m * c.carrier_spacing_hz;
    if (f >= c.carrier_hi_hz) break;
    if (f > c.carrier_lo_hz) tones.push_back(f);
  }
  return tones;
}

inline void validate(const SynthConfig& c) {
  if (!(c.sample_rate_hz > 0)) throw ConfigError("synth: sample rate must be positive");
  if (!(c.duration_s > 0)) throw ConfigError("synth: duration must be positive");
  if (!(c.relaxation_s > 0)) throw ConfigError("synth: relaxation must be positive");
  if (!(c.burst_len_s > 0)) throw ConfigError("synth: burst length must be positive");
  if (c.burst_start_s < c.relaxation_s) throw ConfigError("synth: burst must start after the relaxation segment");
  if (c.burst_start_s + c.burst_len_s > c.duration_s) throw ConfigError("synth: burst does not fit in the trial");
  if (!(c.carrier_lo_hz > 0 && c.carrier_lo_hz < c.carrier_hi_hz && c.carrier_hi_hz < c.sample_rate_hz / 2))
    throw ConfigError("synth: carrier band must lie inside (0, fs/2)");
  if (carrier_tones(c).empty()) throw ConfigError("synth: no carrier harmonic inside the carrier band");
  if (c.mains_amp < 0 || c.baseline_noise_rms < 0) throw ConfigError("synth: amplitudes must be non-negative");
  if (!(c.mains_hz > 0 && c.mains_hz < c.sample_rate_hz / 2)) throw ConfigError("synth: mains frequency must lie in (0, fs/2)");
  if (!(c.mains_drift_interval_s > 0)) throw ConfigError("synth: mains drift interval must be positive");
  for (double j : {c.mains_amp_jitter_rel, c.mains_drift_rel, c.gain_jitter_rel, c.channel_jitter_rel})
    if (!(j >= 0 && j < 1)) throw ConfigError("synth: relative jitters must lie in [0, 1)");
}

/// Class x channel activation gains (volts RMS at full activation).
struct ClassGainProfile {
  std::vector<ChannelId> channels;
  std::vector<ActionLabel> labels;  // one per gains row
  Matrix gains;
};

inline void validate(const ClassGainProfile& p) {
  validate_channels(p.channels);
  if (p.labels.empty()) throw ConfigError("profile: no classes");
  if (p.gains.rows() != p.labels.size() || p.gains.cols() != p.channels.size())
    throw ConfigError("profile: gains must be classes x channels");
  for (double g : p.gains.data())
    if (!(g >= 0) || !std::isfinite(g)) throw ConfigError("profile: gains must be finite and non-negative");
  for (const auto& l : p.labels) validate_label(l);
  auto sorted = canonical_classes(p.labels);
  if (sorted.size() != p.labels.size()) throw ConfigError("profile: duplicate class labels");
}

namespace detail {

inline double envelope_at(Envelope e, double u) {
  if (e == Envelope::hann) {
    const double s = std::sin(std::numbers::pi * u);
    return s * s;
  }
  constexpr double ramp = 0.2;
  if (u < ramp) return u / ramp;
  if (u > 1.0 - ramp) return (1.0 - u) / ramp;
  return 1.0;
}

// Adds amp(n) * sin(w n + phase) for n in [0, x.size()) using a rotation
// recurrence, re-anchored periodically to bound round-off growth.
template <typename Amp>
inline void add_sinusoid(std::span<double> x, Amp amp, double w, double phase) {
  constexpr std::size_t kAnchor = 4096;
  const double cw = std::cos(w), sw = std::sin(w);
  double s = 0, c = 0;
  for (std::size_t n = 0; n < x.size(); ++n) {
    if (n % kAnchor == 0) {
      const double a = w * static_cast<double>(n) + phase;
      s = std::sin(a);
      c = std::cos(a);
    }
    x[n] += amp(n) * s;
    const double s1 = s * cw + c * sw;
    c = c * cw - s * sw;
    s = s1;
  }
}

inline void add_sinusoid(std::span<double> x, double amp, double w, double phase) {
  add_sinusoid(x, [amp](std::size_t) { return amp; }, w, phase);
}

}  // namespace detail

/// One synthetic trial of class `class_idx` (row of the profile). Every random
/// draw comes from streams derived from trial_seed.
inline TrialRecord generate_trial(const SynthConfig& cfg, const ClassGainProfile& profile, int class_idx,
                                  std::uint64_t trial_seed, std::string trial_id = {}) {
  validate(cfg);
  if (class_idx < 0 || static_cast<std::size_t>(class_idx) >= profile.labels.size())
    throw ConfigError("synth: class index out of range");
  const double fs = cfg.sample_rate_hz;
  const std::size_t n_samples = expected_sample_count(cfg.duration_s, fs);
  const std::size_t n_channels = profile.channels.size();
  const auto burst_begin = static_cast<std::size_t>(std::llround(cfg.burst_start_s * fs));
  const auto burst_end = std::min(n_samples, static_cast<std::size_t>(std::llround((cfg.burst_start_s + cfg.burst_len_s) * fs)));
  const auto tones = carrier_tones(cfg);
  const double tone_amp = std::sqrt(2.0 / static_cast<double>(tones.size()));

  TrialRecord t;
  t.trial_id = trial_id.empty() ? "c" + std::to_string(class_idx) + "-" + std::to_string(trial_seed) : std::move(trial_id);
  t.subject_id = cfg.subject_id;
  t.label = profile.labels[static_cast<std::size_t>(class_idx)];
  t.sample_rate_hz = fs;
  t.relaxation_s = cfg.relaxation_s;
  t.duration_s = cfg.duration_s;
  t.samples = Matrix(n_channels, n_samples);

  Rng shared(derive_seed(trial_seed, {0xFFFFFFFFull}));
  const double shared_gain = 1.0 + shared.uniform(-cfg.gain_jitter_rel, cfg.gain_jitter_rel);

  std::vector<double> carrier(burst_end - burst_begin);
  std::vector<double> phases(tones.size());
  for (std::size_t ch = 0; ch < n_channels; ++ch) {
    Rng rng(derive_seed(trial_seed, {static_cast<std::uint64_t>(ch)}));
    const double channel_gain = 1.0 + rng.uniform(-cfg.channel_jitter_rel, cfg.channel_jitter_rel);
    const double mains_amp = cfg.mains_amp * (1.0 + rng.uniform(-cfg.mains_amp_jitter_rel, cfg.mains_amp_jitter_rel));
    const double mains_phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    for (auto& ph : phases) ph = rng.uniform(0.0, 2.0 * std::numbers::pi);
    std::vector<double> knots(static_cast<std::size_t>(std::ceil(cfg.duration_s / cfg.mains_drift_interval_s)) + 1);
    for (double& k : knots) k = mains_amp * (1.0 + rng.uniform(-cfg.mains_drift_rel, cfg.mains_drift_rel));

    auto x = t.samples.row(ch);
    if (cfg.baseline_noise_rms > 0)
      for (double& v : x) v = cfg.baseline_noise_rms * rng.normal();
    if (mains_amp > 0) {
      const double per_knot = cfg.mains_drift_interval_s * fs;
      auto amp = [&](std::size_t n) {
        const double pos = static_cast<double>(n) / per_knot;
        const auto k = static_cast<std::size_t>(pos);
        const double f = pos - static_cast<double>(k);
        return knots[k] + f * (knots[k + 1] - knots[k]);
      };
      detail::add_sinusoid(x, amp, 2.0 * std::numbers::pi * cfg.mains_hz / fs, mains_phase);
    }

    const double gain = profile.gains(static_cast<std::size_t>(class_idx), ch) * shared_gain * channel_gain;
    if (gain <= 0 || carrier.empty()) continue;
    std::fill(carrier.begin(), carrier.end(), 0.0);
    for (std::size_t k = 0; k < tones.size(); ++k) {
      // Phase referenced to absolute sample index so the waveform is periodic in trial time.
      const double w = 2.0 * std::numbers::pi * tones[k] / fs;
      detail::add_sinusoid(carrier, tone_amp, w, phases[k] + w * static_cast<double>(burst_begin));
    }
    const double len = static_cast<double>(carrier.size());
    for (std::size_t n = 0; n < carrier.size(); ++n) {
      const double u = (static_cast<double>(n) + 0.5) / len;
      x[burst_begin + n] += gain * detail::envelope_at(cfg.envelope, u) * carrier[n];
    }
  }
  return t;
}

/// Trial i of a class-major generation plan: class = i / per_class, repeat = i % per_class.
struct SynthPlan {
  SynthConfig cfg;
  ClassGainProfile profile;
  int trials_per_class = 0;
  std::uint64_t seed = 0;

  std::size_t size() const { return profile.labels.size() * static_cast<std::size_t>(trials_per_class); }

  std::vector<ActionLabel> classes() const { return canonical_classes(profile.labels); }

  std::uint64_t trial_seed(int class_idx, int repeat) const {
    return derive_seed(seed, {static_cast<std::uint64_t>(class_idx), static_cast<std::uint64_t>(repeat)});
  }

  TrialRecord trial(std::size_t i) const {
    const int c = static_cast<int>(i / static_cast<std::size_t>(trials_per_class));
    const int r = static_cast<int>(i % static_cast<std::size_t>(trials_per_class));
    char id[32];
    std::snprintf(id, sizeof(id), "c%02d-r%03d", c, r);
    return generate_trial(cfg, profile, c, trial_seed(c, r), id);
  }
};

inline SynthPlan make_plan(const SynthConfig& cfg, const ClassGainProfile& profile, int trials_per_class,
                           std::uint64_t seed) {
  validate(cfg);
  validate(profile);
  if (trials_per_class < 2) throw ConfigError("synth: trials_per_class must be at least 2");
  return SynthPlan{cfg, profile, trials_per_class, seed};
}

/// In-memory dataset of classes x trials_per_class trials.
inline Dataset generate_dataset(const SynthConfig& cfg, const ClassGainProfile& profile, int trials_per_class,
                                std::uint64_t seed) {
  const auto plan = make_plan(cfg, profile, trials_per_class, seed);
  std::vector<TrialRecord> trials;
  trials.reserve(plan.size());
  for (std::size_t i = 0; i < plan.size(); ++i) trials.push_back(plan.trial(i));
  return make_dataset(profile.channels, std::move(trials));
}

/// Streams the plan to a dataset directory without holding all trials in memory.
inline void write_synth_dataset(const SynthPlan& plan, const std::filesystem::path& dir) {
  DatasetWriter w(dir, plan.profile.channels);
  for (std::size_t i = 0; i < plan.size(); ++i) w.add(plan.trial(i));
  w.finish();
}

// ---------------------------------------------------------------------------
// Presets

namespace detail {

inline std::vector<ChannelId> placements(const std::string& site, int first, int count) {
  std::vector<ChannelId> out;
  for (int i = 0; i < count; ++i) out.push_back({i, site + "-#" + std::to_string(first + i)});
  return out;
}

inline ActionLabel label_of(Limb limb, Joint joint, Action action, std::optional<Digit> digit = std::nullopt,
                            std::optional<int> posture = std::nullopt) {
  ActionLabel l;
  l.limb = limb;
  l.joint = joint;
  l.action = action;
  l.digit = digit;
  l.posture_deg = posture;
  return l;
}

inline Matrix gains_uv(std::initializer_list<std::initializer_list<double>> rows) {
  Matrix m;
  for (const auto& r : rows) {
    std::vector<double> v;
    for (double g : r) v.push_back(g * 1e-6);
    m.append_row(v);
  }
  return m;
}

}  // namespace detail

inline const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names{"fingers4", "fingers5-posture", "elbow4", "shoulder6", "ankle3", "knee2"};
  return names;
}

/// Five-finger flexion gains for a forearm posture. Each class is a bump on
/// the ring of six forearm electrodes; rotating the forearm shifts every bump
/// by posture_deg / 180 * shift_channels positions, so profile correlation
/// with the 0 deg layout falls as the angle grows.
inline ClassGainProfile posture_profile(int posture_deg, double shift_channels = 1.0) {
  using namespace detail;
  ClassGainProfile p;
  p.channels = placements("forearm", 1, 6);
  const Digit digits[] = {Digit::thumb, Digit::index, Digit::middle, Digit::ring, Digit::little};
  const double shift = shift_channels * posture_deg / 180.0;
  for (int c = 0; c < 5; ++c) {
    p.labels.push_back(label_of(Limb::upper, Joint::finger, Action::flexion, digits[c], posture_deg));
    std::vector<double> row(6);
    const double centre = 1.2 * c + shift;
    for (int ch = 0; ch < 6; ++ch) {
      const double phi = 2.0 * std::numbers::pi * (ch - centre) / 6.0;
      row[static_cast<std::size_t>(ch)] = (20.0 + 110.0 * std::exp(2.0 * (std::cos(phi) - 1.0))) * 1e-6;
    }
    p.gains.append_row(row);
  }
  return p;
}

/// Named gain profiles mirroring the electrode layouts and class counts of
/// the finger, elbow, shoulder, ankle and knee experiments.
inline ClassGainProfile preset_profile(const std::string& name, int posture_deg = 0) {
  using namespace detail;
  ClassGainProfile p;
  if (name == "fingers4") {
    // Channels #2-#5 carry the class information; #1 and #6 do not.
    p.channels = placements("forearm", 1, 6);
    p.labels = {label_of(Limb::upper, Joint::finger, Action::flexion, Digit::index),
                label_of(Limb::upper, Joint::finger, Action::flexion, Digit::middle),
                label_of(Limb::upper, Joint::finger, Action::flexion, Digit::ring),
                label_of(Limb::upper, Joint::finger, Action::flexion, Digit::little)};
    p.gains = gains_uv({{25, 25, 120, 60, 25, 25},
                        {25, 25, 25, 120, 60, 25},
                        {25, 60, 25, 25, 120, 25},
                        {25, 120, 60, 25, 25, 25}});
  } else if (name == "fingers5-posture") {
    if (posture_deg != 0 && posture_deg != 90 && posture_deg != 180)
      throw ConfigError("posture must be 0, 90 or 180");
    return posture_profile(posture_deg);
  } else if (name == "elbow4") {
    p.channels = placements("upperarm", 10, 4);
    p.labels = {label_of(Limb::upper, Joint::elbow, Action::flexion),
                label_of(Limb::upper, Joint::elbow, Action::extension),
                label_of(Limb::upper, Joint::elbow, Action::supination),
                label_of(Limb::upper, Joint::elbow, Action::pronation)};
    p.gains = gains_uv({{110, 40, 30, 60}, {35, 115, 55, 30}, {30, 50, 110, 45}, {60, 35, 45, 115}});
  } else if (name == "shoulder6") {
    p.channels = placements("shoulder", 7, 3);
    p.labels = {label_of(Limb::upper, Joint::shoulder, Action::flexion),
                label_of(Limb::upper, Joint::shoulder, Action::extension),
                label_of(Limb::upper, Joint::shoulder, Action::abduction),
                label_of(Limb::upper, Joint::shoulder, Action::adduction),
                label_of(Limb::upper, Joint::shoulder, Action::supination),
                label_of(Limb::upper, Joint::shoulder, Action::pronation)};
    p.gains = gains_uv({{110, 40, 30}, {40, 110, 30}, {30, 45, 110}, {80, 80, 30}, {30, 80, 80}, {80, 30, 80}});
  } else if (name == "ankle3") {
    // Linear, lateral and angular motion groups.
    p.channels = placements("lowerleg", 14, 3);
    p.labels = {label_of(Limb::lower, Joint::ankle, Action::flexion),
                label_of(Limb::lower, Joint::ankle, Action::abduction),
                label_of(Limb::lower, Joint::ankle, Action::inversion)};
    p.gains = gains_uv({{110, 40, 30}, {40, 110, 40}, {35, 50, 110}});
  } else if (name == "knee2") {
    p.channels = placements("upperleg", 17, 3);
    p.labels = {label_of(Limb::lower, Joint::knee, Action::flexion),
                label_of(Limb::lower, Joint::knee, Action::extension)};
    p.gains = gains_uv({{110, 40, 60}, {40, 110, 60}});
  } else {
    std::string msg = "unknown preset '" + name + "'; available:";
    for (const auto& n : preset_names()) msg += " " + n;
    throw ConfigError(msg);
  }
  return p;
}

// ---------------------------------------------------------------------------
// JSON config files: {"config": {...}, "profile": {"channels": [...], "classes": [...]}}

inline SynthConfig synth_config_from_json(const nlohmann::json& j, SynthConfig c = {}) {
  c.sample_rate_hz = j.value("sample_rate_hz", c.sample_rate_hz);
  c.duration_s = j.value("duration_s", c.duration_s);
  c.relaxation_s = j.value("relaxation_s", c.relaxation_s);
  c.burst_start_s = j.value("burst_start_s", c.burst_start_s);
  c.burst_len_s = j.value("burst_len_s", c.burst_len_s);
  const auto env = j.value("envelope", std::string("hann"));
  if (env == "hann") c.envelope = Envelope::hann;
  else if (env == "trapezoid") c.envelope = Envelope::trapezoid;
  else throw ConfigError("synth config: unknown envelope '" + env + "'");
  if (j.contains("carrier_band")) {
    c.carrier_lo_hz = j["carrier_band"].at(0).get<double>();
    c.carrier_hi_hz = j["carrier_band"].at(1).get<double>();
  }
  c.carrier_spacing_hz = j.value("carrier_spacing_hz", c.carrier_spacing_hz);
  c.mains_hz = j.value("mains_hz", c.mains_hz);
  c.mains_amp = j.value("mains_amp", c.mains_amp);
  c.mains_amp_jitter_rel = j.value("mains_amp_jitter_rel", c.mains_amp_jitter_rel);
  c.mains_drift_rel = j.value("mains_drift_rel", c.mains_drift_rel);
  c.mains_drift_interval_s = j.value("mains_drift_interval_s", c.mains_drift_interval_s);
  c.baseline_noise_rms = j.value("baseline_noise_rms", c.baseline_noise_rms);
  c.gain_jitter_rel = j.value("gain_jitter_rel", c.gain_jitter_rel);
  c.channel_jitter_rel = j.value("channel_jitter_rel", c.channel_jitter_rel);
  c.seed = j.value("seed", c.seed);
  c.subject_id = j.value("subject_id", c.subject_id);
  return c;
}

inline ClassGainProfile profile_from_json(const nlohmann::json& j) {
  ClassGainProfile p;
  for (const auto& cj : j.at("channels")) {
    ChannelId id;
    id.index = cj.at("index").get<int>();
    if (cj.contains("placement")) id.placement = cj["placement"].get<std::string>();
    p.channels.push_back(std::move(id));
  }
  for (const auto& kj : j.at("classes")) {
    p.labels.push_back(parse_label(kj.at("label").get<std::string>()));
    p.gains.append_row(kj.at("gains").get<std::vector<double>>());
  }
  validate(p);
  return p;
}

inline std::pair<SynthConfig, ClassGainProfile> load_synth_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open synth config " + path.string());
  try {
    const auto j = nlohmann::json::parse(in);
    SynthConfig c = j.contains("config") ? synth_config_from_json(j["config"]) : SynthConfig{};
    return {c, profile_from_json(j.at("profile"))};
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("synth config: ") + e.what());
  } catch (const DataError& e) {
    throw ConfigError(std::string("synth config: ") + e.what());
  }
}

}  // namespace emgsel
