#pragma once

// Command-line front end. run() is kept separate from main() so tests can
// drive the commands in-process.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "emgsel/emgsel.hpp"

namespace emgsel::cli {

namespace fs = std::filesystem;
using nlohmann::json;

enum ExitCode { kOk = 0, kFailure = 1, kUsage = 2, kDataError = 3, kNumericError = 4 };

inline constexpr const char* kBundleFormat = "emgsel-bundle";
inline constexpr int kBundleVersion = 1;

struct Globals {
  std::uint64_t seed = 0;
  unsigned jobs = 1;
  std::string out;
  bool seed_given = false;
};

struct Pipeline {
  FilterSpec fspec;
  RmsParams rms;
  SvmParams svm;
  std::string kernel = "rbf";
  double eps = kDefaultNormalizerEps;
  std::vector<std::string> classes;
  bool strict = false;

  void resolve() {
    if (kernel == "linear") svm.kernel.kind = KernelKind::linear;
    else if (kernel == "rbf") svm.kernel.kind = KernelKind::rbf;
    else throw ConfigError("unknown kernel '" + kernel + "'");
    validate(fspec);
    rms_geometry(fspec.sample_rate_hz, rms);
    validate(svm);
    if (!(eps > 0)) throw ConfigError("eps must be positive");
  }
};

inline json filter_to_json(const FilterSpec& f) {
  return {{"notch_hz", f.notch_hz},       {"notch_q", f.notch_q},   {"notch_enabled", f.notch_enabled},
          {"band_lo_hz", f.band_lo_hz},   {"band_hi_hz", f.band_hi_hz}, {"order", f.order},
          {"zero_phase", f.zero_phase},   {"decimate_to_hz", f.decimate_to_hz}};
}

inline FilterSpec filter_from_json(const json& j) {
  FilterSpec f;
  f.notch_hz = j.at("notch_hz").get<double>();
  f.notch_q = j.at("notch_q").get<double>();
  f.notch_enabled = j.at("notch_enabled").get<bool>();
  f.band_lo_hz = j.at("band_lo_hz").get<double>();
  f.band_hi_hz = j.at("band_hi_hz").get<double>();
  f.order = j.at("order").get<int>();
  f.zero_phase = j.at("zero_phase").get<bool>();
  f.decimate_to_hz = j.at("decimate_to_hz").get<double>();
  return f;
}

inline json svm_to_json(const SvmParams& p) {
  return {{"c", p.c}, {"kernel", kernel_to_json(p.kernel)}, {"tol", p.tol}, {"max_passes", p.max_passes},
          {"max_iter", p.max_iter}, {"standardize", p.standardize}};
}

inline json synth_config_to_json(const SynthConfig& c) {
  return {{"sample_rate_hz", c.sample_rate_hz},
          {"duration_s", c.duration_s},
          {"relaxation_s", c.relaxation_s},
          {"burst_start_s", c.burst_start_s},
          {"burst_len_s", c.burst_len_s},
          {"envelope", c.envelope == Envelope::hann ? "hann" : "trapezoid"},
          {"carrier_band", {c.carrier_lo_hz, c.carrier_hi_hz}},
          {"carrier_spacing_hz", c.carrier_spacing_hz},
          {"mains_hz", c.mains_hz},
          {"mains_amp", c.mains_amp},
          {"mains_amp_jitter_rel", c.mains_amp_jitter_rel},
          {"mains_drift_rel", c.mains_drift_rel},
          {"mains_drift_interval_s", c.mains_drift_interval_s},
          {"baseline_noise_rms", c.baseline_noise_rms},
          {"gain_jitter_rel", c.gain_jitter_rel},
          {"channel_jitter_rel", c.channel_jitter_rel},
          {"seed", c.seed},
          {"subject_id", c.subject_id}};
}

inline json profile_to_json(const ClassGainProfile& p) {
  json j;
  j["channels"] = json::array();
  for (const auto& c : p.channels) {
    json cj{{"index", c.index}};
    if (c.placement) cj["placement"] = *c.placement;
    j["channels"].push_back(cj);
  }
  j["classes"] = json::array();
  for (std::size_t r = 0; r < p.labels.size(); ++r) {
    auto g = p.gains.row(r);
    j["classes"].push_back({{"label", to_string(p.labels[r])}, {"gains", std::vector<double>(g.begin(), g.end())}});
  }
  return j;
}

namespace detail {

inline void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream f(p, std::ios::binary);
  if (!f) throw DataError("cannot write " + p.string());
  f << text;
  if (!f) throw DataError("cannot write " + p.string());
}

inline fs::path require_out(const Globals& g) {
  if (g.out.empty()) throw ConfigError("--out is required for this command");
  return fs::path(g.out);
}

inline std::vector<ActionLabel> parse_labels(const std::vector<std::string>& texts) {
  std::vector<ActionLabel> out;
  for (const auto& t : texts) {
    try {
      out.push_back(parse_label(t));
    } catch (const Error& e) {
      throw ConfigError(std::string("--classes: ") + e.what());
    }
  }
  return out;
}

inline DatasetReader open_dataset(const std::string& dir, const Pipeline& p) {
  DatasetReader r(dir);
  if (!p.classes.empty()) {
    const auto keep = parse_labels(p.classes);
    r.filter_classes(keep);
    if (r.size() == 0) throw DataError("class filter leaves no trials in " + dir);
  }
  return r;
}

// Maps user-facing channel indices (as in the manifest) to positions.
inline std::vector<int> positions_of(const std::vector<int>& ids, const std::vector<ChannelId>& channels) {
  std::vector<int> out;
  for (int id : ids) {
    auto it = std::find_if(channels.begin(), channels.end(), [&](const ChannelId& c) { return c.index == id; });
    if (it == channels.end()) throw ConfigError("channel " + std::to_string(id) + " not in dataset");
    out.push_back(static_cast<int>(it - channels.begin()));
  }
  std::vector<int> sorted = out;
  std::sort(sorted.begin(), sorted.end());
  validate_subset(sorted, channels.size());
  return sorted;
}

inline std::vector<int> subset_or_all(const std::vector<int>& ids, const std::vector<ChannelId>& channels) {
  if (!ids.empty()) return positions_of(ids, channels);
  std::vector<int> all(channels.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
  return all;
}

inline std::optional<int> normalizer_position(std::optional<int> id, const std::vector<ChannelId>& channels,
                                              const std::vector<int>& subset) {
  if (!id) return std::nullopt;
  const int pos = positions_of({*id}, channels).front();
  if (subset.size() > 1 && std::find(subset.begin(), subset.end(), pos) == subset.end())
    throw ConfigError("normalizer " + std::to_string(*id) + " not in subset");
  return pos;
}

inline std::vector<std::vector<int>> parse_whitelist(const std::string& text) {
  std::vector<std::vector<int>> out;
  std::stringstream groups(text);
  std::string group;
  while (std::getline(groups, group, ';')) {
    std::vector<int> ids;
    std::stringstream items(group);
    std::string item;
    while (std::getline(items, item, ',')) {
      try {
        std::size_t used = 0;
        ids.push_back(std::stoi(item, &used));
        if (used != item.size()) throw std::invalid_argument(item);
      } catch (const std::exception&) {
        throw ConfigError("--whitelist: bad channel '" + item + "'");
      }
    }
    if (ids.empty()) throw ConfigError("--whitelist: empty subset");
    out.push_back(std::move(ids));
  }
  return out;
}

inline std::string fixed6(double v) { return emgsel::detail::fixed6(v); }

inline void require_converged(bool converged, bool strict, std::ostream& err) {
  if (converged) return;
  if (strict) throw NumericError("SVM training did not converge within the iteration caps");
  err << "warning: SVM training hit its iteration caps before converging\n";
}

inline std::string ids_json_text(const std::vector<int>& positions, const std::vector<ChannelId>& channels) {
  std::string s;
  for (std::size_t i = 0; i < positions.size(); ++i)
    s += (i ? ";" : "") + std::to_string(channels[static_cast<std::size_t>(positions[i])].index);
  return s;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Commands

struct SynthArgs {
  std::string preset;
  std::string config;
  int posture = 0;
  int trials = 60;
  bool print_config = false;
};

inline int cmd_synth(const Globals& g, const SynthArgs& a, std::ostream& out) {
  SynthConfig cfg;
  ClassGainProfile profile;
  if (!a.preset.empty() && !a.config.empty()) throw ConfigError("give either --preset or --config, not both");
  if (!a.preset.empty()) {
    profile = preset_profile(a.preset, a.posture);
  } else if (!a.config.empty()) {
    std::tie(cfg, profile) = load_synth_file(a.config);
  } else {
    std::string msg = "no preset or config given; presets:";
    for (const auto& n : preset_names()) msg += " " + n;
    throw ConfigError(msg);
  }
  if (g.seed_given) cfg.seed = g.seed;
  if (a.print_config) {
    out << json{{"config", synth_config_to_json(cfg)}, {"profile", profile_to_json(profile)}}.dump(2) << '\n';
    return kOk;
  }
  const auto dir = detail::require_out(g);
  const auto plan = make_plan(cfg, profile, a.trials, cfg.seed);
  write_synth_dataset(plan, dir);
  out << "synth: " << plan.size() << " trials, " << plan.classes().size() << " classes, " << profile.channels.size()
      << " channels, seed " << cfg.seed << " -> " << dir.string() << '\n';
  return kOk;
}

struct PreprocessArgs {
  std::string data;
  std::vector<std::string> trials;
};

inline int cmd_preprocess(const Globals& g, const Pipeline& p, const PreprocessArgs& a, std::ostream& out) {
  const auto dir = detail::require_out(g);
  const auto reader = detail::open_dataset(a.data, p);
  std::vector<std::size_t> picks;
  for (std::size_t i = 0; i < reader.size(); ++i)
    if (a.trials.empty() || std::find(a.trials.begin(), a.trials.end(), reader.meta(i).trial_id) != a.trials.end())
      picks.push_back(i);
  if (picks.size() != (a.trials.empty() ? reader.size() : a.trials.size()))
    throw DataError("unknown trial id in --trial");

  std::vector<std::string> rms_text(picks.size());
  std::vector<PeakProfile> peaks(picks.size());
  parallel_for(picks.size(), g.jobs, [&](std::size_t k) {
    const auto t = reader.read(picks[k]);
    FilterSpec f = p.fspec;
    f.sample_rate_hz = t.sample_rate_hz;
    const auto chain = design_chain(f);
    std::vector<RmsSeries> series;
    for (std::size_t c = 0; c < t.channel_count(); ++c) {
      auto [y, fs_out] = preprocess_channel(chain, f, t.channel(c));
      series.push_back(moving_rms(y, fs_out, p.rms));
    }
    std::string s = "t";
    for (const auto& ch : reader.channels()) s += ",ch" + std::to_string(ch.index);
    s += '\n';
    for (std::size_t w = 0; w < series.front().values.size(); ++w) {
      emgsel::detail::append_number(s, series.front().window_start(w), kCsvDigits);
      for (const auto& r : series) {
        s += ',';
        emgsel::detail::append_number(s, r.values[w], kCsvDigits);
      }
      s += '\n';
    }
    rms_text[k] = std::move(s);
    peaks[k] = extract_peaks(t, p.fspec, p.rms);
  });

  std::string summary = "trial_id,label";
  for (const auto& ch : reader.channels()) summary += ",peak_ch" + std::to_string(ch.index);
  for (const auto& ch : reader.channels()) summary += ",baseline_ch" + std::to_string(ch.index);
  summary += '\n';
  for (std::size_t k = 0; k < picks.size(); ++k) {
    detail::write_text(dir / "rms" / (peaks[k].trial_id + ".csv"), rms_text[k]);
    summary += peaks[k].trial_id + ',' + to_string(peaks[k].label);
    for (double v : peaks[k].peaks) (summary += ','), emgsel::detail::append_number(summary, v, 17);
    for (double v : peaks[k].baselines) (summary += ','), emgsel::detail::append_number(summary, v, 17);
    summary += '\n';
  }
  detail::write_text(dir / "peaks.csv", summary);
  out << "preprocess: " << picks.size() << " trials -> " << dir.string() << '\n';
  return kOk;
}

struct FeatureArgs {
  std::string data;
  std::vector<int> subset;
  std::optional<int> normalizer;
};

inline int cmd_features(const Globals& g, const Pipeline& p, const FeatureArgs& a, std::ostream& out) {
  const auto dir = detail::require_out(g);
  const auto reader = detail::open_dataset(a.data, p);
  const auto subset = detail::subset_or_all(a.subset, reader.channels());
  auto nrm = detail::normalizer_position(a.normalizer, reader.channels(), subset);
  if (subset.size() > 1 && !nrm) throw ConfigError("--normalizer is required for subsets of 2 or more channels");
  if (!nrm) nrm = subset.front();
  const auto table = compute_profiles(reader, p.fspec, p.rms, g.jobs);
  const auto m = emgsel::detail::features_for(table, subset, *nrm, p.eps);
  detail::write_text(dir / "features.csv", design_matrix_csv(table, m, *nrm));
  out << "features: " << m.x.rows() << " rows x " << m.x.cols() << " features";
  if (m.dropped) out << " (" << m.dropped << " trials dropped: normalizer peak below eps)";
  out << " -> " << (dir / "features.csv").string() << '\n';
  return kOk;
}

struct TrainArgs {
  std::string data;
  std::vector<int> subset;
  std::optional<int> normalizer;
  int repeats = 5;
  double train_fraction = 0.8;
};

inline SearchConfig search_config(const Globals& g, const Pipeline& p, int repeats, double train_fraction) {
  SearchConfig c;
  c.split.seed = g.seed;
  c.split.train_fraction = train_fraction;
  c.svm = p.svm;
  c.fspec = p.fspec;
  c.rms = p.rms;
  c.repeats = repeats;
  c.eps = p.eps;
  c.jobs = g.jobs;
  validate(c);
  return c;
}

inline int cmd_train(const Globals& g, const Pipeline& p, const TrainArgs& a, std::ostream& out, std::ostream& err) {
  const auto dir = detail::require_out(g);
  const auto reader = detail::open_dataset(a.data, p);
  const auto subset = detail::subset_or_all(a.subset, reader.channels());
  const auto table = compute_profiles(reader, p.fspec, p.rms, g.jobs);
  const auto cfg = search_config(g, p, a.repeats, a.train_fraction);
  auto nrm = detail::normalizer_position(a.normalizer, reader.channels(), subset);
  if (!nrm) nrm = subset.size() == 1 ? subset.front() : evaluate_subset(table, subset, cfg).normalizer;

  const auto m = emgsel::detail::features_for(table, subset, *nrm, p.eps);
  SvmParams svm = p.svm;
  svm.seed = derive_seed(g.seed, {0x7EA1ull});
  svm.jobs = g.jobs;
  const auto model = train_multiclass(m.x, m.y, svm, static_cast<int>(table.classes.size()));
  detail::require_converged(model.converged(), p.strict, err);

  json b;
  b["format"] = kBundleFormat;
  b["version"] = kBundleVersion;
  b["model"] = model_to_json(model);
  b["labels"] = json::array();
  for (const auto& c : table.classes) b["labels"].push_back(to_string(c));
  b["channels"] = json::array();
  for (const auto& c : table.channels) b["channels"].push_back(c.index);
  b["channel_count"] = table.channel_count();
  b["subset"] = json::array();
  for (int s : subset) b["subset"].push_back(table.channels[static_cast<std::size_t>(s)].index);
  b["normalizer"] = subset.size() > 1 ? json(table.channels[static_cast<std::size_t>(*nrm)].index) : json(nullptr);
  b["eps"] = p.eps;
  b["filter"] = filter_to_json(p.fspec);
  b["rms"] = {{"window_s", p.rms.window_s}, {"hop_s", p.rms.hop_s}};
  b["seed"] = g.seed;
  b["svm_seed"] = svm.seed;
  b["svm"] = svm_to_json(p.svm);
  detail::write_text(dir / "model.json", b.dump(2) + '\n');

  out << "train: " << model.models.size() << " binary models, " << m.x.rows() << " rows, subset "
      << detail::ids_json_text(subset, table.channels);
  if (subset.size() > 1) out << ", normalizer " << table.channels[static_cast<std::size_t>(*nrm)].index;
  out << ", converged " << (model.converged() ? "yes" : "no") << " -> " << (dir / "model.json").string() << '\n';
  return kOk;
}

struct EvalArgs {
  std::string model;
  std::string data;
};

inline int cmd_eval(const Globals& g, const Pipeline& p, const EvalArgs& a, std::ostream& out) {
  json b;
  {
    std::ifstream f(a.model);
    if (!f) throw DataError("cannot open model " + a.model);
    try {
      b = json::parse(f);
    } catch (const json::exception& e) {
      throw DataError(std::string("model: ") + e.what());
    }
  }
  MultiClassModel model;
  std::vector<ActionLabel> labels;
  std::vector<int> subset_ids;
  std::optional<int> normalizer_id;
  FilterSpec fspec;
  RmsParams rms;
  double eps = kDefaultNormalizerEps;
  std::size_t channel_count = 0;
  try {
    if (b.at("format").get<std::string>() != kBundleFormat) throw DataError("model: not a model bundle");
    if (b.at("version").get<int>() != kBundleVersion) throw DataError("model: unsupported bundle version");
    model = model_from_json(b.at("model"));
    for (const auto& l : b.at("labels")) labels.push_back(parse_label(l.get<std::string>()));
    subset_ids = b.at("subset").get<std::vector<int>>();
    if (!b.at("normalizer").is_null()) normalizer_id = b["normalizer"].get<int>();
    fspec = filter_from_json(b.at("filter"));
    rms.window_s = b.at("rms").at("window_s").get<double>();
    rms.hop_s = b.at("rms").at("hop_s").get<double>();
    eps = b.at("eps").get<double>();
    channel_count = b.at("channel_count").get<std::size_t>();
  } catch (const json::exception& e) {
    throw DataError(std::string("model: ") + e.what());
  }
  if (static_cast<int>(labels.size()) != model.class_count) throw DataError("model: label count mismatch");

  Pipeline scoped = p;
  const auto reader = detail::open_dataset(a.data, scoped);
  if (reader.channels().size() != channel_count)
    throw DataError("model expects " + std::to_string(channel_count) + " channels, dataset has " +
                    std::to_string(reader.channels().size()));
  std::vector<int> subset;
  try {
    subset = detail::positions_of(subset_ids, reader.channels());
  } catch (const ConfigError& e) {
    throw DataError(std::string("model/dataset channel mismatch: ") + e.what());
  }
  const int nrm = normalizer_id ? detail::positions_of({*normalizer_id}, reader.channels()).front() : subset.front();

  const auto table = compute_profiles(reader, fspec, rms, g.jobs);
  std::vector<int> to_model(table.classes.size());
  for (std::size_t c = 0; c < table.classes.size(); ++c) {
    auto it = std::find(labels.begin(), labels.end(), table.classes[c]);
    if (it == labels.end()) throw DataError("dataset class '" + to_string(table.classes[c]) + "' unknown to the model");
    to_model[c] = static_cast<int>(it - labels.begin());
  }
  const auto m = emgsel::detail::features_for(table, subset, nrm, eps);
  std::vector<int> y;
  for (int v : m.y) y.push_back(to_model[static_cast<std::size_t>(v)]);
  const double acc = accuracy(model, m.x, y);
  const auto conf = confusion(model, m.x, y);

  std::string csv = "true\\predicted";
  for (const auto& l : labels) csv += ',' + to_string(l);
  csv += '\n';
  for (std::size_t r = 0; r < conf.size(); ++r) {
    csv += to_string(labels[r]);
    for (int v : conf[r]) csv += ',' + std::to_string(v);
    csv += '\n';
  }
  out << "accuracy " << detail::fixed6(acc) << " (" << m.x.rows() << " trials";
  if (m.dropped) out << ", " << m.dropped << " dropped";
  out << ")\n" << csv;
  if (!g.out.empty()) {
    detail::write_text(fs::path(g.out) / "confusion.csv", csv);
    detail::write_text(fs::path(g.out) / "accuracy.txt", detail::fixed6(acc) + '\n');
  }
  return kOk;
}

struct SearchArgs {
  std::string data;
  int max_k = -1;  // -1: all channels
  int repeats = 5;
  double train_fraction = 0.8;
  std::string whitelist;
};

inline int cmd_search(const Globals& g, const Pipeline& p, const SearchArgs& a, std::ostream& out, std::ostream& err) {
  const auto dir = detail::require_out(g);
  auto cfg = search_config(g, p, a.repeats, a.train_fraction);
  if (a.max_k != -1) {
    if (a.max_k < 1) throw ConfigError("--max-k must be at least 1");
    cfg.max_k = a.max_k;
  }
  const auto reader = detail::open_dataset(a.data, p);
  if (cfg.max_k) resolve_max_k(cfg, reader.channels().size());
  if (!a.whitelist.empty())
    for (const auto& ids : detail::parse_whitelist(a.whitelist)) cfg.whitelist.push_back(detail::positions_of(ids, reader.channels()));
  const auto table = compute_profiles(reader, p.fspec, p.rms, g.jobs);
  const auto rep = search_all(table, cfg);
  bool converged = true;
  for (const auto& r : rep.results) converged = converged && (!r.ok || r.converged);
  detail::require_converged(converged, p.strict, err);
  if (rep.frontier.empty()) throw DataError("every subset failed to evaluate");

  detail::write_text(dir / "results.csv", results_csv(table, rep));
  detail::write_text(dir / "frontier.csv", frontier_csv(table, rep));
  const auto summary = search_summary(table, rep);
  detail::write_text(dir / "summary.txt", summary);

  json meta;
  meta["seed"] = g.seed;
  meta["seed_scheme"] =
      "split seed of (subset, normalizer, repeat) = derive_seed(derive_seed(seed, subset), [0x5EA7, normalizer, "
      "repeat]); SVM seed = derive_seed(split seed, [0x5F1])";
  meta["train_fraction"] = cfg.split.train_fraction;
  meta["repeats"] = cfg.repeats;
  meta["max_k"] = cfg.max_k ? json(*cfg.max_k) : json(nullptr);
  meta["subset_count"] = rep.results.size();
  meta["trials"] = table.size();
  meta["classes"] = json::array();
  for (const auto& c : table.classes) meta["classes"].push_back(to_string(c));
  meta["filter"] = filter_to_json(cfg.fspec);
  meta["rms"] = {{"window_s", cfg.rms.window_s}, {"hop_s", cfg.rms.hop_s}};
  meta["svm"] = svm_to_json(cfg.svm);
  meta["eps"] = cfg.eps;
  json failures = json::array();
  for (const auto& r : rep.results)
    if (!r.ok) failures.push_back({{"subset", detail::ids_json_text(r.subset, table.channels)}, {"error", r.error}});
  meta["failures"] = failures;
  detail::write_text(dir / "search_meta.json", meta.dump(2) + '\n');
  out << summary;
  return kOk;
}

struct CrossArgs {
  std::vector<std::string> train;
  std::vector<std::string> test;
  std::vector<int> subset;
  std::optional<int> normalizer;
  int repeats = 5;
  double train_fraction = 0.8;
};

inline int cmd_cross_eval(const Globals& g, const Pipeline& p, const CrossArgs& a, std::ostream& out,
                          std::ostream& err) {
  const auto& test_dirs = a.test.empty() ? a.train : a.test;
  auto cfg = search_config(g, p, a.repeats, a.train_fraction);
  std::vector<ProfileTable> train, test;
  for (const auto& d : a.train) train.push_back(compute_profiles(detail::open_dataset(d, p), p.fspec, p.rms, g.jobs));
  for (const auto& d : test_dirs) test.push_back(compute_profiles(detail::open_dataset(d, p), p.fspec, p.rms, g.jobs));
  const auto& channels = train.front().channels;
  const auto subset = detail::subset_or_all(a.subset, channels);
  const auto nrm = detail::normalizer_position(a.normalizer, channels, subset);

  auto name = [](const std::string& d) {
    auto n = fs::path(d).lexically_normal().filename().string();
    return n.empty() ? fs::path(d).lexically_normal().parent_path().filename().string() : n;
  };
  std::string csv = "train\\test";
  for (const auto& d : test_dirs) csv += ',' + name(d);
  csv += '\n';
  bool converged = true;
  for (std::size_t i = 0; i < train.size(); ++i) {
    csv += name(a.train[i]);
    for (std::size_t j = 0; j < test.size(); ++j) {
      const auto r = cross_condition_eval(train[i], test[j], subset, cfg, nrm);
      converged = converged && r.converged;
      csv += ',' + detail::fixed6(r.accuracy);
    }
    csv += '\n';
  }
  detail::require_converged(converged, p.strict, err);
  out << csv;
  if (!g.out.empty()) detail::write_text(fs::path(g.out) / "cross_eval.csv", csv);
  return kOk;
}

// ---------------------------------------------------------------------------

inline void add_filter_options(CLI::App* c, Pipeline& p) {
  c->add_option("--notch-hz", p.fspec.notch_hz, "Notch centre frequency (Hz)")->capture_default_str();
  c->add_option("--notch-q", p.fspec.notch_q, "Notch quality factor")->capture_default_str();
  c->add_flag_function("--no-notch", [&p](std::int64_t) { p.fspec.notch_enabled = false; }, "Disable the notch filter");
  c->add_option("--band-lo", p.fspec.band_lo_hz, "Band-pass lower edge (Hz)")->capture_default_str();
  c->add_option("--band-hi", p.fspec.band_hi_hz, "Band-pass upper edge (Hz)")->capture_default_str();
  c->add_option("--order", p.fspec.order, "Butterworth order of each edge")->capture_default_str();
  c->add_flag("--zero-phase", p.fspec.zero_phase, "Forward-backward filtering");
  c->add_option("--decimate-to", p.fspec.decimate_to_hz, "Decimate after filtering (Hz, 0 = off)");
  c->add_option("--rms-window", p.rms.window_s, "RMS window (s)")->capture_default_str();
  c->add_option("--rms-hop", p.rms.hop_s, "RMS hop (s)")->capture_default_str();
  c->add_option("--classes", p.classes, "Keep only these labels, e.g. upper:finger:flexion:index")->delimiter(',');
}

inline void add_model_options(CLI::App* c, Pipeline& p) {
  c->add_option("--c", p.svm.c, "SVM box constraint")->capture_default_str();
  c->add_option("--kernel", p.kernel, "linear or rbf")->capture_default_str();
  c->add_option("--gamma", p.svm.kernel.gamma, "RBF gamma (0 = 1 / (d * mean variance))");
  c->add_option("--tol", p.svm.tol, "KKT tolerance")->capture_default_str();
  c->add_option("--max-passes", p.svm.max_passes, "Cap on full SMO sweeps")->capture_default_str();
  c->add_option("--max-iter", p.svm.max_iter, "Cap on SMO steps")->capture_default_str();
  c->add_flag("--standardize", p.svm.standardize, "Standardize features on the training set");
  c->add_option("--eps", p.eps, "Minimum usable normalizer peak (V)");
  c->add_flag("--strict", p.strict, "Treat SVM non-convergence as an error (exit 4)");
}

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"sEMG channel-subset selection toolkit"};
  app.require_subcommand(1);
  Globals g;
  Pipeline pipe;
  app.add_option("--seed", g.seed, "Base seed for every random choice");
  app.add_option("--jobs", g.jobs, "Worker threads (0 = all cores)");
  app.add_option("--out", g.out, "Output directory");
  app.fallthrough();

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  synth->add_option("--preset", sa.preset, "Preset name");
  synth->add_option("--config", sa.config, "JSON file with config and profile");
  synth->add_option("--posture", sa.posture, "Forearm posture for fingers5-posture (0, 90, 180)");
  synth->add_option("--trials", sa.trials, "Trials per class")->capture_default_str();
  synth->add_flag("--print-config", sa.print_config, "Print the resolved config as JSON instead of generating");

  PreprocessArgs pa;
  auto* pre = app.add_subcommand("preprocess", "Dump filtered RMS envelopes and per-channel peaks");
  pre->add_option("--data", pa.data, "Dataset directory")->required();
  pre->add_option("--trial", pa.trials, "Only these trial ids");
  add_filter_options(pre, pipe);

  FeatureArgs fa;
  auto* feat = app.add_subcommand("features", "Export the normalized feature matrix");
  feat->add_option("--data", fa.data, "Dataset directory")->required();
  feat->add_option("--subset", fa.subset, "Channel indices, comma separated")->delimiter(',');
  feat->add_option("--normalizer", fa.normalizer, "Normalizer channel index");
  add_filter_options(feat, pipe);
  feat->add_option("--eps", pipe.eps, "Minimum usable normalizer peak (V)");

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Train a one-vs-one SVM on a whole dataset");
  train->add_option("--data", ta.data, "Dataset directory")->required();
  train->add_option("--subset", ta.subset, "Channel indices, comma separated")->delimiter(',');
  train->add_option("--normalizer", ta.normalizer, "Normalizer channel index (default: best by re-split accuracy)");
  train->add_option("--repeats", ta.repeats, "Re-splits when choosing the normalizer")->capture_default_str();
  train->add_option("--train-fraction", ta.train_fraction, "Training share when choosing the normalizer");
  add_filter_options(train, pipe);
  add_model_options(train, pipe);

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "Evaluate a trained model on a dataset");
  eval->add_option("--model", ea.model, "Model bundle (model.json)")->required();
  eval->add_option("--data", ea.data, "Dataset directory")->required();
  eval->add_option("--classes", pipe.classes, "Keep only these labels")->delimiter(',');

  SearchArgs sea;
  auto* search = app.add_subcommand("search", "Exhaustive channel-subset search");
  search->add_option("--data", sea.data, "Dataset directory")->required();
  search->add_option("--max-k", sea.max_k, "Largest subset size (default: all channels)");
  search->add_option("--repeats", sea.repeats, "Stratified re-splits per subset")->capture_default_str();
  search->add_option("--train-fraction", sea.train_fraction, "Training share of each split")->capture_default_str();
  search->add_option("--whitelist", sea.whitelist, "Only these subsets, e.g. \"1,2;1,2,3\"");
  add_filter_options(search, pipe);
  add_model_options(search, pipe);

  CrossArgs ca;
  auto* cross = app.add_subcommand("cross-eval", "Train on each condition, test on each condition");
  cross->add_option("--train", ca.train, "Training dataset directories")->required();
  cross->add_option("--test", ca.test, "Test dataset directories (default: the training ones)");
  cross->add_option("--subset", ca.subset, "Channel indices, comma separated")->delimiter(',');
  cross->add_option("--normalizer", ca.normalizer, "Normalizer channel index (default: chosen on training data)");
  cross->add_option("--repeats", ca.repeats, "Re-splits when choosing the normalizer")->capture_default_str();
  add_filter_options(cross, pipe);
  add_model_options(cross, pipe);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }
  g.seed_given = app.count("--seed") > 0;

  try {
    if (*synth) return cmd_synth(g, sa, out);
    pipe.resolve();
    if (*pre) return cmd_preprocess(g, pipe, pa, out);
    if (*feat) return cmd_features(g, pipe, fa, out);
    if (*train) return cmd_train(g, pipe, ta, out, err);
    if (*eval) return cmd_eval(g, pipe, ea, out);
    if (*search) return cmd_search(g, pipe, sea, out, err);
    if (*cross) return cmd_cross_eval(g, pipe, ca, out, err);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const NumericError& e) {
    err << "error: " << e.what() << '\n';
    return kNumericError;
  } catch (const DataError& e) {
    err << "error: " << e.what() << '\n';
    return kDataError;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kDataError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kUsage;
}

}  // namespace emgsel::cli
