#pragma once

// On-disk dataset directories.
//
//   <dir>/manifest.json   channel table + one entry per trial
//   <dir>/<file>.csv      header "t,ch0,...,chN-1", one row per sample
//
// DatasetReader parses the manifest eagerly and trial files on demand, so
// multi-gigabyte recordings can be processed one trial at a time.

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include <nlohmann/json.hpp>

#include "emgsel/core.hpp"

namespace emgsel {

inline constexpr const char* kManifestName = "manifest.json";
inline constexpr const char* kDatasetFormat = "emgsel-dataset";
inline constexpr int kDatasetVersion = 1;
/// Significant digits written for samples.
inline constexpr int kCsvDigits = 9;

namespace detail {

inline void append_number(std::string& out, double v, int digits) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, digits);
  out.append(buf, res.ptr);
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DataError("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return std::move(ss).str();
}

inline nlohmann::json label_to_json(const ActionLabel& l) {
  nlohmann::json j;
  j["limb"] = std::string(to_string(l.limb));
  j["joint"] = std::string(to_string(l.joint));
  j["action"] = std::string(to_string(l.action));
  if (l.digit) j["digit"] = std::string(to_string(*l.digit));
  if (l.posture_deg) j["posture_deg"] = *l.posture_deg;
  return j;
}

/// Reads label fields from a JSON object. `where` prefixes error messages.
inline ActionLabel label_from_json(const nlohmann::json& j, const std::string& where) {
  auto token = [&](const char* field) -> std::string {
    if (!j.contains(field) || !j[field].is_string()) throw DataError(where + " field '" + field + "': missing or not a string");
    return j[field].get<std::string>();
  };
  auto unknown = [&](const char* field, const std::string& tok) {
    return DataError(where + " field '" + field + "': unknown token '" + tok + "'");
  };
  ActionLabel l;
  const auto limb = token("limb");
  const auto joint = token("joint");
  const auto action = token("action");
  if (auto v = parse_limb(limb)) l.limb = *v; else throw unknown("limb", limb);
  if (auto v = parse_joint(joint)) l.joint = *v; else throw unknown("joint", joint);
  if (auto v = parse_action(action)) l.action = *v; else throw unknown("action", action);
  if (j.contains("digit") && !j["digit"].is_null()) {
    const auto d = token("digit");
    if (auto v = parse_digit(d)) l.digit = *v; else throw unknown("digit", d);
  }
  if (j.contains("posture_deg") && !j["posture_deg"].is_null()) {
    if (!j["posture_deg"].is_number_integer()) throw DataError(where + " field 'posture_deg': not an integer");
    l.posture_deg = j["posture_deg"].get<int>();
  }
  try {
    validate_label(l);
  } catch (const DataError& e) {
    throw DataError(where + " field 'label': " + e.what());
  }
  return l;
}

inline double number_field(const nlohmann::json& j, const char* field, double fallback, const std::string& where) {
  if (!j.contains(field)) return fallback;
  if (!j[field].is_number()) throw DataError(where + " field '" + std::string(field) + "': not a number");
  return j[field].get<double>();
}

}  // namespace detail

/// Serializes samples as CSV text (header plus one row per sample).
inline std::string trial_to_csv(const TrialRecord& t) {
  std::string out;
  out.reserve(t.sample_count() * (t.channel_count() + 1) * 16 + 64);
  out += "t";
  for (std::size_t c = 0; c < t.channel_count(); ++c) out += ",ch" + std::to_string(c);
  out += '\n';
  for (std::size_t n = 0; n < t.sample_count(); ++n) {
    detail::append_number(out, static_cast<double>(n) / t.sample_rate_hz, kCsvDigits);
    for (std::size_t c = 0; c < t.channel_count(); ++c) {
      out += ',';
      detail::append_number(out, t.samples(c, n), kCsvDigits);
    }
    out += '\n';
  }
  return out;
}

/// Parses CSV text for a trial with `channels` columns after t.
inline Matrix samples_from_csv(std::string_view text, std::size_t channels, const std::string& trial_id) {
  auto fail = [&](const std::string& what) { return DataError("trial '" + trial_id + "' field 'samples': " + what); };
  std::size_t pos = 0;
  auto next_line = [&](std::string_view& line) {
    if (pos >= text.size()) return false;
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    line = text.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    pos = end + 1;
    return true;
  };
  std::string_view header;
  if (!next_line(header)) throw fail("empty file");
  const auto header_cols = static_cast<std::size_t>(std::count(header.begin(), header.end(), ',')) + 1;
  if (header_cols != channels + 1)
    throw DataError("trial '" + trial_id + "' has " + std::to_string(header_cols - 1) + " channels, expected " +
                    std::to_string(channels));
  std::vector<std::vector<double>> cols(channels);
  std::string_view line;
  std::size_t row = 0;
  while (next_line(line)) {
    if (line.empty()) continue;
    const char* p = line.data();
    const char* end = line.data() + line.size();
    for (std::size_t c = 0; c <= channels; ++c) {
      double v = 0.0;
      auto res = std::from_chars(p, end, v);
      if (res.ec != std::errc()) throw fail("unparseable value at row " + std::to_string(row + 1));
      if (c > 0) {
        if (!std::isfinite(v)) throw fail("non-finite sample at row " + std::to_string(row + 1));
        cols[c - 1].push_back(v);
      }
      p = res.ptr;
      if (c < channels) {
        if (p == end || *p != ',') throw fail("row " + std::to_string(row + 1) + " has too few columns");
        ++p;
      }
    }
    if (p != end) throw fail("row " + std::to_string(row + 1) + " has too many columns");
    ++row;
  }
  Matrix m(channels, row);
  for (std::size_t c = 0; c < channels; ++c) std::copy(cols[c].begin(), cols[c].end(), m.row(c).begin());
  return m;
}

/// Manifest-backed, lazily loading view of a dataset directory.
class DatasetReader {
 public:
  explicit DatasetReader(std::filesystem::path dir) : dir_(std::move(dir)) {
    const auto manifest = dir_ / kManifestName;
    if (!std::filesystem::exists(manifest)) throw DataError("no manifest found in " + dir_.string());
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(detail::read_file(manifest));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(std::string("manifest.json: ") + e.what());
    }
    if (!j.contains("channels") || !j["channels"].is_array()) throw DataError("manifest.json: missing 'channels' array");
    if (!j.contains("trials") || !j["trials"].is_array()) throw DataError("manifest.json: missing 'trials' array");
    for (const auto& c : j["channels"]) {
      ChannelId id;
      if (!c.contains("index") || !c["index"].is_number_integer()) throw DataError("manifest.json: channel without integer 'index'");
      id.index = c["index"].get<int>();
      if (c.contains("placement") && c["placement"].is_string()) id.placement = c["placement"].get<std::string>();
      channels_.push_back(std::move(id));
    }
    validate_channels(channels_);
    std::set<std::string> seen;
    std::size_t n = 0;
    for (const auto& tj : j["trials"]) {
      ++n;
      Entry e;
      if (!tj.contains("trial_id") || !tj["trial_id"].is_string() || tj["trial_id"].get<std::string>().empty())
        throw DataError("manifest.json: trial #" + std::to_string(n) + " missing trial_id");
      e.meta.trial_id = tj["trial_id"].get<std::string>();
      const std::string where = "trial '" + e.meta.trial_id + "'";
      if (!seen.insert(e.meta.trial_id).second) throw DataError("duplicate trial id '" + e.meta.trial_id + "'");
      if (tj.contains("subject_id") && tj["subject_id"].is_string()) e.meta.subject_id = tj["subject_id"].get<std::string>();
      if (!tj.contains("file") || !tj["file"].is_string()) throw DataError(where + " field 'file': missing");
      e.file = tj["file"].get<std::string>();
      e.meta.label = detail::label_from_json(tj, where);
      e.meta.sample_rate_hz = detail::number_field(tj, "sample_rate_hz", 20000.0, where);
      e.meta.relaxation_s = detail::number_field(tj, "relaxation_s", 5.0, where);
      e.meta.duration_s = detail::number_field(tj, "duration_s", 15.0, where);
      if (!(e.meta.sample_rate_hz > 0)) throw DataError(where + " field 'sample_rate_hz': must be positive");
      if (!(e.meta.duration_s > 0)) throw DataError(where + " field 'duration_s': must be positive");
      if (!(e.meta.relaxation_s >= 0)) throw DataError(where + " field 'relaxation_s': must be non-negative");
      entries_.push_back(std::move(e));
    }
    std::vector<ActionLabel> labels;
    for (const auto& e : entries_) labels.push_back(e.meta.label);
    classes_ = canonical_classes(labels);
  }

  const std::filesystem::path& directory() const { return dir_; }
  const std::vector<ChannelId>& channels() const { return channels_; }
  const std::vector<ActionLabel>& classes() const { return classes_; }
  std::size_t size() const { return entries_.size(); }

  /// Trial metadata without samples.
  const TrialRecord& meta(std::size_t i) const { return entries_.at(i).meta; }

  /// Loads and validates trial i.
  TrialRecord read(std::size_t i) const {
    const Entry& e = entries_.at(i);
    const auto path = dir_ / e.file;
    if (!std::filesystem::exists(path))
      throw DataError("trial '" + e.meta.trial_id + "' field 'file': " + path.string() + " not found");
    TrialRecord t = e.meta;
    t.samples = samples_from_csv(detail::read_file(path), channels_.size(), t.trial_id);
    validate_trial(t);
    return t;
  }

  /// Keeps only trials whose label is in `keep` (compared exactly).
  void filter_classes(std::span<const ActionLabel> keep) {
    std::vector<Entry> kept;
    for (auto& e : entries_)
      if (std::find(keep.begin(), keep.end(), e.meta.label) != keep.end()) kept.push_back(std::move(e));
    entries_ = std::move(kept);
    std::vector<ActionLabel> labels;
    for (const auto& e : entries_) labels.push_back(e.meta.label);
    classes_ = canonical_classes(labels);
  }

 private:
  struct Entry {
    TrialRecord meta;
    std::string file;
  };
  std::filesystem::path dir_;
  std::vector<ChannelId> channels_;
  std::vector<Entry> entries_;
  std::vector<ActionLabel> classes_;
};

/// Loads a full dataset into memory; trial order follows the manifest.
inline Dataset load_dataset(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw DataError("no manifest found: " + dir.string() + " is not a directory");
  DatasetReader reader(dir);
  Dataset ds;
  ds.channels = reader.channels();
  ds.classes = reader.classes();
  ds.trials.reserve(reader.size());
  for (std::size_t i = 0; i < reader.size(); ++i) ds.trials.push_back(reader.read(i));
  validate_dataset(ds);
  return ds;
}

inline std::string trial_file_name(const TrialRecord& t) { return "trials/" + t.trial_id + ".csv"; }

/// Incremental writer so generators can stream trials to disk.
class DatasetWriter {
 public:
  DatasetWriter(std::filesystem::path dir, std::vector<ChannelId> channels)
      : dir_(std::move(dir)), channels_(std::move(channels)) {
    validate_channels(channels_);
    std::filesystem::create_directories(dir_ / "trials");
  }

  void add(const TrialRecord& t) {
    if (t.channel_count() != channels_.size())
      throw DataError("trial '" + t.trial_id + "' has " + std::to_string(t.channel_count()) + " channels, expected " +
                      std::to_string(channels_.size()));
    const auto file = trial_file_name(t);
    std::ofstream out(dir_ / file, std::ios::binary);
    if (!out) throw DataError("cannot write " + (dir_ / file).string());
    const auto text = trial_to_csv(t);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    nlohmann::json tj;
    tj["trial_id"] = t.trial_id;
    tj["subject_id"] = t.subject_id;
    tj["file"] = file;
    const auto label = detail::label_to_json(t.label);
    for (const auto& [k, v] : label.items()) tj[k] = v;
    tj["sample_rate_hz"] = t.sample_rate_hz;
    tj["relaxation_s"] = t.relaxation_s;
    tj["duration_s"] = t.duration_s;
    trials_.push_back(std::move(tj));
  }

  void finish() {
    nlohmann::json j;
    j["format"] = kDatasetFormat;
    j["version"] = kDatasetVersion;
    j["channels"] = nlohmann::json::array();
    for (const auto& c : channels_) {
      nlohmann::json cj;
      cj["index"] = c.index;
      if (c.placement) cj["placement"] = *c.placement;
      j["channels"].push_back(cj);
    }
    j["trials"] = trials_;
    std::ofstream out(dir_ / kManifestName, std::ios::binary);
    out << j.dump(2) << '\n';
    if (!out) throw DataError("cannot write manifest in " + dir_.string());
  }

 private:
  std::filesystem::path dir_;
  std::vector<ChannelId> channels_;
  nlohmann::json trials_ = nlohmann::json::array();
};

inline void write_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  DatasetWriter w(dir, ds.channels);
  for (const auto& t : ds.trials) w.add(t);
  w.finish();
}

}  // namespace emgsel
