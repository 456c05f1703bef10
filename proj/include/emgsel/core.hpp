#pragma once

// Domain data model: channels, action labels, trials, datasets, and the
// deterministic stratified splitter.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include "emgsel/error.hpp"
#include "emgsel/rng.hpp"

namespace emgsel {

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }

  void append_row(std::span<const double> values) {
    if (rows_ == 0 && cols_ == 0) cols_ = values.size();
    if (values.size() != cols_) throw DataError("Matrix::append_row: width mismatch");
    data_.insert(data_.end(), values.begin(), values.end());
    ++rows_;
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// ---------------------------------------------------------------------------
// Labels

enum class Limb { upper, lower };
enum class Joint { finger, wrist, elbow, shoulder, knee, ankle };
enum class Action { flexion, extension, abduction, adduction, supination, pronation, inversion, eversion, relax };
enum class Digit { thumb, index, middle, ring, little };

namespace detail {

inline constexpr std::array<std::string_view, 2> kLimbNames{"upper", "lower"};
inline constexpr std::array<std::string_view, 6> kJointNames{"finger", "wrist", "elbow",
                                                             "shoulder", "knee", "ankle"};
inline constexpr std::array<std::string_view, 9> kActionNames{
    "flexion", "extension", "abduction", "adduction", "supination",
    "pronation", "inversion", "eversion", "relax"};
inline constexpr std::array<std::string_view, 5> kDigitNames{"thumb", "index", "middle", "ring",
                                                             "little"};

template <typename E, std::size_t N>
std::optional<E> parse_enum(std::string_view token, const std::array<std::string_view, N>& names) {
  for (std::size_t i = 0; i < N; ++i)
    if (names[i] == token) return static_cast<E>(i);
  return std::nullopt;
}

}  // namespace detail

inline std::string_view to_string(Limb v) { return detail::kLimbNames[static_cast<std::size_t>(v)]; }
inline std::string_view to_string(Joint v) { return detail::kJointNames[static_cast<std::size_t>(v)]; }
inline std::string_view to_string(Action v) { return detail::kActionNames[static_cast<std::size_t>(v)]; }
inline std::string_view to_string(Digit v) { return detail::kDigitNames[static_cast<std::size_t>(v)]; }

inline std::optional<Limb> parse_limb(std::string_view s) { return detail::parse_enum<Limb>(s, detail::kLimbNames); }
inline std::optional<Joint> parse_joint(std::string_view s) { return detail::parse_enum<Joint>(s, detail::kJointNames); }
inline std::optional<Action> parse_action(std::string_view s) { return detail::parse_enum<Action>(s, detail::kActionNames); }
inline std::optional<Digit> parse_digit(std::string_view s) { return detail::parse_enum<Digit>(s, detail::kDigitNames); }

struct ActionLabel {
  Limb limb = Limb::upper;
  Joint joint = Joint::finger;
  Action action = Action::flexion;
  std::optional<Digit> digit;
  std::optional<int> posture_deg;

  auto key() const { return std::tie(limb, joint, action, digit, posture_deg); }
  friend bool operator==(const ActionLabel& a, const ActionLabel& b) { return a.key() == b.key(); }
  /// Canonical class order: lexicographic over (limb, joint, action, digit, posture).
  friend bool operator<(const ActionLabel& a, const ActionLabel& b) { return a.key() < b.key(); }
};

inline bool is_forearm_joint(Joint j) { return j == Joint::finger || j == Joint::wrist; }

/// Throws DataError when the label breaks a field-combination rule.
inline void validate_label(const ActionLabel& l) {
  if (l.digit && l.joint != Joint::finger) throw DataError("digit given for non-finger joint");
  if (l.posture_deg) {
    if (!is_forearm_joint(l.joint)) throw DataError("posture_deg given for non-forearm joint");
    const int p = *l.posture_deg;
    if (p != 0 && p != 90 && p != 180) throw DataError("posture_deg must be 0, 90 or 180");
  }
  if ((l.action == Action::inversion || l.action == Action::eversion) && l.joint != Joint::ankle)
    throw DataError("inversion/eversion only valid for the ankle joint");
}

/// Compact text form, e.g. "upper:finger:flexion:index@90".
inline std::string to_string(const ActionLabel& l) {
  std::string s;
  s += to_string(l.limb);
  s += ':';
  s += to_string(l.joint);
  s += ':';
  s += to_string(l.action);
  if (l.digit) {
    s += ':';
    s += to_string(*l.digit);
  }
  if (l.posture_deg) s += '@' + std::to_string(*l.posture_deg);
  return s;
}

inline ActionLabel parse_label(std::string_view text) {
  ActionLabel l;
  std::string_view body = text;
  if (auto at = body.find('@'); at != std::string_view::npos) {
    const std::string p(body.substr(at + 1));
    try {
      std::size_t used = 0;
      l.posture_deg = std::stoi(p, &used);
      if (used != p.size()) throw DataError("");
    } catch (...) {
      throw DataError("bad posture in label '" + std::string(text) + "'");
    }
    body = body.substr(0, at);
  }
  std::vector<std::string_view> parts;
  while (true) {
    const auto colon = body.find(':');
    parts.push_back(body.substr(0, colon));
    if (colon == std::string_view::npos) break;
    body = body.substr(colon + 1);
  }
  if (parts.size() < 3 || parts.size() > 4) throw DataError("malformed label '" + std::string(text) + "'");
  auto fail = [&](std::string_view field) {
    return DataError("unknown " + std::string(field) + " token in label '" + std::string(text) + "'");
  };
  auto limb = parse_limb(parts[0]);
  auto joint = parse_joint(parts[1]);
  auto action = parse_action(parts[2]);
  if (!limb) throw fail("limb");
  if (!joint) throw fail("joint");
  if (!action) throw fail("action");
  l.limb = *limb;
  l.joint = *joint;
  l.action = *action;
  if (parts.size() == 4) {
    auto digit = parse_digit(parts[3]);
    if (!digit) throw fail("digit");
    l.digit = *digit;
  }
  validate_label(l);
  return l;
}

/// Label with the posture dropped; classes that differ only by forearm
/// posture compare equal under this key (used for cross-posture evaluation).
inline ActionLabel without_posture(ActionLabel l) {
  l.posture_deg.reset();
  return l;
}

// ---------------------------------------------------------------------------
// Trials and datasets

struct ChannelId {
  int index = 0;
  std::optional<std::string> placement;

  friend bool operator==(const ChannelId&, const ChannelId&) = default;
};

struct TrialRecord {
  std::string trial_id;
  std::string subject_id;
  ActionLabel label;
  double sample_rate_hz = 20000.0;
  double relaxation_s = 5.0;
  double duration_s = 15.0;
  Matrix samples;  // channels x T, volts

  std::size_t channel_count() const { return samples.rows(); }
  std::size_t sample_count() const { return samples.cols(); }
  std::span<const double> channel(std::size_t c) const { return samples.row(c); }
};

inline std::size_t expected_sample_count(double duration_s, double sample_rate_hz) {
  return static_cast<std::size_t>(std::llround(duration_s * sample_rate_hz));
}

/// Checks the per-trial invariants. `field` names the offending field in the message.
inline void validate_trial(const TrialRecord& t) {
  auto fail = [&](const std::string& field, const std::string& what) {
    return DataError("trial '" + t.trial_id + "' field '" + field + "': " + what);
  };
  if (t.trial_id.empty()) throw DataError("trial with empty trial_id");
  if (!(t.sample_rate_hz > 0) || !std::isfinite(t.sample_rate_hz)) throw fail("sample_rate_hz", "must be positive");
  if (!(t.duration_s > 0) || !std::isfinite(t.duration_s)) throw fail("duration_s", "must be positive");
  if (!(t.relaxation_s >= 0) || !std::isfinite(t.relaxation_s)) throw fail("relaxation_s", "must be non-negative");
  if (t.samples.rows() < 1) throw fail("samples", "needs at least one channel");
  const std::size_t expected = expected_sample_count(t.duration_s, t.sample_rate_hz);
  if (t.samples.cols() != expected)
    throw fail("samples", "expected " + std::to_string(expected) + " samples per channel, got " +
                              std::to_string(t.samples.cols()));
  for (double v : t.samples.data())
    if (!std::isfinite(v)) throw fail("samples", "non-finite sample");
  try {
    validate_label(t.label);
  } catch (const DataError& e) {
    throw fail("label", e.what());
  }
}

struct Dataset {
  std::vector<ChannelId> channels;
  std::vector<TrialRecord> trials;
  std::vector<ActionLabel> classes;  // canonical order

  std::size_t channel_count() const { return channels.size(); }

  /// Position of `label` in `classes`; throws if absent.
  int class_index(const ActionLabel& label) const {
    auto it = std::lower_bound(classes.begin(), classes.end(), label);
    if (it == classes.end() || !(*it == label)) throw DataError("label '" + to_string(label) + "' not in class list");
    return static_cast<int>(it - classes.begin());
  }
};

/// Sorted distinct labels.
inline std::vector<ActionLabel> canonical_classes(std::span<const ActionLabel> labels) {
  std::vector<ActionLabel> out(labels.begin(), labels.end());
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

inline void validate_channels(std::span<const ChannelId> channels) {
  if (channels.empty()) throw DataError("dataset has no channels");
  std::set<int> seen_index;
  std::set<std::string> seen_tag;
  for (const auto& c : channels) {
    if (c.index < 0) throw DataError("negative channel index " + std::to_string(c.index));
    if (!seen_index.insert(c.index).second) throw DataError("duplicate channel index " + std::to_string(c.index));
    if (c.placement && !seen_tag.insert(*c.placement).second)
      throw DataError("duplicate channel placement '" + *c.placement + "'");
  }
}

/// Validates the whole dataset (channel table, every trial, class list).
inline void validate_dataset(const Dataset& ds) {
  validate_channels(ds.channels);
  std::set<std::string> ids;
  for (const auto& t : ds.trials) {
    if (!ids.insert(t.trial_id).second) throw DataError("duplicate trial id '" + t.trial_id + "'");
    validate_trial(t);
    if (t.channel_count() != ds.channels.size())
      throw DataError("trial '" + t.trial_id + "' has " + std::to_string(t.channel_count()) +
                      " channels, expected " + std::to_string(ds.channels.size()));
    ds.class_index(t.label);
  }
  if (!std::is_sorted(ds.classes.begin(), ds.classes.end()) ||
      std::adjacent_find(ds.classes.begin(), ds.classes.end()) != ds.classes.end())
    throw DataError("class list is not in canonical order");
}

/// Builds a dataset from channels and trials, deriving the class list.
inline Dataset make_dataset(std::vector<ChannelId> channels, std::vector<TrialRecord> trials) {
  Dataset ds;
  ds.channels = std::move(channels);
  ds.trials = std::move(trials);
  std::vector<ActionLabel> labels;
  labels.reserve(ds.trials.size());
  for (const auto& t : ds.trials) labels.push_back(t.label);
  ds.classes = canonical_classes(labels);
  validate_dataset(ds);
  return ds;
}

// ---------------------------------------------------------------------------
// Splitting

struct SplitSpec {
  double train_fraction = 0.8;
  std::uint64_t seed = 0;
  bool stratified = true;
};

struct SplitIndices {
  std::vector<std::size_t> train;  // ascending
  std::vector<std::size_t> test;   // ascending
};

/// Partitions item positions given each item's class. Classes are handled in
/// ascending class-index order, each shuffled with its own derived seed, and
/// floor(train_fraction * count) items go to training.
inline SplitIndices split_indices(std::span<const int> class_of, int class_count, const SplitSpec& spec,
                                  const std::vector<std::string>* class_names = nullptr) {
  if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0))
    throw ConfigError("train_fraction must lie strictly between 0 and 1");
  auto name = [&](int c) {
    return class_names ? (*class_names)[static_cast<std::size_t>(c)] : "#" + std::to_string(c);
  };
  SplitIndices out;
  auto take = [&](std::vector<std::size_t>& members, std::uint64_t seed) {
    Rng rng(seed);
    rng.shuffle(std::span<std::size_t>(members));
    const auto n_train = static_cast<std::size_t>(std::floor(spec.train_fraction * static_cast<double>(members.size())));
    out.train.insert(out.train.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(n_train));
    out.test.insert(out.test.end(), members.begin() + static_cast<std::ptrdiff_t>(n_train), members.end());
    return n_train;
  };
  if (spec.stratified) {
    std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(class_count));
    for (std::size_t i = 0; i < class_of.size(); ++i) {
      const int c = class_of[i];
      if (c < 0 || c >= class_count) throw DataError("class index out of range in split");
      by_class[static_cast<std::size_t>(c)].push_back(i);
    }
    for (int c = 0; c < class_count; ++c) {
      auto& members = by_class[static_cast<std::size_t>(c)];
      if (members.empty()) continue;
      if (members.size() < 2) throw DataError("class " + name(c) + " has fewer than 2 trials");
      if (take(members, derive_seed(spec.seed, {static_cast<std::uint64_t>(c)})) == 0)
        throw ConfigError("train_fraction leaves class " + name(c) + " without training trials");
    }
  } else {
    if (class_of.size() < 2) throw DataError("need at least 2 trials to split");
    std::vector<std::size_t> all(class_of.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    if (take(all, derive_seed(spec.seed, {0xA11ull})) == 0) throw ConfigError("train_fraction leaves training set empty");
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

inline Dataset subset_trials(const Dataset& ds, std::span<const std::size_t> positions) {
  Dataset out;
  out.channels = ds.channels;
  out.classes = ds.classes;
  out.trials.reserve(positions.size());
  for (std::size_t p : positions) out.trials.push_back(ds.trials[p]);
  return out;
}

/// Seeded (stratified by default) train/test split. Both halves keep the
/// full class list and preserve the original trial order.
inline std::pair<Dataset, Dataset> split_dataset(const Dataset& ds, const SplitSpec& spec) {
  std::vector<int> class_of;
  class_of.reserve(ds.trials.size());
  for (const auto& t : ds.trials) class_of.push_back(ds.class_index(t.label));
  std::vector<std::string> names;
  for (const auto& c : ds.classes) names.push_back(to_string(c));
  const auto idx = split_indices(class_of, static_cast<int>(ds.classes.size()), spec, &names);
  return {subset_trials(ds, idx.train), subset_trials(ds, idx.test)};
}

/// Checks a channel subset (positions into a dataset of `channel_count` rows):
/// nonempty, in range, strictly increasing.
inline void validate_subset(std::span<const int> subset, std::size_t channel_count) {
  if (subset.empty()) throw ConfigError("channel subset is empty");
  for (std::size_t i = 0; i < subset.size(); ++i) {
    const int c = subset[i];
    if (c < 0 || static_cast<std::size_t>(c) >= channel_count)
      throw ConfigError("channel " + std::to_string(c) + " out of range (dataset has " +
                        std::to_string(channel_count) + " channels)");
    if (i > 0 && subset[i - 1] >= c) {
      if (subset[i - 1] == c) throw ConfigError("duplicate channel " + std::to_string(c) + " in subset");
      throw ConfigError("channel subset must be strictly increasing");
    }
  }
}

/// Restricts every trial to the rows listed in `subset`, in subset order.
inline Dataset select_channels(const Dataset& ds, std::span<const int> subset) {
  validate_subset(subset, ds.channel_count());
  Dataset out;
  out.classes = ds.classes;
  for (int c : subset) out.channels.push_back(ds.channels[static_cast<std::size_t>(c)]);
  out.trials.reserve(ds.trials.size());
  for (const auto& t : ds.trials) {
    TrialRecord r = t;
    r.samples = Matrix(subset.size(), t.sample_count());
    for (std::size_t i = 0; i < subset.size(); ++i) {
      auto src = t.channel(static_cast<std::size_t>(subset[i]));
      std::copy(src.begin(), src.end(), r.samples.row(i).begin());
    }
    out.trials.push_back(std::move(r));
  }
  return out;
}

}  // namespace emgsel
