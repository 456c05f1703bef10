#pragma once

// Exhaustive channel-subset x normalizer accuracy search, best-per-k
// frontier, and cross-condition evaluation.

#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "emgsel/core.hpp"
#include "emgsel/features.hpp"
#include "emgsel/parallel.hpp"
#include "emgsel/rng.hpp"
#include "emgsel/svm.hpp"

namespace emgsel {

struct SearchConfig {
  std::optional<int> max_k;  // unset: all channels
  SplitSpec split;
  SvmParams svm;
  FilterSpec fspec;
  RmsParams rms;
  int repeats = 5;
  double eps = kDefaultNormalizerEps;
  unsigned jobs = 1;
  /// When nonempty, only these subsets are evaluated.
  std::vector<std::vector<int>> whitelist;
};

inline int resolve_max_k(const SearchConfig& c, std::size_t channels) {
  const int n = static_cast<int>(channels);
  const int k = c.max_k.value_or(n);
  if (k < 1 || k > n) throw ConfigError("max_k must lie in [1, " + std::to_string(n) + "]");
  return k;
}

inline void validate(const SearchConfig& c) {
  if (c.repeats < 1) throw ConfigError("repeats must be at least 1");
  if (!(c.eps > 0)) throw ConfigError("normalizer eps must be positive");
  validate(c.svm);
}

struct NormalizerScore {
  int normalizer = 0;
  bool ok = false;
  double accuracy_mean = 0.0;
  double accuracy_sd = 0.0;
  std::size_t dropped = 0;
  bool converged = true;
  std::string error;
};

struct SubsetResult {
  std::vector<int> subset;  // channel positions, ascending
  int normalizer = -1;      // channel position; equals subset[0] for raw size-1 subsets
  double accuracy = 0.0;    // mean over repeats
  double accuracy_sd = 0.0;
  int repeats = 0;
  std::size_t dropped = 0;
  bool converged = true;
  bool ok = false;
  std::string error;
  std::vector<NormalizerScore> per_normalizer;

  std::size_t k() const { return subset.size(); }
};

struct FrontierPoint {
  int k = 0;
  SubsetResult best;
};

struct SearchReport {
  std::vector<SubsetResult> results;
  std::vector<FrontierPoint> frontier;
};

/// All k-subsets of {0..n-1} in lexicographic order.
inline std::vector<std::vector<int>> enumerate_subsets(int n, int k) {
  if (n < 1 || k < 1 || k > n) throw ConfigError("subset size k must lie in [1, n]");
  std::vector<std::vector<int>> out;
  std::vector<int> cur(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) cur[static_cast<std::size_t>(i)] = i;
  while (true) {
    out.push_back(cur);
    int i = k - 1;
    while (i >= 0 && cur[static_cast<std::size_t>(i)] == n - k + i) --i;
    if (i < 0) break;
    ++cur[static_cast<std::size_t>(i)];
    for (int j = i + 1; j < k; ++j) cur[static_cast<std::size_t>(j)] = cur[static_cast<std::size_t>(j - 1)] + 1;
  }
  return out;
}

namespace detail {

inline Matrix take_rows(const Matrix& x, std::span<const std::size_t> rows) {
  Matrix out(0, x.cols());
  for (std::size_t r : rows) out.append_row(x.row(r));
  return out;
}

// Renumbers class indices so that only classes present in y remain, in order.
inline std::vector<int> compact_labels(std::span<const int> y, std::size_t class_count, int& present) {
  std::vector<int> map(class_count, -1);
  for (int v : y) map[static_cast<std::size_t>(v)] = 0;
  present = 0;
  for (auto& m : map)
    if (m == 0) m = present++;
  std::vector<int> out(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) out[i] = map[static_cast<std::size_t>(y[i])];
  return out;
}

inline DesignMatrix features_for(const ProfileTable& t, std::span<const int> subset, int normalizer, double eps) {
  return subset.size() == 1 ? build_raw_matrix(t, subset) : build_design_matrix(t, subset, normalizer, eps);
}

inline std::pair<double, double> mean_sd(std::span<const double> v) {
  double mean = 0;
  for (double a : v) mean += a;
  mean /= static_cast<double>(v.size());
  if (v.size() < 2) return {mean, 0.0};
  double ss = 0;
  for (double a : v) ss += (a - mean) * (a - mean);
  return {mean, std::sqrt(ss / static_cast<double>(v.size() - 1))};
}

inline NormalizerScore score_normalizer(const ProfileTable& t, std::span<const int> subset, int normalizer,
                                        const SearchConfig& cfg) {
  NormalizerScore s;
  s.normalizer = normalizer;
  try {
    const auto m = features_for(t, subset, normalizer, cfg.eps);
    s.dropped = m.dropped;
    int present = 0;
    const auto y = compact_labels(m.y, t.classes.size(), present);
    if (present < 2) throw DataError("fewer than 2 classes survive normalization");
    std::vector<double> accs;
    for (int r = 0; r < cfg.repeats; ++r) {
      const std::uint64_t seed = derive_seed(
          derive_seed(cfg.split.seed, std::span<const int>(subset)),
          {0x5EA7ull, static_cast<std::uint64_t>(normalizer), static_cast<std::uint64_t>(r)});
      SplitSpec sp = cfg.split;
      sp.seed = seed;
      const auto idx = split_indices(y, present, sp);
      if (idx.test.empty()) throw ConfigError("train_fraction leaves the test set empty");
      std::vector<int> ytr, yte;
      for (auto i : idx.train) ytr.push_back(y[i]);
      for (auto i : idx.test) yte.push_back(y[i]);
      SvmParams svm = cfg.svm;
      svm.seed = derive_seed(seed, {0x5F1ull});
      svm.jobs = 1;
      const auto model = train_multiclass(take_rows(m.x, idx.train), ytr, svm, present);
      s.converged = s.converged && model.converged();
      accs.push_back(accuracy(model, take_rows(m.x, idx.test), yte));
    }
    std::tie(s.accuracy_mean, s.accuracy_sd) = mean_sd(accs);
    s.ok = true;
  } catch (const Error& e) {
    s.error = e.what();
  }
  return s;
}

inline std::string subset_text(std::span<const int> subset) {
  std::string s;
  for (std::size_t i = 0; i < subset.size(); ++i) s += (i ? ";" : "") + std::to_string(subset[i]);
  return s;
}

}  // namespace detail

/// Scores every normalizer in the subset over cfg.repeats stratified
/// re-splits and keeps the best mean; ties go to the lowest normalizer.
/// Size-1 subsets use the raw peak. Throws DataError when no normalizer works.
inline SubsetResult evaluate_subset(const ProfileTable& t, std::span<const int> subset, const SearchConfig& cfg) {
  validate(cfg);
  validate_subset(subset, t.channel_count());
  SubsetResult r;
  r.subset.assign(subset.begin(), subset.end());
  r.repeats = cfg.repeats;
  if (subset.size() == 1) {
    r.per_normalizer.push_back(detail::score_normalizer(t, subset, subset[0], cfg));
  } else {
    for (int nrm : subset) r.per_normalizer.push_back(detail::score_normalizer(t, subset, nrm, cfg));
  }
  const NormalizerScore* best = nullptr;
  for (const auto& s : r.per_normalizer)
    if (s.ok && (!best || s.accuracy_mean > best->accuracy_mean)) best = &s;
  if (!best) {
    std::string msg = "no usable normalizer for subset " + detail::subset_text(subset);
    if (!r.per_normalizer.empty()) msg += " (" + r.per_normalizer.front().error + ")";
    throw DataError(msg);
  }
  r.normalizer = best->normalizer;
  r.accuracy = best->accuracy_mean;
  r.accuracy_sd = best->accuracy_sd;
  r.dropped = best->dropped;
  r.converged = best->converged;
  r.ok = true;
  return r;
}

inline SubsetResult evaluate_subset(const Dataset& ds, std::span<const int> subset, const SearchConfig& cfg) {
  validate_subset(subset, ds.channel_count());
  return evaluate_subset(compute_profiles(ds, cfg.fspec, cfg.rms, cfg.jobs), subset, cfg);
}

inline std::vector<FrontierPoint> build_frontier(std::span<const SubsetResult> results) {
  std::map<std::size_t, const SubsetResult*> best;
  for (const auto& r : results) {
    if (!r.ok) continue;
    auto& b = best[r.k()];
    if (!b || r.accuracy > b->accuracy) b = &r;
  }
  std::vector<FrontierPoint> out;
  for (const auto& [k, r] : best) out.push_back({static_cast<int>(k), *r});
  return out;
}

/// Evaluates every subset of size 1..max_k (or the whitelist). Subsets whose
/// evaluation fails stay in the table with ok = false.
inline SearchReport search_all(const ProfileTable& t, const SearchConfig& cfg) {
  validate(cfg);
  if (t.channel_count() < 1) throw DataError("dataset has no channels");
  std::vector<std::vector<int>> subsets;
  if (!cfg.whitelist.empty()) {
    subsets = cfg.whitelist;
    for (const auto& s : subsets) validate_subset(s, t.channel_count());
    std::sort(subsets.begin(), subsets.end(), [](const auto& a, const auto& b) {
      return a.size() != b.size() ? a.size() < b.size() : a < b;
    });
    if (std::adjacent_find(subsets.begin(), subsets.end()) != subsets.end())
      throw ConfigError("duplicate subset in whitelist");
  } else {
    const int max_k = resolve_max_k(cfg, t.channel_count());
    for (int k = 1; k <= max_k; ++k)
      for (auto& s : enumerate_subsets(static_cast<int>(t.channel_count()), k)) subsets.push_back(std::move(s));
  }
  SearchReport rep;
  rep.results.resize(subsets.size());
  parallel_for(subsets.size(), cfg.jobs, [&](std::size_t i) {
    try {
      rep.results[i] = evaluate_subset(t, subsets[i], cfg);
    } catch (const Error& e) {
      SubsetResult r;
      r.subset = subsets[i];
      r.repeats = cfg.repeats;
      r.error = e.what();
      rep.results[i] = std::move(r);
    }
  });
  rep.frontier = build_frontier(rep.results);
  return rep;
}

inline SearchReport search_all(const Dataset& ds, const SearchConfig& cfg) {
  return search_all(compute_profiles(ds, cfg.fspec, cfg.rms, cfg.jobs), cfg);
}

/// Smallest k whose frontier accuracy is within `tol` of the frontier maximum.
inline int plateau_k(std::span<const FrontierPoint> frontier, double tol = 0.03) {
  if (frontier.empty()) throw DataError("empty frontier");
  double best = 0.0;
  for (const auto& f : frontier) best = std::max(best, f.best.accuracy);
  for (const auto& f : frontier)
    if (f.best.accuracy >= best - tol) return f.k;
  return frontier.back().k;
}

// ---------------------------------------------------------------------------
// Cross-condition evaluation

struct CrossResult {
  double accuracy = 0.0;
  int normalizer = -1;
  std::size_t train_rows = 0;
  std::size_t test_rows = 0;
  std::size_t dropped = 0;
  bool converged = true;
};

/// Train on all of `train`, test on all of `test`. Classes are matched by
/// label with the posture annotation ignored, so recordings of the same
/// action under different postures line up. Without an explicit normalizer
/// the best one is chosen by evaluate_subset on the training table only.
inline CrossResult cross_condition_eval(const ProfileTable& train, const ProfileTable& test, std::span<const int> subset,
                                        const SearchConfig& cfg, std::optional<int> normalizer = std::nullopt) {
  validate(cfg);
  if (train.channel_count() != test.channel_count())
    throw DataError("channel layouts differ: " + std::to_string(train.channel_count()) + " vs " +
                    std::to_string(test.channel_count()) + " channels");
  validate_subset(subset, train.channel_count());
  std::vector<ActionLabel> train_keys, test_keys;
  for (const auto& c : train.classes) train_keys.push_back(without_posture(c));
  for (const auto& c : test.classes) test_keys.push_back(without_posture(c));
  if (canonical_classes(train_keys) != canonical_classes(test_keys))
    throw DataError("class lists differ between training and test datasets");
  if (train_keys.size() != canonical_classes(train_keys).size())
    throw DataError("training dataset mixes postures of the same action");

  CrossResult out;
  out.normalizer = normalizer ? *normalizer : evaluate_subset(train, subset, cfg).normalizer;
  if (subset.size() > 1 && std::find(subset.begin(), subset.end(), out.normalizer) == subset.end())
    throw ConfigError("normalizer " + std::to_string(out.normalizer) + " not in subset");

  const auto mtr = detail::features_for(train, subset, out.normalizer, cfg.eps);
  const auto mte = detail::features_for(test, subset, out.normalizer, cfg.eps);
  std::vector<int> test_to_train(test.classes.size());
  for (std::size_t i = 0; i < test_keys.size(); ++i)
    test_to_train[i] = static_cast<int>(std::find(train_keys.begin(), train_keys.end(), test_keys[i]) - train_keys.begin());
  std::vector<int> yte;
  for (int v : mte.y) yte.push_back(test_to_train[static_cast<std::size_t>(v)]);

  SvmParams svm = cfg.svm;
  svm.seed = derive_seed(cfg.split.seed, {0xC805ull});
  svm.jobs = cfg.jobs;
  const auto model = train_multiclass(mtr.x, mtr.y, svm, static_cast<int>(train.classes.size()));
  out.accuracy = accuracy(model, mte.x, yte);
  out.train_rows = mtr.x.rows();
  out.test_rows = mte.x.rows();
  out.dropped = mtr.dropped + mte.dropped;
  out.converged = model.converged();
  return out;
}

// ---------------------------------------------------------------------------
// Reports

namespace detail {

inline std::string fixed6(double v) {
  if (!std::isfinite(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

inline std::string ids_text(const ProfileTable& t, std::span<const int> subset) {
  std::string s;
  for (std::size_t i = 0; i < subset.size(); ++i)
    s += (i ? ";" : "") + std::to_string(t.channels[static_cast<std::size_t>(subset[i])].index);
  return s;
}

}  // namespace detail

/// subset,normalizer,k,accuracy_mean,accuracy_sd,repeats; channels written
/// as dataset channel indices, subsets joined with ';'.
inline std::string results_csv(const ProfileTable& t, const SearchReport& rep) {
  std::string out = "subset,normalizer,k,accuracy_mean,accuracy_sd,repeats\n";
  for (const auto& r : rep.results) {
    out += detail::ids_text(t, r.subset) + ',';
    out += (r.ok ? std::to_string(t.channels[static_cast<std::size_t>(r.normalizer)].index) : std::string("")) + ',';
    out += std::to_string(r.k()) + ',';
    out += (r.ok ? detail::fixed6(r.accuracy) : "nan") + ',';
    out += (r.ok ? detail::fixed6(r.accuracy_sd) : "nan") + ',';
    out += std::to_string(r.repeats) + '\n';
  }
  return out;
}

inline std::string frontier_csv(const ProfileTable& t, const SearchReport& rep) {
  std::string out = "k,best_subset,best_normalizer,accuracy\n";
  for (const auto& f : rep.frontier) {
    out += std::to_string(f.k) + ',' + detail::ids_text(t, f.best.subset) + ',';
    out += std::to_string(t.channels[static_cast<std::size_t>(f.best.normalizer)].index) + ',';
    out += detail::fixed6(f.best.accuracy) + '\n';
  }
  return out;
}

inline std::string search_summary(const ProfileTable& t, const SearchReport& rep) {
  std::string out;
  std::size_t failed = 0;
  for (const auto& r : rep.results) failed += !r.ok;
  out += "evaluated " + std::to_string(rep.results.size()) + " subsets";
  if (failed) out += " (" + std::to_string(failed) + " failed)";
  out += '\n';
  for (const auto& f : rep.frontier) {
    out += "k=" + std::to_string(f.k) + " best subset " + detail::ids_text(t, f.best.subset);
    out += f.k == 1 ? std::string(" (raw peak)")
                    : " normalizer " + std::to_string(t.channels[static_cast<std::size_t>(f.best.normalizer)].index);
    out += " accuracy " + detail::fixed6(f.best.accuracy) + '\n';
  }
  if (!rep.frontier.empty()) out += "plateau at k=" + std::to_string(plateau_k(rep.frontier)) + '\n';
  return out;
}

}  // namespace emgsel
