// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <sstream>
#include <string>

#include "emgsel/emgsel.hpp"
#include "oracles/freq_response.hpp"
#include "oracles/qp_oracle.hpp"

using namespace emgsel;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

// Seeds and sizes of the acceptance configuration.
constexpr std::uint64_t kFingersSeed = 7;
constexpr std::uint64_t kSplitSeed = 11;
constexpr std::uint64_t kIdenticalSeed = 5;
constexpr int kTrialsPerClass = 60;
constexpr int kPostureTrain = 20;
constexpr int kPostureTest = 10;

ProfileTable profiles_of(const SynthPlan& plan, const FilterSpec& f, unsigned jobs) {
  return compute_profiles(
      plan.size(), [&](std::size_t i) { return plan.trial(i); }, plan.profile.channels, plan.classes(), f, RmsParams{},
      jobs);
}

SearchConfig search_cfg(unsigned jobs) {
  SearchConfig c;
  c.repeats = 5;
  c.split.seed = kSplitSeed;
  c.jobs = jobs;
  return c;
}

double best_of(const SearchReport& r) {
  double best = 0;
  for (const auto& f : r.frontier) best = std::max(best, f.best.accuracy);
  return best;
}

// ---------------------------------------------------------------------------

Outcome c1_filters() {
  const double fs = 20000;
  const auto notch = design_notch(50, fs, 35);
  const auto band = design_bandpass(30, 300, fs, 4);
  const auto tn = oracle::expand(notch);
  const double mag50 = oracle::magnitude(tn, 50, fs);
  const double att50 = -oracle::db(std::max(mag50, 1e-300));
  const double pass300 = oracle::db(oracle::magnitude(tn, 300, fs));
  const double lo = oracle::db(oracle::sectionwise_magnitude(band, 30, fs));
  const double hi = oracle::db(oracle::sectionwise_magnitude(band, 300, fs));
  // The cascade's own evaluation must agree with the expanded polynomial.
  double worst = 0;
  for (double f : {3.0, 30.0, 50.0, 100.0, 300.0, 1000.0, 5000.0})
    worst = std::max({worst, std::abs(notch.magnitude(f, fs) - oracle::magnitude(tn, f, fs)),
                      std::abs(band.magnitude(f, fs) - oracle::sectionwise_magnitude(band, f, fs))});
  const bool ok = att50 >= 30 && std::abs(pass300) <= 0.1 && std::abs(lo + 3) <= 0.5 && std::abs(hi + 3) <= 0.5 &&
                  worst < 1e-9 && notch.stable() && band.stable();
  return {ok, "notch |H(50 Hz)| " + fmt("%.1e", mag50) + ", 300 Hz " + fmt("%.4f", pass300) + " dB; band edges " +
                  fmt("%.3f", lo) + " / " + fmt("%.3f", hi) + " dB; cascade vs oracle " + fmt("%.1e", worst)};
}

Outcome c2_rms() {
  const double fs = 20000;
  std::vector<double> x(20000);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::sin(2 * std::numbers::pi * 100 * static_cast<double>(i) / fs);
  const RmsParams p{0.020, 0.005};
  const auto r = moving_rms(x, fs, p);
  double dev = 0;
  for (double v : r.values) dev = std::max(dev, std::abs(v - 0.70711));
  std::vector<double> scaled(x);
  for (double& v : scaled) v *= -3.7;
  const auto rs = moving_rms(scaled, fs, p);
  double eq = 0;
  for (std::size_t k = 0; k < r.values.size(); ++k) eq = std::max(eq, std::abs(rs.values[k] - 3.7 * r.values[k]) / (3.7 * r.values[k]));
  std::vector<double> constant(4000, -2.5);
  double cst = 0;
  for (double v : moving_rms(constant, fs, p).values) cst = std::max(cst, std::abs(v - 2.5) / 2.5);
  const bool ok = dev <= 1e-3 && eq <= 1e-12 && cst <= 1e-12;
  return {ok, std::to_string(r.values.size()) + " windows, max |rms - 0.70711| " + fmt("%.2e", dev) +
                  ", scale error " + fmt("%.1e", eq) + ", constant error " + fmt("%.1e", cst)};
}

Outcome c3_svm_oracle() {
  Rng rng(3);
  double worst_obj = 0;
  int mismatches = 0, instances = 0;
  for (int t = 0; t < 20; ++t) {
    const std::size_t n = 8 + rng.index(5);
    Matrix x;
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      x.append_row(std::vector<double>{rng.uniform(-1, 1), rng.uniform(-1, 1)});
      y[i] = i < 2 ? (i == 0 ? 1 : -1) : (rng.uniform() < 0.5 ? 1 : -1);
    }
    SvmParams p;
    p.kernel = {KernelKind::rbf, 1.0 + 2.0 * rng.uniform()};
    p.c = std::pow(10.0, rng.uniform(-1, 1.5));
    p.tol = 1e-6;
    p.max_passes = 1000;
    p.max_iter = 1000000;
    p.seed = static_cast<std::uint64_t>(t);
    const auto m = train_binary(x, y, p);

    oracle::Mat k(n, std::vector<double>(n));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) k[i][j] = kernel_value(p.kernel, x.row(i), x.row(j));
    const auto ref = oracle::exact_dual(k, y, p.c);
    worst_obj = std::max(worst_obj, std::abs(m.diagnostics.dual_objective - ref.objective));
    for (int gi = 0; gi < 5; ++gi)
      for (int gj = 0; gj < 5; ++gj) {
        const std::vector<double> q{-1.0 + 0.5 * gi, -1.0 + 0.5 * gj};
        double f = ref.bias;
        for (std::size_t i = 0; i < n; ++i) f += ref.alpha[i] * y[i] * kernel_value(p.kernel, x.row(i), q);
        mismatches += (m.decision(q) > 0) != (f > 0);
      }
    ++instances;
  }
  const bool ok = worst_obj <= 1e-3 && mismatches == 0;
  return {ok, std::to_string(instances) + " instances (8-12 points), max |dual gap| " + fmt("%.2e", worst_obj) + ", " +
                  std::to_string(mismatches) + " grid prediction mismatches"};
}

// Criteria 4 to 7 share one run; the CSV texts feed the determinism check.
struct PipelineRun {
  double baseline = 0, ablated = 0;
  std::size_t rows = 0;
  std::vector<double> frontier;
  double identical = 0;
  double same = 0, adjacent = 0, opposite = 0;
  std::string matrix_text;
  std::vector<std::string> csv;
  double seconds_c4 = 0;
};

PipelineRun run_pipeline(unsigned jobs) {
  PipelineRun out;
  const auto t0 = std::chrono::steady_clock::now();
  const SynthConfig base;
  const auto fingers = preset_profile("fingers4");
  {
    const auto plan = make_plan(base, fingers, kTrialsPerClass, kFingersSeed);
    const auto table = profiles_of(plan, FilterSpec{}, jobs);
    const auto rep = search_all(table, search_cfg(jobs));
    out.baseline = best_of(rep);
    out.rows = rep.results.size();
    for (const auto& f : rep.frontier) out.frontier.push_back(f.best.accuracy);
    out.csv.push_back(results_csv(table, rep));
    out.csv.push_back(frontier_csv(table, rep));
  }
  {
    SynthConfig loud = base;
    loud.mains_amp *= 10;
    FilterSpec no_notch;
    no_notch.notch_enabled = false;
    const auto plan = make_plan(loud, fingers, kTrialsPerClass, kFingersSeed);
    const auto table = profiles_of(plan, no_notch, jobs);
    auto cfg = search_cfg(jobs);
    cfg.fspec = no_notch;
    const auto rep = search_all(table, cfg);
    out.ablated = best_of(rep);
    out.csv.push_back(results_csv(table, rep));
    out.csv.push_back(frontier_csv(table, rep));
  }
  out.seconds_c4 = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  {
    auto prof = preset_profile("knee2");
    for (std::size_t ch = 0; ch < 3; ++ch) prof.gains(1, ch) = prof.gains(0, ch);
    const auto plan = make_plan(base, prof, kTrialsPerClass, kIdenticalSeed);
    const auto table = profiles_of(plan, FilterSpec{}, jobs);
    const auto r = evaluate_subset(table, std::vector<int>{0, 1, 2}, search_cfg(jobs));
    out.identical = r.accuracy;
    SearchReport rep;
    rep.results = {r};
    rep.frontier = build_frontier(rep.results);
    out.csv.push_back(results_csv(table, rep));
  }
  {
    const int postures[] = {0, 90, 180};
    std::vector<ProfileTable> train, test;
    for (int p : postures) {
      const auto prof = preset_profile("fingers5-posture", p);
      train.push_back(profiles_of(make_plan(base, prof, kPostureTrain, 100 + p), FilterSpec{}, jobs));
      test.push_back(profiles_of(make_plan(base, prof, kPostureTest, 200 + p), FilterSpec{}, jobs));
    }
    const std::vector<int> all{0, 1, 2, 3, 4, 5};
    std::string text = "train\\test,0,90,180\n";
    double sums[3] = {0, 0, 0};
    int counts[3] = {0, 0, 0};
    for (int i = 0; i < 3; ++i) {
      text += std::to_string(postures[i]);
      for (int j = 0; j < 3; ++j) {
        const double a = cross_condition_eval(train[i], test[j], all, search_cfg(jobs)).accuracy;
        text += "," + fmt("%.6f", a);
        const int gap = std::abs(i - j);
        sums[gap] += a;
        ++counts[gap];
      }
      text += "\n";
    }
    out.same = sums[0] / counts[0];
    out.adjacent = sums[1] / counts[1];
    out.opposite = sums[2] / counts[2];
    out.matrix_text = text;
    out.csv.push_back(text);
  }
  return out;
}

Outcome c4_end_to_end(const PipelineRun& r) {
  const double drop = r.baseline - r.ablated;
  const bool ok = r.baseline >= 0.95 && drop >= 0.10 && r.seconds_c4 < 120;
  return {ok, "fingers4 best accuracy " + fmt("%.3f", r.baseline) + "; without notch at 10x mains " +
                  fmt("%.3f", r.ablated) + " (drop " + fmt("%.3f", drop) + "); " + fmt("%.1f", r.seconds_c4) + " s"};
}

Outcome c5_frontier(const PipelineRun& r) {
  if (r.frontier.size() != 6) return {false, "frontier has " + std::to_string(r.frontier.size()) + " points"};
  const double d5 = r.frontier[4] - r.frontier[3], d6 = r.frontier[5] - r.frontier[3];
  const bool ok = r.rows == 63 && std::abs(d5) <= 0.03 && std::abs(d6) <= 0.03;
  std::string f;
  for (double v : r.frontier) f += (f.empty() ? "" : " ") + fmt("%.3f", v);
  return {ok, std::to_string(r.rows) + " rows; frontier k=1..6: " + f};
}

Outcome c6_identical(const PipelineRun& r) {
  return {r.identical >= 0.35 && r.identical <= 0.65, "identical gain rows: accuracy " + fmt("%.3f", r.identical)};
}

Outcome c7_postures(const PipelineRun& r) {
  const bool ok = r.same >= r.adjacent && r.adjacent >= r.opposite;
  std::string m = r.matrix_text;
  for (auto& ch : m)
    if (ch == '\n') ch = ' ';
  return {ok, "same " + fmt("%.3f", r.same) + " >= 90 deg " + fmt("%.3f", r.adjacent) + " >= 180 deg " +
                  fmt("%.3f", r.opposite) + "; matrix " + m};
}

Outcome c8_determinism(const PipelineRun& a, const PipelineRun& b) {
  std::size_t bytes = 0, differing = 0;
  for (std::size_t i = 0; i < a.csv.size(); ++i) {
    bytes += a.csv[i].size();
    differing += i >= b.csv.size() || a.csv[i] != b.csv[i];
  }
  const bool ok = differing == 0 && a.csv.size() == b.csv.size();
  return {ok, std::to_string(a.csv.size()) + " CSV outputs (" + std::to_string(bytes) + " bytes), jobs 1 vs 4: " +
                  std::to_string(differing) + " differ"};
}

Outcome c9_gain_invariance() {
  const auto prof = preset_profile("fingers4");
  const auto plan = make_plan(SynthConfig{}, prof, 2, 9);
  double worst = 0;
  std::size_t checked = 0;
  for (std::size_t i = 0; i < plan.size(); ++i) {
    const auto t = plan.trial(i);
    auto scaled = t;
    for (double& v : scaled.samples.data()) v *= 3.7;
    const auto a = extract_peaks(t, FilterSpec{}, RmsParams{});
    const auto b = extract_peaks(scaled, FilterSpec{}, RmsParams{});
    for (int n = 0; n < static_cast<int>(a.peaks.size()); ++n) {
      const auto fa = normalize(a, n), fb = normalize(b, n);
      for (std::size_t j = 0; j < fa.values.size(); ++j) {
        worst = std::max(worst, std::abs(fb.values[j] - fa.values[j]) / std::abs(fa.values[j]));
        ++checked;
      }
    }
  }
  return {worst <= 1e-9, std::to_string(checked) + " ratios over " + std::to_string(plan.size()) +
                             " trials, max relative change " + fmt("%.2e", worst)};
}

}  // namespace

int main() {
  int failures = 0;
  auto report = [&](int id, const std::string& name, const std::function<Outcome()>& fn, double limit_s = 0) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (limit_s > 0 && s >= limit_s) {
      o.pass = false;
      o.detail += "; over the " + fmt("%.0f", limit_s) + " s budget";
    }
    failures += !o.pass;
    std::printf("criterion %d %s: %s -- %s (%.2f s)\n", id, o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str(), s);
    std::fflush(stdout);
  };

  report(1, "filter contract", c1_filters, 1.0);
  report(2, "rms oracle", c2_rms);
  report(3, "svm oracle equivalence", c3_svm_oracle, 30.0);

  PipelineRun serial, parallel;
  bool ran = false;
  std::string run_error;
  try {
    serial = run_pipeline(1);
    ran = true;
  } catch (const std::exception& e) {
    run_error = e.what();
  }
  auto need_run = [&](std::function<Outcome()> fn) {
    return [&, fn]() { return ran ? fn() : Outcome{false, "pipeline run failed: " + run_error}; };
  };
  report(4, "end-to-end separable classification", need_run([&] { return c4_end_to_end(serial); }));
  report(5, "frontier plateau", need_run([&] { return c5_frontier(serial); }));
  report(6, "indistinguishability control", need_run([&] { return c6_identical(serial); }));
  report(7, "cross-posture ordering", need_run([&] { return c7_postures(serial); }));
  report(8, "determinism across jobs", need_run([&] {
           parallel = run_pipeline(4);
           return c8_determinism(serial, parallel);
         }));
  report(9, "feature gain invariance", c9_gain_invariance);

  std::printf("%s: %d of 9 criteria failed\n", failures ? "FAIL" : "PASS", failures);
  return failures ? 1 : 0;
}
