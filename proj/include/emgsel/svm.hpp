#pragma once

// Soft-margin SVM trained with sequential minimal optimization (Platt's
// two-level heuristic: random first-choice sweeps, second choice maximizing
// |E1 - E2|), composed one-vs-one for multiclass problems.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "emgsel/core.hpp"
#include "emgsel/error.hpp"
#include "emgsel/parallel.hpp"
#include "emgsel/rng.hpp"

namespace emgsel {

enum class KernelKind { linear, rbf };

struct KernelSpec {
  KernelKind kind = KernelKind::rbf;
  /// RBF width. 0 requests the data-driven default 1 / (d * mean column variance).
  double gamma = 0.0;
};

inline double kernel_value(const KernelSpec& k, std::span<const double> a, std::span<const double> b) {
  if (k.kind == KernelKind::linear) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
  }
  double d2 = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    d2 += d * d;
  }
  return std::exp(-k.gamma * d2);
}

/// 1 / (d * mean per-column population variance); 1/d when the data has no spread.
inline double default_gamma(const Matrix& x) {
  const std::size_t n = x.rows(), d = x.cols();
  if (n == 0 || d == 0) return 1.0;
  double var_sum = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += x(i, j);
    mean /= static_cast<double>(n);
    double v = 0.0;
    for (std::size_t i = 0; i < n; ++i) v += (x(i, j) - mean) * (x(i, j) - mean);
    var_sum += v / static_cast<double>(n);
  }
  const double mean_var = var_sum / static_cast<double>(d);
  if (!(mean_var > 0) || !std::isfinite(mean_var)) return 1.0 / static_cast<double>(d);
  return 1.0 / (static_cast<double>(d) * mean_var);
}

inline KernelSpec resolve_kernel(KernelSpec k, const Matrix& x) {
  if (k.kind == KernelKind::rbf && k.gamma == 0.0) k.gamma = default_gamma(x);
  if (k.kind == KernelKind::rbf && !(k.gamma > 0 && std::isfinite(k.gamma))) throw ConfigError("RBF gamma must be finite and positive");
  return k;
}

struct SvmParams {
  double c = 1.0;
  KernelSpec kernel;
  double tol = 1e-3;
  /// Cap on examine-all sweeps over the training set.
  int max_passes = 10;
  /// Cap on successful two-variable optimization steps.
  int max_iter = 10000;
  std::uint64_t seed = 0;
  /// Standardize columns with training-set mean / sd before the kernel.
  bool standardize = false;
  unsigned jobs = 1;
};

inline void validate(const SvmParams& p) {
  if (!(p.c > 0) || !std::isfinite(p.c)) throw ConfigError("SVM C must be positive");
  if (!(p.tol > 0)) throw ConfigError("SVM tolerance must be positive");
  if (p.max_passes < 1 || p.max_iter < 1) throw ConfigError("SVM iteration caps must be positive");
  if (p.kernel.kind == KernelKind::rbf && (p.kernel.gamma < 0 || !std::isfinite(p.kernel.gamma)))
    throw ConfigError("RBF gamma must be finite and positive");
}

struct TrainingDiagnostics {
  bool converged = false;
  int iterations = 0;   // successful optimization steps
  int full_sweeps = 0;
  double max_kkt_violation = 0.0;
  double dual_objective = 0.0;
};

struct BinaryModel {
  Matrix support_vectors;
  std::vector<double> alphas_signed;  // alpha_i * y_i
  double bias = 0.0;
  KernelSpec kernel;
  std::pair<int, int> class_pair{0, 1};  // (+1 class, -1 class)
  TrainingDiagnostics diagnostics;

  double decision(std::span<const double> x) const {
    double f = bias;
    for (std::size_t i = 0; i < alphas_signed.size(); ++i)
      f += alphas_signed[i] * kernel_value(kernel, support_vectors.row(i), x);
    return f;
  }
};

namespace detail {

class SmoSolver {
 public:
  SmoSolver(const Matrix& x, std::span<const int> y, const SvmParams& p, const KernelSpec& kernel)
      : n_(x.rows()), c_(p.c), tol_(p.tol), params_(p), rng_(p.seed), y_(n_), alpha_(n_, 0.0), err_(n_), gram_(n_, n_) {
    for (std::size_t i = 0; i < n_; ++i) y_[i] = static_cast<double>(y[i]);
    for (std::size_t i = 0; i < n_; ++i)
      for (std::size_t j = 0; j <= i; ++j) gram_(i, j) = gram_(j, i) = kernel_value(kernel, x.row(i), x.row(j));
    for (std::size_t i = 0; i < n_; ++i) err_[i] = -y_[i];
  }

  TrainingDiagnostics run() {
    TrainingDiagnostics d;
    bool examine_all = true;
    int changed = 0;
    std::vector<std::size_t> order(n_);
    bool capped = false;
    while (changed > 0 || examine_all) {
      if (examine_all && d.full_sweeps >= params_.max_passes) { capped = true; break; }
      changed = 0;
      for (std::size_t i = 0; i < n_; ++i) order[i] = i;
      rng_.shuffle(std::span<std::size_t>(order));
      if (examine_all) ++d.full_sweeps;
      for (std::size_t i : order) {
        if (!examine_all && !is_free(i)) continue;
        changed += examine(i);
        if (steps_ >= params_.max_iter) break;
      }
      if (steps_ >= params_.max_iter) { capped = true; break; }
      if (examine_all) examine_all = false;
      else if (changed == 0) examine_all = true;
    }
    finalize_bias();
    d.converged = !capped;
    d.iterations = steps_;
    d.max_kkt_violation = kkt_violation();
    d.dual_objective = dual_objective();
    return d;
  }

  const std::vector<double>& alpha() const { return alpha_; }
  const std::vector<double>& labels() const { return y_; }
  double bias() const { return b_; }

 private:
  bool is_free(std::size_t i) const { return alpha_[i] > 0.0 && alpha_[i] < c_; }

  // sum_j alpha_j y_j K(i, j), recomputed from scratch.
  double margin_term(std::size_t i) const {
    double g = 0.0;
    for (std::size_t j = 0; j < n_; ++j)
      if (alpha_[j] != 0.0) g += alpha_[j] * y_[j] * gram_(i, j);
    return g;
  }

  int examine(std::size_t i2) {
    const double y2 = y_[i2], a2 = alpha_[i2], e2 = err_[i2];
    const double r2 = e2 * y2;
    if (!((r2 < -tol_ && a2 < c_) || (r2 > tol_ && a2 > 0.0))) return 0;

    std::size_t free_count = 0, best = n_;
    double best_gap = -1.0;
    for (std::size_t i = 0; i < n_; ++i) {
      if (!is_free(i)) continue;
      ++free_count;
      const double gap = std::abs(err_[i] - e2);
      if (gap > best_gap) { best_gap = gap; best = i; }
    }
    if (free_count > 1 && take_step(best, i2)) return 1;

    std::size_t start = rng_.index(n_);
    for (std::size_t k = 0; k < n_; ++k) {
      const std::size_t i1 = (start + k) % n_;
      if (is_free(i1) && take_step(i1, i2)) return 1;
    }
    start = rng_.index(n_);
    for (std::size_t k = 0; k < n_; ++k) {
      const std::size_t i1 = (start + k) % n_;
      if (take_step(i1, i2)) return 1;
    }
    return 0;
  }

  bool take_step(std::size_t i1, std::size_t i2) {
    if (i1 == i2) return false;
    const double a1o = alpha_[i1], a2o = alpha_[i2];
    const double y1 = y_[i1], y2 = y_[i2];
    const double e1 = err_[i1], e2 = err_[i2];
    const double s = y1 * y2;
    double lo, hi;
    if (y1 != y2) {
      lo = std::max(0.0, a2o - a1o);
      hi = std::min(c_, c_ + a2o - a1o);
    } else {
      lo = std::max(0.0, a2o + a1o - c_);
      hi = std::min(c_, a2o + a1o);
    }
    if (!(hi > lo)) return false;
    const double k11 = gram_(i1, i1), k12 = gram_(i1, i2), k22 = gram_(i2, i2);
    const double eta = k11 + k22 - 2.0 * k12;
    double a2;
    if (eta > 0.0) {
      a2 = std::clamp(a2o + y2 * (e1 - e2) / eta, lo, hi);
    } else {
      // Objective change along the constraint line, evaluated at both ends.
      const double g1 = e1 + y1 - b_, g2 = e2 + y2 - b_;
      auto gain = [&](double a2n) {
        const double d2 = a2n - a2o, d1 = -s * d2;
        return d1 + d2 - d1 * y1 * g1 - d2 * y2 * g2 - 0.5 * (d1 * d1 * k11 + d2 * d2 * k22 + 2.0 * d1 * d2 * s * k12);
      };
      const double w_lo = gain(lo), w_hi = gain(hi);
      if (w_lo > w_hi + kEps) a2 = lo;
      else if (w_hi > w_lo + kEps) a2 = hi;
      else a2 = a2o;
    }
    if (a2 < kSnap * c_) a2 = 0.0;
    else if (a2 > c_ * (1.0 - kSnap)) a2 = c_;
    if (std::abs(a2 - a2o) < kEps * (a2 + a2o + kEps)) return false;

    double a1 = a1o + s * (a2o - a2);
    if (a1 < kSnap * c_) {
      a2 += s * a1;
      a1 = 0.0;
    } else if (a1 > c_ * (1.0 - kSnap)) {
      a2 += s * (a1 - c_);
      a1 = c_;
    }
    a2 = std::clamp(a2, 0.0, c_);

    const double d1 = a1 - a1o, d2 = a2 - a2o;
    const double b1 = b_ - e1 - y1 * d1 * k11 - y2 * d2 * k12;
    const double b2 = b_ - e2 - y1 * d1 * k12 - y2 * d2 * k22;
    double bn;
    if (a1 > 0.0 && a1 < c_) bn = b1;
    else if (a2 > 0.0 && a2 < c_) bn = b2;
    else bn = 0.5 * (b1 + b2);
    const double db = bn - b_;
    for (std::size_t i = 0; i < n_; ++i) err_[i] += y1 * d1 * gram_(i, i1) + y2 * d2 * gram_(i, i2) + db;
    alpha_[i1] = a1;
    alpha_[i2] = a2;
    b_ = bn;
    ++steps_;
    return true;
  }

  // Bias from the KKT conditions: mean over free vectors, otherwise the
  // midpoint of the feasible interval implied by bound vectors.
  void finalize_bias() {
    double sum = 0.0;
    std::size_t count = 0;
    double lower = -std::numeric_limits<double>::infinity();
    double upper = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n_; ++i) {
      const double g = margin_term(i);
      if (is_free(i)) {
        sum += y_[i] - g;
        ++count;
      } else if ((alpha_[i] == 0.0) == (y_[i] > 0)) {
        lower = std::max(lower, y_[i] - g);
      } else {
        upper = std::min(upper, y_[i] - g);
      }
    }
    if (count > 0) b_ = sum / static_cast<double>(count);
    else if (std::isfinite(lower) && std::isfinite(upper)) b_ = 0.5 * (lower + upper);
    else if (std::isfinite(lower)) b_ = lower;
    else if (std::isfinite(upper)) b_ = upper;
    else b_ = 0.0;
    for (std::size_t i = 0; i < n_; ++i) err_[i] = margin_term(i) + b_ - y_[i];
  }

  double kkt_violation() const {
    double worst = 0.0;
    for (std::size_t i = 0; i < n_; ++i) {
      const double r = y_[i] * err_[i];  // y f - 1
      double v;
      if (alpha_[i] <= 0.0) v = std::max(0.0, -r);
      else if (alpha_[i] >= c_) v = std::max(0.0, r);
      else v = std::abs(r);
      worst = std::max(worst, v);
    }
    return worst;
  }

  double dual_objective() const {
    double w = 0.0;
    for (std::size_t i = 0; i < n_; ++i)
      if (alpha_[i] != 0.0) w += alpha_[i] - 0.5 * alpha_[i] * y_[i] * margin_term(i);
    return w;
  }

  static constexpr double kEps = 1e-10;
  static constexpr double kSnap = 1e-12;

  std::size_t n_;
  double c_, tol_;
  const SvmParams& params_;
  Rng rng_;
  std::vector<double> y_, alpha_, err_;
  Matrix gram_;
  double b_ = 0.0;
  int steps_ = 0;
};

inline void check_rows(const Matrix& x) {
  for (double v : x.data())
    if (!std::isfinite(v)) throw DataError("non-finite feature value");
}

}  // namespace detail

/// Trains one soft-margin SVM. y holds +1 / -1. Non-convergence is reported
/// in the diagnostics, not thrown.
inline BinaryModel train_binary(const Matrix& x, std::span<const int> y, const SvmParams& p) {
  validate(p);
  if (x.rows() != y.size()) throw DataError("label count does not match row count");
  if (x.rows() == 0 || x.cols() == 0) throw DataError("empty training set");
  detail::check_rows(x);
  bool pos = false, neg = false;
  for (int v : y) {
    if (v == 1) pos = true;
    else if (v == -1) neg = true;
    else throw DataError("binary labels must be +1 or -1");
  }
  if (!pos || !neg) throw DataError("binary training needs both classes present");

  BinaryModel m;
  m.kernel = resolve_kernel(p.kernel, x);
  detail::SmoSolver solver(x, y, p, m.kernel);
  m.diagnostics = solver.run();
  m.bias = solver.bias();
  const auto& alpha = solver.alpha();
  for (std::size_t i = 0; i < x.rows(); ++i) {
    if (alpha[i] <= 0.0) continue;
    m.support_vectors.append_row(x.row(i));
    m.alphas_signed.push_back(alpha[i] * solver.labels()[i]);
  }
  if (m.alphas_signed.empty()) m.support_vectors = Matrix(0, x.cols());
  return m;
}

// ---------------------------------------------------------------------------
// Multiclass

/// Column-wise affine map fitted on training data.
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> scale;

  bool empty() const { return mean.empty(); }

  static Standardizer fit(const Matrix& x) {
    Standardizer s;
    s.mean.assign(x.cols(), 0.0);
    s.scale.assign(x.cols(), 1.0);
    for (std::size_t j = 0; j < x.cols(); ++j) {
      double m = 0.0;
      for (std::size_t i = 0; i < x.rows(); ++i) m += x(i, j);
      m /= static_cast<double>(x.rows());
      double v = 0.0;
      for (std::size_t i = 0; i < x.rows(); ++i) v += (x(i, j) - m) * (x(i, j) - m);
      const double sd = std::sqrt(v / static_cast<double>(x.rows()));
      s.mean[j] = m;
      s.scale[j] = sd > 0 ? sd : 1.0;
    }
    return s;
  }

  void apply(std::span<double> row) const {
    if (empty()) return;
    for (std::size_t j = 0; j < row.size(); ++j) row[j] = (row[j] - mean[j]) / scale[j];
  }

  Matrix apply(const Matrix& x) const {
    Matrix out = x;
    for (std::size_t i = 0; i < out.rows(); ++i) apply(out.row(i));
    return out;
  }
};

struct MultiClassModel {
  int class_count = 0;
  std::size_t dimension = 0;
  Standardizer scaler;
  std::vector<BinaryModel> models;  // pairs (i, j), i < j, lexicographic

  bool converged() const {
    return std::all_of(models.begin(), models.end(), [](const BinaryModel& b) { return b.diagnostics.converged; });
  }
};

/// Number of unordered class pairs.
inline std::size_t pair_count(int classes) {
  return static_cast<std::size_t>(classes) * static_cast<std::size_t>(classes - 1) / 2;
}

/// One binary SVM per class pair, each trained only on that pair's rows.
/// `class_count` defaults to max(y) + 1; every class must be present.
inline MultiClassModel train_multiclass(const Matrix& x, std::span<const int> y, const SvmParams& p,
                                        int class_count = 0) {
  validate(p);
  if (x.rows() != y.size()) throw DataError("label count does not match row count");
  if (x.rows() == 0) throw DataError("empty training set");
  detail::check_rows(x);
  if (class_count == 0)
    for (int v : y) class_count = std::max(class_count, v + 1);
  if (class_count < 2) throw DataError("multiclass training needs at least 2 classes");
  std::vector<std::vector<std::size_t>> rows(static_cast<std::size_t>(class_count));
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] < 0 || y[i] >= class_count) throw DataError("class index out of range");
    rows[static_cast<std::size_t>(y[i])].push_back(i);
  }
  for (int c = 0; c < class_count; ++c)
    if (rows[static_cast<std::size_t>(c)].empty())
      throw DataError("class " + std::to_string(c) + " has no training rows");

  MultiClassModel m;
  m.class_count = class_count;
  m.dimension = x.cols();
  Matrix xs = x;
  if (p.standardize) {
    m.scaler = Standardizer::fit(x);
    xs = m.scaler.apply(x);
  }
  SvmParams base = p;
  base.kernel = resolve_kernel(p.kernel, xs);

  std::vector<std::pair<int, int>> pairs;
  for (int i = 0; i < class_count; ++i)
    for (int j = i + 1; j < class_count; ++j) pairs.emplace_back(i, j);
  m.models.resize(pairs.size());
  parallel_for(pairs.size(), p.jobs, [&](std::size_t k) {
    const auto [ci, cj] = pairs[k];
    Matrix sub;
    std::vector<int> labels;
    for (int c : {ci, cj})
      for (std::size_t r : rows[static_cast<std::size_t>(c)]) {
        sub.append_row(xs.row(r));
        labels.push_back(c == ci ? 1 : -1);
      }
    SvmParams pp = base;
    pp.seed = derive_seed(p.seed, {static_cast<std::uint64_t>(ci), static_cast<std::uint64_t>(cj)});
    m.models[k] = train_binary(sub, labels, pp);
    m.models[k].class_pair = {ci, cj};
  });
  return m;
}

/// One-vs-one vote. Ties go to the class with the largest summed |decision|
/// over its won pairs, then to the lowest class index.
inline int predict(const MultiClassModel& m, std::span<const double> x) {
  if (x.size() != m.dimension)
    throw DataError("feature dimension " + std::to_string(x.size()) + " does not match model dimension " +
                    std::to_string(m.dimension));
  std::vector<double> row(x.begin(), x.end());
  m.scaler.apply(row);
  std::vector<int> votes(static_cast<std::size_t>(m.class_count), 0);
  std::vector<double> weight(static_cast<std::size_t>(m.class_count), 0.0);
  for (const auto& b : m.models) {
    const double f = b.decision(row);
    const int winner = f > 0.0 ? b.class_pair.first : b.class_pair.second;
    ++votes[static_cast<std::size_t>(winner)];
    weight[static_cast<std::size_t>(winner)] += std::abs(f);
  }
  int best = 0;
  for (int c = 1; c < m.class_count; ++c) {
    const auto cu = static_cast<std::size_t>(c), bu = static_cast<std::size_t>(best);
    if (votes[cu] > votes[bu] || (votes[cu] == votes[bu] && weight[cu] > weight[bu])) best = c;
  }
  return best;
}

inline std::vector<int> predict_all(const MultiClassModel& m, const Matrix& x) {
  std::vector<int> out(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) out[i] = predict(m, x.row(i));
  return out;
}

/// Fraction of rows whose prediction equals y.
inline double accuracy(const MultiClassModel& m, const Matrix& x, std::span<const int> y) {
  if (x.rows() == 0) throw DataError("accuracy of an empty evaluation set");
  if (x.rows() != y.size()) throw DataError("label count does not match row count");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < x.rows(); ++i) hits += predict(m, x.row(i)) == y[i];
  return static_cast<double>(hits) / static_cast<double>(x.rows());
}

/// counts[true][predicted].
inline std::vector<std::vector<int>> confusion(const MultiClassModel& m, const Matrix& x, std::span<const int> y) {
  std::vector<std::vector<int>> counts(static_cast<std::size_t>(m.class_count),
                                       std::vector<int>(static_cast<std::size_t>(m.class_count), 0));
  for (std::size_t i = 0; i < x.rows(); ++i)
    ++counts[static_cast<std::size_t>(y[i])][static_cast<std::size_t>(predict(m, x.row(i)))];
  return counts;
}

}  // namespace emgsel
