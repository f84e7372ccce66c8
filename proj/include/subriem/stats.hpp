#pragma once

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "subriem/errors.hpp"

namespace subriem {

// A point estimate with its standard error.
struct Estimate {
  double mean = 0.0;
  double se = 0.0;
};

inline constexpr int kDefaultBatches = 32;

// Per-batch weighted sums of several per-sample columns. Every nonlinear
// functional of sample means gets its standard error by the delete-one-batch
// jackknife over these sums, which is the batch-means delta method without
// hand-derived derivatives.
class BatchTable {
 public:
  BatchTable(std::size_t n_columns, std::span<const std::vector<double>> columns,
             std::span<const double> weights, int n_batches = kDefaultBatches) {
    if (columns.size() != n_columns) throw DomainError("BatchTable: column count mismatch");
    const std::size_t n = n_columns ? columns[0].size() : weights.size();
    if (n == 0) throw DegenerateError("BatchTable: no samples");
    for (const auto& c : columns)
      if (c.size() != n) throw DomainError("BatchTable: ragged columns");
    if (!weights.empty() && weights.size() != n) throw DomainError("BatchTable: weight length");
    batches_ = static_cast<int>(std::min<std::size_t>(n_batches, n));
    cols_ = n_columns;
    sums_.assign(static_cast<std::size_t>(batches_) * cols_, 0.0);
    wsum_.assign(batches_, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto b = static_cast<std::size_t>((i * static_cast<std::size_t>(batches_)) / n);
      const double w = weights.empty() ? 1.0 : weights[i];
      wsum_[b] += w;
      for (std::size_t c = 0; c < cols_; ++c) sums_[b * cols_ + c] += w * columns[c][i];
    }
    const double total = std::accumulate(wsum_.begin(), wsum_.end(), 0.0);
    if (!(total > 0.0)) throw DegenerateError("BatchTable: weights sum to zero");
  }

  int batches() const { return batches_; }
  std::size_t columns() const { return cols_; }

  // Means with batch `skip` removed (skip < 0 keeps everything).
  std::vector<double> means(int skip = -1) const {
    std::vector<double> m(cols_, 0.0);
    double w = 0.0;
    for (int b = 0; b < batches_; ++b) {
      if (b == skip) continue;
      w += wsum_[b];
      for (std::size_t c = 0; c < cols_; ++c) m[c] += sums_[b * cols_ + c];
    }
    for (auto& v : m) v /= w;
    return m;
  }

  // Jackknife estimate of g(means). The point value is g at the full means.
  Estimate jackknife(const std::function<double(std::span<const double>)>& g) const {
    const auto full = means();
    const double theta = g(full);
    if (batches_ < 2) return {theta, std::numeric_limits<double>::infinity()};
    std::vector<double> loo(batches_);
    for (int b = 0; b < batches_; ++b) loo[b] = g(means(b));
    const double bar = std::accumulate(loo.begin(), loo.end(), 0.0) / batches_;
    double ss = 0.0;
    for (double v : loo) ss += (v - bar) * (v - bar);
    return {theta, std::sqrt(ss * (batches_ - 1) / batches_)};
  }

 private:
  int batches_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> sums_;
  std::vector<double> wsum_;
};

// Weighted mean with batch-means standard error.
inline Estimate batch_mean(std::span<const double> values, std::span<const double> weights = {},
                           int n_batches = kDefaultBatches) {
  std::vector<std::vector<double>> cols{std::vector<double>(values.begin(), values.end())};
  BatchTable t(1, cols, weights, n_batches);
  return t.jackknife([](std::span<const double> m) { return m[0]; });
}

inline double combined_se(double a, double b) { return std::sqrt(a * a + b * b); }

struct LinearFit {
  double intercept = 0.0, slope = 0.0;
  double se_intercept = 0.0, se_slope = 0.0;
  double r2 = 0.0;
};

// Ordinary (optionally weighted) least squares y = a + b x.
inline LinearFit linear_fit(std::span<const double> x, std::span<const double> y,
                            std::span<const double> w = {}) {
  const std::size_t n = x.size();
  if (n < 2 || y.size() != n) throw DomainError("linear_fit: need >= 2 paired points");
  double sw = 0, sx = 0, sy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double wi = w.empty() ? 1.0 : w[i];
    sw += wi;
    sx += wi * x[i];
    sy += wi * y[i];
  }
  const double mx = sx / sw, my = sy / sw;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double wi = w.empty() ? 1.0 : w[i];
    sxx += wi * (x[i] - mx) * (x[i] - mx);
    sxy += wi * (x[i] - mx) * (y[i] - my);
    syy += wi * (y[i] - my) * (y[i] - my);
  }
  LinearFit f;
  f.slope = sxx > 0 ? sxy / sxx : 0.0;
  f.intercept = my - f.slope * mx;
  double rss = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double wi = w.empty() ? 1.0 : w[i];
    const double r = y[i] - f.intercept - f.slope * x[i];
    rss += wi * r * r;
  }
  f.r2 = syy > 0 ? 1.0 - rss / syy : 1.0;
  if (n > 2 && sxx > 0) {
    const double s2 = rss / (sw * static_cast<double>(n - 2) / static_cast<double>(n));
    f.se_slope = std::sqrt(s2 / sxx);
    f.se_intercept = std::sqrt(s2 * (1.0 / sw + mx * mx / sxx));
  }
  return f;
}

// Kolmogorov limiting distribution Q(lambda) = P(K > lambda).
inline double kolmogorov_survival(double lambda) {
  if (lambda < 0.2) return 1.0;
  double sum = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    sum += (k % 2 ? 1.0 : -1.0) * term;
    if (term < 1e-16) break;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

// Two-sample Kolmogorov-Smirnov test with the Stephens small-sample correction.
inline KsResult ks_two_sample(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw DegenerateError("ks_two_sample: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= v) ++i;
    while (j < b.size() && b[j] <= v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  const double ne = na * nb / (na + nb);
  const double sq = std::sqrt(ne);
  return {d, kolmogorov_survival((sq + 0.12 + 0.11 / sq) * d)};
}

// Effective sample size by Geyer's initial positive sequence.
inline double effective_sample_size(std::span<const double> x) {
  const std::size_t n = x.size();
  if (n < 4) return static_cast<double>(n);
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
  double c0 = 0.0;
  for (double v : x) c0 += (v - mean) * (v - mean);
  c0 /= static_cast<double>(n);
  if (c0 <= 0.0) return static_cast<double>(n);
  auto acov = [&](std::size_t lag) {
    double s = 0.0;
    for (std::size_t i = 0; i + lag < n; ++i) s += (x[i] - mean) * (x[i + lag] - mean);
    return s / static_cast<double>(n);
  };
  double tau = -1.0;
  for (std::size_t k = 0; 2 * k + 1 < n && k < 1000; ++k) {
    const double pair = (k == 0 ? c0 : acov(2 * k)) + acov(2 * k + 1);
    if (pair <= 0.0) break;
    tau += 2.0 * pair / c0;
  }
  tau = std::max(tau, 1.0 / static_cast<double>(n));
  return static_cast<double>(n) / tau;
}

// Minimal feasible (a, b) >= 0 with lhs_i <= a * ca_i + b * cb_i for all i,
// minimizing a * wa + b * wb where the weights are the mean coefficients so
// the choice is invariant under rescaling of either column.
struct PairFit {
  double a = 0.0, b = 0.0;
  bool feasible = true;
};

inline PairFit fit_min_pair(std::span<const double> lhs, std::span<const double> ca,
                            std::span<const double> cb) {
  const std::size_t n = lhs.size();
  PairFit best;
  if (n == 0) return best;
  double wa = 0, wb = 0;
  for (std::size_t i = 0; i < n; ++i) {
    wa += ca[i];
    wb += cb[i];
  }
  wa = wa > 0 ? wa / n : 1.0;
  wb = wb > 0 ? wb / n : 1.0;
  auto feasible = [&](double a, double b) {
    if (a < 0 || b < 0 || !std::isfinite(a) || !std::isfinite(b)) return false;
    for (std::size_t i = 0; i < n; ++i) {
      const double rhs = a * ca[i] + b * cb[i];
      if (lhs[i] > rhs + 1e-12 * (std::abs(lhs[i]) + std::abs(rhs))) return false;
    }
    return true;
  };
  double best_obj = std::numeric_limits<double>::infinity();
  auto consider = [&](double a, double b) {
    a = std::max(a, 0.0);
    b = std::max(b, 0.0);
    if (!feasible(a, b)) return;
    const double obj = a * wa + b * wb;
    if (obj < best_obj) {
      best_obj = obj;
      best.a = a;
      best.b = b;
    }
  };
  // Axis solutions.
  double amax = 0, bmax = 0;
  bool a_ok = true, b_ok = true;
  for (std::size_t i = 0; i < n; ++i) {
    if (lhs[i] <= 0) continue;
    if (ca[i] > 0) amax = std::max(amax, lhs[i] / ca[i]); else a_ok = false;
    if (cb[i] > 0) bmax = std::max(bmax, lhs[i] / cb[i]); else b_ok = false;
  }
  if (a_ok) consider(amax, 0.0);
  if (b_ok) consider(0.0, bmax);
  // Vertices on each constraint line with an axis and pairwise intersections.
  for (std::size_t i = 0; i < n; ++i) {
    if (ca[i] > 0) consider(lhs[i] / ca[i], 0.0);
    if (cb[i] > 0) consider(0.0, lhs[i] / cb[i]);
    for (std::size_t j = i + 1; j < n; ++j) {
      const double det = ca[i] * cb[j] - ca[j] * cb[i];
      if (std::abs(det) < 1e-300) continue;
      const double a = (lhs[i] * cb[j] - lhs[j] * cb[i]) / det;
      const double b = (ca[i] * lhs[j] - ca[j] * lhs[i]) / det;
      consider(a, b);
    }
  }
  if (!std::isfinite(best_obj)) best.feasible = false;
  return best;
}

// Worker count: SUBRIEM_THREADS caps hardware concurrency.
inline unsigned worker_count() {
  unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("SUBRIEM_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) hw = std::min<unsigned>(hw, static_cast<unsigned>(v));
  }
  return hw;
}

// Runs body(i) for i in [0, n). Work items must be independent; results are
// identical for any worker count because each item owns its own output slot.
template <class Body>
void parallel_for(std::size_t n, Body&& body) {
  const unsigned workers = std::min<std::size_t>(worker_count(), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  std::exception_ptr failure;
  std::mutex failure_mutex;
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) body(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace subriem
