#ifndef BOXMC_DIAGNOSTICS_HPP
#define BOXMC_DIAGNOSTICS_HPP

#include <algorithm>
#include <cmath>
#include <complex>
#include <vector>

#include "boxmc/core.hpp"

#include <unsupported/Eigen/FFT>

namespace boxmc {

/// Biased autocovariance c(k) = (1/N) sum_t (X_t - m)(X_{t+k} - m) for
/// k = 0..max_lag, computed with an FFT so long series stay cheap.
inline Vec autocovariance(const Vec& x, Eigen::Index max_lag) {
  const Eigen::Index n = x.size();
  if (n < 2) throw ConfigError("autocovariance: need at least two samples");
  if (max_lag < 0 || max_lag >= n)
    throw ConfigError("autocovariance: lag out of range");
  const double mean = x.mean();
  std::size_t m = 1;
  while (m < static_cast<std::size_t>(2 * n)) m <<= 1;
  std::vector<std::complex<double>> buf(m, {0.0, 0.0});
  for (Eigen::Index t = 0; t < n; ++t) buf[static_cast<std::size_t>(t)] = x[t] - mean;
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> freq;
  fft.fwd(freq, buf);
  for (auto& f : freq) f = std::complex<double>(std::norm(f), 0.0);
  std::vector<std::complex<double>> corr;
  fft.inv(corr, freq);
  Vec c(max_lag + 1);
  for (Eigen::Index k = 0; k <= max_lag; ++k)
    c[k] = corr[static_cast<std::size_t>(k)].real() / static_cast<double>(n);
  return c;
}

/// Self-consistent window rule M >= kWindowMultiple * tau(M). The
/// triangular lag weights bias tau down by O(tau/M), so the multiple is
/// chosen large enough that this bias stays well inside the estimator's
/// own noise (at 5 the bias alone puts an AR(1) series with coefficient
/// 0.5 outside a 10% tolerance on 1/tau).
inline constexpr double kWindowMultiple = 8.0;

/// Autocorrelation time and effective sample size of one scalar series.
/// tau is the Bartlett-windowed estimate tau(M) = 1 + 2 sum_{k=1}^{M}
/// (1 - k/M) rho(k) at the smallest window M >= 5 satisfying
/// M >= kWindowMultiple * tau(M), capped at N/10.
struct EssResult {
  double mean = 0.0;
  double variance = 0.0;      // c(0)
  double tau = 1.0;           // integrated autocorrelation time
  long window = 0;            // Bartlett window actually used
  bool window_converged = false;
  long n = 0;
  double n_eff = 0.0;         // N / tau
  double normalized_ess = 0.0;  // 1 / tau
  double se_mean = 0.0;       // sqrt(variance * tau / N)
};

inline EssResult effective_sample_size(const Vec& x) {
  const long n = static_cast<long>(x.size());
  if (n < 10) throw ConfigError("effective_sample_size: need at least 10 samples");
  const long cap = std::max<long>(1, n / 10);
  EssResult r;
  r.n = n;
  Vec c = autocovariance(x, cap);
  r.mean = x.mean();
  r.variance = c[0];
  if (!(c[0] > 0.0)) {  // constant series carries no information
    r.tau = kInf;
    r.window = cap;
    return r;
  }
  Vec rho = c / c[0];
  long m = std::min<long>(5, cap);
  double s1 = 0.0, s2 = 0.0;
  for (long k = 1; k <= m; ++k) {
    s1 += rho[k];
    s2 += static_cast<double>(k) * rho[k];
  }
  double tau = 1.0;
  while (true) {
    tau = 1.0 + 2.0 * (s1 - s2 / static_cast<double>(m));
    if (static_cast<double>(m) >= kWindowMultiple * tau) {
      r.window_converged = true;
      break;
    }
    if (m >= cap) break;
    ++m;
    s1 += rho[m];
    s2 += static_cast<double>(m) * rho[m];
  }
  if (!(tau > 1e-6)) tau = 1e-6;  // guard against noise-driven negative estimates
  r.tau = tau;
  r.window = m;
  r.n_eff = static_cast<double>(n) / tau;
  r.normalized_ess = 1.0 / tau;
  r.se_mean = std::sqrt(r.variance * tau / static_cast<double>(n));
  return r;
}

/// q-th percentile (q in [0, 1]) with linear interpolation at rank
/// q (n - 1) over the sorted values.
inline double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw ConfigError("percentile: empty sample");
  if (q < 0.0 || q > 1.0) throw ConfigError("percentile: q must lie in [0, 1]");
  std::sort(values.begin(), values.end());
  const double rank = q * static_cast<double>(values.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(rank);
  const double frac = rank - static_cast<double>(lo);
  if (lo + 1 >= values.size()) return values.back();
  return values[lo] * (1.0 - frac) + values[lo + 1] * frac;
}

struct PercentileSummary {
  double p10 = 0.0, p50 = 0.0, p90 = 0.0;
};

inline PercentileSummary percentile_summary(const std::vector<double>& values) {
  return {percentile(values, 0.10), percentile(values, 0.50), percentile(values, 0.90)};
}

/// Do [p10, p90] bands overlap?
inline bool bands_overlap(const PercentileSummary& a, const PercentileSummary& b) {
  return a.p10 <= b.p90 && b.p10 <= a.p90;
}

/// Region labels for the flux-asymmetry probe: 0 = neither, 1 = region A,
/// 2 = region B.
inline int flux_region(double x, double p) {
  if (p > 0.0 && x < 0.0) return 1;
  if (p > 0.0 && x > 0.0) return 2;
  return 0;
}

/// Net A->B transition flux with a batch-means standard error. For a
/// chain with detailed balance the net flux between any two regions
/// vanishes, so |z| large is evidence of irreversible dynamics.
struct FluxResult {
  long n_ab = 0;
  long n_ba = 0;
  double mean = 0.0;  // mean of the per-step net flux
  double se = 0.0;    // batch-means standard error of the mean
  double z = 0.0;
  long batches = 0;
};

inline FluxResult flux_asymmetry(const std::vector<int>& region) {
  const long n = static_cast<long>(region.size());
  if (n < 100) throw ConfigError("flux_asymmetry: need at least 100 states");
  const long steps = n - 1;
  std::vector<double> d(static_cast<std::size_t>(steps));
  FluxResult r;
  for (long t = 0; t < steps; ++t) {
    double v = 0.0;
    if (region[t] == 1 && region[t + 1] == 2) {
      v = 1.0;
      ++r.n_ab;
    } else if (region[t] == 2 && region[t + 1] == 1) {
      v = -1.0;
      ++r.n_ba;
    }
    d[static_cast<std::size_t>(t)] = v;
  }
  const long batch_len = std::max<long>(1, static_cast<long>(std::sqrt(static_cast<double>(steps))));
  const long batches = steps / batch_len;
  if (batches < 2) throw ConfigError("flux_asymmetry: not enough data for batch means");
  double total = 0.0;
  std::vector<double> bm(static_cast<std::size_t>(batches));
  for (long b = 0; b < batches; ++b) {
    double s = 0.0;
    for (long t = b * batch_len; t < (b + 1) * batch_len; ++t)
      s += d[static_cast<std::size_t>(t)];
    bm[static_cast<std::size_t>(b)] = s / static_cast<double>(batch_len);
    total += s;
  }
  r.mean = total / static_cast<double>(batches * batch_len);
  double ss = 0.0;
  for (double v : bm) ss += (v - r.mean) * (v - r.mean);
  const double var_bm = ss / static_cast<double>(batches - 1);
  r.se = std::sqrt(var_bm / static_cast<double>(batches));
  r.batches = batches;
  r.z = r.se > 0.0 ? r.mean / r.se : (r.mean == 0.0 ? 0.0 : kInf);
  return r;
}

/// z-score of a sample moment against a reference value, with the
/// standard error inflated by the autocorrelation time of the series.
struct MomentTest {
  double mean = 0.0;
  double se = 0.0;
  double z = 0.0;
  double tau = 1.0;
};

inline MomentTest stationarity_moment_test(const Vec& series, double reference) {
  EssResult e = effective_sample_size(series);
  MomentTest t;
  t.mean = e.mean;
  t.tau = e.tau;
  t.se = e.se_mean;
  if (t.se > 0.0 && std::isfinite(t.se)) {
    t.z = (t.mean - reference) / t.se;
  } else {
    t.z = (t.mean == reference) ? 0.0 : kInf;
  }
  return t;
}

/// Fixed-width histogram; values outside [lo, hi] are clipped into the
/// end bins so counts always sum to the sample size.
inline std::vector<long> histogram(const std::vector<double>& values, int bins, double lo,
                                   double hi) {
  if (bins < 1 || !(hi > lo)) throw ConfigError("histogram: bad bin layout");
  std::vector<long> counts(static_cast<std::size_t>(bins), 0);
  for (double v : values) {
    int b = static_cast<int>(static_cast<double>(bins) * (v - lo) / (hi - lo));
    b = std::clamp(b, 0, bins - 1);
    ++counts[static_cast<std::size_t>(b)];
  }
  return counts;
}

}  // namespace boxmc

#endif  // BOXMC_DIAGNOSTICS_HPP
