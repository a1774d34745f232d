#include "voxdistill/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "voxdistill/common.hpp"

namespace voxdistill {

namespace {

double beta_continued_fraction(double a, double b, double x) {
  constexpr int kMaxIter = 500;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) break;
  }
  return h;
}

double clamp01(double p) { return std::clamp(p, 0.0, 1.0); }

// Midranks doubled so that they stay integral.
std::vector<long> doubled_midranks(const std::vector<double>& pooled) {
  const std::size_t n = pooled.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return pooled[i] < pooled[j]; });
  std::vector<long> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && pooled[order[j + 1]] == pooled[order[i]]) ++j;
    // ranks i+1 .. j+1 share (i + j + 2) / 2
    const auto twice = static_cast<long>(i + j + 2);
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = twice;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

std::string_view alternative_name(Alternative alt) {
  switch (alt) {
    case Alternative::TwoSided: return "two-sided";
    case Alternative::Greater: return "greater";
    case Alternative::Less: return "less";
  }
  return "unknown";
}

double regularized_incomplete_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double student_t_cdf(double t, double df) {
  if (std::isinf(t)) return t > 0 ? 1.0 : 0.0;
  const double tail = 0.5 * regularized_incomplete_beta(0.5 * df, 0.5, df / (df + t * t));
  return t > 0.0 ? 1.0 - tail : tail;
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

StatResult one_sample_t_test(std::span<const double> samples, double mu0, Alternative alt) {
  const std::size_t n = samples.size();
  if (n < 2) throw DegenerateSample("t-test needs at least two samples");
  const double m = mean(samples);
  double ss = 0.0;
  for (double x : samples) ss += (x - m) * (x - m);
  const double var = ss / static_cast<double>(n - 1);
  if (!(var > 0.0)) throw DegenerateSample("t-test samples have zero variance");
  const double df = static_cast<double>(n - 1);
  const double t = (m - mu0) / std::sqrt(var / static_cast<double>(n));

  StatResult r;
  r.test = StatTest::OneSampleT;
  r.alternative = alt;
  r.statistic = t;
  switch (alt) {
    case Alternative::TwoSided:
      r.p_value = regularized_incomplete_beta(0.5 * df, 0.5, df / (df + t * t));
      break;
    case Alternative::Greater:
      r.p_value = t > 0.0 ? 0.5 * regularized_incomplete_beta(0.5 * df, 0.5, df / (df + t * t))
                          : student_t_cdf(-t, df);
      break;
    case Alternative::Less:
      r.p_value = student_t_cdf(t, df);
      break;
  }
  r.p_value = clamp01(r.p_value);
  return r;
}

StatResult wilcoxon_rank_sum(std::span<const double> a, std::span<const double> b, Alternative alt,
                             RankSumMethod method) {
  if (a.empty() || b.empty()) throw DegenerateSample("rank-sum test needs two non-empty samples");
  std::vector<double> pooled(a.begin(), a.end());
  pooled.insert(pooled.end(), b.begin(), b.end());
  for (double x : pooled) {
    if (std::isnan(x)) throw DegenerateSample("rank-sum test received NaN");
  }
  const std::size_t n = a.size();
  const std::size_t total = pooled.size();
  const std::vector<long> ranks = doubled_midranks(pooled);
  long observed = 0;
  for (std::size_t i = 0; i < n; ++i) observed += ranks[i];
  const long centre = static_cast<long>(n * (total + 1));  // doubled null mean

  StatResult r;
  r.test = StatTest::WilcoxonRankSum;
  r.alternative = alt;
  r.statistic = 0.5 * static_cast<double>(observed);

  const bool exact = method == RankSumMethod::Exact ||
                     (method == RankSumMethod::Auto && total <= static_cast<std::size_t>(kExactRankSumLimit));
  if (exact) {
    // ways[k][s]: subsets of size k with doubled-rank sum s
    const long max_sum = std::accumulate(ranks.begin(), ranks.end(), 0L);
    std::vector<std::vector<double>> ways(n + 1, std::vector<double>(static_cast<std::size_t>(max_sum + 1), 0.0));
    ways[0][0] = 1.0;
    for (std::size_t i = 0; i < total; ++i) {
      const auto rk = static_cast<std::size_t>(ranks[i]);
      for (std::size_t k = std::min(n, i + 1); k >= 1; --k) {
        std::vector<double>& row = ways[k];
        const std::vector<double>& prev = ways[k - 1];
        for (std::size_t s = static_cast<std::size_t>(max_sum); s >= rk; --s) row[s] += prev[s - rk];
      }
    }
    double all = 0.0;
    double hit = 0.0;
    for (long s = 0; s <= max_sum; ++s) {
      const double w = ways[n][static_cast<std::size_t>(s)];
      if (w == 0.0) continue;
      all += w;
      bool extreme = false;
      switch (alt) {
        case Alternative::TwoSided: extreme = std::labs(s - centre) >= std::labs(observed - centre); break;
        case Alternative::Greater: extreme = s >= observed; break;
        case Alternative::Less: extreme = s <= observed; break;
      }
      if (extreme) hit += w;
    }
    r.p_value = clamp01(hit / all);
    return r;
  }

  const double nn = static_cast<double>(n);
  const double mm = static_cast<double>(b.size());
  const double big_n = static_cast<double>(total);
  std::vector<double> sorted = pooled;
  std::sort(sorted.begin(), sorted.end());
  double tie_term = 0.0;
  for (std::size_t i = 0; i < total;) {
    std::size_t j = i;
    while (j < total && sorted[j] == sorted[i]) ++j;
    const double t = static_cast<double>(j - i);
    tie_term += t * t * t - t;
    i = j;
  }
  const double var = nn * mm / 12.0 * ((big_n + 1.0) - tie_term / (big_n * (big_n - 1.0)));
  if (!(var > 0.0)) {
    r.p_value = 1.0;
    return r;
  }
  const double sd = std::sqrt(var);
  const double diff = r.statistic - nn * (big_n + 1.0) / 2.0;
  switch (alt) {
    case Alternative::TwoSided:
      r.p_value = 2.0 * (1.0 - normal_cdf(std::max(0.0, std::abs(diff) - 0.5) / sd));
      break;
    case Alternative::Greater:
      r.p_value = 1.0 - normal_cdf((diff - 0.5) / sd);
      break;
    case Alternative::Less:
      r.p_value = normal_cdf((diff + 0.5) / sd);
      break;
  }
  r.p_value = clamp01(r.p_value);
  return r;
}

double mean(std::span<const double> x) {
  if (x.empty()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

double standard_error(std::span<const double> x) {
  if (x.size() < 2) return 0.0;
  const double m = mean(x);
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(x.size() - 1) / static_cast<double>(x.size()));
}

double median(std::span<const double> x) {
  if (x.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::vector<double> v(x.begin(), x.end());
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 == 1 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

}  // namespace voxdistill
