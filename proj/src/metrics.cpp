#include "bioptx/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

namespace bioptx {

double hit_rate(std::span<const NeedleRecord> needles) {
  if (needles.empty()) throw MetricsError("no needles");
  const auto hits = std::count_if(needles.begin(), needles.end(),
                                  [](const NeedleRecord& n) { return n.hit; });
  return 100.0 * static_cast<double>(hits) / static_cast<double>(needles.size());
}

double hit_rate(const EpisodeLog& log) {
  const auto n = log.needles();
  return hit_rate(std::span<const NeedleRecord>(n));
}

CclSummary ccl_summary(std::span<const NeedleRecord> needles) {
  CclSummary s;
  double sum = 0.0;
  int pos = 0;
  for (const auto& n : needles) {
    s.per_needle_mm.push_back(n.ccl_mm);
    if (n.ccl_mm > 0.0) {
      sum += n.ccl_mm;
      ++pos;
    }
    s.max_mm = std::max(s.max_mm, n.ccl_mm);
  }
  s.episode_mm = pos > 0 ? sum / pos : 0.0;
  s.significant = s.max_mm >= kSignificantCoreMm;
  return s;
}

CclSummary ccl_summary(const EpisodeLog& log) {
  const auto n = log.needles();
  return ccl_summary(std::span<const NeedleRecord>(n));
}

double needle_area(std::span<const WorldXY> positions) {
  if (positions.empty()) return 0.0;
  const double n = static_cast<double>(positions.size());
  double mx = 0.0, my = 0.0;
  for (const auto& p : positions) {
    mx += p.x;
    my += p.y;
  }
  mx /= n;
  my /= n;
  double vx = 0.0, vy = 0.0;
  for (const auto& p : positions) {
    vx += (p.x - mx) * (p.x - mx);
    vy += (p.y - my) * (p.y - my);
  }
  return std::numbers::pi * std::sqrt(vx / n) * std::sqrt(vy / n);
}

EpisodeMetrics evaluate_episode(const EpisodeLog& log, double lesion_volume_cc,
                                const MetricsOptions& opts) {
  std::vector<NeedleRecord> needles = log.needles();
  if (opts.last_n > 0 && needles.size() > static_cast<std::size_t>(opts.last_n)) {
    needles.erase(needles.begin(), needles.end() - opts.last_n);
  }
  EpisodeMetrics m;
  m.lesion_volume_cc = lesion_volume_cc;
  m.needles_fired = static_cast<int>(needles.size());
  m.ccl = ccl_summary(needles);
  if (needles.empty()) return m;
  m.hr_pct = hit_rate(needles);
  std::vector<WorldXY> pos;
  pos.reserve(needles.size());
  for (const auto& n : needles) pos.push_back(n.world);
  m.na_mm2 = needle_area(pos);
  return m;
}

MeanSd mean_sd(std::span<const double> xs) {
  MeanSd r;
  if (xs.empty()) return r;
  double s = 0.0;
  for (double x : xs) s += x;
  r.mean = s / static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double v = 0.0;
    for (double x : xs) v += (x - r.mean) * (x - r.mean);
    r.sd = std::sqrt(v / static_cast<double>(xs.size() - 1));
  }
  return r;
}

std::string format_mean_sd(const MeanSd& m, int precision) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(precision);
  os << m.mean << "±" << m.sd;
  return os.str();
}

MetricsRow aggregate(std::span<const EpisodeMetrics> cohort) {
  if (cohort.empty()) throw MetricsError("empty cohort");
  std::vector<double> ccl, hr, na;
  for (const auto& m : cohort) {
    ccl.push_back(m.ccl.episode_mm);
    hr.push_back(m.hr_pct);
    na.push_back(m.na_mm2);
  }
  MetricsRow row;
  row.n = cohort.size();
  row.ccl_mm = mean_sd(ccl);
  row.hr_pct = mean_sd(hr);
  row.na_mm2 = mean_sd(na);
  return row;
}

namespace {

// Continued fraction for I_x(a, b), modified Lentz.
double beta_cf(double a, double b, double x) {
  constexpr int kMaxIter = 500;
  constexpr double kEps = 1e-15;
  constexpr double kTiny = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
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
    if (std::abs(del - 1.0) < kEps) return h;
  }
  throw MetricsError("incomplete beta continued fraction did not converge");
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0)) throw MetricsError("incomplete beta needs a, b > 0");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                          a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_cf(a, b, x) / a;
  return 1.0 - front * beta_cf(b, a, 1.0 - x) / b;
}

double student_t_two_sided_p(double t, double df) {
  if (!(df > 0.0)) throw MetricsError("degrees of freedom must be positive");
  if (std::isnan(t)) return 1.0;
  if (std::isinf(t)) return 0.0;
  return incomplete_beta(0.5 * df, 0.5, df / (df + t * t));
}

TTestResult two_sample_ttest(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) {
    throw MetricsError("t-test needs at least two samples per group");
  }
  const MeanSd ma = mean_sd(a), mb = mean_sd(b);
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  TTestResult r;
  r.df = na + nb - 2.0;
  const double pooled =
      ((na - 1.0) * ma.sd * ma.sd + (nb - 1.0) * mb.sd * mb.sd) / r.df;
  const double se = std::sqrt(pooled * (1.0 / na + 1.0 / nb));
  const double diff = ma.mean - mb.mean;
  if (se == 0.0) {
    if (diff == 0.0) {
      r.t = 0.0;
      r.p = 1.0;
    } else {
      r.t = diff > 0 ? std::numeric_limits<double>::infinity()
                     : -std::numeric_limits<double>::infinity();
      r.p = 0.0;
      r.degenerate = true;
    }
    return r;
  }
  r.t = diff / se;
  r.p = student_t_two_sided_p(r.t, r.df);
  return r;
}

}  // namespace bioptx
