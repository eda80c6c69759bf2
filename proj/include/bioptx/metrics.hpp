#ifndef BIOPTX_METRICS_HPP_
#define BIOPTX_METRICS_HPP_

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "bioptx/env.hpp"

namespace bioptx {

class MetricsError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kSignificantCoreMm = 6.0;

struct CclSummary {
  std::vector<double> per_needle_mm;
  double episode_mm = 0.0;  // mean over positive cores, 0 if none
  double max_mm = 0.0;
  bool significant = false;  // max core >= 6 mm
};

struct EpisodeMetrics {
  double hr_pct = 0.0;
  CclSummary ccl;
  double na_mm2 = 0.0;
  int needles_fired = 0;
  double lesion_volume_cc = 0.0;
};

// 100 * positives / fired. Throws MetricsError("no needles") when empty.
double hit_rate(const EpisodeLog& log);
double hit_rate(std::span<const NeedleRecord> needles);

CclSummary ccl_summary(const EpisodeLog& log);
CclSummary ccl_summary(std::span<const NeedleRecord> needles);

// pi * std_x * std_y with population standard deviations.
double needle_area(std::span<const WorldXY> positions);

struct MetricsOptions {
  // When > 0, only the last `last_n` fired needles are scored.
  int last_n = 0;
};

// Metrics of one episode. An episode with no needles scores HR = CCL = NA = 0.
EpisodeMetrics evaluate_episode(const EpisodeLog& log, double lesion_volume_cc = 0.0,
                                const MetricsOptions& opts = {});

struct MeanSd {
  double mean = 0.0;
  double sd = 0.0;  // sample SD, 0 for a single value
};

MeanSd mean_sd(std::span<const double> xs);
std::string format_mean_sd(const MeanSd& m, int precision = 2);

struct MetricsRow {
  std::size_t n = 0;
  MeanSd ccl_mm;
  MeanSd hr_pct;
  MeanSd na_mm2;
};

MetricsRow aggregate(std::span<const EpisodeMetrics> cohort);

// Regularized incomplete beta I_x(a, b).
double incomplete_beta(double a, double b, double x);
// Two-sided tail probability of Student's t with `df` degrees of freedom.
double student_t_two_sided_p(double t, double df);

struct TTestResult {
  double t = 0.0;
  double df = 0.0;
  double p = 1.0;
  bool degenerate = false;  // zero pooled variance with different means
};

// Pooled-variance two-sample Student t-test.
TTestResult two_sample_ttest(std::span<const double> a, std::span<const double> b);

}  // namespace bioptx

#endif  // BIOPTX_METRICS_HPP_
