#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <numbers>
#include <random>

#include "bioptx/metrics.hpp"
#include "fixtures.hpp"

using namespace bioptx;

namespace {

std::vector<NeedleRecord> needles(const std::vector<double>& ccls) {
  std::vector<NeedleRecord> out;
  int k = 0;
  for (const double c : ccls) {
    NeedleRecord r;
    r.hole = {k % kGridSize, 6};
    r.world = grid_to_world(r.hole);
    r.ccl_mm = c;
    r.hit = c > 0.0;
    r.step = k++;
    out.push_back(r);
  }
  return out;
}

EpisodeLog log_of(const std::vector<NeedleRecord>& ns) {
  EpisodeLog log;
  for (const auto& n : ns) {
    LoggedStep s;
    s.t = n.step;
    s.info.needle = n;
    s.info.hit = n.hit;
    s.info.ccl_mm = n.ccl_mm;
    log.steps.push_back(s);
  }
  return log;
}

double oracle_p(double t, double df) {
  const boost::math::students_t dist(df);
  return 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
}

}  // namespace

TEST_CASE("hit_rate") {
  CHECK(hit_rate(needles({1, 2, 3, 0, 0})) == 60.0);
  CHECK(hit_rate(needles({1, 2, 3, 4, 5})) == 100.0);
  CHECK(hit_rate(needles(std::vector<double>(15, 0.0))) == 0.0);
  CHECK_THROWS_WITH_AS(hit_rate(EpisodeLog{}), "no needles", MetricsError);
}

TEST_CASE("ccl_summary") {
  const CclSummary s = ccl_summary(needles({8, 0, 4}));
  CHECK(s.episode_mm == 6.0);
  CHECK(s.max_mm == 8.0);
  CHECK(s.significant);
  CHECK(s.per_needle_mm.size() == 3);
  const CclSummary miss = ccl_summary(needles({0, 0}));
  CHECK(miss.episode_mm == 0.0);
  CHECK_FALSE(miss.significant);
  CHECK_FALSE(ccl_summary(needles({5.9})).significant);
  CHECK(ccl_summary(needles({6.0})).significant);

  // One needle through the center of an r = 5 mm sphere.
  const auto vol = bioptx::testing::make_case({0, 30, 45.5}, 5.0);
  BiopsyEnv env(vol, bioptx::testing::quiet_config());
  env.reset(0, Hole{6, 6});
  env.fire({6, 6}, 45.5);
  const CclSummary one = ccl_summary(env.log());
  CHECK(one.episode_mm == doctest::Approx(10.0).epsilon(0.05));
  CHECK(one.significant);
}

TEST_CASE("needle_area") {
  const std::vector<WorldXY> five{{0, 0}, {5, 0}, {0, 5}, {5, 5}, {2.5, 2.5}};
  CHECK(std::abs(needle_area(five) - 5.0 * std::numbers::pi) <= 1e-9);
  const std::vector<WorldXY> same(5, WorldXY{10, 20});
  CHECK(needle_area(same) == 0.0);
  CHECK(needle_area(std::vector<WorldXY>{{3, 4}}) == 0.0);

  std::mt19937_64 rng(17);
  std::normal_distribution<double> g(0.0, 8.0);
  std::uniform_real_distribution<double> k(0.1, 10.0), off(-100.0, 100.0);
  std::uniform_int_distribution<int> n(2, 15);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<WorldXY> p(n(rng));
    for (auto& q : p) q = {g(rng), g(rng)};
    const double base = needle_area(p);
    const double s = k(rng), ox = off(rng), oy = off(rng);
    std::vector<WorldXY> scaled(p), moved(p), swapped(p);
    for (std::size_t a = 0; a < p.size(); ++a) {
      scaled[a] = {p[a].x * s, p[a].y * s};
      moved[a] = {p[a].x + ox, p[a].y + oy};
      swapped[a] = {p[a].y, p[a].x};
    }
    REQUIRE(needle_area(scaled) == doctest::Approx(s * s * base).epsilon(1e-9));
    REQUIRE(needle_area(moved) == doctest::Approx(base).epsilon(1e-9));
    REQUIRE(needle_area(swapped) == doctest::Approx(base).epsilon(1e-12));
  }
}

TEST_CASE("evaluate_episode") {
  const EpisodeMetrics m = evaluate_episode(log_of(needles({8, 0, 4, 0, 2})), 0.4);
  CHECK(m.hr_pct == 60.0);
  CHECK(m.needles_fired == 5);
  CHECK(m.ccl.episode_mm == doctest::Approx(14.0 / 3.0));
  CHECK(m.lesion_volume_cc == 0.4);
  CHECK(m.na_mm2 == doctest::Approx(0.0));  // all on row 6, std_y = 0

  MetricsOptions last2;
  last2.last_n = 2;
  const EpisodeMetrics tail = evaluate_episode(log_of(needles({8, 0, 4, 0, 2})), 0.0, last2);
  CHECK(tail.needles_fired == 2);
  CHECK(tail.hr_pct == 50.0);

  const EpisodeMetrics none = evaluate_episode(EpisodeLog{});
  CHECK(none.hr_pct == 0.0);
  CHECK(none.na_mm2 == 0.0);
  CHECK(none.needles_fired == 0);

  // HR > 0 exactly when some core is positive.
  std::mt19937_64 rng(4);
  std::bernoulli_distribution hit(0.3);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> c(5);
    for (auto& x : c) x = hit(rng) ? 1.0 + (rng() % 10) : 0.0;
    const EpisodeMetrics e = evaluate_episode(log_of(needles(c)));
    REQUIRE((e.hr_pct > 0.0) == (e.ccl.max_mm > 0.0));
  }
}

TEST_CASE("aggregate") {
  EpisodeMetrics a, b;
  a.hr_pct = 40;
  b.hr_pct = 60;
  const std::vector<EpisodeMetrics> two{a, b};
  const MetricsRow r = aggregate(two);
  CHECK(r.n == 2);
  CHECK(r.hr_pct.mean == 50.0);
  CHECK(r.hr_pct.sd == doctest::Approx(14.1421356).epsilon(1e-6));
  CHECK(format_mean_sd(r.hr_pct) == "50.00±14.14");
  const std::vector<EpisodeMetrics> same(4, a);
  CHECK(aggregate(same).hr_pct.sd == 0.0);
  CHECK_THROWS_AS(aggregate(std::vector<EpisodeMetrics>{}), MetricsError);

  // Second-pass recomputation from raw values.
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 100.0);
  std::vector<EpisodeMetrics> cohort(37);
  for (auto& e : cohort) {
    e.hr_pct = u(rng);
    e.ccl.episode_mm = u(rng) / 10;
    e.na_mm2 = u(rng);
  }
  double s = 0;
  for (const auto& e : cohort) s += e.na_mm2;
  const double mean = s / cohort.size();
  double ss = 0;
  for (const auto& e : cohort) ss += (e.na_mm2 - mean) * (e.na_mm2 - mean);
  const MetricsRow big = aggregate(cohort);
  CHECK(big.na_mm2.mean == doctest::Approx(mean).epsilon(1e-12));
  CHECK(big.na_mm2.sd == doctest::Approx(std::sqrt(ss / (cohort.size() - 1))).epsilon(1e-12));
}

TEST_CASE("incomplete beta and t tail against an independent implementation") {
  CHECK(incomplete_beta(2, 3, 0.0) == 0.0);
  CHECK(incomplete_beta(2, 3, 1.0) == 1.0);
  // I_x(1, 1) = x, I_x(a, 1) = x^a.
  CHECK(incomplete_beta(1, 1, 0.37) == doctest::Approx(0.37).epsilon(1e-12));
  CHECK(incomplete_beta(3.5, 1, 0.6) == doctest::Approx(std::pow(0.6, 3.5)).epsilon(1e-10));
  CHECK(std::abs(student_t_two_sided_p(-1.0, 8) - 0.3466) <= 1e-3);
  for (const double df : {1.0, 2.0, 3.0, 8.0, 17.0, 38.0, 120.0}) {
    for (const double t : {0.0, 0.1, 0.5, 1.0, 1.96, 2.5, 4.0, 9.0}) {
      REQUIRE(student_t_two_sided_p(t, df) == doctest::Approx(oracle_p(t, df)).epsilon(1e-9));
      REQUIRE(student_t_two_sided_p(-t, df) == student_t_two_sided_p(t, df));
    }
  }
}

TEST_CASE("two_sample_ttest") {
  const std::vector<double> a{1, 2, 3, 4, 5}, b{2, 3, 4, 5, 6};
  const TTestResult r = two_sample_ttest(a, b);
  CHECK(r.t == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(r.df == 8.0);
  CHECK(std::abs(r.p - 0.3466) <= 1e-3);
  CHECK(r.p == doctest::Approx(oracle_p(-1.0, 8)).epsilon(1e-9));
  const TTestResult sw = two_sample_ttest(b, a);
  CHECK(sw.t == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(sw.p == doctest::Approx(r.p).epsilon(1e-14));

  const TTestResult eq = two_sample_ttest(a, a);
  CHECK(eq.t == 0.0);
  CHECK(eq.p == doctest::Approx(1.0).epsilon(1e-12));

  const std::vector<double> c3(4, 3.0), c5(4, 5.0);
  const TTestResult flat = two_sample_ttest(c3, c3);
  CHECK(flat.t == 0.0);
  CHECK(flat.p == 1.0);
  CHECK_FALSE(flat.degenerate);
  const TTestResult deg = two_sample_ttest(c3, c5);
  CHECK(deg.degenerate);
  CHECK(deg.p == 0.0);
  CHECK(std::isinf(deg.t));
  CHECK(deg.t < 0.0);

  CHECK_THROWS_AS(two_sample_ttest(std::vector<double>{1.0}, b), MetricsError);
}

TEST_CASE("t-test rejection rate under the null") {
  std::mt19937_64 rng(2023);
  std::normal_distribution<double> g(10.0, 3.0);
  int reject = 0;
  const int trials = 1000;
  for (int k = 0; k < trials; ++k) {
    std::vector<double> a(20), b(20);
    for (auto& x : a) x = g(rng);
    for (auto& x : b) x = g(rng);
    if (two_sample_ttest(a, b).p < 0.05) ++reject;
  }
  const double rate = static_cast<double>(reject) / trials;
  CHECK(rate >= 0.03);
  CHECK(rate <= 0.07);
}
