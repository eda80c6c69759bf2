#ifndef BIOPTX_COMPARE_HPP_
#define BIOPTX_COMPARE_HPP_

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "bioptx/metrics.hpp"
#include "bioptx/serialize.hpp"

namespace bioptx {

// Named metric columns, one value per episode.
using MetricSamples = std::map<std::string, std::vector<double>>;

// Reads an episodes.csv table (ccl_mm, hr_pct, na_mm2), a plain CSV whose
// columns are all metrics, or a JSON-lines episode log (metrics recomputed).
MetricSamples read_metric_samples(const std::filesystem::path& path);
MetricSamples metric_samples(const std::vector<EpisodeLog>& logs);

struct CompareRow {
  std::string metric;
  std::size_t n_a = 0, n_b = 0;
  double mean_a = 0.0, mean_b = 0.0;
  TTestResult test;
  bool significant = false;
};

// Two-sample t-test per metric. Throws std::invalid_argument when the two
// groups do not carry the same metric names.
std::vector<CompareRow> compare_samples(const MetricSamples& a, const MetricSamples& b,
                                        double alpha = 0.05);

Json compare_json(const std::vector<CompareRow>& rows, double alpha = 0.05);
std::vector<CompareRow> compare_from_json(const Json& j);
std::string compare_text(const std::vector<CompareRow>& rows);

}  // namespace bioptx

#endif  // BIOPTX_COMPARE_HPP_
