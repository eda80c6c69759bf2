#ifndef BIOPTX_COHORT_HPP_
#define BIOPTX_COHORT_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "bioptx/anatomy.hpp"
#include "bioptx/env.hpp"
#include "bioptx/metrics.hpp"
#include "bioptx/serialize.hpp"

namespace bioptx {

struct CohortSpec {
  int n_cases = 20;
  // Lesion volumes are drawn uniformly from [min_cc, max_cc].
  double min_cc = 0.1;
  double max_cc = 0.8;
  // Relative jitter of the prostate semi-axes.
  double prostate_jitter = 0.15;
  std::uint64_t seed = 1;

  void validate() const;
};

struct CaseEntry {
  std::string id;
  AnatomySpec spec;
  double lesion_cc = 0.0;  // measured on the voxelized lesion
  std::string file;        // relative to the cohort directory, if saved
  std::shared_ptr<const LabelVolume> volume;
};

std::vector<CaseEntry> generate_cohort(const CohortSpec& spec);
// Writes one BVOL file per case plus cohort.json.
void save_cohort(std::vector<CaseEntry>& cases, const CohortSpec& spec,
                 const std::filesystem::path& dir);
std::vector<CaseEntry> load_cohort(const std::filesystem::path& dir);
// A cohort directory, or a single .bvol file (one-case cohort).
std::vector<CaseEntry> load_cases(const std::filesystem::path& path);

struct PerturbationPoint {
  double bias_mm = 0.0;
  double sd_mm = 0.0;
};

// bias x sd over {0, 5, 10}^2, bias-major.
std::vector<PerturbationPoint> default_grid();

struct EpisodeRecord {
  std::string case_id;
  double lesion_cc = 0.0;
  EpisodeLog log;
  EpisodeMetrics metrics;
};

struct BaselineRunConfig {
  std::vector<std::string> strategies{"sweep", "scout"};
  std::vector<PerturbationPoint> grid = default_grid();
  int episodes_per_case = 5;
  EnvConfig env;
  MetricsOptions metrics;
  std::uint64_t seed = 1;
  int workers = 1;

  Json to_json() const;
};

struct RunOutput {
  std::vector<EpisodeRecord> episodes;
  // "case_id: reason" for every failed case/strategy/grid combination.
  std::vector<std::string> failures;
  std::size_t attempted = 0;

  double failure_fraction() const;
};

RunOutput run_baselines(const std::vector<CaseEntry>& cases, const BaselineRunConfig& cfg);

// Runs `fn(k)` for k in [0, n) on up to `workers` threads.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn);

struct TableRow {
  std::string strategy;
  double bias_mm = 0.0;
  double sd_mm = 0.0;
  std::string size_group;  // empty, "small" or "large"
  MetricsRow metrics;      // n == 0 marks an empty slot
};

// Grouped by (strategy, bias, sd) in first-seen order. An empty agent slot
// is emitted first when no agent episodes are present.
std::vector<TableRow> summarize(const std::vector<EpisodeRecord>& episodes,
                                bool agent_slot = true);
// As summarize, further split into lesions below / at or above the threshold.
std::vector<TableRow> summarize_by_size(const std::vector<EpisodeRecord>& episodes,
                                        double threshold_cc = 0.4);

std::string table_csv(const std::vector<TableRow>& rows);
Json table_json(const std::vector<TableRow>& rows);
std::string episodes_csv(const std::vector<EpisodeRecord>& episodes);

struct ReportPaths {
  std::filesystem::path logs, episodes, table, table_json, size_table, manifest;
};

// Writes logs.jsonl, episodes.csv, table.csv, table.json, size_table.csv and
// manifest.json into `dir`.
ReportPaths write_report(const std::filesystem::path& dir, const RunOutput& run,
                         const Json& config, double size_threshold_cc = 0.4);

std::string config_hash(const Json& config);

}  // namespace bioptx

#endif  // BIOPTX_COHORT_HPP_
