#include "bioptx/cohort.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <map>
#include <random>
#include <sstream>
#include <thread>

#include "bioptx/strategies.hpp"
#include "bioptx/util.hpp"

namespace bioptx {

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

Json vec3(const Vec3& v) { return Json{v.x, v.y, v.z}; }

Vec3 vec3_from(const Json& j) {
  return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()};
}

void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << text;
}

}  // namespace

void CohortSpec::validate() const {
  if (n_cases < 1) throw std::invalid_argument("cohort needs at least one case");
  if (!(min_cc > 0.0) || !(max_cc >= min_cc)) {
    throw std::invalid_argument("lesion volume range must satisfy 0 < min <= max");
  }
  if (!(prostate_jitter >= 0.0 && prostate_jitter < 0.5)) {
    throw std::invalid_argument("prostate jitter must be in [0, 0.5)");
  }
}

std::vector<CaseEntry> generate_cohort(const CohortSpec& spec) {
  spec.validate();
  std::vector<CaseEntry> out;
  for (int k = 0; k < spec.n_cases; ++k) {
    std::mt19937_64 rng(splitmix64(spec.seed * 1000003ull + static_cast<std::uint64_t>(k)));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    AnatomySpec a;
    const Vec3 base = a.prostate_semi_axes;
    auto jitter = [&] { return 1.0 + spec.prostate_jitter * (2.0 * u(rng) - 1.0); };
    a.prostate_semi_axes = {base.x * jitter(), base.y * jitter(), base.z * jitter()};
    a.lesion_volume_cc = spec.min_cc + (spec.max_cc - spec.min_cc) * u(rng);
    const double r = sphere_radius_for_cc(a.lesion_volume_cc);
    // Room for the lesion with a voxel and a half of margin on each axis.
    const Vec3 room = a.prostate_semi_axes - Vec3{r + 1.5, r + 1.5, r + 1.5};
    if (room.x <= 0.0 || room.y <= 0.0 || room.z <= 0.0) {
      throw AnatomyError("lesion does not fit in the prostate");
    }
    Vec3 off;
    do {
      off = {room.x * (2.0 * u(rng) - 1.0), room.y * (2.0 * u(rng) - 1.0),
             room.z * (2.0 * u(rng) - 1.0)};
    } while ((off.x / room.x) * (off.x / room.x) + (off.y / room.y) * (off.y / room.y) +
                 (off.z / room.z) * (off.z / room.z) > 1.0);
    a.lesion_center = a.prostate_center + off;
    a.seed = splitmix64(spec.seed + 7919ull * static_cast<std::uint64_t>(k));
    validate(a);

    CaseEntry c;
    char id[32];
    std::snprintf(id, sizeof id, "case_%03d", k);
    c.id = id;
    c.spec = a;
    c.volume = std::make_shared<const LabelVolume>(generate_synthetic(a));
    c.lesion_cc = lesion_volume_cc(*c.volume);
    out.push_back(std::move(c));
  }
  return out;
}

void save_cohort(std::vector<CaseEntry>& cases, const CohortSpec& spec,
                 const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  Json list = Json::array();
  for (auto& c : cases) {
    c.file = c.id + ".bvol";
    save_volume(*c.volume, dir / c.file);
    list.push_back({{"id", c.id},
                    {"file", c.file},
                    {"lesion_cc", c.lesion_cc},
                    {"lesion_center_mm", vec3(c.spec.lesion_center)},
                    {"lesion_volume_cc_target", c.spec.lesion_volume_cc},
                    {"prostate_center_mm", vec3(c.spec.prostate_center)},
                    {"prostate_semi_axes_mm", vec3(c.spec.prostate_semi_axes)}});
  }
  const Json doc = {{"format", "bioptx-cohort/1"},
                    {"spec",
                     {{"n_cases", spec.n_cases},
                      {"min_cc", spec.min_cc},
                      {"max_cc", spec.max_cc},
                      {"prostate_jitter", spec.prostate_jitter},
                      {"seed", spec.seed}}},
                    {"cases", list}};
  write_text(dir / "cohort.json", doc.dump(2) + "\n");
}

std::vector<CaseEntry> load_cohort(const std::filesystem::path& dir) {
  std::ifstream in(dir / "cohort.json");
  if (!in) throw std::runtime_error("no cohort.json in " + dir.string());
  Json doc;
  try {
    doc = Json::parse(in);
  } catch (const Json::exception& e) {
    throw FormatError(std::string("bad cohort.json: ") + e.what());
  }
  std::vector<CaseEntry> out;
  try {
    for (const auto& j : doc.at("cases")) {
      CaseEntry c;
      c.id = j.at("id").get<std::string>();
      c.file = j.at("file").get<std::string>();
      c.spec.lesion_center = vec3_from(j.at("lesion_center_mm"));
      c.spec.prostate_center = vec3_from(j.at("prostate_center_mm"));
      c.spec.prostate_semi_axes = vec3_from(j.at("prostate_semi_axes_mm"));
      c.spec.lesion_volume_cc = j.at("lesion_volume_cc_target").get<double>();
      c.volume = std::make_shared<const LabelVolume>(load_volume(dir / c.file));
      c.lesion_cc = lesion_volume_cc(*c.volume);
      out.push_back(std::move(c));
    }
  } catch (const Json::exception& e) {
    throw FormatError(std::string("bad cohort.json: ") + e.what());
  }
  return out;
}

std::vector<CaseEntry> load_cases(const std::filesystem::path& path) {
  if (std::filesystem::is_directory(path)) return load_cohort(path);
  CaseEntry c;
  c.id = path.stem().string();
  c.file = path.filename().string();
  c.volume = std::make_shared<const LabelVolume>(load_volume(path));
  c.lesion_cc = lesion_volume_cc(*c.volume);
  return {c};
}

std::vector<PerturbationPoint> default_grid() {
  std::vector<PerturbationPoint> g;
  for (const double b : {0.0, 5.0, 10.0})
    for (const double s : {0.0, 5.0, 10.0}) g.push_back({b, s});
  return g;
}

Json BaselineRunConfig::to_json() const {
  Json grid_j = Json::array();
  for (const auto& p : grid) grid_j.push_back({p.bias_mm, p.sd_mm});
  return Json{{"strategies", strategies},
              {"grid", grid_j},
              {"episodes_per_case", episodes_per_case},
              {"seed", seed},
              {"last_n", metrics.last_n},
              {"env",
               {{"max_steps", env.max_steps},
                {"hit_quota", env.hit_quota},
                {"noise_sd_mm", env.noise_sd_mm},
                {"depth_noise_sd_mm", env.depth_noise_sd_mm},
                {"core_length_mm", env.core_length_mm}}}};
}

double RunOutput::failure_fraction() const {
  return attempted == 0 ? 0.0 : static_cast<double>(failures.size()) / attempted;
}

void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
  const auto w = static_cast<std::size_t>(std::max(1, workers));
  if (w == 1 || n < 2) {
    for (std::size_t k = 0; k < n; ++k) fn(k);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < std::min(w, n); ++t) {
    pool.emplace_back([&] {
      for (std::size_t k = next++; k < n; k = next++) fn(k);
    });
  }
  for (auto& th : pool) th.join();
}

RunOutput run_baselines(const std::vector<CaseEntry>& cases, const BaselineRunConfig& cfg) {
  for (const auto& s : cfg.strategies) {
    if (s != "sweep" && s != "scout") throw std::invalid_argument("unknown strategy " + s);
  }
  struct Job {
    std::size_t strategy, point, c;
  };
  std::vector<Job> jobs;
  for (std::size_t s = 0; s < cfg.strategies.size(); ++s)
    for (std::size_t p = 0; p < cfg.grid.size(); ++p)
      for (std::size_t c = 0; c < cases.size(); ++c) jobs.push_back({s, p, c});

  std::vector<std::vector<EpisodeRecord>> slots(jobs.size());
  std::vector<std::string> errors(jobs.size());
  parallel_for(jobs.size(), cfg.workers, [&](std::size_t k) {
    const Job& jb = jobs[k];
    const CaseEntry& ce = cases[jb.c];
    const std::string& strategy = cfg.strategies[jb.strategy];
    const PerturbationPoint& pt = cfg.grid[jb.point];
    try {
      BiopsyEnv env(ce.volume, cfg.env, ce.id);
      Perturbation pert;
      pert.bias_mm = pt.bias_mm;
      pert.sd_mm = pt.sd_mm;
      for (int e = 0; e < cfg.episodes_per_case; ++e) {
        // The env seed depends only on the case and episode, so every
        // strategy and grid point sees the same starts and noise.
        const std::uint64_t env_seed =
            splitmix64(fnv1a(ce.id) ^ splitmix64(cfg.seed + static_cast<std::uint64_t>(e)));
        std::mt19937_64 rng(splitmix64(env_seed ^ fnv1a(strategy) ^
                                       (static_cast<std::uint64_t>(jb.point) << 32)));
        env.reset(env_seed);
        EpisodeRecord rec;
        rec.case_id = ce.id;
        rec.lesion_cc = ce.lesion_cc;
        rec.log = strategy == "sweep" ? sweep_episode(env, pert, rng) : scout_episode(env, pert, rng);
        rec.metrics = evaluate_episode(rec.log, ce.lesion_cc, cfg.metrics);
        slots[k].push_back(std::move(rec));
      }
    } catch (const std::exception& ex) {
      slots[k].clear();
      errors[k] = ce.id + " [" + strategy + " bias " + num(pt.bias_mm) + " sd " + num(pt.sd_mm) +
                  "]: " + ex.what();
    }
  });

  RunOutput out;
  out.attempted = jobs.size();
  for (std::size_t k = 0; k < jobs.size(); ++k) {
    for (auto& r : slots[k]) out.episodes.push_back(std::move(r));
    if (!errors[k].empty()) out.failures.push_back(errors[k]);
  }
  return out;
}

namespace {

std::vector<TableRow> group_rows(const std::vector<EpisodeRecord>& episodes,
                                 const std::function<std::string(const EpisodeRecord&)>& group) {
  struct Acc {
    TableRow row;
    std::vector<EpisodeMetrics> ms;
  };
  std::vector<Acc> accs;
  std::map<std::tuple<std::string, double, double, std::string>, std::size_t> index;
  for (const auto& e : episodes) {
    const std::string g = group(e);
    const auto key = std::make_tuple(e.log.strategy, e.log.bias_mm, e.log.sd_mm, g);
    auto it = index.find(key);
    if (it == index.end()) {
      it = index.emplace(key, accs.size()).first;
      Acc a;
      a.row.strategy = e.log.strategy;
      a.row.bias_mm = e.log.bias_mm;
      a.row.sd_mm = e.log.sd_mm;
      a.row.size_group = g;
      accs.push_back(std::move(a));
    }
    accs[it->second].ms.push_back(e.metrics);
  }
  std::vector<TableRow> rows;
  for (auto& a : accs) {
    a.row.metrics = aggregate(a.ms);
    rows.push_back(a.row);
  }
  return rows;
}

}  // namespace

std::vector<TableRow> summarize(const std::vector<EpisodeRecord>& episodes, bool agent_slot) {
  std::vector<TableRow> rows = group_rows(episodes, [](const EpisodeRecord&) { return ""; });
  // Agent rows go first, as in the published layout.
  std::stable_partition(rows.begin(), rows.end(),
                        [](const TableRow& r) { return r.strategy == "agent"; });
  const bool has_agent = !rows.empty() && rows.front().strategy == "agent";
  if (agent_slot && !has_agent) {
    TableRow slot;
    slot.strategy = "agent";
    rows.insert(rows.begin(), slot);
  }
  return rows;
}

std::vector<TableRow> summarize_by_size(const std::vector<EpisodeRecord>& episodes,
                                        double threshold_cc) {
  std::vector<TableRow> rows = group_rows(episodes, [threshold_cc](const EpisodeRecord& e) {
    return e.lesion_cc < threshold_cc ? "small" : "large";
  });
  std::stable_partition(rows.begin(), rows.end(),
                        [](const TableRow& r) { return r.strategy == "agent"; });
  return rows;
}

std::string table_csv(const std::vector<TableRow>& rows) {
  const bool sized = std::any_of(rows.begin(), rows.end(),
                                 [](const TableRow& r) { return !r.size_group.empty(); });
  std::ostringstream os;
  os << "strategy,bias_mm,sd_mm," << (sized ? "size_group," : "") << "n,ccl_mm,hr_pct,na_mm2\n";
  for (const auto& r : rows) {
    os << r.strategy << ',';
    if (r.strategy == "agent") {
      os << ",,";
    } else {
      os << num(r.bias_mm) << ',' << num(r.sd_mm) << ',';
    }
    if (sized) os << r.size_group << ',';
    os << r.metrics.n << ',';
    if (r.metrics.n == 0) {
      os << ",,\n";
      continue;
    }
    os << format_mean_sd(r.metrics.ccl_mm) << ',' << format_mean_sd(r.metrics.hr_pct) << ','
       << format_mean_sd(r.metrics.na_mm2) << '\n';
  }
  return os.str();
}

Json table_json(const std::vector<TableRow>& rows) {
  Json out = Json::array();
  for (const auto& r : rows) {
    Json j = {{"strategy", r.strategy}, {"n", r.metrics.n}};
    if (r.strategy != "agent") {
      j["bias_mm"] = r.bias_mm;
      j["sd_mm"] = r.sd_mm;
    }
    if (!r.size_group.empty()) j["size_group"] = r.size_group;
    if (r.metrics.n > 0) {
      auto cell = [](const MeanSd& m) { return Json{{"mean", m.mean}, {"sd", m.sd}, {"text", format_mean_sd(m)}}; };
      j["ccl_mm"] = cell(r.metrics.ccl_mm);
      j["hr_pct"] = cell(r.metrics.hr_pct);
      j["na_mm2"] = cell(r.metrics.na_mm2);
    }
    out.push_back(std::move(j));
  }
  return out;
}

std::string episodes_csv(const std::vector<EpisodeRecord>& episodes) {
  std::ostringstream os;
  os << "case_id,strategy,bias_mm,sd_mm,seed,lesion_cc,needles,hr_pct,ccl_mm,ccl_max_mm,"
        "significant,na_mm2,total_reward\n";
  for (const auto& e : episodes) {
    const EpisodeMetrics& m = e.metrics;
    os << e.case_id << ',' << e.log.strategy << ',' << num(e.log.bias_mm) << ','
       << num(e.log.sd_mm) << ',' << e.log.seed << ',' << num(e.lesion_cc) << ','
       << m.needles_fired << ',' << num(m.hr_pct) << ',' << num(m.ccl.episode_mm) << ','
       << num(m.ccl.max_mm) << ',' << (m.ccl.significant ? 1 : 0) << ',' << num(m.na_mm2) << ','
       << num(e.log.total_reward) << '\n';
  }
  return os.str();
}

std::string config_hash(const Json& config) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << fnv1a(config.dump());
  return os.str();
}

ReportPaths write_report(const std::filesystem::path& dir, const RunOutput& run,
                         const Json& config, double size_threshold_cc) {
  std::filesystem::create_directories(dir);
  ReportPaths p{dir / "logs.jsonl",      dir / "episodes.csv",    dir / "table.csv",
                dir / "table.json",      dir / "size_table.csv",  dir / "manifest.json"};
  {
    std::ofstream out(p.logs, std::ios::binary);
    for (const auto& e : run.episodes) write_jsonl(out, e.log);
  }
  write_text(p.episodes, episodes_csv(run.episodes));
  const auto rows = summarize(run.episodes);
  write_text(p.table, table_csv(rows));
  write_text(p.table_json, table_json(rows).dump(2) + "\n");
  write_text(p.size_table, table_csv(summarize_by_size(run.episodes, size_threshold_cc)));

  std::vector<std::string> ids;
  for (const auto& e : run.episodes) {
    if (ids.empty() || ids.back() != e.case_id) {
      if (std::find(ids.begin(), ids.end(), e.case_id) == ids.end()) ids.push_back(e.case_id);
    }
  }
  const Json manifest = {{"tool", "bioptx"},
                         {"version", BIOPTX_VERSION},
                         {"config", config},
                         {"config_hash", config_hash(config)},
                         {"size_threshold_cc", size_threshold_cc},
                         {"cases", ids},
                         {"episodes", run.episodes.size()},
                         {"attempted_jobs", run.attempted},
                         {"failures", run.failures}};
  write_text(p.manifest, manifest.dump(2) + "\n");
  return p;
}

}  // namespace bioptx
