#include "bioptx/compare.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace bioptx {

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_number(const std::string& s, const std::string& where) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) throw FormatError("not a number '" + s + "' in " + where);
  return v;
}

// JSON has no inf/nan; encode them as strings.
Json number_json(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0 ? "inf" : "-inf";
}

double number_from(const Json& j) {
  if (j.is_number()) return j.get<double>();
  const std::string s = j.get<std::string>();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  return std::numeric_limits<double>::quiet_NaN();
}

}  // namespace

MetricSamples metric_samples(const std::vector<EpisodeLog>& logs) {
  MetricSamples out;
  for (const auto& l : logs) {
    const EpisodeMetrics m = evaluate_episode(l);
    out["ccl_mm"].push_back(m.ccl.episode_mm);
    out["hr_pct"].push_back(m.hr_pct);
    out["na_mm2"].push_back(m.na_mm2);
  }
  return out;
}

MetricSamples read_metric_samples(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  if (path.extension() == ".jsonl") return metric_samples(read_jsonl(in));

  std::string line;
  if (!std::getline(in, line)) throw FormatError("empty sample file " + path.string());
  const std::vector<std::string> header = split_csv(line);
  std::vector<int> keep;
  const bool episode_table = std::find(header.begin(), header.end(), "case_id") != header.end();
  for (std::size_t c = 0; c < header.size(); ++c) {
    const std::string& h = header[c];
    if (!episode_table || h == "ccl_mm" || h == "hr_pct" || h == "na_mm2") {
      keep.push_back(static_cast<int>(c));
    }
  }
  MetricSamples out;
  for (const int c : keep) out[header[c]];
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != header.size()) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": wrong column count");
    }
    for (const int c : keep) {
      out[header[c]].push_back(
          parse_number(cells[c], path.string() + ":" + std::to_string(lineno)));
    }
  }
  return out;
}

std::vector<CompareRow> compare_samples(const MetricSamples& a, const MetricSamples& b,
                                        double alpha) {
  std::vector<std::string> names_a, names_b;
  for (const auto& kv : a) names_a.push_back(kv.first);
  for (const auto& kv : b) names_b.push_back(kv.first);
  if (names_a != names_b) throw std::invalid_argument("mismatched metric names");
  std::vector<CompareRow> rows;
  for (const auto& [name, xs] : a) {
    const auto& ys = b.at(name);
    CompareRow r;
    r.metric = name;
    r.n_a = xs.size();
    r.n_b = ys.size();
    r.mean_a = mean_sd(xs).mean;
    r.mean_b = mean_sd(ys).mean;
    r.test = two_sample_ttest(xs, ys);
    r.significant = r.test.p < alpha;
    rows.push_back(r);
  }
  return rows;
}

Json compare_json(const std::vector<CompareRow>& rows, double alpha) {
  Json m = Json::object();
  for (const auto& r : rows) {
    m[r.metric] = {{"n_a", r.n_a},
                   {"n_b", r.n_b},
                   {"mean_a", number_json(r.mean_a)},
                   {"mean_b", number_json(r.mean_b)},
                   {"t", number_json(r.test.t)},
                   {"df", r.test.df},
                   {"p", r.test.p},
                   {"degenerate", r.test.degenerate},
                   {"significant", r.significant}};
  }
  return Json{{"alpha", alpha}, {"test", "student-t two-sample pooled"}, {"metrics", m}};
}

std::vector<CompareRow> compare_from_json(const Json& j) {
  std::vector<CompareRow> rows;
  try {
    for (const auto& [name, v] : j.at("metrics").items()) {
      CompareRow r;
      r.metric = name;
      r.n_a = v.at("n_a").get<std::size_t>();
      r.n_b = v.at("n_b").get<std::size_t>();
      r.mean_a = number_from(v.at("mean_a"));
      r.mean_b = number_from(v.at("mean_b"));
      r.test.t = number_from(v.at("t"));
      r.test.df = v.at("df").get<double>();
      r.test.p = v.at("p").get<double>();
      r.test.degenerate = v.at("degenerate").get<bool>();
      r.significant = v.at("significant").get<bool>();
      rows.push_back(r);
    }
  } catch (const Json::exception& e) {
    throw FormatError(std::string("bad comparison report: ") + e.what());
  }
  return rows;
}

std::string compare_text(const std::vector<CompareRow>& rows) {
  std::ostringstream os;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-10s %6s %6s %12s %12s %9s %6s %10s  %s\n", "metric", "n_a",
                "n_b", "mean_a", "mean_b", "t", "df", "p", "");
  os << buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-10s %6zu %6zu %12.4f %12.4f %9.4f %6.0f %10.4g  %s\n",
                  r.metric.c_str(), r.n_a, r.n_b, r.mean_a, r.mean_b, r.test.t, r.test.df,
                  r.test.p, r.significant ? "significant" : "");
    os << buf;
  }
  return os.str();
}

}  // namespace bioptx
