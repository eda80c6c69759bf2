#include "bioptx/serialize.hpp"

#include <array>
#include <istream>
#include <ostream>

namespace bioptx {

namespace {

constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

int decode_char(char c) {
  if (c >= 'A' && c <= 'Z') return c - 'A';
  if (c >= 'a' && c <= 'z') return c - 'a' + 26;
  if (c >= '0' && c <= '9') return c - '0' + 52;
  if (c == '+') return 62;
  if (c == '/') return 63;
  return -1;
}

Json step_record(const LoggedStep& s) {
  const NeedleRecord& n = s.info.needle;
  return Json{{"t", s.t},
              {"i", n.hole.i},
              {"j", n.hole.j},
              {"di", s.action.di},
              {"dj", s.action.dj},
              {"reward", s.reward},
              {"hit", s.info.hit},
              {"ccl_mm", s.info.ccl_mm},
              {"dist_mm", s.info.dist_mm},
              {"terminated", s.terminated},
              {"outside_prostate", s.info.outside_prostate},
              {"depth_mm", n.core.center_depth_mm},
              {"core_length_mm", n.core.length_mm},
              {"termination_reason", s.info.termination_reason}};
}

LoggedStep step_from_record(const Json& j) {
  LoggedStep s;
  s.t = j.at("t").get<int>();
  s.action.di = j.at("di").get<double>();
  s.action.dj = j.at("dj").get<double>();
  s.reward = j.at("reward").get<double>();
  s.terminated = j.at("terminated").get<bool>();
  StepInfo& info = s.info;
  info.hit = j.at("hit").get<bool>();
  info.ccl_mm = j.at("ccl_mm").get<double>();
  info.dist_mm = j.at("dist_mm").get<double>();
  info.outside_prostate = j.at("outside_prostate").get<bool>();
  info.termination_reason = j.at("termination_reason").get<std::string>();
  NeedleRecord& n = info.needle;
  n.hole = {j.at("i").get<int>(), j.at("j").get<int>()};
  if (!is_valid(n.hole)) throw FormatError("step record hole out of range");
  n.world = grid_to_world(n.hole);
  n.core = CoreSegment{n.hole, j.at("depth_mm").get<double>(), j.at("core_length_mm").get<double>()};
  n.hit = info.hit;
  n.ccl_mm = info.ccl_mm;
  n.step = s.t;
  return s;
}

Json episode_header(const EpisodeLog& log) {
  const Vec3& e = log.noise_offset_mm;
  return Json{{"case_id", log.case_id},
              {"seed", log.seed},
              {"start", {log.start.i, log.start.j}},
              {"noise_offset_mm", {e.x, e.y, e.z}},
              {"strategy", log.strategy},
              {"bias_mm", log.bias_mm},
              {"sd_mm", log.sd_mm},
              {"total_reward", log.total_reward}};
}

void read_header(const Json& j, EpisodeLog& log) {
  log.case_id = j.at("case_id").get<std::string>();
  log.seed = j.at("seed").get<std::uint64_t>();
  const auto& st = j.at("start");
  log.start = {st.at(0).get<int>(), st.at(1).get<int>()};
  const auto& e = j.at("noise_offset_mm");
  log.noise_offset_mm = {e.at(0).get<double>(), e.at(1).get<double>(), e.at(2).get<double>()};
  log.strategy = j.at("strategy").get<std::string>();
  log.bias_mm = j.at("bias_mm").get<double>();
  log.sd_mm = j.at("sd_mm").get<double>();
  log.total_reward = j.at("total_reward").get<double>();
}

}  // namespace

std::string base64_encode(const std::vector<std::uint8_t>& bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t k = 0;
  for (; k + 2 < bytes.size(); k += 3) {
    const std::uint32_t v = (bytes[k] << 16) | (bytes[k + 1] << 8) | bytes[k + 2];
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += kAlphabet[(v >> 6) & 63];
    out += kAlphabet[v & 63];
  }
  const std::size_t rest = bytes.size() - k;
  if (rest > 0) {
    std::uint32_t v = bytes[k] << 16;
    if (rest == 2) v |= bytes[k + 1] << 8;
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += rest == 2 ? kAlphabet[(v >> 6) & 63] : '=';
    out += '=';
  }
  return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
  if (text.size() % 4 != 0) throw FormatError("base64 length is not a multiple of 4");
  std::vector<std::uint8_t> out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t k = 0; k < text.size(); k += 4) {
    std::array<int, 4> q{};
    int pad = 0;
    for (int m = 0; m < 4; ++m) {
      const char c = text[k + m];
      if (c == '=' && k + 4 == text.size() && m >= 2) {
        q[m] = 0;
        ++pad;
        continue;
      }
      if (pad > 0) throw FormatError("bad base64 padding");
      q[m] = decode_char(c);
      if (q[m] < 0) throw FormatError("bad base64 character");
    }
    const std::uint32_t v = (q[0] << 18) | (q[1] << 12) | (q[2] << 6) | q[3];
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    if (pad < 2) out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xFF));
    if (pad < 1) out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  }
  return out;
}

std::vector<std::uint8_t> pack_bits(const std::vector<std::uint8_t>& pixels) {
  std::vector<std::uint8_t> out((pixels.size() + 7) / 8, 0);
  for (std::size_t k = 0; k < pixels.size(); ++k) {
    if (pixels[k]) out[k / 8] |= static_cast<std::uint8_t>(0x80 >> (k % 8));
  }
  return out;
}

std::vector<std::uint8_t> unpack_bits(const std::vector<std::uint8_t>& packed, std::size_t n) {
  if (packed.size() != (n + 7) / 8) throw FormatError("packed plane has the wrong size");
  std::vector<std::uint8_t> out(n);
  for (std::size_t k = 0; k < n; ++k) out[k] = (packed[k / 8] >> (7 - k % 8)) & 1;
  return out;
}

Json to_json(const Observation& obs) {
  return Json{{"grid", {obs.hole.i, obs.hole.j}},
              {"grid_pos", {obs.grid_pos[0], obs.grid_pos[1]}},
              {"dims", {2, obs.plane.res_v, obs.plane.res_u}},
              {"encoding", "bitpack-msb/base64"},
              {"planes", base64_encode(pack_bits(obs.plane.pixels))}};
}

Observation observation_from_json(const Json& j) {
  Observation obs;
  try {
    const auto& g = j.at("grid");
    obs.hole = {g.at(0).get<int>(), g.at(1).get<int>()};
    const auto& gp = j.at("grid_pos");
    obs.grid_pos[0] = gp.at(0).get<double>();
    obs.grid_pos[1] = gp.at(1).get<double>();
    const auto& d = j.at("dims");
    if (d.at(0).get<int>() != 2) throw FormatError("expected two channels");
    obs.plane = PlaneImage(d.at(2).get<int>(), d.at(1).get<int>());
    obs.plane.pixels =
        unpack_bits(base64_decode(j.at("planes").get<std::string>()), obs.plane.pixels.size());
  } catch (const Json::exception& e) {
    throw FormatError(std::string("bad observation: ") + e.what());
  }
  return obs;
}

Json to_json(const StepInfo& info) {
  const NeedleRecord& n = info.needle;
  return Json{{"hit", info.hit},
              {"outside_prostate", info.outside_prostate},
              {"ccl_mm", info.ccl_mm},
              {"dist_mm", info.dist_mm},
              {"termination_reason", info.termination_reason},
              {"needle",
               {{"i", n.hole.i},
                {"j", n.hole.j},
                {"x_mm", n.world.x},
                {"y_mm", n.world.y},
                {"depth_mm", n.core.center_depth_mm},
                {"core_length_mm", n.core.length_mm},
                {"hit", n.hit},
                {"ccl_mm", n.ccl_mm},
                {"step", n.step}}}};
}

Json to_json(const StepResult& r) {
  return Json{{"obs", to_json(r.observation)},
              {"reward", r.reward},
              {"terminated", r.terminated},
              {"info", to_json(r.info)}};
}

Json to_json(const EpisodeLog& log) {
  Json j = episode_header(log);
  Json steps = Json::array();
  for (const auto& s : log.steps) steps.push_back(step_record(s));
  j["steps"] = std::move(steps);
  return j;
}

EpisodeLog episode_from_json(const Json& j) {
  EpisodeLog log;
  try {
    read_header(j, log);
    for (const auto& s : j.at("steps")) log.steps.push_back(step_from_record(s));
  } catch (const Json::exception& e) {
    throw FormatError(std::string("bad episode log: ") + e.what());
  }
  return log;
}

std::string canonical(const EpisodeLog& log) { return to_json(log).dump(); }

void write_jsonl(std::ostream& out, const EpisodeLog& log) {
  Json h = episode_header(log);
  h["record"] = "episode";
  h["n_steps"] = log.steps.size();
  out << h.dump() << '\n';
  for (const auto& s : log.steps) {
    Json r = step_record(s);
    r["record"] = "step";
    out << r.dump() << '\n';
  }
}

std::vector<EpisodeLog> read_jsonl(std::istream& in) {
  std::vector<EpisodeLog> out;
  std::string line;
  std::size_t expected = 0;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const Json j = Json::parse(line);
      const std::string kind = j.at("record").get<std::string>();
      if (kind == "episode") {
        if (!out.empty() && out.back().steps.size() != expected) {
          throw FormatError("episode ended early");
        }
        EpisodeLog log;
        read_header(j, log);
        expected = j.at("n_steps").get<std::size_t>();
        out.push_back(std::move(log));
      } else if (kind == "step") {
        if (out.empty()) throw FormatError("step before episode header");
        out.back().steps.push_back(step_from_record(j));
      } else {
        throw FormatError("unknown record type " + kind);
      }
    } catch (const Json::exception& e) {
      throw FormatError("line " + std::to_string(lineno) + ": " + e.what());
    } catch (const FormatError& e) {
      throw FormatError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (!out.empty() && out.back().steps.size() != expected) throw FormatError("episode ended early");
  return out;
}

}  // namespace bioptx
