#include "bioptx/bridge.hpp"

#include <istream>
#include <ostream>

namespace bioptx {

namespace {

Json error_reply(const std::string& msg) { return Json{{"ok", false}, {"error", msg}}; }

}  // namespace

Bridge::Bridge(std::shared_ptr<const LabelVolume> volume, EnvConfig cfg, std::string case_id)
    : env_(std::move(volume), std::move(cfg), std::move(case_id)) {}

Json Bridge::handle(const Json& req) {
  if (!req.is_object() || !req.contains("cmd") || !req["cmd"].is_string()) {
    return error_reply("request must be an object with a string \"cmd\"");
  }
  const std::string cmd = req["cmd"].get<std::string>();
  try {
    if (cmd == "handshake") {
      const std::string want = req.value("protocol", "");
      if (want != kBridgeProtocol) {
        return error_reply("unsupported protocol '" + want + "', expected " + kBridgeProtocol);
      }
      handshaken_ = true;
      return Json{{"ok", true},
                  {"protocol", kBridgeProtocol},
                  {"cmds", {"handshake", "reset", "step", "log", "close"}},
                  {"case_id", env_.log().case_id},
                  {"grid_size", kGridSize},
                  {"action_range", env_.config().action_range},
                  {"max_steps", env_.config().max_steps},
                  {"hit_quota", env_.config().hit_quota}};
    }
    if (cmd == "close") {
      closed_ = true;
      return Json{{"ok", true}};
    }
    if (!handshaken_) return error_reply("handshake required");
    if (cmd == "reset") {
      const auto seed = req.at("seed").get<std::uint64_t>();
      std::optional<Hole> start;
      if (req.contains("start")) {
        start = Hole{req["start"].at(0).get<int>(), req["start"].at(1).get<int>()};
      }
      const Observation obs = env_.reset(seed, start);
      return Json{{"ok", true}, {"obs", to_json(obs)}, {"grid", {obs.hole.i, obs.hole.j}}};
    }
    if (cmd == "step") {
      const Action a{req.at("di").get<double>(), req.at("dj").get<double>()};
      const StepResult r = env_.step(a);
      Json reply = to_json(r);
      reply["ok"] = true;
      return reply;
    }
    if (cmd == "log") return Json{{"ok", true}, {"log", to_json(env_.log())}};
  } catch (const Json::exception& e) {
    return error_reply(std::string("bad request: ") + e.what());
  } catch (const std::exception& e) {
    return error_reply(e.what());
  }
  return error_reply("unknown cmd '" + cmd + "'");
}

std::string Bridge::handle_line(std::string_view line) {
  Json req;
  try {
    req = Json::parse(line);
  } catch (const Json::exception& e) {
    return error_reply(std::string("malformed JSON: ") + e.what()).dump();
  }
  return handle(req).dump();
}

void Bridge::serve(std::istream& in, std::ostream& out) {
  std::string line;
  while (!closed_ && std::getline(in, line)) {
    if (line.empty()) continue;
    out << handle_line(line) << '\n';
    out.flush();
  }
}

}  // namespace bioptx
