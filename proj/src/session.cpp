#include <cmath>
#include <fstream>

#include "bioptx/service.hpp"
#include "bioptx/util.hpp"

namespace bioptx {

namespace {

ServiceReply error(int status, const std::string& msg) {
  return ServiceReply{status, Json{{"error", msg}}};
}

}  // namespace

SessionStore::SessionStore(std::vector<CaseEntry> cases, EnvConfig cfg,
                           std::filesystem::path log_dir)
    : cfg_(std::move(cfg)), log_dir_(std::move(log_dir)) {
  cfg_.validate();
  for (auto& c : cases) {
    case_order_.push_back(c.id);
    cases_.emplace(c.id, std::move(c));
  }
  if (!log_dir_.empty()) std::filesystem::create_directories(log_dir_);
}

ServiceReply SessionStore::cases() const {
  Json list = Json::array();
  for (const auto& id : case_order_) {
    list.push_back({{"id", id}, {"lesion_cc", cases_.at(id).lesion_cc}});
  }
  return {200, Json{{"cases", list}}};
}

ServiceReply SessionStore::create(const Json& req) {
  if (!req.is_object()) return error(400, "request body must be a JSON object");
  if (!req.contains("case") || !req["case"].is_string()) {
    return error(400, "missing string field \"case\"");
  }
  const std::string case_id = req["case"].get<std::string>();
  const auto it = cases_.find(case_id);
  if (it == cases_.end()) return error(404, "unknown case '" + case_id + "'");

  auto s = std::make_shared<Session>();
  std::uint64_t seed = 0;
  {
    std::lock_guard lk(mu_);
    char buf[32];
    std::snprintf(buf, sizeof buf, "s%06llu", static_cast<unsigned long long>(next_id_));
    s->id = buf;
    seed = splitmix64(next_id_);
    ++next_id_;
  }
  try {
    if (req.contains("seed")) seed = req["seed"].get<std::uint64_t>();
    std::optional<Hole> start;
    if (req.contains("start")) {
      start = Hole{req["start"].at(0).get<int>(), req["start"].at(1).get<int>()};
    }
    s->role = req.value("role", "human");
    if (s->role != "human" && s->role != "agent") {
      return error(400, "role must be \"human\" or \"agent\"");
    }
    s->case_id = case_id;
    s->env = std::make_unique<BiopsyEnv>(it->second.volume, cfg_, case_id);
    const Observation obs = s->env->reset(seed, start);
    s->env->mutable_log().strategy = s->role;
    {
      std::lock_guard lk(mu_);
      sessions_[s->id] = s;
    }
    return {201, Json{{"id", s->id},
                      {"case", case_id},
                      {"seed", seed},
                      {"role", s->role},
                      {"obs", to_json(obs)},
                      {"max_steps", cfg_.max_steps},
                      {"hit_quota", cfg_.hit_quota}}};
  } catch (const Json::exception& e) {
    return error(400, std::string("bad request: ") + e.what());
  } catch (const EnvError& e) {
    return error(400, e.what());
  }
}

std::shared_ptr<SessionStore::Session> SessionStore::find(const std::string& id) const {
  std::lock_guard lk(mu_);
  const auto it = sessions_.find(id);
  return it == sessions_.end() ? nullptr : it->second;
}

ServiceReply SessionStore::step(const std::string& id, const Json& req) {
  const auto s = find(id);
  if (!s) return error(404, "unknown session '" + id + "'");
  if (!req.is_object() || !req.contains("di") || !req.contains("dj") || !req["di"].is_number() ||
      !req["dj"].is_number()) {
    return error(400, "step needs numeric \"di\" and \"dj\"");
  }
  const Action a{req["di"].get<double>(), req["dj"].get<double>()};
  std::lock_guard lk(s->mu);
  if (s->env->done()) {
    return error(409, "episode already terminated (" +
                          s->env->log().steps.back().info.termination_reason + ")");
  }
  StepResult r;
  try {
    r = s->env->step(a);
  } catch (const EnvError& e) {
    return error(409, e.what());
  }
  Json body = to_json(r);
  if (r.terminated) persist(*s);
  const std::string msg = body.dump();
  for (const auto& [token, fn] : s->listeners) fn(msg);
  return {200, std::move(body)};
}

ServiceReply SessionStore::log(const std::string& id) const {
  const auto s = find(id);
  if (!s) return error(404, "unknown session '" + id + "'");
  std::lock_guard lk(s->mu);
  return {200, to_json(s->env->log())};
}

std::uint64_t SessionStore::subscribe(const std::string& id, Listener fn) {
  const auto s = find(id);
  if (!s) return 0;
  std::uint64_t token = 0;
  {
    std::lock_guard lk(mu_);
    token = next_token_++;
  }
  std::lock_guard lk(s->mu);
  s->listeners.emplace(token, std::move(fn));
  return token;
}

void SessionStore::unsubscribe(const std::string& id, std::uint64_t token) {
  const auto s = find(id);
  if (!s) return;
  std::lock_guard lk(s->mu);
  s->listeners.erase(token);
}

std::size_t SessionStore::size() const {
  std::lock_guard lk(mu_);
  return sessions_.size();
}

void SessionStore::persist(Session& s) {
  if (log_dir_.empty() || s.persisted) return;
  std::ofstream out(log_dir_ / (s.id + ".jsonl"), std::ios::app);
  write_jsonl(out, s.env->log());
  s.persisted = true;
}

}  // namespace bioptx
