#include "bioptx/policy.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <numbers>
#include <numeric>
#include <sstream>

#include "bioptx/metrics.hpp"
#include "bioptx/util.hpp"
#include "json.hpp"

namespace bioptx {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;  // log(2 pi)
constexpr double kGridInitScale = 1.0;

double relu(double x) { return x > 0.0 ? x : 0.0; }

}  // namespace

PolicyInput encode_observation(const Observation& obs) {
  PolicyInput in;
  const auto& px = obs.plane.pixels;
  for (std::size_t k = 0; k < px.size(); ++k) {
    if (px[k]) in.active.push_back(static_cast<std::int32_t>(k));
  }
  // Centered to [-1, 1].
  in.grid[0] = 2.0 * obs.grid_pos[0] - 1.0;
  in.grid[1] = 2.0 * obs.grid_pos[1] - 1.0;
  return in;
}

PolicyNet::Offsets PolicyNet::layout(const PolicyShape& s) {
  Offsets o{};
  std::size_t at = 0;
  auto take = [&at](std::size_t n) {
    const std::size_t here = at;
    at += n;
    return here;
  };
  o.w1 = take(static_cast<std::size_t>(s.input) * s.hidden1);
  o.b1 = take(s.hidden1);
  o.w2 = take(static_cast<std::size_t>(s.hidden2) * s.hidden1);
  o.b2 = take(s.hidden2);
  o.wmu = take(2 * static_cast<std::size_t>(s.hidden2));
  o.bmu = take(2);
  o.wv = take(s.hidden2);
  o.bv = take(1);
  o.log_std = take(2);
  o.total = at;
  return o;
}

PolicyNet::PolicyNet(const PolicyShape& shape) : shape_(shape) {
  if (shape.input < 3 || shape.hidden1 < 1 || shape.hidden2 < 1 || !(shape.action_scale > 0)) {
    throw PolicyError("invalid policy shape");
  }
  off_ = layout(shape);
  params_.assign(off_.total, 0.0);
}

void PolicyNet::init(std::uint64_t seed, double initial_log_std) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  auto fill = [&](std::size_t at, std::size_t count, double scale) {
    for (std::size_t k = 0; k < count; ++k) params_[at + k] = scale * n(rng);
  };
  std::fill(params_.begin(), params_.end(), 0.0);
  fill(off_.w1, static_cast<std::size_t>(shape_.input) * shape_.hidden1,
       std::sqrt(2.0 / shape_.input));
  // The two grid inputs carry the only left/right information (mirrored
  // planes give identical images), so they start at unit scale.
  fill(off_.w1 + static_cast<std::size_t>(shape_.input - 2) * shape_.hidden1,
       2 * static_cast<std::size_t>(shape_.hidden1), kGridInitScale);
  fill(off_.w2, static_cast<std::size_t>(shape_.hidden2) * shape_.hidden1,
       std::sqrt(2.0 / shape_.hidden1));
  fill(off_.wmu, 2 * static_cast<std::size_t>(shape_.hidden2), 0.01 / std::sqrt(shape_.hidden2));
  fill(off_.wv, shape_.hidden2, 1.0 / std::sqrt(shape_.hidden2));
  params_[off_.log_std] = initial_log_std;
  params_[off_.log_std + 1] = initial_log_std;
  clamp_log_std();
}

void PolicyNet::clamp_log_std() {
  for (int d = 0; d < 2; ++d) {
    double& v = params_[off_.log_std + d];
    v = std::clamp(v, kLogStdMin, kLogStdMax);
  }
}

void PolicyNet::check_finite() const {
  for (double p : params_) {
    if (!std::isfinite(p)) throw PolicyError("non-finite policy weight");
  }
}

PolicyOutput PolicyNet::forward(const PolicyInput& x) const {
  ForwardCache cache;
  return forward(x, cache);
}

PolicyOutput PolicyNet::forward(const PolicyInput& x, ForwardCache& c) const {
  const int h1n = shape_.hidden1, h2n = shape_.hidden2, in = shape_.input;
  const double* p = params_.data();
  c.z1.assign(p + off_.b1, p + off_.b1 + h1n);
  for (const std::int32_t idx : x.active) {
    if (idx < 0 || idx >= in - 2) throw PolicyError("observation does not match policy input");
    const double* row = p + off_.w1 + static_cast<std::size_t>(idx) * h1n;
    for (int k = 0; k < h1n; ++k) c.z1[k] += row[k];
  }
  for (int g = 0; g < 2; ++g) {
    const double* row = p + off_.w1 + static_cast<std::size_t>(in - 2 + g) * h1n;
    for (int k = 0; k < h1n; ++k) c.z1[k] += x.grid[g] * row[k];
  }
  c.h1.resize(h1n);
  for (int k = 0; k < h1n; ++k) c.h1[k] = relu(c.z1[k]);

  c.z2.assign(p + off_.b2, p + off_.b2 + h2n);
  for (int k = 0; k < h2n; ++k) {
    const double* row = p + off_.w2 + static_cast<std::size_t>(k) * h1n;
    double s = 0.0;
    for (int m = 0; m < h1n; ++m) s += row[m] * c.h1[m];
    c.z2[k] += s;
  }
  c.h2.resize(h2n);
  for (int k = 0; k < h2n; ++k) c.h2[k] = relu(c.z2[k]);

  for (int d = 0; d < 2; ++d) {
    const double* row = p + off_.wmu + static_cast<std::size_t>(d) * h2n;
    double s = p[off_.bmu + d];
    for (int k = 0; k < h2n; ++k) s += row[k] * c.h2[k];
    c.mean_pre[d] = s;
    c.out.mean[d] = shape_.action_scale * std::tanh(s);
    c.out.log_std[d] = std::clamp(p[off_.log_std + d], kLogStdMin, kLogStdMax);
  }
  double v = p[off_.bv];
  for (int k = 0; k < h2n; ++k) v += p[off_.wv + k] * c.h2[k];
  c.out.value = v;
  return c.out;
}

void PolicyNet::backward(const PolicyInput& x, const ForwardCache& c, const OutputGrad& g,
                         std::span<double> grad, double scale) const {
  const int h1n = shape_.hidden1, h2n = shape_.hidden2, in = shape_.input;
  const double* p = params_.data();
  double* gr = grad.data();

  double g_pre[2];
  for (int d = 0; d < 2; ++d) {
    const double t = std::tanh(c.mean_pre[d]);
    g_pre[d] = scale * g.mean[d] * shape_.action_scale * (1.0 - t * t);
    const double ls = p[off_.log_std + d];
    if (ls > kLogStdMin && ls < kLogStdMax) gr[off_.log_std + d] += scale * g.log_std[d];
  }
  const double g_v = scale * g.value;

  std::vector<double> g_z2(h2n);
  for (int k = 0; k < h2n; ++k) {
    double gh = g_v * p[off_.wv + k];
    for (int d = 0; d < 2; ++d) {
      gh += g_pre[d] * p[off_.wmu + static_cast<std::size_t>(d) * h2n + k];
      gr[off_.wmu + static_cast<std::size_t>(d) * h2n + k] += g_pre[d] * c.h2[k];
    }
    gr[off_.wv + k] += g_v * c.h2[k];
    g_z2[k] = c.z2[k] > 0.0 ? gh : 0.0;
  }
  gr[off_.bmu] += g_pre[0];
  gr[off_.bmu + 1] += g_pre[1];
  gr[off_.bv] += g_v;

  std::vector<double> g_z1(h1n, 0.0);
  for (int k = 0; k < h2n; ++k) {
    const double gk = g_z2[k];
    if (gk == 0.0) continue;
    gr[off_.b2 + k] += gk;
    const double* row = p + off_.w2 + static_cast<std::size_t>(k) * h1n;
    double* grow = gr + off_.w2 + static_cast<std::size_t>(k) * h1n;
    for (int m = 0; m < h1n; ++m) {
      grow[m] += gk * c.h1[m];
      g_z1[m] += gk * row[m];
    }
  }
  for (int m = 0; m < h1n; ++m) {
    if (c.z1[m] <= 0.0) g_z1[m] = 0.0;
    gr[off_.b1 + m] += g_z1[m];
  }
  for (const std::int32_t idx : x.active) {
    double* grow = gr + off_.w1 + static_cast<std::size_t>(idx) * h1n;
    for (int m = 0; m < h1n; ++m) grow[m] += g_z1[m];
  }
  for (int gi = 0; gi < 2; ++gi) {
    if (x.grid[gi] == 0.0) continue;
    double* grow = gr + off_.w1 + static_cast<std::size_t>(in - 2 + gi) * h1n;
    for (int m = 0; m < h1n; ++m) grow[m] += x.grid[gi] * g_z1[m];
  }
}

double gaussian_log_prob(const double mean[2], const double log_std[2], const double x[2]) {
  double lp = 0.0;
  for (int d = 0; d < 2; ++d) {
    const double z = (x[d] - mean[d]) * std::exp(-log_std[d]);
    lp += -0.5 * z * z - log_std[d] - 0.5 * kLog2Pi;
  }
  return lp;
}

ActionSample sample_action(const PolicyOutput& out, std::mt19937_64& rng, double action_range) {
  std::normal_distribution<double> n(0.0, 1.0);
  ActionSample s;
  for (int d = 0; d < 2; ++d) s.raw[d] = out.mean[d] + std::exp(out.log_std[d]) * n(rng);
  s.log_prob = gaussian_log_prob(out.mean, out.log_std, s.raw);
  s.action.di = std::clamp(s.raw[0], -action_range, action_range);
  s.action.dj = std::clamp(s.raw[1], -action_range, action_range);
  return s;
}

std::vector<double> discounted_returns(std::span<const double> rewards, double gamma) {
  std::vector<double> g(rewards.size());
  double acc = 0.0;
  for (std::size_t t = rewards.size(); t-- > 0;) {
    acc = rewards[t] + gamma * acc;
    g[t] = acc;
  }
  return g;
}

std::vector<double> gae(std::span<const double> rewards, std::span<const double> values,
                        std::span<const std::uint8_t> dones, double gamma, double lambda) {
  if (values.size() != rewards.size() || dones.size() != rewards.size()) {
    throw PolicyError("gae: misaligned inputs");
  }
  std::vector<double> adv(rewards.size());
  double acc = 0.0;
  for (std::size_t t = rewards.size(); t-- > 0;) {
    const bool last = dones[t] != 0 || t + 1 == rewards.size();
    const double next_v = last ? 0.0 : values[t + 1];
    if (last) acc = 0.0;
    const double delta = rewards[t] + gamma * next_v - values[t];
    acc = delta + gamma * lambda * acc;
    adv[t] = acc;
  }
  return adv;
}

void normalize(std::vector<double>& xs) {
  if (xs.size() < 2) return;
  const MeanSd m = mean_sd(xs);
  const double inv = 1.0 / (m.sd + 1e-8);
  for (double& x : xs) x = (x - m.mean) * inv;
}

void TrainConfig::validate() const {
  if (!(gamma > 0.0 && gamma <= 1.0)) throw PolicyError("gamma must be in (0, 1]");
  if (!(clip_eps > 0.0)) throw PolicyError("clip epsilon must be positive");
  if (!(lr > 0.0)) throw PolicyError("learning rate must be positive");
  if (rollout_steps < 1 || minibatch < 1 || epochs < 1) throw PolicyError("invalid batch sizes");
  if (eval_every < 1 || eval_episodes < 1) throw PolicyError("invalid evaluation schedule");
}

std::string TrainConfig::hash() const {
  const nlohmann::json j = {
      {"gamma", gamma},       {"gae_lambda", gae_lambda},     {"clip_eps", clip_eps},
      {"lr", lr},             {"beta1", adam_beta1},          {"beta2", adam_beta2},
      {"adam_eps", adam_eps}, {"rollout_steps", rollout_steps}, {"minibatch", minibatch},
      {"epochs", epochs},     {"entropy_coef", entropy_coef}, {"value_coef", value_coef},
      {"max_grad_norm", max_grad_norm}, {"initial_log_std", initial_log_std},
      {"shape", {shape.input, shape.hidden1, shape.hidden2, shape.action_scale}}};
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << fnv1a(j.dump());
  return os.str();
}

Adam::Adam(std::size_t n, double lr, double beta1, double beta2, double eps)
    : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps), m_(n, 0.0), v_(n, 0.0) {}

void Adam::step(std::span<double> params, std::span<const double> grad) {
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  const double step = lr_ * std::sqrt(c2) / c1;
  const double eps = eps_ * std::sqrt(c2);
  for (std::size_t k = 0; k < params.size(); ++k) {
    const double g = grad[k];
    m_[k] = b1_ * m_[k] + (1.0 - b1_) * g;
    v_[k] = b2_ * v_[k] + (1.0 - b2_) * g * g;
    params[k] -= step * m_[k] / (std::sqrt(v_[k]) + eps);
  }
}

void finalize_batch(Batch& batch, const TrainConfig& cfg) {
  const std::size_t n = batch.steps.size();
  std::vector<double> r(n), v(n);
  std::vector<std::uint8_t> d(n);
  for (std::size_t t = 0; t < n; ++t) {
    r[t] = batch.steps[t].reward;
    v[t] = batch.steps[t].value;
    d[t] = batch.steps[t].done ? 1 : 0;
  }
  batch.advantages = gae(r, v, d, cfg.gamma, cfg.gae_lambda);
  batch.returns.resize(n);
  for (std::size_t t = 0; t < n; ++t) batch.returns[t] = batch.advantages[t] + v[t];
  normalize(batch.advantages);
}

double clipped_surrogate(double ratio, double advantage, double eps) {
  const double clipped = std::clamp(ratio, 1.0 - eps, 1.0 + eps);
  return std::min(ratio * advantage, clipped * advantage);
}

LossTerms ppo_loss(const PolicyNet& net, const Batch& batch, std::span<const std::size_t> idx,
                   const TrainConfig& cfg, std::vector<double>* grad) {
  LossTerms lt;
  if (idx.empty()) return lt;
  const double inv_n = 1.0 / static_cast<double>(idx.size());
  ForwardCache cache;
  PolicyOutput last;
  std::size_t clipped = 0;
  for (const std::size_t i : idx) {
    const Transition& tr = batch.steps[i];
    const PolicyOutput out = net.forward(tr.input, cache);
    last = out;
    const double lp = gaussian_log_prob(out.mean, out.log_std, tr.raw_action);
    const double log_ratio = lp - tr.log_prob;
    const double ratio = std::exp(log_ratio);
    const double a = batch.advantages[i];
    const double unclipped = ratio * a;
    const double clip_r = std::clamp(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps);
    const bool use_unclipped = unclipped <= clip_r * a;
    lt.policy -= std::min(unclipped, clip_r * a) * inv_n;
    const double verr = out.value - batch.returns[i];
    lt.value += verr * verr * inv_n;
    lt.mean_ratio += ratio * inv_n;
    lt.max_ratio = std::max(lt.max_ratio, ratio);
    lt.approx_kl += ((ratio - 1.0) - log_ratio) * inv_n;
    if (std::abs(ratio - 1.0) > cfg.clip_eps) ++clipped;

    if (grad != nullptr) {
      OutputGrad g;
      const double g_lp = use_unclipped ? -unclipped * inv_n : 0.0;
      for (int d = 0; d < 2; ++d) {
        const double inv_var = std::exp(-2.0 * out.log_std[d]);
        const double diff = tr.raw_action[d] - out.mean[d];
        g.mean[d] = g_lp * diff * inv_var;
        g.log_std[d] = g_lp * (diff * diff * inv_var - 1.0);
      }
      g.value = 2.0 * cfg.value_coef * verr * inv_n;
      net.backward(tr.input, cache, g, *grad);
    }
  }
  lt.clip_frac = static_cast<double>(clipped) * inv_n;
  lt.entropy = 0.0;
  for (int d = 0; d < 2; ++d) lt.entropy += last.log_std[d] + 0.5 * (kLog2Pi + 1.0);
  lt.total = lt.policy + cfg.value_coef * lt.value - cfg.entropy_coef * lt.entropy;
  if (grad != nullptr) {
    // dH/dlog_std = 1 per dimension; the log-std slots are the last two.
    const std::size_t ls = net.size() - 2;
    for (int d = 0; d < 2; ++d) {
      const double v = net.params()[ls + d];
      if (v > kLogStdMin && v < kLogStdMax) (*grad)[ls + d] -= cfg.entropy_coef;
    }
  }
  return lt;
}

UpdateStats ppo_update(PolicyNet& net, Adam& opt, const Batch& batch, const TrainConfig& cfg,
                       std::mt19937_64& rng) {
  UpdateStats st;
  const std::size_t n = batch.steps.size();
  if (n == 0) return st;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  st.first_epoch_mean_ratio = ppo_loss(net, batch, order, cfg, nullptr).mean_ratio;

  std::vector<double> grad(net.size());
  const auto mb = static_cast<std::size_t>(cfg.minibatch);
  bool first = true;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t at = 0; at < n; at += mb) {
      const std::span<const std::size_t> idx(order.data() + at, std::min(mb, n - at));
      std::fill(grad.begin(), grad.end(), 0.0);
      const LossTerms lt = ppo_loss(net, batch, idx, cfg, &grad);
      if (first) {
        st.first = lt;
        first = false;
      }
      st.last = lt;
      if (lt.max_ratio > 1e3) {
        st.aborted = true;
        st.abort_reason = "importance ratio exploded";
        return st;
      }
      if (!std::isfinite(lt.total)) {
        st.aborted = true;
        st.abort_reason = "non-finite loss";
        return st;
      }
      if (cfg.max_grad_norm > 0.0) {
        double sq = 0.0;
        for (double g : grad) sq += g * g;
        const double norm = std::sqrt(sq);
        if (norm > cfg.max_grad_norm) {
          const double s = cfg.max_grad_norm / norm;
          for (double& g : grad) g *= s;
        }
      }
      opt.step(net.params(), grad);
      net.clamp_log_std();
    }
  }
  return st;
}

GradCheckResult grad_check(std::vector<double> params, const LossWithGrad& loss, int probes,
                           std::mt19937_64& rng, double h) {
  std::vector<double> analytic(params.size(), 0.0);
  loss(params, &analytic);
  std::vector<std::size_t> eligible;
  for (std::size_t k = 0; k < analytic.size(); ++k) {
    if (std::abs(analytic[k]) >= 1e-8) eligible.push_back(k);
  }
  GradCheckResult r;
  if (eligible.empty()) return r;
  std::uniform_int_distribution<std::size_t> pick(0, eligible.size() - 1);
  for (int p = 0; p < probes; ++p) {
    const std::size_t k = eligible[pick(rng)];
    auto rel_error = [&](double step) {
      const double saved = params[k];
      params[k] = saved + step;
      const double up = loss(params, nullptr);
      params[k] = saved - step;
      const double down = loss(params, nullptr);
      params[k] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double denom = std::max({std::abs(numeric), std::abs(analytic[k]), 1e-12});
      return std::abs(numeric - analytic[k]) / denom;
    };
    const double coarse = rel_error(h);
    const double fine = rel_error(0.1 * h);
    if (fine < coarse) ++r.refined;
    r.max_rel_error = std::max(r.max_rel_error, std::min(coarse, fine));
    ++r.probes;
  }
  return r;
}

EpisodeLog run_episode(const PolicyNet& net, BiopsyEnv& env, std::uint64_t seed, ActionMode mode,
                       std::mt19937_64& rng, std::vector<Transition>* out) {
  Observation obs = env.reset(seed);
  const double range = env.config().action_range;
  while (!env.done()) {
    Transition tr;
    tr.input = encode_observation(obs);
    const PolicyOutput po = net.forward(tr.input);
    Action act;
    if (mode == ActionMode::kSample) {
      const ActionSample s = sample_action(po, rng, range);
      act = s.action;
      tr.raw_action[0] = s.raw[0];
      tr.raw_action[1] = s.raw[1];
      tr.log_prob = s.log_prob;
    } else {
      act = {std::clamp(po.mean[0], -range, range), std::clamp(po.mean[1], -range, range)};
    }
    StepResult r = env.step(act);
    tr.reward = r.reward;
    tr.value = po.value;
    tr.done = r.terminated;
    if (out != nullptr) out->push_back(std::move(tr));
    obs = std::move(r.observation);
  }
  return env.log();
}

EpisodeLog run_random_episode(BiopsyEnv& env, std::uint64_t seed, std::mt19937_64& rng) {
  env.reset(seed);
  const double range = env.config().action_range;
  std::uniform_real_distribution<double> u(-range, range);
  while (!env.done()) {
    const double di = u(rng);
    const double dj = u(rng);
    env.step({di, dj});
  }
  EpisodeLog log = env.log();
  log.strategy = "random";
  return log;
}

std::vector<EpisodeLog> evaluate_policy(const PolicyNet& net, BiopsyEnv& env, int episodes,
                                        std::uint64_t seed_base) {
  std::vector<EpisodeLog> logs;
  std::mt19937_64 unused(0);
  for (int e = 0; e < episodes; ++e) {
    logs.push_back(run_episode(net, env, splitmix64(seed_base + static_cast<std::uint64_t>(e)),
                               ActionMode::kDeterministic, unused));
  }
  return logs;
}

TrainResult train(const EnvFactory& make_env, const TrainConfig& cfg, std::uint64_t seed,
                  const TrainCallback& on_eval) {
  cfg.validate();
  std::unique_ptr<BiopsyEnv> env = make_env();
  std::unique_ptr<BiopsyEnv> eval_env = make_env();
  TrainResult res;
  PolicyNet net(cfg.shape);
  net.init(splitmix64(seed), cfg.initial_log_std);
  res.best = net;
  Adam opt(net.size(), cfg.lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
  std::mt19937_64 rng(splitmix64(seed ^ 0xA5A5A5A5ull));
  const std::uint64_t eval_base = splitmix64(seed + 17);

  auto evaluate = [&](int episode) {
    const auto logs = evaluate_policy(net, *eval_env, cfg.eval_episodes, eval_base);
    CurvePoint cp;
    cp.episode = episode;
    double hr = 0.0;
    for (const auto& l : logs) {
      cp.eval_mean_reward += l.total_reward / static_cast<double>(logs.size());
      hr += evaluate_episode(l).hr_pct / static_cast<double>(logs.size());
    }
    cp.hr = hr;
    res.curve.push_back(cp);
    // Ties go to the later checkpoint: the reward saturates long before the
    // hit rate does.
    if (cp.eval_mean_reward >= res.best_eval_reward) {
      res.best_eval_reward = cp.eval_mean_reward;
      res.best_episode = episode;
      res.best = net;
    }
    if (on_eval) on_eval(cp);
    return cp;
  };

  evaluate(0);
  int episodes = 0;
  bool stop = false;
  while (episodes < cfg.total_episodes && !stop) {
    Batch batch;
    while (static_cast<int>(batch.steps.size()) < cfg.rollout_steps &&
           episodes < cfg.total_episodes) {
      const std::uint64_t ep_seed = splitmix64(seed * 1000003ull + static_cast<std::uint64_t>(episodes));
      run_episode(net, *env, ep_seed, ActionMode::kSample, rng, &batch.steps);
      ++episodes;
      if (episodes % cfg.eval_every == 0) {
        const CurvePoint cp = evaluate(episodes);
        if (!std::isnan(cfg.target_eval_reward) && cp.eval_mean_reward >= cfg.target_eval_reward) {
          stop = true;
          break;
        }
      }
    }
    if (stop) break;
    finalize_batch(batch, cfg);
    const UpdateStats st = ppo_update(net, opt, batch, cfg, rng);
    if (st.aborted) {
      res.halted = true;
      res.halt_reason = st.abort_reason;
      break;
    }
    try {
      net.check_finite();
    } catch (const PolicyError& e) {
      res.halted = true;
      res.halt_reason = e.what();
      break;
    }
  }
  res.episodes_run = episodes;
  res.last = net;
  return res;
}

namespace {
constexpr char kCheckpointMagic[4] = {'B', 'P', 'O', 'L'};
}

void save_checkpoint(const PolicyNet& net, const TrainConfig& cfg,
                     const std::filesystem::path& path) {
  const PolicyShape& s = net.shape();
  const nlohmann::json header = {
      {"format", "bioptx-policy/1"},
      {"layers",
       {{"input", s.input}, {"hidden1", s.hidden1}, {"hidden2", s.hidden2}, {"action_scale", s.action_scale}}},
      {"cfg_hash", cfg.hash()},
      {"count", net.size()}};
  const std::string text = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw PolicyError("cannot open " + path.string());
  out.write(kCheckpointMagic, 4);
  const auto len = static_cast<std::uint32_t>(text.size());
  for (int k = 0; k < 4; ++k) out.put(static_cast<char>((len >> (8 * k)) & 0xFF));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const double p : net.params()) {
    const float f = static_cast<float>(p);
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    for (int k = 0; k < 4; ++k) out.put(static_cast<char>((bits >> (8 * k)) & 0xFF));
  }
  if (!out) throw PolicyError("write failed: " + path.string());
}

PolicyNet load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PolicyError("cannot open " + path.string());
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                         std::istreambuf_iterator<char>());
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) {
    throw PolicyError("not a policy checkpoint");
  }
  const std::uint32_t len = bytes[4] | (bytes[5] << 8) | (bytes[6] << 16) |
                            (static_cast<std::uint32_t>(bytes[7]) << 24);
  if (bytes.size() < 8 + static_cast<std::size_t>(len)) throw PolicyError("truncated checkpoint header");
  PolicyShape s;
  std::size_t count = 0;
  try {
    const auto h = nlohmann::json::parse(bytes.begin() + 8, bytes.begin() + 8 + len);
    const auto& l = h.at("layers");
    s.input = l.at("input").get<int>();
    s.hidden1 = l.at("hidden1").get<int>();
    s.hidden2 = l.at("hidden2").get<int>();
    s.action_scale = l.at("action_scale").get<double>();
    count = h.at("count").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw PolicyError(std::string("malformed checkpoint header: ") + e.what());
  }
  PolicyNet net(s);
  if (count != net.size()) throw PolicyError("checkpoint weight count mismatch");
  const std::size_t at = 8 + len;
  if (bytes.size() != at + 4 * count) throw PolicyError("truncated checkpoint payload");
  for (std::size_t k = 0; k < count; ++k) {
    const unsigned char* b = bytes.data() + at + 4 * k;
    const std::uint32_t bits = b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
    float f;
    std::memcpy(&f, &bits, 4);
    net.params()[k] = f;
  }
  net.check_finite();
  return net;
}

void write_curve_csv(const std::vector<CurvePoint>& curve, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw PolicyError("cannot open " + path.string());
  out << "episode,eval_mean_reward,hr\n";
  out << std::setprecision(10);
  for (const auto& c : curve) out << c.episode << ',' << c.eval_mean_reward << ',' << c.hr << '\n';
}

}  // namespace bioptx
