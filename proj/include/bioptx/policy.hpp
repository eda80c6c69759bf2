#ifndef BIOPTX_POLICY_HPP_
#define BIOPTX_POLICY_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <memory>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "bioptx/env.hpp"

namespace bioptx {

class PolicyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kLogStdMin = -5.0;
inline constexpr double kLogStdMax = 2.0;

// Sparse view of an observation: indices of set pixels plus the two grid
// coordinates, which occupy the last two input slots.
struct PolicyInput {
  std::vector<std::int32_t> active;
  double grid[2] = {0.0, 0.0};
};

PolicyInput encode_observation(const Observation& obs);

struct PolicyShape {
  int input = 2 * 64 * 64 + 2;
  int hidden1 = 128;
  int hidden2 = 128;
  double action_scale = 15.0;

  friend bool operator==(const PolicyShape&, const PolicyShape&) = default;
};

struct PolicyOutput {
  double mean[2] = {0.0, 0.0};
  double log_std[2] = {0.0, 0.0};
  double value = 0.0;
};

// Activations kept from a forward pass for backprop.
struct ForwardCache {
  std::vector<double> z1, h1, z2, h2;
  double mean_pre[2] = {0.0, 0.0};
  PolicyOutput out;
};

// Gradient of a scalar loss with respect to the three network outputs.
struct OutputGrad {
  double mean[2] = {0.0, 0.0};
  double log_std[2] = {0.0, 0.0};
  double value = 0.0;
};

// Two-hidden-layer rectifier MLP with a tanh-squashed Gaussian mean head,
// a state-independent log-std and a scalar value head. All weights live in
// one flat vector; the first layer is stored input-major so a binary input
// touches contiguous rows.
class PolicyNet {
 public:
  PolicyNet() : PolicyNet(PolicyShape{}) {}
  explicit PolicyNet(const PolicyShape& shape);

  // Scaled-normal initialization; heads start near zero.
  void init(std::uint64_t seed, double initial_log_std = 0.0);

  PolicyOutput forward(const PolicyInput& x) const;
  PolicyOutput forward(const PolicyInput& x, ForwardCache& cache) const;
  // Accumulates dLoss/dparams * scale into `grad`.
  void backward(const PolicyInput& x, const ForwardCache& cache, const OutputGrad& g,
                std::span<double> grad, double scale = 1.0) const;

  const PolicyShape& shape() const { return shape_; }
  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }
  std::size_t size() const { return params_.size(); }

  void clamp_log_std();
  // Throws PolicyError if any weight is NaN or infinite.
  void check_finite() const;

 private:
  struct Offsets {
    std::size_t w1, b1, w2, b2, wmu, bmu, wv, bv, log_std, total;
  };
  static Offsets layout(const PolicyShape& s);

  PolicyShape shape_;
  Offsets off_{};
  std::vector<double> params_;
};

struct ActionSample {
  Action action;      // clipped to the action range
  double raw[2] = {0.0, 0.0};  // pre-clip Gaussian draw
  double log_prob = 0.0;       // of the pre-clip draw
};

double gaussian_log_prob(const double mean[2], const double log_std[2], const double x[2]);
ActionSample sample_action(const PolicyOutput& out, std::mt19937_64& rng,
                           double action_range = 15.0);

// G_t = R_t + gamma * G_{t+1}, zero after the last step.
std::vector<double> discounted_returns(std::span<const double> rewards, double gamma);

// Generalized advantage estimation over a concatenation of episodes.
// `dones[t]` marks the last step of an episode (bootstrap value 0).
std::vector<double> gae(std::span<const double> rewards, std::span<const double> values,
                        std::span<const std::uint8_t> dones, double gamma, double lambda);
void normalize(std::vector<double>& xs);

struct TrainConfig {
  double gamma = 0.9;
  double gae_lambda = 0.95;
  double clip_eps = 0.2;
  double lr = 1e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int rollout_steps = 2048;
  int minibatch = 256;
  int epochs = 4;
  double entropy_coef = 0.01;
  double value_coef = 0.5;
  double max_grad_norm = 0.5;
  double initial_log_std = 0.0;
  int total_episodes = 20000;
  int eval_every = 500;
  int eval_episodes = 10;
  // Stop once a 10-episode evaluation reaches this mean reward (disabled if NaN).
  double target_eval_reward = std::numeric_limits<double>::quiet_NaN();
  PolicyShape shape;

  void validate() const;
  std::string hash() const;
};

class Adam {
 public:
  Adam(std::size_t n, double lr, double beta1, double beta2, double eps);
  void step(std::span<double> params, std::span<const double> grad);
  long iterations() const { return t_; }

 private:
  double lr_, b1_, b2_, eps_;
  long t_ = 0;
  std::vector<double> m_, v_;
};

struct Transition {
  PolicyInput input;
  double raw_action[2] = {0.0, 0.0};
  double log_prob = 0.0;
  double reward = 0.0;
  double value = 0.0;
  bool done = false;
};

struct Batch {
  std::vector<Transition> steps;
  std::vector<double> advantages;  // normalized
  std::vector<double> returns;
};

// Fills advantages/returns from the transitions.
void finalize_batch(Batch& batch, const TrainConfig& cfg);

// Per-sample clipped surrogate: min(rho A, clip(rho, 1-eps, 1+eps) A).
double clipped_surrogate(double ratio, double advantage, double eps);

struct LossTerms {
  double total = 0.0;
  double policy = 0.0;
  double value = 0.0;
  double entropy = 0.0;
  double mean_ratio = 0.0;
  double max_ratio = 0.0;
  double clip_frac = 0.0;
  double approx_kl = 0.0;
};

// Mean PPO loss over `idx` samples of the batch (to be minimized):
// -surrogate + value_coef * (V - G)^2 - entropy_coef * H. When `grad` is
// non-null it receives the mean gradient.
LossTerms ppo_loss(const PolicyNet& net, const Batch& batch, std::span<const std::size_t> idx,
                   const TrainConfig& cfg, std::vector<double>* grad);

struct UpdateStats {
  LossTerms first;  // first minibatch of the first epoch
  LossTerms last;
  double first_epoch_mean_ratio = 0.0;
  bool aborted = false;
  std::string abort_reason;
};

UpdateStats ppo_update(PolicyNet& net, Adam& opt, const Batch& batch, const TrainConfig& cfg,
                       std::mt19937_64& rng);

struct GradCheckResult {
  double max_rel_error = 0.0;
  int probes = 0;
  // Probes whose h/10 estimate agreed better than the step-h one.
  int refined = 0;
};

using LossWithGrad =
    std::function<double(const std::vector<double>& params, std::vector<double>* grad)>;

// Central differences on random coordinates whose analytic gradient exceeds
// 1e-8 in magnitude. Each probe is evaluated with steps h and h/10 and the
// closer estimate is kept: an interval that straddles a ReLU or clipping kink
// is off by O(h) and shrinks with the step, while a wrong derivative stays
// wrong at both.
GradCheckResult grad_check(std::vector<double> params, const LossWithGrad& loss, int probes,
                           std::mt19937_64& rng, double h = 1e-4);

// ---- rollouts, evaluation, training ----

enum class ActionMode { kSample, kDeterministic };

// Runs one episode from `seed`. Appends transitions when `out` is non-null.
EpisodeLog run_episode(const PolicyNet& net, BiopsyEnv& env, std::uint64_t seed,
                       ActionMode mode, std::mt19937_64& rng,
                       std::vector<Transition>* out = nullptr);

// Uniform-random deltas in [-range, range]^2.
EpisodeLog run_random_episode(BiopsyEnv& env, std::uint64_t seed, std::mt19937_64& rng);

std::vector<EpisodeLog> evaluate_policy(const PolicyNet& net, BiopsyEnv& env, int episodes,
                                        std::uint64_t seed_base);

struct CurvePoint {
  int episode = 0;
  double eval_mean_reward = 0.0;
  double hr = 0.0;
};

struct TrainResult {
  // Argmax of the evaluation mean reward over the curve.
  PolicyNet best;
  // Parameters when the run ended; after a halt this is the diagnostic
  // snapshot.
  PolicyNet last;
  double best_eval_reward = -std::numeric_limits<double>::infinity();
  int best_episode = 0;
  std::vector<CurvePoint> curve;
  int episodes_run = 0;
  bool halted = false;
  std::string halt_reason;
};

using EnvFactory = std::function<std::unique_ptr<BiopsyEnv>()>;
using TrainCallback = std::function<void(const CurvePoint&)>;

TrainResult train(const EnvFactory& make_env, const TrainConfig& cfg, std::uint64_t seed,
                  const TrainCallback& on_eval = {});

// Checkpoint: "BPOL" magic, u32 header length, JSON header, float32 LE weights.
void save_checkpoint(const PolicyNet& net, const TrainConfig& cfg,
                     const std::filesystem::path& path);
PolicyNet load_checkpoint(const std::filesystem::path& path);

void write_curve_csv(const std::vector<CurvePoint>& curve, const std::filesystem::path& path);

}  // namespace bioptx

#endif  // BIOPTX_POLICY_HPP_
