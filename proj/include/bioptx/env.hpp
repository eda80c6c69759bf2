#ifndef BIOPTX_ENV_HPP_
#define BIOPTX_ENV_HPP_

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "bioptx/anatomy.hpp"
#include "bioptx/geometry.hpp"

namespace bioptx {

struct EnvConfig {
  int max_steps = 15;
  int hit_quota = 5;
  double reward_hit = 5.0;
  double reward_outside = -1.0;
  double gamma = 0.9;  // consumed by the trainer
  double noise_sd_mm = 1.73;
  double depth_noise_sd_mm = 1.0;
  double action_range = 15.0;
  double core_length_mm = 20.0;
  PlaneWindow window;
  ProbeModel probe;

  void validate() const;
};

class EnvError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Observation {
  PlaneImage plane;
  Hole hole;
  // (i / 12, j / 12)
  double grid_pos[2] = {0.0, 0.0};
};

struct Action {
  double di = 0.0;
  double dj = 0.0;
};

struct NeedleRecord {
  Hole hole;
  WorldXY world;
  CoreSegment core;
  bool hit = false;
  double ccl_mm = 0.0;
  int step = 0;
};

struct StepInfo {
  bool hit = false;
  bool outside_prostate = false;
  double ccl_mm = 0.0;
  double dist_mm = 0.0;
  NeedleRecord needle;
  // "", "hit_quota" or "max_steps"
  std::string termination_reason;
};

struct StepResult {
  Observation observation;
  double reward = 0.0;
  bool terminated = false;
  StepInfo info;
};

// StepResult without the image, as kept in episode logs.
struct LoggedStep {
  int t = 0;
  Action action;
  double reward = 0.0;
  bool terminated = false;
  StepInfo info;
};

struct EpisodeLog {
  std::string case_id;
  std::uint64_t seed = 0;
  Hole start;
  Vec3 noise_offset_mm;
  std::vector<LoggedStep> steps;
  double total_reward = 0.0;
  // Tags set by whoever drove the episode.
  std::string strategy = "agent";
  double bias_mm = 0.0;
  double sd_mm = 0.0;

  std::vector<NeedleRecord> needles() const;
};

// Priority order: hit, then leaving the prostate, then sgn(dist_prev - dist_now).
double reward(bool hit, bool outside, double dist_prev, double dist_now,
              const EnvConfig& cfg = {});

// Depth (mm along +z) at which to center the core: mean depth of lesion
// pixels in the plane, else mean depth of prostate pixels, else the window
// center.
double fire_depth(const PlaneImage& plane, const PlaneWindow& window = {});

// Template-guided biopsy MDP over one case. One instance is one episode
// stream and is not safe for concurrent use.
class BiopsyEnv {
 public:
  BiopsyEnv(std::shared_ptr<const LabelVolume> volume, EnvConfig cfg,
            std::string case_id = "");

  // Samples the start hole (unless given) and the per-episode lesion
  // localization offset. Deterministic in `seed`.
  Observation reset(std::uint64_t seed, std::optional<Hole> start = std::nullopt);

  // Relative move then fire at the new hole.
  StepResult step(const Action& action);

  // Fire at an absolute hole with the core centered at `depth_mm` plus the
  // configured depth noise. Counts as a step.
  StepResult fire(const Hole& hole, double depth_mm);

  // Observation at `hole` without firing (probe rotation only).
  Observation observe(const Hole& hole) const;

  // Needle outcome against the true masks, no noise.
  NeedleRecord evaluate_needle(const Hole& hole, double depth_mm) const;
  bool outside_prostate(const Hole& hole) const;
  double dist_to_target(const Hole& hole) const;

  Hole apply_action(const Hole& from, const Action& action) const;

  const EnvConfig& config() const { return cfg_; }
  const LabelVolume& volume() const { return *volume_; }
  std::shared_ptr<const LabelVolume> volume_ptr() const { return volume_; }
  const Vec3& true_centroid() const { return true_centroid_; }
  Vec3 observed_centroid() const;
  const Vec3& noise_offset() const { return log_.noise_offset_mm; }
  const Index3& lesion_shift() const { return lesion_shift_; }
  const Hole& current_hole() const { return hole_; }
  int hits() const { return hits_; }
  int steps() const { return steps_; }
  bool done() const { return done_; }
  bool active() const { return started_ && !done_; }
  const EpisodeLog& log() const { return log_; }
  EpisodeLog& mutable_log() { return log_; }

 private:
  StepResult fire_at(const Hole& hole, double depth_mm, Observation obs);

  std::shared_ptr<const LabelVolume> volume_;
  EnvConfig cfg_;
  Vec3 true_centroid_;
  std::mt19937_64 rng_;
  Index3 lesion_shift_;
  Hole hole_;
  int hits_ = 0;
  int steps_ = 0;
  bool done_ = false;
  bool started_ = false;
  double dist_prev_ = 0.0;
  Action pending_action_;
  EpisodeLog log_;
};

}  // namespace bioptx

#endif  // BIOPTX_ENV_HPP_
