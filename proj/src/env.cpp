#include "bioptx/env.hpp"

#include <algorithm>
#include <cmath>

namespace bioptx {

void EnvConfig::validate() const {
  if (max_steps < 1) throw EnvError("max_steps must be >= 1");
  if (hit_quota < 1) throw EnvError("hit_quota must be >= 1");
  if (noise_sd_mm < 0.0 || depth_noise_sd_mm < 0.0) {
    throw EnvError("noise standard deviations must be >= 0");
  }
  if (!(core_length_mm > 0.0)) throw EnvError("core length must be positive");
}

std::vector<NeedleRecord> EpisodeLog::needles() const {
  std::vector<NeedleRecord> out;
  out.reserve(steps.size());
  for (const auto& s : steps) out.push_back(s.info.needle);
  return out;
}

double reward(bool hit, bool outside, double dist_prev, double dist_now,
              const EnvConfig& cfg) {
  if (hit) return cfg.reward_hit;
  if (outside) return cfg.reward_outside;
  const double d = dist_prev - dist_now;
  return static_cast<double>((d > 0.0) - (d < 0.0));
}

double fire_depth(const PlaneImage& plane, const PlaneWindow& window) {
  for (const int ch : {PlaneImage::kLesionChannel, PlaneImage::kProstateChannel}) {
    double sum = 0.0;
    std::size_t n = 0;
    for (int v = 0; v < plane.res_v; ++v) {
      for (int u = 0; u < plane.res_u; ++u) {
        if (plane.at(ch, v, u)) {
          sum += u + 0.5;
          ++n;
        }
      }
    }
    if (n > 0) return sum / static_cast<double>(n) * window.pixel_depth_mm();
  }
  return 0.5 * window.depth_mm;
}

BiopsyEnv::BiopsyEnv(std::shared_ptr<const LabelVolume> volume, EnvConfig cfg,
                     std::string case_id)
    : volume_(std::move(volume)), cfg_(std::move(cfg)) {
  if (!volume_) throw EnvError("null volume");
  cfg_.validate();
  true_centroid_ = lesion_centroid(*volume_);
  log_.case_id = std::move(case_id);
}

Observation BiopsyEnv::reset(std::uint64_t seed, std::optional<Hole> start) {
  rng_.seed(seed);
  std::uniform_int_distribution<int> hole_dist(0, kGridSize - 1);
  Hole h;
  h.i = hole_dist(rng_);
  h.j = hole_dist(rng_);
  if (start) {
    if (!is_valid(*start)) throw EnvError("start hole out of range");
    h = *start;
  }
  Vec3 eps;
  if (cfg_.noise_sd_mm > 0.0) {
    std::normal_distribution<double> n(0.0, cfg_.noise_sd_mm);
    eps.x = n(rng_);
    eps.y = n(rng_);
    eps.z = n(rng_);
  }
  lesion_shift_ = voxel_shift(*volume_, eps);
  hole_ = h;
  hits_ = 0;
  steps_ = 0;
  done_ = false;
  started_ = true;
  dist_prev_ = dist_to_target(h);

  const std::string case_id = log_.case_id;
  log_ = EpisodeLog{};
  log_.case_id = case_id;
  log_.seed = seed;
  log_.start = h;
  log_.noise_offset_mm = eps;
  return observe(h);
}

Vec3 BiopsyEnv::observed_centroid() const {
  const Vec3& sp = volume_->spacing();
  return true_centroid_ + Vec3{lesion_shift_.x * sp.x, lesion_shift_.y * sp.y,
                               lesion_shift_.z * sp.z};
}

Observation BiopsyEnv::observe(const Hole& hole) const {
  Observation obs;
  obs.hole = hole;
  obs.plane = resample_plane(*volume_, plane_angle(hole, cfg_.probe), cfg_.window,
                             cfg_.probe, lesion_shift_);
  obs.grid_pos[0] = hole.i / 12.0;
  obs.grid_pos[1] = hole.j / 12.0;
  return obs;
}

Hole BiopsyEnv::apply_action(const Hole& from, const Action& action) const {
  auto delta = [this](double d) {
    if (!std::isfinite(d)) return 0.0;
    return std::clamp(d, -cfg_.action_range, cfg_.action_range);
  };
  const double ni = std::round(from.i + delta(action.di));
  const double nj = std::round(from.j + delta(action.dj));
  return {static_cast<int>(std::clamp(ni, 0.0, kGridSize - 1.0)),
          static_cast<int>(std::clamp(nj, 0.0, kGridSize - 1.0))};
}

StepResult BiopsyEnv::step(const Action& action) {
  if (!started_) throw EnvError("episode not started");
  if (done_) throw EnvError("episode finished");
  const Hole next = apply_action(hole_, action);
  Observation obs = observe(next);
  pending_action_ = action;
  const double depth = fire_depth(obs.plane, cfg_.window);
  return fire_at(next, depth, std::move(obs));
}

NeedleRecord BiopsyEnv::evaluate_needle(const Hole& hole, double depth_mm) const {
  NeedleRecord rec;
  rec.hole = hole;
  rec.world = grid_to_world(hole);
  rec.core = CoreSegment{hole, depth_mm, cfg_.core_length_mm};
  const double step = 0.25 * std::min({volume_->spacing().x, volume_->spacing().y,
                                       volume_->spacing().z});
  rec.ccl_mm = segment_mask_length(*volume_, kLesion, rec.core, step);
  rec.hit = rec.ccl_mm > 0.0;
  return rec;
}

bool BiopsyEnv::outside_prostate(const Hole& hole) const {
  return !line_intersects_mask(*volume_, kProstate, needle_line(hole));
}

double BiopsyEnv::dist_to_target(const Hole& hole) const {
  return point_line_distance(true_centroid_, needle_line(hole));
}

StepResult BiopsyEnv::fire(const Hole& hole, double depth_mm) {
  if (!started_) throw EnvError("episode not started");
  if (done_) throw EnvError("episode finished");
  if (!is_valid(hole)) throw EnvError("hole out of range");
  return fire_at(hole, depth_mm, observe(hole));
}

StepResult BiopsyEnv::fire_at(const Hole& hole, double depth_mm, Observation obs) {
  double depth = depth_mm;
  if (cfg_.depth_noise_sd_mm > 0.0) {
    std::normal_distribution<double> n(0.0, cfg_.depth_noise_sd_mm);
    depth += n(rng_);
  }
  StepResult r;
  r.info.needle = evaluate_needle(hole, depth);
  r.info.needle.step = steps_;
  r.info.hit = r.info.needle.hit;
  r.info.ccl_mm = r.info.needle.ccl_mm;
  r.info.outside_prostate = outside_prostate(hole);
  r.info.dist_mm = dist_to_target(hole);
  r.reward = reward(r.info.hit, r.info.outside_prostate, dist_prev_, r.info.dist_mm, cfg_);

  dist_prev_ = r.info.dist_mm;
  hole_ = hole;
  ++steps_;
  if (r.info.hit) ++hits_;
  if (hits_ >= cfg_.hit_quota) {
    done_ = true;
    r.info.termination_reason = "hit_quota";
  } else if (steps_ >= cfg_.max_steps) {
    done_ = true;
    r.info.termination_reason = "max_steps";
  }
  r.terminated = done_;
  r.observation = std::move(obs);

  LoggedStep ls;
  ls.t = steps_ - 1;
  ls.action = pending_action_;
  ls.reward = r.reward;
  ls.terminated = r.terminated;
  ls.info = r.info;
  log_.steps.push_back(ls);
  log_.total_reward += r.reward;
  pending_action_ = Action{};
  return r;
}

}  // namespace bioptx
