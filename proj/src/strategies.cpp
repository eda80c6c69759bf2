#include "bioptx/strategies.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace bioptx {

namespace {

void tag(EpisodeLog& log, const char* name, const Perturbation& pert) {
  log.strategy = name;
  log.bias_mm = pert.bias_mm;
  log.sd_mm = pert.sd_mm;
}

// Mean (u, v) pixel coordinate of the lesion channel; false if none.
bool lesion_pixel_centroid(const PlaneImage& plane, double& u_out, double& v_out) {
  double su = 0.0, sv = 0.0;
  std::size_t n = 0;
  for (int v = 0; v < plane.res_v; ++v) {
    for (int u = 0; u < plane.res_u; ++u) {
      if (plane.at(PlaneImage::kLesionChannel, v, u)) {
        su += u + 0.5;
        sv += v + 0.5;
        ++n;
      }
    }
  }
  if (n == 0) return false;
  u_out = su / static_cast<double>(n);
  v_out = sv / static_cast<double>(n);
  return true;
}

}  // namespace

WorldXY perturbation_offset(const Perturbation& pert, std::mt19937_64& rng) {
  WorldXY dir = pert.bias_direction;
  if (pert.random_bias_direction) {
    std::uniform_real_distribution<double> ang(0.0, 2.0 * std::numbers::pi);
    const double a = ang(rng);
    dir = {std::cos(a), std::sin(a)};
  }
  WorldXY d{pert.bias_mm * dir.x, pert.bias_mm * dir.y};
  if (pert.sd_mm > 0.0) {
    std::normal_distribution<double> n(0.0, pert.sd_mm);
    d.x += n(rng);
    d.y += n(rng);
  }
  return d;
}

Hole perturb_position(const WorldXY& p, const Perturbation& pert, std::mt19937_64& rng) {
  const WorldXY d = perturbation_offset(pert, rng);
  return snap_to_grid({p.x + d.x, p.y + d.y});
}

EpisodeLog sweep_episode(BiopsyEnv& env, const Perturbation& pert, std::mt19937_64& rng) {
  const EnvConfig& cfg = env.config();
  const Vec3 target = env.observed_centroid();
  const int row = snap_to_grid({0.0, target.y}).j;
  int fired = 0;
  for (int i = 0; i < kGridSize && fired < kMaxBaselineNeedles && env.active(); ++i) {
    const Hole probe_hole{i, row};
    const Observation obs = env.observe(probe_hole);
    double u = 0.0, v = 0.0;
    if (!lesion_pixel_centroid(obs.plane, u, v)) continue;
    const Vec3 c = plane_point(plane_angle(probe_hole, cfg.probe), u, v, cfg.window, cfg.probe);
    const Hole aim{i, snap_to_grid({0.0, c.y}).j};
    const Hole placed = perturb_position(grid_to_world(aim), pert, rng);
    env.fire(placed, fire_depth(obs.plane, cfg.window));
    ++fired;
  }
  EpisodeLog log = env.log();
  tag(log, "sweep", pert);
  return log;
}

std::vector<Hole> scout_candidates(const LabelVolume& vol, const Index3& lesion_shift) {
  std::vector<Hole> out;
  for (int j = 0; j < kGridSize; ++j) {
    for (int i = 0; i < kGridSize; ++i) {
      const Hole h{i, j};
      if (line_intersects_mask(vol, kLesion, needle_line(h), lesion_shift)) out.push_back(h);
    }
  }
  return out;
}

std::vector<Hole> scout_candidates(const BiopsyEnv& env) {
  return scout_candidates(env.volume(), env.lesion_shift());
}

EpisodeLog scout_episode(BiopsyEnv& env, const Perturbation& pert, std::mt19937_64& rng) {
  const EnvConfig& cfg = env.config();
  std::vector<Hole> cand = scout_candidates(env);
  const std::size_t k = std::min<std::size_t>(kMaxBaselineNeedles, cand.size());
  // Partial Fisher-Yates: the first k entries become a uniform sample.
  for (std::size_t a = 0; a < k; ++a) {
    std::uniform_int_distribution<std::size_t> pick(a, cand.size() - 1);
    std::swap(cand[a], cand[pick(rng)]);
  }
  for (std::size_t a = 0; a < k && env.active(); ++a) {
    const Observation obs = env.observe(cand[a]);
    const Hole placed = perturb_position(grid_to_world(cand[a]), pert, rng);
    env.fire(placed, fire_depth(obs.plane, cfg.window));
  }
  EpisodeLog log = env.log();
  tag(log, "scout", pert);
  return log;
}

}  // namespace bioptx
