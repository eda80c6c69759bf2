#ifndef BIOPTX_STRATEGIES_HPP_
#define BIOPTX_STRATEGIES_HPP_

#include <random>
#include <vector>

#include "bioptx/env.hpp"

namespace bioptx {

// Operator positioning error applied to baseline needle placements.
struct Perturbation {
  double bias_mm = 0.0;
  double sd_mm = 0.0;
  // Unit direction of the systematic offset in the template plane.
  WorldXY bias_direction{1.0, 0.0};
  // Draw a fresh uniform bias direction per call instead.
  bool random_bias_direction = false;
};

inline constexpr int kMaxBaselineNeedles = 5;

// bias * direction + N(0, sd^2 I), before snapping.
WorldXY perturbation_offset(const Perturbation& pert, std::mt19937_64& rng);

// (x, y) + bias + N(0, sd^2 I), snapped to the template.
Hole perturb_position(const WorldXY& p, const Perturbation& pert, std::mt19937_64& rng);

// Left-to-right sweep in 5 mm steps on the row of the observed target;
// fires once per column whose plane shows the observed lesion.
EpisodeLog sweep_episode(BiopsyEnv& env, const Perturbation& pert, std::mt19937_64& rng);

// Every hole whose needle line crosses the observed lesion.
std::vector<Hole> scout_candidates(const BiopsyEnv& env);
std::vector<Hole> scout_candidates(const LabelVolume& vol, const Index3& lesion_shift = {});

// Fires at up to five distinct random candidates.
EpisodeLog scout_episode(BiopsyEnv& env, const Perturbation& pert, std::mt19937_64& rng);

}  // namespace bioptx

#endif  // BIOPTX_STRATEGIES_HPP_
