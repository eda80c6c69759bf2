#ifndef BIOPTX_TESTS_FIXTURES_HPP_
#define BIOPTX_TESTS_FIXTURES_HPP_

#include <memory>

#include "bioptx/anatomy.hpp"
#include "bioptx/env.hpp"

namespace bioptx::testing {

inline std::shared_ptr<const LabelVolume> make_case(const Vec3& lesion_center, double radius) {
  AnatomySpec s;
  s.lesion_center = lesion_center;
  s.lesion_radius_mm = radius;
  return std::make_shared<const LabelVolume>(generate_synthetic(s));
}

inline EnvConfig quiet_config() {
  EnvConfig cfg;
  cfg.noise_sd_mm = 0.0;
  cfg.depth_noise_sd_mm = 0.0;
  return cfg;
}

}  // namespace bioptx::testing

#endif  // BIOPTX_TESTS_FIXTURES_HPP_
