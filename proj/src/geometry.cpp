#include "bioptx/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace bioptx {

WorldXY grid_to_world(const Hole& hole) {
  if (!is_valid(hole)) {
    throw GeometryError("template hole out of range");
  }
  return {(hole.i - kGridCenter) * kHolePitchMm, hole.j * kHolePitchMm};
}

Hole snap_to_grid(const WorldXY& p) {
  const auto i = static_cast<int>(std::lround(p.x / kHolePitchMm)) + kGridCenter;
  const auto j = static_cast<int>(std::lround(p.y / kHolePitchMm));
  return {std::clamp(i, 0, kGridSize - 1), std::clamp(j, 0, kGridSize - 1)};
}

double plane_angle(const Hole& hole, const ProbeModel& probe) {
  const WorldXY w = grid_to_world(hole);
  return std::atan2(w.x, w.y + probe.radius_mm);
}

std::size_t PlaneImage::count(int channel) const {
  const auto first = pixels.begin() + static_cast<std::ptrdiff_t>(index(channel, 0, 0));
  const auto last = first + static_cast<std::ptrdiff_t>(res_u) * res_v;
  return static_cast<std::size_t>(std::count_if(first, last, [](std::uint8_t p) { return p != 0; }));
}

Vec3 plane_point(double theta, double u_px, double v_px, const PlaneWindow& window,
                 const ProbeModel& probe) {
  const double rho = probe.radius_mm + v_px * window.pixel_height_mm();
  const double z = u_px * window.pixel_depth_mm();
  return {rho * std::sin(theta), -probe.radius_mm + rho * std::cos(theta), z};
}

bool has_label(const LabelVolume& vol, std::uint8_t label, const Vec3& p,
               const Index3& shift) {
  const Index3 v = vol.nearest_voxel(p);
  if (!vol.contains(v.x, v.y, v.z)) return false;
  return (vol.at(v.x - shift.x, v.y - shift.y, v.z - shift.z) & label) != 0;
}

PlaneImage resample_plane(const LabelVolume& vol, double theta,
                          const PlaneWindow& window, const ProbeModel& probe,
                          const Index3& lesion_shift) {
  PlaneImage img(window.res_u, window.res_v);
  const Vec3& sp = vol.spacing();
  const double min_spacing = std::min({sp.x, sp.y, sp.z});
  const int sub_u = static_cast<int>(std::floor(window.pixel_depth_mm() / min_spacing)) + 1;
  const int sub_v = static_cast<int>(std::floor(window.pixel_height_mm() / min_spacing)) + 1;
  const double s = std::sin(theta), c = std::cos(theta);

  // Nearest-voxel indices separate: x and y depend only on the radial
  // sample, z only on the depth sample.
  std::vector<Index3> radial(static_cast<std::size_t>(window.res_v) * sub_v);
  for (int v = 0; v < window.res_v; ++v) {
    for (int a = 0; a < sub_v; ++a) {
      const double rho = probe.radius_mm + (v + (a + 0.5) / sub_v) * window.pixel_height_mm();
      radial[v * sub_v + a] = vol.nearest_voxel({rho * s, -probe.radius_mm + rho * c, 0.0});
    }
  }
  std::vector<int> depth(static_cast<std::size_t>(window.res_u) * sub_u);
  for (int u = 0; u < window.res_u; ++u) {
    for (int b = 0; b < sub_u; ++b) {
      depth[u * sub_u + b] =
          vol.nearest_voxel({0.0, 0.0, (u + (b + 0.5) / sub_u) * window.pixel_depth_mm()}).z;
    }
  }

  // Same semantics as has_label(): the sample point must lie in the grid,
  // the shifted lookup reads 0 outside it.
  const Index3& sh = lesion_shift;
  for (int u = 0; u < window.res_u; ++u) {
    for (int v = 0; v < window.res_v; ++v) {
      std::uint8_t prostate = 0, lesion = 0;
      for (int a = 0; a < sub_v && !(prostate && lesion); ++a) {
        const Index3& r = radial[v * sub_v + a];
        for (int b = 0; b < sub_u; ++b) {
          const int z = depth[u * sub_u + b];
          if (!vol.contains(r.x, r.y, z)) continue;
          if (!prostate && (vol.at(r.x, r.y, z) & kProstate)) prostate = 1;
          if (!lesion && (vol.at(r.x - sh.x, r.y - sh.y, z - sh.z) & kLesion)) lesion = 1;
          if (prostate && lesion) break;
        }
      }
      img.at(PlaneImage::kProstateChannel, v, u) = prostate;
      img.at(PlaneImage::kLesionChannel, v, u) = lesion;
    }
  }
  return img;
}

Line needle_line(const Hole& hole) {
  const WorldXY w = grid_to_world(hole);
  return {{w.x, w.y, 0.0}, {0.0, 0.0, 1.0}};
}

double point_line_distance(const Vec3& p, const Line& line) {
  return (p - line.point).cross(line.direction).norm();
}

Vec3 CoreSegment::start() const {
  const WorldXY w = grid_to_world(hole);
  return {w.x, w.y, center_depth_mm - 0.5 * length_mm};
}

Vec3 CoreSegment::end() const {
  const WorldXY w = grid_to_world(hole);
  return {w.x, w.y, center_depth_mm + 0.5 * length_mm};
}

double segment_mask_length(const LabelVolume& vol, std::uint8_t label,
                           const CoreSegment& seg, double step_mm,
                           const Index3& shift) {
  if (!(seg.length_mm > 0.0)) return 0.0;
  if (!(step_mm > 0.0)) throw GeometryError("sampling step must be positive");
  const auto n = static_cast<std::size_t>(std::ceil(seg.length_mm / step_mm));
  const Vec3 a = seg.start();
  const Vec3 d = seg.end() - a;
  std::size_t hits = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const double t = (static_cast<double>(k) + 0.5) / static_cast<double>(n);
    if (has_label(vol, label, a + d * t, shift)) ++hits;
  }
  return seg.length_mm * static_cast<double>(hits) / static_cast<double>(n);
}

bool line_intersects_mask(const LabelVolume& vol, std::uint8_t label,
                          const Line& line, const Index3& shift) {
  const Vec3& sp = vol.spacing();
  const double step = 0.5 * std::min({sp.x, sp.y, sp.z});
  // March over the parameter range where the line crosses the volume's
  // bounding box (slab test per axis).
  const Vec3 lo = vol.origin() - sp * 0.5;
  const Vec3 hi{vol.origin().x + (vol.dims().x - 0.5) * sp.x,
                vol.origin().y + (vol.dims().y - 0.5) * sp.y,
                vol.origin().z + (vol.dims().z - 0.5) * sp.z};
  double t0 = -1e300, t1 = 1e300;
  const double p[3] = {line.point.x, line.point.y, line.point.z};
  const double d[3] = {line.direction.x, line.direction.y, line.direction.z};
  const double l[3] = {lo.x, lo.y, lo.z};
  const double h[3] = {hi.x, hi.y, hi.z};
  for (int k = 0; k < 3; ++k) {
    if (std::abs(d[k]) < 1e-12) {
      if (p[k] < l[k] || p[k] > h[k]) return false;
      continue;
    }
    double a = (l[k] - p[k]) / d[k];
    double b = (h[k] - p[k]) / d[k];
    if (a > b) std::swap(a, b);
    t0 = std::max(t0, a);
    t1 = std::min(t1, b);
  }
  if (t0 > t1) return false;
  for (double t = t0; t <= t1; t += step) {
    if (has_label(vol, label, line.point + line.direction * t, shift)) return true;
  }
  return false;
}

}  // namespace bioptx
