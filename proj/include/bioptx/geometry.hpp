#ifndef BIOPTX_GEOMETRY_HPP_
#define BIOPTX_GEOMETRY_HPP_

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "bioptx/anatomy.hpp"
#include "bioptx/vec3.hpp"

namespace bioptx {

inline constexpr int kGridSize = 13;
inline constexpr int kGridCenter = 6;
inline constexpr double kHolePitchMm = 5.0;

class GeometryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Template hole: i = column (lateral), j = row (vertical), both in [0, 12].
struct Hole {
  int i = kGridCenter;
  int j = 0;
  friend bool operator==(const Hole&, const Hole&) = default;
};

inline bool is_valid(const Hole& h) {
  return h.i >= 0 && h.i < kGridSize && h.j >= 0 && h.j < kGridSize;
}

struct WorldXY {
  double x = 0.0;
  double y = 0.0;
};

// x = (i - 6) * 5, y = j * 5. Throws GeometryError for holes off the grid.
WorldXY grid_to_world(const Hole& hole);

// Nearest hole to a template-plane point, clamped to the grid.
Hole snap_to_grid(const WorldXY& p);

// Transrectal probe: axis parallel to +z at (0, -radius); its top touches
// the bottom template row.
struct ProbeModel {
  double radius_mm = 10.0;
};

// Rotation of the sagittal imaging plane about the probe axis, measured from
// vertical, such that the plane contains the needle line of `hole`.
double plane_angle(const Hole& hole, const ProbeModel& probe = {});

struct PlaneWindow {
  double depth_mm = 96.0;   // along +z from the template
  double height_mm = 96.0;  // radial, starting at the probe surface
  int res_u = 64;           // depth pixels
  int res_v = 64;           // radial pixels

  double pixel_depth_mm() const { return depth_mm / res_u; }
  double pixel_height_mm() const { return height_mm / res_v; }
};

// Two-channel binary image, channel-major then row (v) then column (u).
struct PlaneImage {
  static constexpr int kProstateChannel = 0;
  static constexpr int kLesionChannel = 1;

  int res_u = 0;
  int res_v = 0;
  std::vector<std::uint8_t> pixels;

  PlaneImage() = default;
  PlaneImage(int u, int v) : res_u(u), res_v(v), pixels(2 * static_cast<std::size_t>(u) * v, 0) {}

  std::size_t index(int channel, int v, int u) const {
    return (static_cast<std::size_t>(channel) * res_v + v) * res_u + u;
  }
  std::uint8_t at(int channel, int v, int u) const { return pixels[index(channel, v, u)]; }
  std::uint8_t& at(int channel, int v, int u) { return pixels[index(channel, v, u)]; }
  std::size_t count(int channel) const;

  friend bool operator==(const PlaneImage&, const PlaneImage&) = default;
};

// World point of a (possibly fractional) pixel coordinate in the plane at
// angle `theta`. Pixel centers sit at integer + 0.5.
Vec3 plane_point(double theta, double u_px, double v_px, const PlaneWindow& window,
                 const ProbeModel& probe = {});

// Nearest-voxel resampling of the (prostate, lesion) labels on the oblique
// plane. Each pixel ORs a sub-grid of samples no coarser than the voxel
// spacing so that any voxel centered on the plane shows up. `lesion_shift`
// displaces the lesion label by whole voxels (observed vs true lesion).
PlaneImage resample_plane(const LabelVolume& vol, double theta,
                          const PlaneWindow& window = {},
                          const ProbeModel& probe = {},
                          const Index3& lesion_shift = {});

struct Line {
  Vec3 point;
  Vec3 direction;  // unit
};

Line needle_line(const Hole& hole);

double point_line_distance(const Vec3& p, const Line& line);

// Biopsy core: a segment of the needle line of `hole` centered at depth
// `center_depth_mm`.
struct CoreSegment {
  Hole hole;
  double center_depth_mm = 0.0;
  double length_mm = 20.0;

  Vec3 start() const;
  Vec3 end() const;
};

// Label lookup with an optional whole-voxel displacement of the label.
bool has_label(const LabelVolume& vol, std::uint8_t label, const Vec3& p,
               const Index3& shift = {});

// Length of the core inside `label`, by uniform midpoint sampling:
// (hits / samples) * length.
double segment_mask_length(const LabelVolume& vol, std::uint8_t label,
                           const CoreSegment& seg, double step_mm = 0.25,
                           const Index3& shift = {});

// True iff any sample of the line inside the volume's z-extent carries the
// label. Sampling step is half the smallest voxel spacing.
bool line_intersects_mask(const LabelVolume& vol, std::uint8_t label,
                          const Line& line, const Index3& shift = {});

}  // namespace bioptx

#endif  // BIOPTX_GEOMETRY_HPP_
