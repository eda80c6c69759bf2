#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <set>

#include "bioptx/geometry.hpp"

using namespace bioptx;

namespace {

// Default-frame volume with a single sphere of the given label bits.
LabelVolume sphere_volume(const Vec3& c, double r, std::uint8_t bits = kProstate | kLesion) {
  LabelVolume v({97, 96, 96}, {1, 1, 1}, {-48, -20, 0});
  for (int z = 0; z < 96; ++z)
    for (int y = 0; y < 96; ++y)
      for (int x = 0; x < 97; ++x) {
        const Vec3 p = v.voxel_center(x, y, z);
        if ((p - c).norm() <= r) v.set(x, y, z, bits);
      }
  return v;
}

// Exact length of a z-parallel line segment inside the union of labelled
// voxel cubes (slab intersection per voxel).
double voxel_chord_oracle(const LabelVolume& v, std::uint8_t label, double x, double y,
                          double z0, double z1) {
  double total = 0.0;
  const Vec3& sp = v.spacing();
  for (int zi = 0; zi < v.dims().z; ++zi)
    for (int yi = 0; yi < v.dims().y; ++yi)
      for (int xi = 0; xi < v.dims().x; ++xi) {
        if ((v.at(xi, yi, zi) & label) == 0) continue;
        const Vec3 c = v.voxel_center(xi, yi, zi);
        if (std::abs(x - c.x) >= 0.5 * sp.x || std::abs(y - c.y) >= 0.5 * sp.y) continue;
        const double lo = std::max(z0, c.z - 0.5 * sp.z);
        const double hi = std::min(z1, c.z + 0.5 * sp.z);
        if (hi > lo) total += hi - lo;
      }
  return total;
}

}  // namespace

TEST_CASE("grid_to_world") {
  auto w = grid_to_world({6, 0});
  CHECK(w.x == 0.0);
  CHECK(w.y == 0.0);
  w = grid_to_world({0, 0});
  CHECK(w.x == -30.0);
  CHECK(w.y == 0.0);
  w = grid_to_world({12, 12});
  CHECK(w.x == 30.0);
  CHECK(w.y == 60.0);
  CHECK_THROWS_AS(grid_to_world({13, 0}), GeometryError);
  CHECK_THROWS_AS(grid_to_world({0, -1}), GeometryError);
}

TEST_CASE("grid is injective with 5 mm neighbours") {
  std::set<std::pair<double, double>> seen;
  for (int i = 0; i < kGridSize; ++i)
    for (int j = 0; j < kGridSize; ++j) {
      const auto w = grid_to_world({i, j});
      CHECK(seen.insert({w.x, w.y}).second);
      if (i + 1 < kGridSize) CHECK(grid_to_world({i + 1, j}).x - w.x == 5.0);
      if (j + 1 < kGridSize) CHECK(grid_to_world({i, j + 1}).y - w.y == 5.0);
      CHECK(snap_to_grid(w) == Hole{i, j});
    }
  CHECK(seen.size() == 169);
}

TEST_CASE("plane_angle") {
  CHECK(plane_angle({6, 0}) == 0.0);
  CHECK(plane_angle({12, 0}) == doctest::Approx(1.2490457723982544).epsilon(1e-12));
  for (int k = 1; k <= 6; ++k)
    for (int j = 0; j < kGridSize; ++j)
      CHECK(plane_angle({6 - k, j}) == doctest::Approx(-plane_angle({6 + k, j})));
}

TEST_CASE("every needle line lies in its imaging plane") {
  const ProbeModel probe;
  for (int i = 0; i < kGridSize; ++i)
    for (int j = 0; j < kGridSize; ++j) {
      const double th = plane_angle({i, j}, probe);
      const Line l = needle_line({i, j});
      for (const double z : {0.0, 17.5, 60.0, 200.0}) {
        const Vec3 p = l.point + l.direction * z;
        const double dist = std::abs(p.x * std::cos(th) - (p.y + probe.radius_mm) * std::sin(th));
        REQUIRE(dist < 1e-9);
      }
    }
}

TEST_CASE("resample_plane basics") {
  const LabelVolume empty({97, 96, 96}, {1, 1, 1}, {-48, -20, 0});
  const PlaneImage img = resample_plane(empty, 0.3);
  CHECK(img.res_u == 64);
  CHECK(img.res_v == 64);
  CHECK(img.count(0) == 0);
  CHECK(img.count(1) == 0);

  // r = 5 mm disc cut by the plane: pi * 25 / 1.5^2 = 34.9 pixels. The
  // center is off the voxel lattice in y and z.
  const LabelVolume s = sphere_volume({0.0, 30.25, 45.25}, 5.0);
  const double expected = std::numbers::pi * 25.0 / 2.25;
  CHECK(expected == doctest::Approx(34.9).epsilon(1e-3));
  const auto n = static_cast<double>(resample_plane(s, 0.0).count(PlaneImage::kLesionChannel));
  CHECK(n >= 0.8 * expected);
  CHECK(n <= 1.2 * expected);
}

TEST_CASE("mirroring the volume in x mirrors the plane angle") {
  const LabelVolume s = sphere_volume({7.3, 28.0, 40.0}, 6.0);
  const LabelVolume big = sphere_volume({-4.0, 35.0, 50.0}, 12.0, kProstate);
  std::vector<std::uint8_t> vox(s.voxels());
  for (std::size_t k = 0; k < vox.size(); ++k) vox[k] |= big.voxels()[k];
  const LabelVolume v(s.dims(), s.spacing(), s.origin(), vox);
  LabelVolume m(v.dims(), v.spacing(), v.origin());
  for (int z = 0; z < 96; ++z)
    for (int y = 0; y < 96; ++y)
      for (int x = 0; x < 97; ++x) m.set(96 - x, y, z, v.at(x, y, z));
  for (const double th : {0.1, 0.4, 0.9}) {
    CHECK(resample_plane(m, -th) == resample_plane(v, th));
  }
}

TEST_CASE("a voxel centered on the plane shows up in the image") {
  const ProbeModel probe;
  const PlaneWindow win;
  for (const Hole h : {Hole{6, 3}, Hole{7, 2}, Hole{9, 6}, Hole{2, 10}, Hole{12, 0}}) {
    const auto w = grid_to_world(h);
    const int dx = static_cast<int>(w.x), dy = static_cast<int>(w.y + probe.radius_mm);
    const int g = std::gcd(std::abs(dx), dy);
    const double th = plane_angle(h, probe);
    for (int m = 1; m * dy / g <= 80; ++m) {
      const Vec3 p{static_cast<double>(m * dx / g), m * dy / g - probe.radius_mm, 33.0};
      const double rho = std::hypot(p.x, p.y + probe.radius_mm);
      if (rho < probe.radius_mm || rho > probe.radius_mm + win.height_mm) continue;
      LabelVolume v({97, 96, 96}, {1, 1, 1}, {-48, -20, 0});
      const Index3 idx = v.nearest_voxel(p);
      if (!v.contains(idx.x, idx.y, idx.z)) continue;
      v.set(idx.x, idx.y, idx.z, kLesion);
      REQUIRE(resample_plane(v, th, win, probe).count(PlaneImage::kLesionChannel) > 0);
    }
  }
}

TEST_CASE("needle_line and point_line_distance") {
  const Line l = needle_line({6, 0});
  CHECK(l.point == Vec3{0, 0, 0});
  CHECK(l.direction == Vec3{0, 0, 1});
  CHECK(needle_line({3, 11}).direction == Vec3{0, 0, 1});
  CHECK_THROWS_AS(needle_line({-1, 0}), GeometryError);
  CHECK(point_line_distance({10, 0, 0}, l) == 10.0);
  CHECK(point_line_distance({0, 0, 42}, l) == 0.0);
  CHECK(point_line_distance({3, 4, 17}, l) == doctest::Approx(5.0));
  const Line a = needle_line({2, 3}), b = needle_line({5, 7});
  CHECK(point_line_distance(a.point, b) == doctest::Approx(5.0 * std::hypot(3.0, 4.0)));
}

TEST_CASE("segment_mask_length on spheres") {
  // Centers sit half a voxel off the lattice along the needle axis so the
  // voxelized chord is not biased by boundary voxels.
  const LabelVolume s = sphere_volume({0.0, 30.0, 45.5}, 5.0);
  CoreSegment seg{{6, 6}, 45.5, 20.0};
  CHECK(segment_mask_length(s, kLesion, seg) == doctest::Approx(10.0).epsilon(0.05));

  // Line 3 mm off the center: analytic chord 2 sqrt(25 - 9) = 8.
  const LabelVolume off = sphere_volume({3.0, 30.0, 45.5}, 5.0);
  const double measured = segment_mask_length(off, kLesion, seg);
  const double oracle = voxel_chord_oracle(off, kLesion, 0.0, 30.0, 35.5, 55.5);
  CHECK(std::abs(measured - 8.0) <= 0.5);
  CHECK(std::abs(oracle - 8.0) <= 0.5);
  CHECK(std::abs(measured - oracle) <= 0.25);

  CoreSegment far{{0, 0}, 45.0, 20.0};
  CHECK(segment_mask_length(s, kLesion, far) == 0.0);
  CoreSegment zero{{6, 6}, 45.0, 0.0};
  CHECK(segment_mask_length(s, kLesion, zero) == 0.0);
}

TEST_CASE("chord oracle over random spheres") {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> radius(3.0, 12.0);
  std::uniform_real_distribution<double> frac(0.0, 0.95);
  std::uniform_real_distribution<double> ang(0.0, 2.0 * std::numbers::pi);
  std::uniform_int_distribution<int> hole(3, 9);
  for (int trial = 0; trial < 100; ++trial) {
    const Hole h{hole(rng), hole(rng)};
    const auto w = grid_to_world(h);
    const double r = radius(rng);
    const double d = frac(rng) * r;
    const double a = ang(rng);
    const Vec3 c{w.x + d * std::cos(a), w.y + d * std::sin(a), 48.0};
    const LabelVolume v = sphere_volume(c, r);
    const CoreSegment seg{h, 48.0, 30.0};
    const double chord = 2.0 * std::sqrt(r * r - d * d);
    REQUIRE(std::abs(segment_mask_length(v, kLesion, seg) - chord) <= 2.0);
  }
}

TEST_CASE("line_intersects_mask") {
  const LabelVolume s = sphere_volume({0.0, 30.0, 45.0}, 5.0);
  CHECK(line_intersects_mask(s, kLesion, needle_line({6, 6})));
  CHECK_FALSE(line_intersects_mask(s, kLesion, Line{{200, 30, 0}, {0, 0, 1}}));
  // Tangent line at r + spacing.
  CHECK_FALSE(line_intersects_mask(s, kLesion, Line{{6.0, 30, 0}, {0, 0, 1}}));
  CHECK(line_intersects_mask(s, kLesion, Line{{4.0, 30, 0}, {0, 0, 1}}));
  // Shifted label lookup follows the shift.
  CHECK(line_intersects_mask(s, kLesion, Line{{10.0, 30, 0}, {0, 0, 1}}, {10, 0, 0}));
}
