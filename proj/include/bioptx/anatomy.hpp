#ifndef BIOPTX_ANATOMY_HPP_
#define BIOPTX_ANATOMY_HPP_

#include <array>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "bioptx/vec3.hpp"

namespace bioptx {

// Label bits stored per voxel.
enum Label : std::uint8_t {
  kProstate = 1u << 0,
  kLesion = 1u << 1,
  kRectum = 1u << 2,
};

struct Index3 {
  int x = 0;
  int y = 0;
  int z = 0;
  friend bool operator==(const Index3&, const Index3&) = default;
};

// Dense 3D bitmask grid, x-fastest. Immutable once built; share freely.
class LabelVolume {
 public:
  LabelVolume() = default;
  LabelVolume(Index3 dims, Vec3 spacing, Vec3 origin);
  LabelVolume(Index3 dims, Vec3 spacing, Vec3 origin,
              std::vector<std::uint8_t> voxels);

  const Index3& dims() const { return dims_; }
  const Vec3& spacing() const { return spacing_; }
  const Vec3& origin() const { return origin_; }
  std::size_t size() const { return voxels_.size(); }
  const std::vector<std::uint8_t>& voxels() const { return voxels_; }

  bool contains(int x, int y, int z) const {
    return x >= 0 && y >= 0 && z >= 0 && x < dims_.x && y < dims_.y &&
           z < dims_.z;
  }
  std::size_t offset(int x, int y, int z) const {
    return static_cast<std::size_t>(x) +
           static_cast<std::size_t>(dims_.x) *
               (static_cast<std::size_t>(y) +
                static_cast<std::size_t>(dims_.y) * static_cast<std::size_t>(z));
  }
  std::uint8_t at(int x, int y, int z) const {
    return contains(x, y, z) ? voxels_[offset(x, y, z)] : 0;
  }
  void set(int x, int y, int z, std::uint8_t bits) {
    voxels_[offset(x, y, z)] = bits;
  }

  // World position (mm) of a voxel center.
  Vec3 voxel_center(int x, int y, int z) const {
    return {origin_.x + x * spacing_.x, origin_.y + y * spacing_.y,
            origin_.z + z * spacing_.z};
  }

  // Nearest voxel to a world point; may be out of bounds.
  Index3 nearest_voxel(const Vec3& p) const;

  // Label bits at a world point (nearest voxel), 0 outside the grid.
  std::uint8_t sample(const Vec3& p) const {
    const Index3 v = nearest_voxel(p);
    return at(v.x, v.y, v.z);
  }

  double voxel_volume_mm3() const {
    return spacing_.x * spacing_.y * spacing_.z;
  }
  std::size_t count(std::uint8_t label) const;

  friend bool operator==(const LabelVolume&, const LabelVolume&) = default;

 private:
  Index3 dims_{1, 1, 1};
  Vec3 spacing_{1.0, 1.0, 1.0};
  Vec3 origin_{0.0, 0.0, 0.0};
  std::vector<std::uint8_t> voxels_ = std::vector<std::uint8_t>(1, 0);
};

class AnatomyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Parameters for a synthetic case. All lengths in mm, world frame:
// +x lateral, +y up (template rows), +z needle advance from the template.
struct AnatomySpec {
  Vec3 prostate_semi_axes{25.0, 20.0, 22.5};
  Vec3 prostate_center{0.0, 30.0, 45.0};
  Vec3 lesion_center{0.0, 30.0, 45.0};
  // Sphere radius; ignored when lesion_volume_cc > 0.
  double lesion_radius_mm = 5.0;
  double lesion_volume_cc = 0.0;
  // Optional ellipsoidal lesion: per-axis stretch applied to the radius.
  bool ellipsoidal_lesion = false;
  Vec3 lesion_stretch{1.0, 1.0, 1.0};
  // Rectum: cylinder along z below the prostate.
  double rectum_radius_mm = 8.0;
  Vec3 rectum_center{0.0, -10.0, 45.0};  // z ignored
  Index3 dims{97, 96, 96};
  Vec3 spacing{1.0, 1.0, 1.0};
  Vec3 origin{-48.0, -20.0, 0.0};
  std::uint64_t seed = 0;

  double effective_lesion_radius() const;
};

// Throws AnatomyError when the lesion leaves the prostate or a structure
// leaves the volume.
void validate(const AnatomySpec& spec);

LabelVolume generate_synthetic(const AnatomySpec& spec);

// Radius of a sphere with the given volume in cc.
double sphere_radius_for_cc(double cc);

double lesion_volume_cc(const LabelVolume& vol);

// Mean lesion voxel center in world mm. Throws AnatomyError("no target").
Vec3 lesion_centroid(const LabelVolume& vol);
Vec3 label_centroid(const LabelVolume& vol, std::uint8_t label);

// Shift one label by round(offset / spacing) voxels; voxels shifted out of
// the grid are dropped, other labels are untouched.
Index3 voxel_shift(const LabelVolume& vol, const Vec3& offset_mm);
LabelVolume translate_mask(const LabelVolume& vol, std::uint8_t label,
                           const Vec3& offset_mm);

// ---- BVOL/1 persistence ----

enum class VolumeIoErrc { kIo = 1, kFormat, kHeader, kTruncated, kChecksum };

class VolumeIoError : public std::runtime_error {
 public:
  VolumeIoError(VolumeIoErrc code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  VolumeIoErrc code() const { return code_; }

 private:
  VolumeIoErrc code_;
};

std::vector<std::uint8_t> encode_volume(const LabelVolume& vol);
LabelVolume decode_volume(const std::vector<std::uint8_t>& bytes);
void save_volume(const LabelVolume& vol, const std::filesystem::path& path);
LabelVolume load_volume(const std::filesystem::path& path);

}  // namespace bioptx

#endif  // BIOPTX_ANATOMY_HPP_
