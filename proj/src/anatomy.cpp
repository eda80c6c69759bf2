#include "bioptx/anatomy.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>

#include "json.hpp"

namespace bioptx {

namespace {

constexpr std::array<std::uint8_t, 8> kMagic = {'B', 'V', 'O', 'L',
                                                0x00, 0x01, 0x00, 0x00};

std::size_t voxel_count(const Index3& d) {
  return static_cast<std::size_t>(d.x) * static_cast<std::size_t>(d.y) *
         static_cast<std::size_t>(d.z);
}

void check_geometry(const Index3& dims, const Vec3& spacing) {
  if (dims.x < 1 || dims.y < 1 || dims.z < 1) {
    throw AnatomyError("volume dims must be >= 1");
  }
  if (!(spacing.x > 0.0 && spacing.y > 0.0 && spacing.z > 0.0)) {
    throw AnatomyError("voxel spacing must be positive");
  }
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int k = 0; k < 4; ++k) out.push_back(static_cast<std::uint8_t>(v >> (8 * k)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) |
         (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint32_t crc_of(const std::uint8_t* data, std::size_t n) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; chunk large payloads.
  while (n > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    crc = crc32(crc, data, chunk);
    data += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

bool inside_volume(const AnatomySpec& s, const Vec3& lo, const Vec3& hi) {
  const Vec3 vmin = s.origin - s.spacing * 0.5;
  const Vec3 vmax{s.origin.x + (s.dims.x - 0.5) * s.spacing.x,
                  s.origin.y + (s.dims.y - 0.5) * s.spacing.y,
                  s.origin.z + (s.dims.z - 0.5) * s.spacing.z};
  return lo.x >= vmin.x && lo.y >= vmin.y && lo.z >= vmin.z &&
         hi.x <= vmax.x && hi.y <= vmax.y && hi.z <= vmax.z;
}

}  // namespace

LabelVolume::LabelVolume(Index3 dims, Vec3 spacing, Vec3 origin)
    : dims_(dims), spacing_(spacing), origin_(origin) {
  check_geometry(dims, spacing);
  voxels_.assign(voxel_count(dims), 0);
}

LabelVolume::LabelVolume(Index3 dims, Vec3 spacing, Vec3 origin,
                         std::vector<std::uint8_t> voxels)
    : dims_(dims), spacing_(spacing), origin_(origin), voxels_(std::move(voxels)) {
  check_geometry(dims, spacing);
  if (voxels_.size() != voxel_count(dims)) {
    throw AnatomyError("voxel array length does not match dims");
  }
}

Index3 LabelVolume::nearest_voxel(const Vec3& p) const {
  return {static_cast<int>(std::floor((p.x - origin_.x) / spacing_.x + 0.5)),
          static_cast<int>(std::floor((p.y - origin_.y) / spacing_.y + 0.5)),
          static_cast<int>(std::floor((p.z - origin_.z) / spacing_.z + 0.5))};
}

std::size_t LabelVolume::count(std::uint8_t label) const {
  return static_cast<std::size_t>(std::count_if(
      voxels_.begin(), voxels_.end(),
      [label](std::uint8_t v) { return (v & label) != 0; }));
}

double sphere_radius_for_cc(double cc) {
  return std::cbrt(cc * 1000.0 * 3.0 / (4.0 * std::numbers::pi));
}

double AnatomySpec::effective_lesion_radius() const {
  return lesion_volume_cc > 0.0 ? sphere_radius_for_cc(lesion_volume_cc)
                                : lesion_radius_mm;
}

void validate(const AnatomySpec& s) {
  check_geometry(s.dims, s.spacing);
  const Vec3& a = s.prostate_semi_axes;
  if (!(a.x > 0.0 && a.y > 0.0 && a.z > 0.0)) {
    throw AnatomyError("prostate semi-axes must be positive");
  }
  const double r = s.effective_lesion_radius();
  if (r < 0.0) throw AnatomyError("lesion radius must be non-negative");
  if (!inside_volume(s, s.prostate_center - a, s.prostate_center + a)) {
    throw AnatomyError("prostate exceeds volume bounds");
  }
  const Vec3 rc{s.rectum_center.x, s.rectum_center.y, 0.0};
  if (s.rectum_radius_mm > 0.0 &&
      !inside_volume(s,
                     {rc.x - s.rectum_radius_mm, rc.y - s.rectum_radius_mm,
                      s.origin.z},
                     {rc.x + s.rectum_radius_mm, rc.y + s.rectum_radius_mm,
                      s.origin.z})) {
    throw AnatomyError("rectum exceeds volume bounds");
  }
  if (r > 0.0) {
    const Vec3 st = s.ellipsoidal_lesion ? s.lesion_stretch : Vec3{1, 1, 1};
    const Vec3 semi{r * st.x, r * st.y, r * st.z};
    // Every sampled surface point of the lesion must lie in the prostate.
    constexpr int kSteps = 48;
    for (int it = 0; it <= kSteps; ++it) {
      const double th = std::numbers::pi * it / kSteps;
      for (int ip = 0; ip < 2 * kSteps; ++ip) {
        const double ph = std::numbers::pi * ip / kSteps;
        const Vec3 p{s.lesion_center.x + semi.x * std::sin(th) * std::cos(ph),
                     s.lesion_center.y + semi.y * std::sin(th) * std::sin(ph),
                     s.lesion_center.z + semi.z * std::cos(th)};
        const Vec3 q = p - s.prostate_center;
        const double e = (q.x * q.x) / (a.x * a.x) + (q.y * q.y) / (a.y * a.y) +
                         (q.z * q.z) / (a.z * a.z);
        if (e > 1.0) throw AnatomyError("lesion not inside prostate");
      }
    }
  }
}

LabelVolume generate_synthetic(const AnatomySpec& s) {
  validate(s);
  LabelVolume vol(s.dims, s.spacing, s.origin);
  const Vec3& a = s.prostate_semi_axes;
  const double r = s.effective_lesion_radius();
  const Vec3 st = s.ellipsoidal_lesion ? s.lesion_stretch : Vec3{1, 1, 1};
  const Vec3 ls{r * st.x, r * st.y, r * st.z};
  for (int z = 0; z < s.dims.z; ++z) {
    for (int y = 0; y < s.dims.y; ++y) {
      for (int x = 0; x < s.dims.x; ++x) {
        const Vec3 p = vol.voxel_center(x, y, z);
        std::uint8_t bits = 0;
        const Vec3 q = p - s.prostate_center;
        if ((q.x * q.x) / (a.x * a.x) + (q.y * q.y) / (a.y * a.y) +
                (q.z * q.z) / (a.z * a.z) <=
            1.0) {
          bits |= kProstate;
          if (r > 0.0) {
            const Vec3 d = p - s.lesion_center;
            if ((d.x * d.x) / (ls.x * ls.x) + (d.y * d.y) / (ls.y * ls.y) +
                    (d.z * d.z) / (ls.z * ls.z) <=
                1.0) {
              bits |= kLesion;
            }
          }
        }
        const double rx = p.x - s.rectum_center.x;
        const double ry = p.y - s.rectum_center.y;
        if (s.rectum_radius_mm > 0.0 &&
            rx * rx + ry * ry <= s.rectum_radius_mm * s.rectum_radius_mm) {
          bits |= kRectum;
        }
        if (bits != 0) vol.set(x, y, z, bits);
      }
    }
  }
  return vol;
}

double lesion_volume_cc(const LabelVolume& vol) {
  return static_cast<double>(vol.count(kLesion)) * vol.voxel_volume_mm3() /
         1000.0;
}

Vec3 label_centroid(const LabelVolume& vol, std::uint8_t label) {
  const Index3& d = vol.dims();
  double sx = 0.0, sy = 0.0, sz = 0.0;
  std::size_t n = 0;
  const auto& vox = vol.voxels();
  std::size_t k = 0;
  for (int z = 0; z < d.z; ++z) {
    for (int y = 0; y < d.y; ++y) {
      for (int x = 0; x < d.x; ++x, ++k) {
        if (vox[k] & label) {
          sx += x;
          sy += y;
          sz += z;
          ++n;
        }
      }
    }
  }
  if (n == 0) throw AnatomyError("no target");
  const double inv = 1.0 / static_cast<double>(n);
  return {vol.origin().x + sx * inv * vol.spacing().x,
          vol.origin().y + sy * inv * vol.spacing().y,
          vol.origin().z + sz * inv * vol.spacing().z};
}

Vec3 lesion_centroid(const LabelVolume& vol) {
  return label_centroid(vol, kLesion);
}

Index3 voxel_shift(const LabelVolume& vol, const Vec3& offset_mm) {
  return {static_cast<int>(std::lround(offset_mm.x / vol.spacing().x)),
          static_cast<int>(std::lround(offset_mm.y / vol.spacing().y)),
          static_cast<int>(std::lround(offset_mm.z / vol.spacing().z))};
}

LabelVolume translate_mask(const LabelVolume& vol, std::uint8_t label,
                           const Vec3& offset_mm) {
  const Index3 s = voxel_shift(vol, offset_mm);
  std::vector<std::uint8_t> out = vol.voxels();
  const auto keep = static_cast<std::uint8_t>(~label);
  for (auto& v : out) v &= keep;
  const Index3& d = vol.dims();
  for (int z = 0; z < d.z; ++z) {
    for (int y = 0; y < d.y; ++y) {
      for (int x = 0; x < d.x; ++x) {
        if ((vol.voxels()[vol.offset(x, y, z)] & label) == 0) continue;
        const int tx = x + s.x, ty = y + s.y, tz = z + s.z;
        if (!vol.contains(tx, ty, tz)) continue;
        out[vol.offset(tx, ty, tz)] |= label;
      }
    }
  }
  return LabelVolume(vol.dims(), vol.spacing(), vol.origin(), std::move(out));
}

std::vector<std::uint8_t> encode_volume(const LabelVolume& vol) {
  const nlohmann::json header = {
      {"dims", {vol.dims().x, vol.dims().y, vol.dims().z}},
      {"spacing_mm", {vol.spacing().x, vol.spacing().y, vol.spacing().z}},
      {"origin_mm", {vol.origin().x, vol.origin().y, vol.origin().z}},
      {"labels", {{"prostate", 1}, {"lesion", 2}, {"rectum", 4}}}};
  const std::string text = header.dump();
  std::vector<std::uint8_t> out(kMagic.begin(), kMagic.end());
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  out.insert(out.end(), vol.voxels().begin(), vol.voxels().end());
  put_u32(out, crc_of(vol.voxels().data(), vol.voxels().size()));
  return out;
}

LabelVolume decode_volume(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < kMagic.size() ||
      !std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) {
    throw VolumeIoError(VolumeIoErrc::kFormat, "not a BVOL/1 file");
  }
  std::size_t pos = kMagic.size();
  if (bytes.size() < pos + 4) {
    throw VolumeIoError(VolumeIoErrc::kTruncated, "missing header length");
  }
  const std::uint32_t hlen = get_u32(bytes.data() + pos);
  pos += 4;
  if (bytes.size() < pos + hlen) {
    throw VolumeIoError(VolumeIoErrc::kTruncated, "truncated header");
  }
  Index3 dims;
  Vec3 spacing, origin;
  try {
    const auto h = nlohmann::json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                                         bytes.begin() + static_cast<std::ptrdiff_t>(pos + hlen));
    const auto& d = h.at("dims");
    const auto& sp = h.at("spacing_mm");
    const auto& o = h.at("origin_mm");
    if (d.size() != 3 || sp.size() != 3 || o.size() != 3) {
      throw VolumeIoError(VolumeIoErrc::kHeader, "header arrays must have 3 entries");
    }
    dims = {d[0].get<int>(), d[1].get<int>(), d[2].get<int>()};
    spacing = {sp[0].get<double>(), sp[1].get<double>(), sp[2].get<double>()};
    origin = {o[0].get<double>(), o[1].get<double>(), o[2].get<double>()};
    if (h.contains("labels")) {
      const auto& l = h.at("labels");
      if (l.value("prostate", 1) != 1 || l.value("lesion", 2) != 2 ||
          l.value("rectum", 4) != 4) {
        throw VolumeIoError(VolumeIoErrc::kHeader, "unsupported label mapping");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw VolumeIoError(VolumeIoErrc::kHeader,
                        std::string("malformed header: ") + e.what());
  }
  if (dims.x < 1 || dims.y < 1 || dims.z < 1 || !(spacing.x > 0) ||
      !(spacing.y > 0) || !(spacing.z > 0)) {
    throw VolumeIoError(VolumeIoErrc::kHeader, "invalid dims or spacing");
  }
  pos += hlen;
  const std::size_t n = voxel_count(dims);
  if (bytes.size() < pos + n + 4) {
    throw VolumeIoError(VolumeIoErrc::kTruncated, "truncated payload");
  }
  const std::uint32_t stored = get_u32(bytes.data() + pos + n);
  if (stored != crc_of(bytes.data() + pos, n)) {
    throw VolumeIoError(VolumeIoErrc::kChecksum, "payload CRC32 mismatch");
  }
  std::vector<std::uint8_t> vox(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                                bytes.begin() + static_cast<std::ptrdiff_t>(pos + n));
  return LabelVolume(dims, spacing, origin, std::move(vox));
}

void save_volume(const LabelVolume& vol, const std::filesystem::path& path) {
  const auto bytes = encode_volume(vol);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw VolumeIoError(VolumeIoErrc::kIo, "cannot open " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw VolumeIoError(VolumeIoErrc::kIo, "write failed: " + path.string());
}

LabelVolume load_volume(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw VolumeIoError(VolumeIoErrc::kIo, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_volume(bytes);
}

}  // namespace bioptx
