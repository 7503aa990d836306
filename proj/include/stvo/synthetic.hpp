#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "stvo/assemble.hpp"
#include "stvo/camera.hpp"
#include "stvo/dataio.hpp"
#include "stvo/errors.hpp"
#include "stvo/grid.hpp"
#include "stvo/se3.hpp"

namespace stvo {

enum class SceneGeometry { kPlane, kSlanted, kSmooth };

/// World rows with Y inside [y_min, y_max] are painted a constant colour.
struct TexturelessBand {
  double y_min = 0.0;
  double y_max = 0.0;
  double value = 0.5;
};

/**
 * Textured surface seen by a moving stereo rig.
 *
 * Surfaces are height fields Z(X, Y) in world coordinates:
 * plane Z = depth, slanted Z = depth + slope_x X + slope_y Y, smooth
 * Z = depth + amplitude * h(X, Y) with h a seeded sum of three sinusoids.
 * The texture is value noise over world (X, Y). `path` holds the
 * camera-to-world twist of the left camera per frame; the right camera
 * sits `baseline` meters along the left camera's x axis.
 */
struct SyntheticScene {
  SceneGeometry geometry = SceneGeometry::kPlane;
  double depth = 10.0;
  double slope_x = 0.0;
  double slope_y = 0.0;
  double amplitude = 0.0;
  double wavelength = 10.0;

  std::uint64_t seed = 1;
  int octaves = 2;
  /// World size of the coarsest noise cell, meters.
  double cell_size = 2.4;
  std::optional<TexturelessBand> band;

  std::vector<Twist> path;
  int width = 96;
  int height = 64;
  Intrinsics intrinsics{80.0, 80.0, 47.5, 31.5};
  double baseline = 0.5;
  double z_min = 0.5;
  double z_max = 100.0;

  void validate() const {
    intrinsics.validate();
    if (width < 2 || height < 2) throw DegenerateInputError("SyntheticScene: image smaller than 2x2");
    if (!(baseline > 0.0)) throw DomainError("SyntheticScene: baseline must be positive");
    if (path.empty()) throw DegenerateInputError("SyntheticScene: empty camera path");
    if (octaves < 1 || !(cell_size > 0.0)) throw DomainError("SyntheticScene: bad texture spec");
    if (!(z_min > 0.0) || !(z_max > z_min)) throw DomainError("SyntheticScene: bad depth range");
    if (geometry == SceneGeometry::kSmooth && !(wavelength > 0.0)) {
      throw DomainError("SyntheticScene: wavelength must be positive");
    }
  }
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline double lattice_value(std::uint64_t seed, std::int64_t ix, std::int64_t iy) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ static_cast<std::uint64_t>(ix));
  h = splitmix64(h ^ static_cast<std::uint64_t>(iy));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

inline double fade(double t) { return t * t * t * (t * (t * 6.0 - 15.0) + 10.0); }

inline double value_noise(std::uint64_t seed, double x, double y) {
  const double fx = std::floor(x), fy = std::floor(y);
  const auto ix = static_cast<std::int64_t>(fx), iy = static_cast<std::int64_t>(fy);
  const double sx = fade(x - fx), sy = fade(y - fy);
  const double a = lattice_value(seed, ix, iy), b = lattice_value(seed, ix + 1, iy);
  const double c = lattice_value(seed, ix, iy + 1), d = lattice_value(seed, ix + 1, iy + 1);
  return (a + (b - a) * sx) * (1.0 - sy) + (c + (d - c) * sx) * sy;
}

struct Wave {
  double kx, ky, phase;
};

inline std::vector<Wave> smooth_waves(const SyntheticScene& s) {
  std::mt19937_64 rng(s.seed ^ 0x5eedf00dull);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
  std::vector<Wave> w;
  for (int i = 0; i < 3; ++i) {
    const double th = angle(rng);
    const double k = 2.0 * std::numbers::pi / (s.wavelength * (1.0 + 0.5 * i));
    w.push_back({k * std::cos(th), k * std::sin(th), angle(rng)});
  }
  return w;
}

class SurfaceModel {
 public:
  explicit SurfaceModel(const SyntheticScene& s) : s_(s) {
    if (s.geometry == SceneGeometry::kSmooth) waves_ = smooth_waves(s);
  }

  double height(double x, double y) const {
    switch (s_.geometry) {
      case SceneGeometry::kPlane: return s_.depth;
      case SceneGeometry::kSlanted: return s_.depth + s_.slope_x * x + s_.slope_y * y;
      case SceneGeometry::kSmooth: {
        double h = 0.0;
        for (const auto& w : waves_) h += std::sin(w.kx * x + w.ky * y + w.phase);
        return s_.depth + s_.amplitude * h / 3.0;
      }
    }
    return s_.depth;
  }

  /// Ray parameter of the first hit; the camera must be in front of the surface.
  double intersect(const Vec3& o, const Vec3& d) const {
    auto f = [&](double t) {
      const Vec3 p = o + t * d;
      return p.z() - height(p.x(), p.y());
    };
    if (!(f(0.0) < 0.0)) throw DomainError("render_synthetic: camera is inside or behind the surface");
    if (s_.geometry != SceneGeometry::kSmooth) {
      // Z - sx X - sy Y = depth is linear in t.
      const double denom = d.z() - s_.slope_x * d.x() - s_.slope_y * d.y();
      if (!(denom > 0.0)) throw DomainError("render_synthetic: a pixel ray misses the surface");
      return -f(0.0) / denom;
    }
    const double reach = s_.depth + std::abs(s_.amplitude) - o.z();
    if (!(d.z() > 0.0) || !(reach > 0.0)) throw DomainError("render_synthetic: a pixel ray misses the surface");
    double lo = 0.0, hi = reach / d.z();
    if (!(f(hi) >= 0.0)) throw DomainError("render_synthetic: a pixel ray misses the surface");
    for (int it = 0; it < 80; ++it) {
      const double mid = 0.5 * (lo + hi);
      (f(mid) < 0.0 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
  }

 private:
  const SyntheticScene& s_;
  std::vector<Wave> waves_;
};

inline double texture_value(const SyntheticScene& s, int channel, double x, double y) {
  if (s.band && y >= s.band->y_min && y <= s.band->y_max) return s.band->value;
  double sum = 0.0, norm = 0.0, amp = 1.0, cell = s.cell_size;
  for (int o = 0; o < s.octaves; ++o) {
    const std::uint64_t key = splitmix64(s.seed * 131 + static_cast<std::uint64_t>(channel) * 17 + o);
    sum += amp * value_noise(key, x / cell, y / cell);
    norm += amp;
    amp *= 0.5;
    cell *= 0.5;
  }
  return sum / norm;
}

struct RenderedView {
  ImageGrid image;
  ImageGrid depth;
};

inline RenderedView render_view(const SyntheticScene& s, const SurfaceModel& surface,
                                const SE3Transform& cam_to_world) {
  RenderedView out{ImageGrid(s.height, s.width, 3, 0.0, ValueRange::kNormalized),
                   ImageGrid(s.height, s.width, 1, 0.0, ValueRange::kMeters)};
  const Intrinsics& k = s.intrinsics;
  for (int y = 0; y < s.height; ++y) {
    for (int x = 0; x < s.width; ++x) {
      const Vec3 ray_cam((x - k.cx) / k.fx, (y - k.cy) / k.fy, 1.0);
      const Vec3 dir = cam_to_world.rotation * ray_cam;
      const double t = surface.intersect(cam_to_world.translation, dir);
      // ray_cam has unit z, so the ray parameter is the camera-frame depth.
      if (t < s.z_min || t > s.z_max) {
        throw DomainError("render_synthetic: depth " + std::to_string(t) + " outside the scene range");
      }
      const Vec3 hit = cam_to_world.translation + t * dir;
      out.depth(y, x) = t;
      for (int c = 0; c < 3; ++c) out.image(y, x, c) = texture_value(s, c, hit.x(), hit.y());
    }
  }
  return out;
}

}  // namespace detail

/// Renders every frame of the path with left/right images, left depth and left pose.
inline StereoSequence render_sequence(const SyntheticScene& scene) {
  scene.validate();
  const detail::SurfaceModel surface(scene);
  StereoSequence seq;
  seq.calibration = {scene.intrinsics, scene.baseline};
  const SE3Transform right_offset = SE3Transform::from_translation({scene.baseline, 0.0, 0.0});
  for (std::size_t i = 0; i < scene.path.size(); ++i) {
    const SE3Transform left_pose = twist_to_transform(scene.path[i]);
    auto left = detail::render_view(scene, surface, left_pose);
    auto right = detail::render_view(scene, surface, compose(left_pose, right_offset));
    StereoFrame f;
    f.index = static_cast<int>(i);
    f.left = std::move(left.image);
    f.right = std::move(right.image);
    f.depth = std::move(left.depth);
    f.pose = left_pose;
    seq.frames.push_back(std::move(f));
  }
  seq.manifest["seed"] = std::to_string(scene.seed);
  return seq;
}

/// Training instances with ground-truth depth and temporal pose attached.
inline std::vector<TrainingInstance> render_synthetic(const SyntheticScene& scene) {
  return assemble_instances(render_sequence(scene));
}

inline std::string_view to_string(SceneGeometry g) {
  switch (g) {
    case SceneGeometry::kPlane: return "plane";
    case SceneGeometry::kSlanted: return "slanted";
    case SceneGeometry::kSmooth: return "smooth";
  }
  return "?";
}

/**
 * Named scenes: "plane", "slanted", "smooth" and "textureless-band".
 * The left camera moves 0.5 m forward per frame with a small seeded wobble
 * (none for the band scene, which keeps the band on fixed image rows).
 */
inline SyntheticScene synthetic_preset(std::string_view name, int frames, std::uint64_t seed) {
  if (frames < 1) throw DomainError("synthetic_preset: frames must be >= 1");
  SyntheticScene s;
  s.seed = seed;
  bool wobble = true;
  if (name == "plane") {
    s.geometry = SceneGeometry::kPlane;
  } else if (name == "slanted") {
    s.geometry = SceneGeometry::kSlanted;
    s.slope_x = 0.15;
    s.slope_y = -0.3;
  } else if (name == "smooth") {
    s.geometry = SceneGeometry::kSmooth;
    s.amplitude = 0.8;
    s.wavelength = 10.0;
  } else if (name == "textureless-band") {
    s.geometry = SceneGeometry::kPlane;
    s.depth = 8.0;
    s.cell_size = 1.2;
    // Image rows 29..34 at the first frame (8 m, fy = 80).
    s.band = TexturelessBand{-0.3, 0.3, 0.5};
    wobble = false;
  } else {
    throw DomainError("synthetic_preset: unknown preset '" + std::string(name) + "'");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> jitter(-1.0, 1.0);
  const double deg = std::numbers::pi / 180.0;
  for (int k = 0; k < frames; ++k) {
    Vec3 u = Vec3::Zero(), v(0.0, 0.0, 0.5 * k);
    if (wobble && k > 0) {
      u = Vec3(jitter(rng), jitter(rng), jitter(rng)) * (0.5 * deg);
      v += Vec3(jitter(rng), jitter(rng), 0.0) * 0.05;
    }
    s.path.emplace_back(u, v);
  }
  return s;
}

/**
 * Toy training set: `sequences` rendered sequences of `frames` frames,
 * cycling through the plane, slanted and smooth presets with seeds
 * seed, seed + 1, ... Each sequence contributes frames - 1 instances.
 */
inline std::vector<TrainingInstance> synthetic_dataset(std::uint64_t seed, int sequences, int frames) {
  static constexpr std::string_view kPresets[] = {"plane", "slanted", "smooth"};
  std::vector<TrainingInstance> out;
  for (int s = 0; s < sequences; ++s) {
    auto part = render_synthetic(synthetic_preset(kPresets[s % 3], frames, seed + static_cast<std::uint64_t>(s)));
    for (auto& inst : part) out.push_back(std::move(inst));
  }
  return out;
}

}  // namespace stvo
