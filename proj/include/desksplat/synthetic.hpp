#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <unordered_map>
#include <vector>

#include "desksplat/error.hpp"
#include "desksplat/frontend.hpp"
#include "desksplat/geometry.hpp"
#include "desksplat/image.hpp"
#include "desksplat/metrics.hpp"

namespace desksplat {

/// Smooth procedural texture: each channel is base + amplitude * sin(2 pi f.x + phase).
struct FaceTexture {
  Vec3 base = Vec3::Constant(0.5);
  double amplitude = 0.3;
  std::array<Vec3, 3> frequency{Vec3::Zero(), Vec3::Zero(), Vec3::Zero()};
  Vec3 phase = Vec3::Zero();

  Vec3 at(const Vec3& x) const {
    Vec3 c;
    for (int ch = 0; ch < 3; ++ch) {
      c(ch) = base(ch) + amplitude * std::sin(2.0 * std::numbers::pi * frequency[ch].dot(x) + phase(ch));
    }
    return c.cwiseMax(0.0).cwiseMin(1.0);
  }
};

/// Planar rectangle origin + s * edge_u + t * edge_v, s, t in [0, 1].
struct Face {
  Vec3 origin = Vec3::Zero();
  Vec3 edge_u = Vec3::UnitX();
  Vec3 edge_v = Vec3::UnitY();
  FaceTexture texture;

  Vec3 normal() const { return edge_u.cross(edge_v).normalized(); }
  double area() const { return edge_u.cross(edge_v).norm(); }
};

struct RayHit {
  double distance = std::numeric_limits<double>::infinity();  // ray parameter
  int face = -1;
  Vec3 point = Vec3::Zero();
};

struct FeaturePoint {
  Vec3 position;
  int face = 0;
};

/// Scene made of textured rectangles with known geometry.
struct SyntheticScene {
  std::vector<Face> faces;
  std::vector<FeaturePoint> features;
  Vec3 look_at = Vec3::Zero();

  /// Nearest intersection with parameter > 1e-9 along origin + s * dir.
  RayHit intersect(const Vec3& origin, const Vec3& dir) const {
    RayHit best;
    for (std::size_t f = 0; f < faces.size(); ++f) {
      const Face& face = faces[f];
      const Vec3 n = face.edge_u.cross(face.edge_v);
      const double denom = n.dot(dir);
      if (std::abs(denom) < 1e-14) continue;
      const double s = n.dot(face.origin - origin) / denom;
      if (!(s > 1e-9) || !(s < best.distance)) continue;
      const Vec3 p = origin + s * dir;
      const Vec3 rel = p - face.origin;
      // Solve rel = a * edge_u + b * edge_v in the face plane.
      const double uu = face.edge_u.squaredNorm();
      const double vv = face.edge_v.squaredNorm();
      const double uv = face.edge_u.dot(face.edge_v);
      const double ru = rel.dot(face.edge_u);
      const double rv = rel.dot(face.edge_v);
      const double det = uu * vv - uv * uv;
      const double a = (ru * vv - rv * uv) / det;
      const double b = (rv * uu - ru * uv) / det;
      if (a < 0.0 || a > 1.0 || b < 0.0 || b > 1.0) continue;
      best.distance = s;
      best.face = static_cast<int>(f);
      best.point = p;
    }
    return best;
  }

  /// Z-depth and face seen through pixel coordinate (u, v).
  RayHit cast_pixel(const Pose& pose, const CameraIntrinsics& k, double u, double v) const {
    const Vec3 dir_cam((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0);
    // Unit z in the camera frame, so the ray parameter is the z-depth.
    return intersect(pose.translation, pose.rotation * dir_cam);
  }

  void add_rect(const Vec3& origin, const Vec3& eu, const Vec3& ev, const FaceTexture& tex) {
    faces.push_back({origin, eu, ev, tex});
  }

  /// Oriented box resting on z = 0 (five visible faces, bottom omitted).
  void add_box(const Vec3& base_center, const Vec3& size, double yaw, const FaceTexture& tex) {
    const Mat3 r = Eigen::AngleAxisd(yaw, Vec3::UnitZ()).toRotationMatrix();
    const Vec3 ex = r * Vec3(size.x(), 0, 0);
    const Vec3 ey = r * Vec3(0, size.y(), 0);
    const Vec3 ez(0, 0, size.z());
    const Vec3 o = base_center - 0.5 * ex - 0.5 * ey;
    add_rect(o + ez, ex, ey, tex);     // top
    add_rect(o, ez, ex, tex);          // -y side
    add_rect(o + ey, ex, ez, tex);     // +y side
    add_rect(o, ey, ez, tex);          // -x side
    add_rect(o + ex, ez, ey, tex);     // +x side
  }

  void sample_features(std::size_t count, Rng& rng) {
    std::vector<double> cumulative;
    double total = 0.0;
    for (const auto& f : faces) {
      total += f.area();
      cumulative.push_back(total);
    }
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    features.clear();
    for (std::size_t i = 0; i < count; ++i) {
      const double pick = unit(rng) * total;
      const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), pick);
      const int f = static_cast<int>(std::min<std::ptrdiff_t>(it - cumulative.begin(),
                                                              static_cast<std::ptrdiff_t>(faces.size()) - 1));
      const Face& face = faces[static_cast<std::size_t>(f)];
      const double a = 0.02 + 0.96 * unit(rng);
      const double b = 0.02 + 0.96 * unit(rng);
      features.push_back({face.origin + a * face.edge_u + b * face.edge_v, f});
    }
  }

  /// Desk with two walls and a few boxes; geometry, textures and feature
  /// points all derive from `seed`.
  static SyntheticScene desk(std::uint64_t seed, std::size_t n_features = 800) {
    Rng rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto texture = [&] {
      FaceTexture t;
      t.base = Vec3(0.25 + 0.5 * unit(rng), 0.25 + 0.5 * unit(rng), 0.25 + 0.5 * unit(rng));
      t.amplitude = 0.2;
      for (auto& f : t.frequency) {
        const double mag = 1.5 + 2.5 * unit(rng);
        const double az = 2.0 * std::numbers::pi * unit(rng);
        const double el = std::numbers::pi * (unit(rng) - 0.5);
        f = mag * Vec3(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el));
      }
      t.phase = 2.0 * std::numbers::pi * Vec3(unit(rng), unit(rng), unit(rng));
      return t;
    };

    SyntheticScene s;
    s.look_at = Vec3(0.0, 0.1, 0.15);
    s.add_rect(Vec3(-1.0, -0.8, 0.0), Vec3(2.0, 0, 0), Vec3(0, 1.6, 0), texture());  // desk top
    s.add_rect(Vec3(-1.0, 0.8, 0.0), Vec3(2.0, 0, 0), Vec3(0, 0, 1.2), texture());   // back wall
    s.add_rect(Vec3(-1.0, -0.8, 0.0), Vec3(0, 1.6, 0), Vec3(0, 0, 1.2), texture());  // left wall
    const Vec3 slots[] = {{-0.45, 0.35, 0}, {0.35, 0.4, 0}, {-0.1, -0.1, 0}, {0.5, -0.25, 0}};
    for (const auto& slot : slots) {
      const Vec3 size(0.15 + 0.2 * unit(rng), 0.15 + 0.2 * unit(rng), 0.1 + 0.25 * unit(rng));
      const Vec3 jitter(0.08 * (unit(rng) - 0.5), 0.08 * (unit(rng) - 0.5), 0.0);
      s.add_box(slot + jitter, size, std::numbers::pi * unit(rng), texture());
    }
    s.sample_features(n_features, rng);
    return s;
  }
};

/// Camera that sweeps back and forth around the scene while looking at it.
/// Angular speed changes sign over each period, so motion between distant
/// frames is far from constant.
struct CameraPath {
  Vec3 target = Vec3::Zero();
  double radius = 1.6;
  double height = 0.9;
  double center_azimuth = -std::numbers::pi / 2.0 + 0.35;
  /// Sweep amplitude, radians.
  double sweep = 0.45;
  /// Frames per sweep period.
  double period = 150.0;
  double height_wobble = 0.12;
  double radius_wobble = 0.15;
  double phase = 0.0;
  /// Scales all motion; 0 yields a static camera.
  double motion = 1.0;

  static CameraPath seeded(const Vec3& target, std::uint64_t seed) {
    Rng rng(seed ^ 0x5eedca3e7a11ull);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    CameraPath p;
    p.target = target;
    p.phase = 2.0 * std::numbers::pi * unit(rng);
    p.period = 130.0 + 40.0 * unit(rng);
    p.center_azimuth += 0.2 * (unit(rng) - 0.5);
    return p;
  }

  Pose at(int frame) const {
    const double t = 2.0 * std::numbers::pi * frame / period;
    const double az = center_azimuth + motion * sweep * std::sin(t + phase);
    const double r = radius + motion * radius_wobble * std::sin(2.0 * t + phase);
    const double h = height + motion * height_wobble * std::cos(1.5 * t + phase);
    const Vec3 eye = target + Vec3(r * std::cos(az), r * std::sin(az), h);
    return look_at(eye, target);
  }

  /// World-from-camera pose (x right, y down, z forward) at `eye` facing `target`.
  static Pose look_at(const Vec3& eye, const Vec3& target) {
    const Vec3 forward = (target - eye).normalized();
    const Vec3 right = forward.cross(Vec3::UnitZ()).normalized();
    const Vec3 down = forward.cross(right);
    Pose p;
    p.rotation.col(0) = right;
    p.rotation.col(1) = down;
    p.rotation.col(2) = forward;
    p.translation = eye;
    return p;
  }
};

inline CameraIntrinsics desk_intrinsics(int width = 64, int height = 64) {
  CameraIntrinsics k;
  k.width = width;
  k.height = height;
  k.fx = 60.0 * width / 64.0;
  k.fy = 60.0 * height / 64.0;
  k.cx = 0.5 * width;
  k.cy = 0.5 * height;
  k.near = 0.1;
  k.far = 10.0;
  return k;
}

struct SyntheticOptions {
  CameraIntrinsics intrinsics = desk_intrinsics();
  double frame_rate = 30.0;
  /// Additive Gaussian depth noise, meters.
  double depth_noise = 0.0;
  /// When > 0, pixels whose true depth exceeds this range get a random
  /// multiplicative error in [1.05, 1.35].
  double corrupt_range = 0.0;
  std::uint64_t seed = 0;
};

struct SyntheticSequence {
  std::vector<Frame> frames;
  Trajectory groundtruth;
  /// Pixels whose depth was corrupted, per frame (row-major flags).
  std::vector<std::vector<bool>> corrupted;
};

/// Renders the exact color and depth of the scene seen from `pose`.
inline Frame render_synthetic_frame(const SyntheticScene& scene, const Pose& pose,
                                    const CameraIntrinsics& k, int id, double timestamp) {
  Frame f;
  f.id = id;
  f.timestamp = timestamp;
  f.intrinsics = k;
  f.color = ColorImage(k.width, k.height, Vec3::Zero());
  f.depth = DepthImage(k.width, k.height, 0.0);
  for (int row = 0; row < k.height; ++row) {
    for (int col = 0; col < k.width; ++col) {
      const RayHit hit = scene.cast_pixel(pose, k, col + 0.5, row + 0.5);
      if (hit.face < 0 || !(hit.distance > k.near && hit.distance < k.far)) continue;
      f.depth(row, col) = hit.distance;
      f.color(row, col) = scene.faces[static_cast<std::size_t>(hit.face)].texture.at(hit.point);
    }
  }
  return f;
}

inline SyntheticSequence generate_synthetic(const SyntheticScene& scene, const CameraPath& path, int n_frames,
                                            const SyntheticOptions& opts = {}) {
  SyntheticSequence seq;
  Rng rng(opts.seed ^ 0xd3a7f00dull);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::uniform_real_distribution<double> corrupt(1.05, 1.35);
  for (int i = 0; i < n_frames; ++i) {
    const Pose pose = path.at(i);
    const double ts = i / opts.frame_rate;
    Frame f = render_synthetic_frame(scene, pose, opts.intrinsics, i, ts);
    std::vector<bool> flags(f.depth.size(), false);
    for (std::size_t p = 0; p < f.depth.size(); ++p) {
      double& d = f.depth[p];
      if (d <= 0.0) continue;
      if (opts.corrupt_range > 0.0 && d > opts.corrupt_range) {
        d *= corrupt(rng);
        flags[p] = true;
      }
      if (opts.depth_noise > 0.0) d = std::max(1e-3, d + opts.depth_noise * noise(rng));
    }
    seq.frames.push_back(std::move(f));
    seq.groundtruth.push_back(ts, pose);
    seq.corrupted.push_back(std::move(flags));
  }
  return seq;
}

/// Oracle correspondence provider: projects the scene's feature points into
/// both frames using their true poses. With zero noise and dropout, matches
/// are exact reprojections of points visible in both views, kept only where
/// the 2x2 pixel neighborhood lies on a single face so that depth lookups are
/// exact.
class SyntheticMatcher final : public CorrespondenceProvider {
 public:
  SyntheticMatcher(const SyntheticScene& scene, const Trajectory& truth, double noise_px = 0.0,
                   double dropout = 0.0, std::uint64_t seed = 0)
      : scene_(&scene), noise_px_(noise_px), dropout_(dropout), seed_(seed) {
    for (std::size_t i = 0; i < truth.size(); ++i) poses_[static_cast<int>(i)] = truth[i].pose;
  }

  /// Poses keyed by frame id.
  SyntheticMatcher(const SyntheticScene& scene, std::unordered_map<int, Pose> poses, double noise_px = 0.0,
                   double dropout = 0.0, std::uint64_t seed = 0)
      : scene_(&scene), poses_(std::move(poses)), noise_px_(noise_px), dropout_(dropout), seed_(seed) {}

  std::vector<PixelMatch> match(const Frame& previous, const Frame& current) const override {
    const Pose& pose0 = pose_of(previous.id);
    const Pose& pose1 = pose_of(current.id);
    const CameraIntrinsics& k0 = previous.intrinsics;
    const CameraIntrinsics& k1 = current.intrinsics;

    Rng rng(seed_ * 0x9e3779b97f4a7c15ull + static_cast<std::uint64_t>(previous.id) * 1000003ull +
            static_cast<std::uint64_t>(current.id));
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    std::vector<PixelMatch> out;
    for (const auto& fp : scene_->features) {
      const auto a = observe(fp, pose0, k0);
      const auto b = observe(fp, pose1, k1);
      // Draws happen for every candidate so the stream does not depend on
      // which candidates survive.
      const double drop = unit(rng);
      const Vec2 n0(gauss(rng), gauss(rng));
      const Vec2 n1(gauss(rng), gauss(rng));
      if (!a || !b) continue;
      if (drop < dropout_) continue;
      PixelMatch m{a->x(), a->y(), b->x(), b->y(), 1.0};
      if (noise_px_ > 0.0) {
        m.u0 = std::clamp(m.u0 + noise_px_ * n0.x(), 0.0, k0.width - 1e-9);
        m.v0 = std::clamp(m.v0 + noise_px_ * n0.y(), 0.0, k0.height - 1e-9);
        m.u1 = std::clamp(m.u1 + noise_px_ * n1.x(), 0.0, k1.width - 1e-9);
        m.v1 = std::clamp(m.v1 + noise_px_ * n1.y(), 0.0, k1.height - 1e-9);
      }
      out.push_back(m);
    }
    return out;
  }

 private:
  const Pose& pose_of(int id) const {
    const auto it = poses_.find(id);
    if (it == poses_.end()) throw Error(ErrorCode::kDatasetError, "no pose for frame " + std::to_string(id));
    return it->second;
  }

  std::optional<Vec2> observe(const FeaturePoint& fp, const Pose& pose, const CameraIntrinsics& k) const {
    const Vec3 cam = pose.inverse() * fp.position;
    if (!(cam.z() > k.near && cam.z() < k.far)) return std::nullopt;
    const double u = k.fx * cam.x() / cam.z() + k.cx;
    const double v = k.fy * cam.y() / cam.z() + k.cy;
    if (u < 1.0 || v < 1.0 || u > k.width - 1.0 || v > k.height - 1.0) return std::nullopt;
    const RayHit hit = scene_->cast_pixel(pose, k, u, v);
    if (hit.face != fp.face || std::abs(hit.distance - cam.z()) > 1e-9 * cam.z()) return std::nullopt;
    const double c0 = std::floor(u - 0.5);
    const double r0 = std::floor(v - 0.5);
    // Same neighborhood and discontinuity test as sample_depth, so every
    // emitted match has a valid depth lookup.
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (int dr = 0; dr <= 1; ++dr) {
      for (int dc = 0; dc <= 1; ++dc) {
        const RayHit nb = scene_->cast_pixel(pose, k, c0 + dc + 0.5, r0 + dr + 0.5);
        if (nb.face != fp.face) return std::nullopt;
        lo = std::min(lo, nb.distance);
        hi = std::max(hi, nb.distance);
      }
    }
    if (!(lo > 0.0) || hi > 1.1 * lo) return std::nullopt;
    return Vec2(u, v);
  }

  const SyntheticScene* scene_;
  std::unordered_map<int, Pose> poses_;
  double noise_px_;
  double dropout_;
  std::uint64_t seed_;
};

}  // namespace desksplat
