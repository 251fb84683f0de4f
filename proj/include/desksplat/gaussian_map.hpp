#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Geometry>

#include "desksplat/error.hpp"
#include "desksplat/geometry.hpp"

namespace desksplat {

/// One anisotropic Gaussian primitive. The covariance is kept factored as
/// orientation * diag(scale^2) * orientation^T, so it is positive definite for
/// any positive scale.
struct GaussianSplat {
  Vec3 center = Vec3::Zero();
  Vec3 scale = Vec3::Constant(0.01);
  Eigen::Quaterniond orientation = Eigen::Quaterniond::Identity();
  Vec3 color = Vec3::Constant(0.5);
  double opacity = 1.0;

  Mat3 covariance() const {
    const Mat3 r = orientation.toRotationMatrix();
    return r * scale.cwiseProduct(scale).asDiagonal() * r.transpose();
  }

  bool valid(double tol = 1e-9) const {
    return center.allFinite() && (scale.array() > 0.0).all() && scale.allFinite() &&
           std::abs(orientation.norm() - 1.0) <= tol && opacity > 0.0 && opacity <= 1.0 &&
           (color.array() >= 0.0).all() && (color.array() <= 1.0).all();
  }
};

struct KeyframeEntry {
  int frame_id = 0;
  Pose pose;
};

struct GaussianMap {
  std::vector<GaussianSplat> splats;
  std::vector<KeyframeEntry> keyframes;

  std::size_t size() const { return splats.size(); }
  bool empty() const { return splats.empty(); }

  void add_keyframe(int frame_id, const Pose& pose) {
    if (!keyframes.empty() && frame_id <= keyframes.back().frame_id) {
      throw Error(ErrorCode::kInvalidArgument, "keyframe ids must be strictly increasing");
    }
    keyframes.push_back({frame_id, pose});
  }
};

enum class KeyframeMode { kDense, kSparse };

struct KeyframePolicy {
  KeyframeMode mode = KeyframeMode::kDense;
  double iou_threshold = 0.9;
  int k = 5;

  bool valid() const { return iou_threshold > 0.0 && iou_threshold < 1.0 && k >= 1; }
};

/// Center-in-frustum test for a world point seen from a world-from-camera pose.
inline bool in_frustum(const Vec3& world_point, const Pose& camera_from_world,
                       const CameraIntrinsics& k) {
  const Vec3 p = camera_from_world * world_point;
  if (!(p.z() > k.near && p.z() < k.far)) return false;
  const double u = k.fx * p.x() / p.z() + k.cx;
  const double v = k.fy * p.y() / p.z() + k.cy;
  return k.in_bounds(u, v);
}

/// Indices (ascending) of splats whose centers lie inside the view frustum.
inline std::vector<std::size_t> visible_subset(const GaussianMap& map, const Pose& pose,
                                               const CameraIntrinsics& k) {
  const Pose cw = pose.inverse();
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < map.splats.size(); ++i) {
    if (in_frustum(map.splats[i].center, cw, k)) out.push_back(i);
  }
  return out;
}

/// Intersection over union of the visible splat sets of two views; 0 when
/// neither view sees anything.
inline double frustum_iou(const GaussianMap& map, const Pose& a, const Pose& b,
                          const CameraIntrinsics& k) {
  const Pose cw_a = a.inverse();
  const Pose cw_b = b.inverse();
  std::size_t inter = 0;
  std::size_t uni = 0;
  for (const auto& s : map.splats) {
    const bool va = in_frustum(s.center, cw_a, k);
    const bool vb = in_frustum(s.center, cw_b, k);
    inter += (va && vb) ? 1 : 0;
    uni += (va || vb) ? 1 : 0;
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

inline bool should_add_keyframe(const KeyframePolicy& policy, const GaussianMap& map,
                                const Pose& candidate, int frame_id, const CameraIntrinsics& k) {
  if (frame_id == 0 || map.keyframes.empty()) return true;
  if (policy.mode == KeyframeMode::kSparse) return frame_id % policy.k == 0;
  return frustum_iou(map, map.keyframes.back().pose, candidate, k) < policy.iou_threshold;
}

namespace detail {

using VoxelKey = std::array<std::int64_t, 3>;

inline VoxelKey voxel_key(const Vec3& p, double voxel) {
  return {static_cast<std::int64_t>(std::floor(p.x() / voxel)),
          static_cast<std::int64_t>(std::floor(p.y() / voxel)),
          static_cast<std::int64_t>(std::floor(p.z() / voxel))};
}

struct VoxelKeyHash {
  std::size_t operator()(const VoxelKey& k) const noexcept {
    std::uint64_t h = 1469598103934665603ull;
    for (auto v : k) {
      h ^= static_cast<std::uint64_t>(v) + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
    }
    return static_cast<std::size_t>(h);
  }
};

/// Uniform hash grid for fixed-radius nearest-neighbor queries.
class NeighborGrid {
 public:
  NeighborGrid(std::span<const Vec3> points, double cell) : points_(points), cell_(cell) {
    for (std::size_t i = 0; i < points.size(); ++i) cells_[voxel_key(points[i], cell)].push_back(i);
  }

  /// Nearest point within `radius` (radius <= cell); ties go to the lower index.
  std::ptrdiff_t nearest(const Vec3& q, double radius, double* dist2 = nullptr) const {
    const VoxelKey c = voxel_key(q, cell_);
    const double r2 = radius * radius;
    std::ptrdiff_t best = -1;
    double best_d2 = std::numeric_limits<double>::infinity();
    for (std::int64_t dx = -1; dx <= 1; ++dx) {
      for (std::int64_t dy = -1; dy <= 1; ++dy) {
        for (std::int64_t dz = -1; dz <= 1; ++dz) {
          const auto it = cells_.find({c[0] + dx, c[1] + dy, c[2] + dz});
          if (it == cells_.end()) continue;
          for (std::size_t idx : it->second) {
            const double d2 = (points_[idx] - q).squaredNorm();
            if (d2 > r2) continue;
            const auto i = static_cast<std::ptrdiff_t>(idx);
            if (best < 0 || d2 < best_d2 || (d2 == best_d2 && i < best)) {
              best_d2 = d2;
              best = i;
            }
          }
        }
      }
    }
    if (dist2 != nullptr) *dist2 = best_d2;
    return best;
  }

 private:
  std::span<const Vec3> points_;
  double cell_;
  std::unordered_map<VoxelKey, std::vector<std::size_t>, VoxelKeyHash> cells_;
};

}  // namespace detail

/// Replaces the points of every occupied voxel by their centroid. Output is
/// ordered by voxel index.
inline PointSet voxel_downsample(const PointSet& points, double voxel) {
  if (!(voxel > 0.0)) throw Error(ErrorCode::kInvalidArgument, "voxel size must be positive");
  std::map<detail::VoxelKey, std::pair<Vec3, std::size_t>> cells;
  for (const auto& p : points) {
    auto& cell = cells[detail::voxel_key(p, voxel)];
    if (cell.second == 0) cell.first = Vec3::Zero();
    cell.first += p;
    ++cell.second;
  }
  PointSet out;
  out.reserve(cells.size());
  for (const auto& [key, acc] : cells) out.push_back(acc.first / static_cast<double>(acc.second));
  return out;
}

struct IcpParams {
  int max_iterations = 30;
  double max_distance = 0.05;
  double convergence = 1e-8;
  double min_fitness = 0.2;
  double max_error = 0.1;
};

struct IcpResult {
  Pose transform;
  double fitness = 0.0;
  double error = 0.0;
  int iterations = 0;
  bool accepted = false;
};

/// Point-to-point ICP aligning `src` onto `dst`. The transform is accepted only
/// when fitness > min_fitness and error < max_error.
inline IcpResult icp_align(const PointSet& src, const PointSet& dst, const IcpParams& params = {}) {
  if (src.empty() || dst.empty()) throw Error(ErrorCode::kEmptyPointSet, "ICP needs two non-empty sets");
  const detail::NeighborGrid grid(dst, params.max_distance);

  PointSet matched_src;
  PointSet matched_dst;
  double sq_sum = 0.0;
  auto associate = [&](const Pose& t) {
    matched_src.clear();
    matched_dst.clear();
    sq_sum = 0.0;
    for (const auto& p : src) {
      double d2 = 0.0;
      const auto j = grid.nearest(t * p, params.max_distance, &d2);
      if (j < 0) continue;
      matched_src.push_back(p);
      matched_dst.push_back(dst[static_cast<std::size_t>(j)]);
      sq_sum += d2;
    }
  };

  IcpResult result;
  Pose current;
  for (int it = 0; it < params.max_iterations; ++it) {
    associate(current);
    if (matched_src.size() < 3) break;
    const Pose next = detail::fit_rigid(matched_src, matched_dst).pose;
    const double change = (next.rotation - current.rotation).norm() +
                          (next.translation - current.translation).norm();
    current = next;
    result.iterations = it + 1;
    if (change < params.convergence) break;
  }

  associate(current);
  result.transform = current;
  result.fitness = static_cast<double>(matched_src.size()) / static_cast<double>(src.size());
  result.error = matched_src.empty() ? 0.0 : std::sqrt(sq_sum / static_cast<double>(matched_src.size()));
  result.accepted = result.fitness > params.min_fitness && result.error < params.max_error;
  return result;
}

// Map snapshots are ASCII PLY with one vertex per splat and the properties
//   x y z scale_x scale_y scale_z qw qx qy qz red green blue opacity
// in that order, all doubles; colors in [0, 1].
inline void write_ply(const std::filesystem::path& path, const GaussianMap& map) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  out << "ply\nformat ascii 1.0\nelement vertex " << map.splats.size() << "\n";
  for (const char* name : {"x", "y", "z", "scale_x", "scale_y", "scale_z", "qw", "qx", "qy", "qz",
                           "red", "green", "blue", "opacity"}) {
    out << "property double " << name << "\n";
  }
  out << "end_header\n" << std::setprecision(17);
  for (const auto& s : map.splats) {
    out << s.center.x() << ' ' << s.center.y() << ' ' << s.center.z() << ' ' << s.scale.x() << ' '
        << s.scale.y() << ' ' << s.scale.z() << ' ' << s.orientation.w() << ' '
        << s.orientation.x() << ' ' << s.orientation.y() << ' ' << s.orientation.z() << ' '
        << s.color.x() << ' ' << s.color.y() << ' ' << s.color.z() << ' ' << s.opacity << '\n';
  }
}

inline GaussianMap read_ply(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  std::string line;
  std::size_t count = 0;
  int properties = 0;
  bool header_done = false;
  while (std::getline(in, line)) {
    if (line.rfind("element vertex", 0) == 0) count = std::stoul(line.substr(15));
    if (line.rfind("property", 0) == 0) ++properties;
    if (line == "end_header") {
      header_done = true;
      break;
    }
  }
  if (!header_done || properties != 14) throw Error(ErrorCode::kDatasetError, "unexpected PLY header");
  GaussianMap map;
  map.splats.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    GaussianSplat s;
    double qw, qx, qy, qz;
    if (!(in >> s.center.x() >> s.center.y() >> s.center.z() >> s.scale.x() >> s.scale.y() >>
          s.scale.z() >> qw >> qx >> qy >> qz >> s.color.x() >> s.color.y() >> s.color.z() >>
          s.opacity)) {
      throw Error(ErrorCode::kDatasetError, "truncated PLY body");
    }
    s.orientation = Eigen::Quaterniond(qw, qx, qy, qz);
    map.splats.push_back(s);
  }
  return map;
}

}  // namespace desksplat
