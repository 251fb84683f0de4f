#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "desksplat/error.hpp"
#include "desksplat/gaussian_map.hpp"
#include "desksplat/geometry.hpp"
#include "desksplat/image.hpp"
#include "desksplat/metrics.hpp"
#include "desksplat/renderer.hpp"

namespace desksplat {

/// A frame retained for map optimization together with its estimated pose.
struct Keyframe {
  Frame frame;
  Pose pose;
};

struct DensifyConfig {
  /// Coverage tolerance for the depth test, meters.
  double tau = 0.02;
  /// Pixels rendered with accumulated alpha below this count as uncovered.
  double coverage_alpha = 0.5;
  /// New splats are seeded on every `pixel_stride`-th row and column.
  int pixel_stride = 2;
  /// Initial isotropic splat radius, in pixels of the seeding view.
  double footprint_px = 2.0;
  double initial_opacity = 0.5;
  double icp_voxel = 0.02;
  IcpParams icp;
  /// Compose an accepted ICP correction into the camera pose.
  bool correct_pose = true;
};

struct DensifyReport {
  std::size_t added = 0;
  bool corrected = false;
  double icp_fitness = 0.0;
  double icp_error = 0.0;
  /// Camera pose after the optional ICP correction.
  Pose pose;
  Pose correction;
};

/// Pixel classes used by densification.
enum class PixelClass { kInvalid, kNeedsSplat, kMapped, kOther };

/// Classifies each pixel of `frame` against a rendering from its pose: a pixel
/// needs a splat when it is uncovered or its measured depth lies in front of
/// the rendered surface by more than tau; it counts as mapped when the two
/// depths agree within tau.
inline Image<PixelClass> classify_pixels(const RenderedImage& rendered, const Frame& frame,
                                         const DensifyConfig& cfg) {
  Image<PixelClass> out(frame.depth.width(), frame.depth.height(), PixelClass::kInvalid);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double d = frame.depth[i];
    if (!(d > 0.0)) continue;
    const double dr = rendered.depth[i];
    if (rendered.alpha[i] < cfg.coverage_alpha || d < dr - cfg.tau) {
      out[i] = PixelClass::kNeedsSplat;
    } else if (std::abs(d - dr) <= cfg.tau) {
      out[i] = PixelClass::kMapped;
    } else {
      out[i] = PixelClass::kOther;
    }
  }
  return out;
}

inline GaussianSplat make_splat(const Vec3& center, double depth, const Vec3& color,
                                const CameraIntrinsics& k, double opacity, double footprint_px = 1.0) {
  GaussianSplat s;
  s.center = center;
  s.scale = Vec3::Constant(footprint_px * depth / k.fx);
  s.orientation = Eigen::Quaterniond::Identity();
  s.color = color.cwiseMax(0.0).cwiseMin(1.0);
  s.opacity = opacity;
  return s;
}

/// Adds splats where the map misses or lies behind the observed surface.
/// Mapped pixels are first aligned with ICP to the visible splat centers; an
/// accepted correction moves the new points and, optionally, the pose.
inline DensifyReport densify(GaussianMap& map, const Frame& frame, const Pose& pose,
                             const CameraIntrinsics& k, const DensifyConfig& cfg = {}) {
  DensifyReport report;
  report.pose = pose;
  const RenderedImage rendered = render(map, pose, k);
  const auto classes = classify_pixels(rendered, frame, cfg);

  PointSet mapped;
  PointSet fresh;
  std::vector<Vec3> fresh_colors;
  std::vector<double> fresh_depths;
  const int stride = std::max(1, cfg.pixel_stride);
  for (int row = 0; row < k.height; ++row) {
    for (int col = 0; col < k.width; ++col) {
      const PixelClass c = classes(row, col);
      if (c != PixelClass::kNeedsSplat && c != PixelClass::kMapped) continue;
      const double d = frame.depth(row, col);
      const Vec3 world = pose * back_project(col + 0.5, row + 0.5, d, k);
      if (c == PixelClass::kMapped) {
        mapped.push_back(world);
      } else if (row % stride == 0 && col % stride == 0) {
        fresh.push_back(world);
        fresh_colors.push_back(frame.color(row, col));
        fresh_depths.push_back(d);
      }
    }
  }

  const auto visible = visible_subset(map, pose, k);
  if (!mapped.empty() && !visible.empty()) {
    PointSet centers;
    centers.reserve(visible.size());
    for (auto i : visible) centers.push_back(map.splats[i].center);
    const PointSet src = voxel_downsample(mapped, cfg.icp_voxel);
    const PointSet dst = voxel_downsample(centers, cfg.icp_voxel);
    const IcpResult icp = icp_align(src, dst, cfg.icp);
    report.icp_fitness = icp.fitness;
    report.icp_error = icp.error;
    if (icp.accepted) {
      report.corrected = true;
      report.correction = icp.transform;
      for (auto& p : fresh) p = icp.transform * p;
      if (cfg.correct_pose) report.pose = icp.transform * pose;
    }
  }

  for (std::size_t i = 0; i < fresh.size(); ++i) {
    map.splats.push_back(make_splat(fresh[i], fresh_depths[i], fresh_colors[i], k, cfg.initial_opacity, cfg.footprint_px));
  }
  report.added = fresh.size();
  return report;
}

enum class SamplingMode { kRandom, kWorstFirst, kLossWeighted };

struct SamplingStrategy {
  SamplingMode mode = SamplingMode::kLossWeighted;
  /// Probability of a loss-weighted draw; otherwise the draw is uniform.
  double mix_p = 0.4;

  bool valid() const { return mix_p >= 0.0 && mix_p <= 1.0; }
};

/// Picks a keyframe index. Loss-weighted draws use P(i) = L_i / sum L_j and
/// fall back to uniform when all losses are zero.
inline std::size_t sample_keyframe(std::span<const double> losses, const SamplingStrategy& strategy,
                                   Rng& rng) {
  if (losses.empty()) throw Error(ErrorCode::kEmptyKeyframeSet, "no keyframes to sample");
  auto uniform = [&] {
    return static_cast<std::size_t>(
        std::uniform_int_distribution<std::size_t>(0, losses.size() - 1)(rng));
  };
  switch (strategy.mode) {
    case SamplingMode::kRandom:
      return uniform();
    case SamplingMode::kWorstFirst: {
      std::size_t best = 0;
      for (std::size_t i = 1; i < losses.size(); ++i) {
        if (losses[i] > losses[best]) best = i;
      }
      return best;
    }
    case SamplingMode::kLossWeighted: {
      const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
      if (!(u < strategy.mix_p)) return uniform();
      double total = 0.0;
      for (double l : losses) total += l;
      if (!(total > 0.0)) return uniform();
      const double target = std::uniform_real_distribution<double>(0.0, total)(rng);
      double acc = 0.0;
      for (std::size_t i = 0; i < losses.size(); ++i) {
        acc += losses[i];
        if (target < acc) return i;
      }
      // Rounding at the upper end lands on the last positive entry.
      for (std::size_t i = losses.size(); i-- > 0;) {
        if (losses[i] > 0.0) return i;
      }
      return losses.size() - 1;
    }
  }
  return 0;
}

/// Which splat parameter groups a descent step may change.
struct ParameterMask {
  bool center = true;
  bool scale = true;
  bool rotation = true;
  bool color = true;
  bool opacity = true;
};

struct MapOptimizerConfig {
  double center_rate = 1e-4;
  double log_scale_rate = 1e-2;
  double rotation_rate = 1e-2;
  double color_rate = 1e-2;
  double opacity_rate = 1e-2;
  double min_scale = 1e-4;
  double min_opacity = 1e-3;
};

/// Adam over the parameters of every splat. State grows with the map.
class MapOptimizer {
 public:
  explicit MapOptimizer(MapOptimizerConfig cfg = {}) : cfg_(cfg) {}

  void step(GaussianMap& map, const std::vector<SplatGradient>& grads, const ParameterMask& mask) {
    constexpr double kBeta1 = 0.9;
    constexpr double kBeta2 = 0.999;
    constexpr double kEps = 1e-15;
    if (state_.size() < map.splats.size()) state_.resize(map.splats.size());
    for (std::size_t i = 0; i < map.splats.size(); ++i) {
      const auto& g = grads[i];
      auto& st = state_[i];
      Vec13 gv;
      gv << g.center, g.log_scale, g.rotation, g.color, g.opacity;
      if (gv.isZero(0.0)) continue;
      ++st.steps;
      st.m1 = kBeta1 * st.m1 + (1.0 - kBeta1) * gv;
      st.m2 = kBeta2 * st.m2 + (1.0 - kBeta2) * gv.cwiseProduct(gv);
      const double c1 = 1.0 - std::pow(kBeta1, st.steps);
      const double c2 = 1.0 - std::pow(kBeta2, st.steps);
      Vec13 dir = Vec13::Zero();
      for (int a = 0; a < 13; ++a) {
        if (st.m2(a) > 0.0) dir(a) = (st.m1(a) / c1) / (std::sqrt(st.m2(a) / c2) + kEps);
      }

      auto& s = map.splats[i];
      if (mask.center) s.center -= cfg_.center_rate * dir.segment<3>(0);
      if (mask.scale) {
        for (int a = 0; a < 3; ++a) {
          s.scale(a) = std::max(cfg_.min_scale, s.scale(a) * std::exp(-cfg_.log_scale_rate * dir(3 + a)));
        }
      }
      if (mask.rotation) {
        const Vec3 w = -cfg_.rotation_rate * dir.segment<3>(6);
        s.orientation = Eigen::Quaterniond(so3_exp(w)) * s.orientation;
        s.orientation.normalize();
      }
      if (mask.color) {
        s.color = (s.color - cfg_.color_rate * dir.segment<3>(9)).cwiseMax(0.0).cwiseMin(1.0);
      }
      if (mask.opacity) {
        s.opacity = std::clamp(s.opacity - cfg_.opacity_rate * dir(12), cfg_.min_opacity, 1.0);
      }
    }
  }

  void reset() { state_.clear(); }

 private:
  using Vec13 = Eigen::Matrix<double, 13, 1>;
  struct State {
    Vec13 m1 = Vec13::Zero();
    Vec13 m2 = Vec13::Zero();
    int steps = 0;
  };

  MapOptimizerConfig cfg_;
  std::vector<State> state_;
};

struct OptimizeReport {
  double final_loss = 0.0;
  std::vector<double> losses;
};

/// Descends the blended loss on uniformly sampled keyframes. Returns the mean
/// loss of the last (up to) 10 iterations.
inline OptimizeReport optimize_map_detailed(GaussianMap& map, std::span<const Keyframe> keyframes, int iters,
                                            const LossWeights& w, Rng& rng, MapOptimizer& optimizer,
                                            const ParameterMask& mask = {}) {
  if (keyframes.empty()) throw Error(ErrorCode::kEmptyKeyframeSet, "no keyframes to optimize");
  OptimizeReport out;
  for (int it = 0; it < iters; ++it) {
    const std::size_t idx =
        std::uniform_int_distribution<std::size_t>(0, keyframes.size() - 1)(rng);
    const auto& kf = keyframes[idx];
    const auto eval = evaluate_view(map, kf.pose, kf.frame, kf.frame.intrinsics, w, {false, true});
    out.losses.push_back(eval.loss.total);
    optimizer.step(map, eval.splat_gradients, mask);
  }
  const std::size_t tail = std::min<std::size_t>(10, out.losses.size());
  double sum = 0.0;
  for (std::size_t i = out.losses.size() - tail; i < out.losses.size(); ++i) sum += out.losses[i];
  out.final_loss = tail == 0 ? 0.0 : sum / static_cast<double>(tail);
  return out;
}

inline double optimize_map(GaussianMap& map, std::span<const Keyframe> keyframes, int iters,
                           const LossWeights& w, Rng& rng) {
  MapOptimizer optimizer;
  return optimize_map_detailed(map, keyframes, iters, w, rng, optimizer).final_loss;
}

/// Mean PSNR of the map rendered at every keyframe.
inline double mean_keyframe_psnr(const GaussianMap& map, std::span<const Keyframe> keyframes) {
  if (keyframes.empty()) throw Error(ErrorCode::kEmptyKeyframeSet, "no keyframes");
  double sum = 0.0;
  for (const auto& kf : keyframes) {
    sum += psnr(render(map, kf.pose, kf.frame.intrinsics).color, kf.frame.color);
  }
  return sum / static_cast<double>(keyframes.size());
}

struct RefineColorsConfig {
  ParameterMask mask{.center = true, .scale = false, .rotation = false, .color = true, .opacity = true};
  MapOptimizerConfig optimizer;
  LossWeights weights;
};

/// Refinement with a fixed splat set. Keyframes are drawn by `strategy` from a
/// per-keyframe loss cache that is refreshed whenever a keyframe is rendered.
/// Returns the mean keyframe PSNR afterwards.
inline double refine_colors(GaussianMap& map, std::span<const Keyframe> keyframes, int iters,
                            const SamplingStrategy& strategy, Rng& rng,
                            const RefineColorsConfig& cfg = {}) {
  if (keyframes.empty()) throw Error(ErrorCode::kEmptyKeyframeSet, "no keyframes to refine");
  const std::size_t count = map.splats.size();
  std::vector<double> losses(keyframes.size());
  for (std::size_t i = 0; i < keyframes.size(); ++i) {
    const auto& kf = keyframes[i];
    losses[i] = compute_loss(render(map, kf.pose, kf.frame.intrinsics), kf.frame, cfg.weights).total;
  }
  MapOptimizer optimizer(cfg.optimizer);
  for (int it = 0; it < iters; ++it) {
    const std::size_t idx = sample_keyframe(losses, strategy, rng);
    const auto& kf = keyframes[idx];
    const auto eval = evaluate_view(map, kf.pose, kf.frame, kf.frame.intrinsics, cfg.weights, {false, true});
    losses[idx] = eval.loss.total;
    optimizer.step(map, eval.splat_gradients, cfg.mask);
  }
  if (map.splats.size() != count) throw std::logic_error("refinement changed the splat count");
  return mean_keyframe_psnr(map, keyframes);
}

}  // namespace desksplat
