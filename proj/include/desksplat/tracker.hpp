#pragma once

#include <chrono>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "desksplat/error.hpp"
#include "desksplat/frontend.hpp"
#include "desksplat/gaussian_map.hpp"
#include "desksplat/geometry.hpp"
#include "desksplat/image.hpp"
#include "desksplat/renderer.hpp"

namespace desksplat {

struct TrackerConfig {
  int refine_iters = 50;
  /// Multiplies the base step sizes below.
  double step_scale = 1.0;
  double percentile = 0.7;
  double min_confidence = 0.5;
  double rotation_step = 1e-3;     // radians
  double translation_step = 1e-3;  // meters
  /// Per-iteration multiplicative step decay.
  double step_decay = 0.97;

  bool valid() const {
    return refine_iters >= 0 && step_scale > 0.0 && percentile > 0.0 && percentile <= 1.0 &&
           rotation_step > 0.0 && translation_step > 0.0 && step_decay > 0.0 && step_decay <= 1.0;
  }
};

struct TrackResult {
  Pose pose;
  Pose initial_pose;
  std::size_t n_matches = 0;
  double elapsed_ms = 0.0;
  bool fallback = false;
};

struct RefineResult {
  Pose pose;
  double initial_loss = 0.0;
  double best_loss = 0.0;
  int evaluations = 0;
};

/// First-order descent of the blended loss over a 6-DOF camera increment with
/// Adam-style per-component step normalization. Every iterate is scored and
/// the best one is returned, so the result never scores worse than `init`.
inline RefineResult refine_pose_detailed(const Pose& init, const Frame& frame, const GaussianMap& map,
                                         const CameraIntrinsics& k, int iters, const LossWeights& w,
                                         const TrackerConfig& cfg = {}) {
  constexpr double kBeta1 = 0.9;
  constexpr double kBeta2 = 0.999;
  constexpr double kEps = 1e-12;

  RefineResult out;
  out.pose = init;
  Pose current = init;
  Vec6 m1 = Vec6::Zero();
  Vec6 m2 = Vec6::Zero();
  Vec6 rate;
  rate << Vec3::Constant(cfg.rotation_step * cfg.step_scale),
      Vec3::Constant(cfg.translation_step * cfg.step_scale);

  double best = std::numeric_limits<double>::infinity();
  for (int it = 0; it <= iters; ++it) {
    const bool last = it == iters;
    const auto eval = evaluate_view(map, current, frame, k, w, {!last, false});
    ++out.evaluations;
    if (it == 0) out.initial_loss = eval.loss.total;
    if (eval.loss.total < best) {
      best = eval.loss.total;
      out.pose = current;
    }
    if (last) break;

    const Vec6& g = eval.pose_gradient;
    m1 = kBeta1 * m1 + (1.0 - kBeta1) * g;
    m2 = kBeta2 * m2 + (1.0 - kBeta2) * g.cwiseProduct(g);
    const double c1 = 1.0 - std::pow(kBeta1, it + 1);
    const double c2 = 1.0 - std::pow(kBeta2, it + 1);
    Vec6 step = Vec6::Zero();
    for (int a = 0; a < 6; ++a) {
      const double denom = std::sqrt(m2(a) / c2) + kEps;
      if (m2(a) > 0.0) step(a) = -rate(a) * (m1(a) / c1) / denom;
    }
    current = apply_camera_increment(step, current);
    rate *= cfg.step_decay;
  }
  out.best_loss = best;
  return out;
}

inline Pose refine_pose(const Pose& init, const Frame& frame, const GaussianMap& map,
                        const CameraIntrinsics& k, int iters, const LossWeights& w,
                        const TrackerConfig& cfg = {}) {
  return refine_pose_detailed(init, frame, map, k, iters, w, cfg).pose;
}

/// Extrapolates the last inter-frame motion: p1 * (p2^-1 * p1) for poses
/// p2 = pose(t-2), p1 = pose(t-1).
inline Pose constant_velocity_predict(const Pose& before_previous, const Pose& previous) {
  return previous * (before_previous.inverse() * previous);
}

/// Relative motion (current camera from previous camera) estimated from
/// lifted correspondences after confidence filtering and depth truncation.
inline Pose estimate_relative_motion(const std::vector<PixelMatch>& matches, const Frame& previous,
                                     const Frame& current, const TrackerConfig& cfg,
                                     std::size_t* used = nullptr) {
  const auto filtered = confidence_filter(matches, cfg.min_confidence);
  auto with_depth = sample_match_depths(filtered, previous, current);
  if (with_depth.empty()) {
    throw Error(ErrorCode::kInsufficientCorrespondences, "no matches with valid depth");
  }
  with_depth = truncate_by_depth(with_depth, cfg.percentile);
  const auto lifted = lift_depth_matches(with_depth, previous.intrinsics, current.intrinsics);
  if (used != nullptr) *used = lifted.previous.size();
  return estimate_rigid_transform(lifted.previous, lifted.current);
}

/// Pose of `current` (world-from-camera) from its correspondences with the
/// previous frame, optionally refined against the map. When the closed-form
/// estimate cannot be formed, the motion model predicts the pose instead and
/// refinement starts from there.
inline TrackResult track_frame(const Frame& previous, const Pose& previous_pose, const Frame& current,
                               const CorrespondenceProvider& provider, const GaussianMap& map,
                               const TrackerConfig& cfg, const LossWeights& w = {},
                               std::optional<Pose> before_previous_pose = std::nullopt) {
  const auto start = std::chrono::steady_clock::now();
  TrackResult out;
  try {
    const auto matches = provider.match(previous, current);
    const Pose rel = estimate_relative_motion(matches, previous, current, cfg, &out.n_matches);
    out.initial_pose = previous_pose * rel.inverse();
  } catch (const Error& e) {
    switch (e.code()) {
      case ErrorCode::kInsufficientCorrespondences:
      case ErrorCode::kDegenerateGeometry:
      case ErrorCode::kEmptyMatchSet:
        out.fallback = true;
        out.initial_pose = before_previous_pose ? constant_velocity_predict(*before_previous_pose, previous_pose)
                                                : previous_pose;
        break;
      default:
        throw;
    }
  }

  out.pose = out.initial_pose;
  const int iters = out.fallback ? std::max(cfg.refine_iters, 1) : cfg.refine_iters;
  if (iters > 0 && !map.empty()) {
    out.pose = refine_pose(out.initial_pose, current, map, current.intrinsics, iters, w, cfg);
  }
  out.elapsed_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return out;
}

}  // namespace desksplat
