#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include "desksplat/error.hpp"
#include "desksplat/gaussian_map.hpp"
#include "desksplat/geometry.hpp"
#include "desksplat/image.hpp"

namespace desksplat {

using Mat23 = Eigen::Matrix<double, 2, 3>;

struct RenderedImage {
  ColorImage color;
  DepthImage depth;
  ScalarImage alpha;
};

struct LossWeights {
  double lambda = 0.9;

  bool valid() const { return lambda >= 0.0 && lambda <= 1.0; }
};

struct LossValue {
  double total = 0.0;
  double color = 0.0;
  double depth = 0.0;
};

struct RenderSettings {
  /// Mahalanobis radius beyond which a splat contributes nothing.
  double cutoff_sigma = 3.0;
  /// Added to the diagonal of every projected covariance (pixels^2).
  double covariance_epsilon = 1e-6;
  /// Accumulated alpha below which depth is faded to zero instead of normalized.
  double min_depth_alpha = 1e-3;
};

/// Jacobian of the pinhole projection at a camera-frame point.
inline Mat23 projection_jacobian(const Vec3& m, const CameraIntrinsics& k) {
  const double iz = 1.0 / m.z();
  const double iz2 = iz * iz;
  Mat23 j;
  j << k.fx * iz, 0.0, -k.fx * m.x() * iz2,
       0.0, k.fy * iz, -k.fy * m.y() * iz2;
  return j;
}

/// Image-plane covariance J * Sigma * J^T + eps * I, where J is the Jacobian
/// of the world-to-pixel map at the splat center.
inline Mat2 project_covariance(const GaussianSplat& splat, const Pose& pose, const CameraIntrinsics& k,
                               double epsilon = RenderSettings{}.covariance_epsilon) {
  const Pose cw = pose.inverse();
  const Vec3 m = cw * splat.center;
  if (!(m.z() > 0.0)) throw Error(ErrorCode::kBehindCamera, "splat center behind camera");
  const Mat23 j = projection_jacobian(m, k) * cw.rotation;
  Mat2 cov = j * splat.covariance() * j.transpose();
  cov = 0.5 * (cov + cov.transpose());
  cov += epsilon * Mat2::Identity();
  return cov;
}

/// Per-splat gradient of a scalar loss. Rotation is the tangent-space
/// gradient for a left increment orientation <- exp(w) * orientation; scale is
/// taken with respect to log(scale).
struct SplatGradient {
  Vec3 center = Vec3::Zero();
  Vec3 log_scale = Vec3::Zero();
  Vec3 rotation = Vec3::Zero();
  Vec3 color = Vec3::Zero();
  double opacity = 0.0;
};

struct GradientRequest {
  bool pose = true;
  bool splats = false;
};

/// Loss, rendering and requested gradients for one view.
///
/// The pose gradient is taken with respect to xi = (w, v) applied to the
/// camera-from-world transform as [exp(w) | v] * T_cw; use
/// `apply_camera_increment` to step a world-from-camera pose with it.
struct LossEvaluation {
  LossValue loss;
  RenderedImage image;
  Vec6 pose_gradient = Vec6::Zero();
  std::vector<SplatGradient> splat_gradients;
};

/// Applies a camera-side increment xi to a world-from-camera pose.
inline Pose apply_camera_increment(const Vec6& xi, const Pose& world_from_camera) {
  return apply_left_increment(xi, world_from_camera.inverse()).inverse();
}

namespace detail {

struct ProjectedSplat {
  std::size_t index = 0;
  Vec3 cam = Vec3::Zero();
  Vec2 mean = Vec2::Zero();
  Mat23 proj_jacobian = Mat23::Zero();
  Mat3 cov_cam = Mat3::Zero();
  Mat2 conic = Mat2::Zero();
  double opacity = 0.0;
  Vec3 color = Vec3::Zero();
  int col_lo = 0, col_hi = -1, row_lo = 0, row_hi = -1;
};

struct Contribution {
  std::uint32_t splat = 0;
  double weight = 0.0;
  double falloff = 0.0;
};

struct Raster {
  std::vector<ProjectedSplat> splats;
  std::vector<std::vector<Contribution>> pixels;
  RenderedImage image;
};

inline double cutoff_tail(double cutoff_sigma) { return std::exp(-0.5 * cutoff_sigma * cutoff_sigma); }

inline Raster rasterize(const GaussianMap& map, const Pose& pose, const CameraIntrinsics& k,
                        const RenderSettings& settings) {
  k.validate();
  const int w = k.width;
  const int h = k.height;
  Raster r;
  r.image.color = ColorImage(w, h, Vec3::Zero());
  r.image.depth = DepthImage(w, h, 0.0);
  r.image.alpha = ScalarImage(w, h, 0.0);
  r.pixels.assign(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), {});

  const Pose cw = pose.inverse();
  const double cut2 = settings.cutoff_sigma * settings.cutoff_sigma;
  const double tail = cutoff_tail(settings.cutoff_sigma);
  const double norm = 1.0 / (1.0 - tail);

  for (std::size_t i = 0; i < map.splats.size(); ++i) {
    const auto& s = map.splats[i];
    ProjectedSplat p;
    p.index = i;
    p.cam = cw * s.center;
    if (!(p.cam.z() > k.near && p.cam.z() < k.far)) continue;
    p.proj_jacobian = projection_jacobian(p.cam, k);
    p.cov_cam = cw.rotation * s.covariance() * cw.rotation.transpose();
    Mat2 cov2 = p.proj_jacobian * p.cov_cam * p.proj_jacobian.transpose();
    cov2 = 0.5 * (cov2 + cov2.transpose());
    cov2 += settings.covariance_epsilon * Mat2::Identity();
    const double det = cov2.determinant();
    if (!(det > 0.0)) continue;
    p.conic << cov2(1, 1) / det, -cov2(0, 1) / det, -cov2(1, 0) / det, cov2(0, 0) / det;
    p.mean = {k.fx * p.cam.x() / p.cam.z() + k.cx, k.fy * p.cam.y() / p.cam.z() + k.cy};
    // Axis-aligned extent of the cutoff ellipse.
    const double rx = settings.cutoff_sigma * std::sqrt(cov2(0, 0));
    const double ry = settings.cutoff_sigma * std::sqrt(cov2(1, 1));
    p.col_lo = std::max(0, static_cast<int>(std::floor(p.mean.x() - rx - 0.5)));
    p.col_hi = std::min(w - 1, static_cast<int>(std::ceil(p.mean.x() + rx - 0.5)));
    p.row_lo = std::max(0, static_cast<int>(std::floor(p.mean.y() - ry - 0.5)));
    p.row_hi = std::min(h - 1, static_cast<int>(std::ceil(p.mean.y() + ry - 0.5)));
    if (p.col_lo > p.col_hi || p.row_lo > p.row_hi) continue;
    p.opacity = s.opacity;
    p.color = s.color;
    r.splats.push_back(p);
  }

  // Front to back; ties resolved by center coordinates so that the result
  // does not depend on the order of the splat list.
  std::sort(r.splats.begin(), r.splats.end(), [&](const ProjectedSplat& a, const ProjectedSplat& b) {
    if (a.cam.z() != b.cam.z()) return a.cam.z() < b.cam.z();
    const Vec3& ca = map.splats[a.index].center;
    const Vec3& cb = map.splats[b.index].center;
    if (ca.x() != cb.x()) return ca.x() < cb.x();
    if (ca.y() != cb.y()) return ca.y() < cb.y();
    return a.index < b.index;
  });

  for (std::size_t n = 0; n < r.splats.size(); ++n) {
    const auto& p = r.splats[n];
    for (int row = p.row_lo; row <= p.row_hi; ++row) {
      for (int col = p.col_lo; col <= p.col_hi; ++col) {
        const Vec2 d(col + 0.5 - p.mean.x(), row + 0.5 - p.mean.y());
        const double q = d.dot(p.conic * d);
        if (!(q < cut2)) continue;
        const double falloff = (std::exp(-0.5 * q) - tail) * norm;
        r.pixels[static_cast<std::size_t>(row) * static_cast<std::size_t>(w) +
                 static_cast<std::size_t>(col)]
            .push_back({static_cast<std::uint32_t>(n), p.opacity * falloff, falloff});
      }
    }
  }

  for (std::size_t px = 0; px < r.pixels.size(); ++px) {
    double transmittance = 1.0;
    Vec3 color = Vec3::Zero();
    double depth_acc = 0.0;
    for (const auto& c : r.pixels[px]) {
      const auto& p = r.splats[c.splat];
      const double wt = c.weight * transmittance;
      color += wt * p.color;
      depth_acc += wt * p.cam.z();
      transmittance *= 1.0 - c.weight;
    }
    const double alpha = 1.0 - transmittance;
    r.image.color[px] = color;
    r.image.alpha[px] = alpha;
    r.image.depth[px] = depth_acc / std::max(alpha, settings.min_depth_alpha);
  }
  return r;
}

inline void check_shapes(const RenderedImage& rendered, const Frame& gt) {
  if (!rendered.color.same_shape(gt.color) || !rendered.depth.same_shape(gt.depth) ||
      !rendered.color.same_shape(rendered.depth)) {
    throw Error(ErrorCode::kShapeError, "rendered and reference images differ in size");
  }
}

inline double sign(double x) { return (x > 0.0) - (x < 0.0); }

}  // namespace detail

/// Front-to-back alpha compositing of the projected splats.
inline RenderedImage render(const GaussianMap& map, const Pose& pose, const CameraIntrinsics& k,
                            const RenderSettings& settings = {}) {
  return detail::rasterize(map, pose, k, settings).image;
}

/// L1 color and depth losses blended as lambda * color + (1 - lambda) * depth.
/// Color is averaged over all pixels and channels, depth over pixels with a
/// valid (> 0) reference depth.
inline LossValue compute_loss(const RenderedImage& rendered, const Frame& gt, const LossWeights& w) {
  detail::check_shapes(rendered, gt);
  const std::size_t n = rendered.color.size();
  double color_sum = 0.0;
  double depth_sum = 0.0;
  std::size_t valid = 0;
  for (std::size_t i = 0; i < n; ++i) {
    color_sum += (rendered.color[i] - gt.color[i]).cwiseAbs().sum();
    if (gt.depth[i] > 0.0) {
      depth_sum += std::abs(rendered.depth[i] - gt.depth[i]);
      ++valid;
    }
  }
  LossValue out;
  out.color = n == 0 ? 0.0 : color_sum / (3.0 * static_cast<double>(n));
  out.depth = valid == 0 ? 0.0 : depth_sum / static_cast<double>(valid);
  out.total = w.lambda * out.color + (1.0 - w.lambda) * out.depth;
  return out;
}

/// Renders the view, evaluates the loss against `gt` and backpropagates
/// through compositing, the projected covariance and the projection.
inline LossEvaluation evaluate_view(const GaussianMap& map, const Pose& pose, const Frame& gt,
                                    const CameraIntrinsics& k, const LossWeights& w,
                                    const GradientRequest& request = {},
                                    const RenderSettings& settings = {}) {
  detail::Raster raster = detail::rasterize(map, pose, k, settings);
  LossEvaluation out;
  out.loss = compute_loss(raster.image, gt, w);
  if (request.splats) out.splat_gradients.assign(map.splats.size(), SplatGradient{});
  if (!request.pose && !request.splats) {
    out.image = std::move(raster.image);
    return out;
  }

  const std::size_t npx = raster.image.color.size();
  std::size_t valid = 0;
  for (std::size_t i = 0; i < npx; ++i) valid += gt.depth[i] > 0.0 ? 1 : 0;
  const double color_scale = w.lambda / (3.0 * static_cast<double>(npx));
  const double depth_scale = valid == 0 ? 0.0 : (1.0 - w.lambda) / static_cast<double>(valid);

  const std::size_t ns = raster.splats.size();
  std::vector<Vec2> g_mean(ns, Vec2::Zero());
  std::vector<Mat2> g_cov2(ns, Mat2::Zero());
  std::vector<double> g_depth(ns, 0.0);
  std::vector<Vec3> g_color(ns, Vec3::Zero());
  std::vector<double> g_opacity(ns, 0.0);

  const double tail = detail::cutoff_tail(settings.cutoff_sigma);
  const double norm = 1.0 / (1.0 - tail);
  const int width = k.width;

  std::vector<double> trans;
  for (std::size_t px = 0; px < npx; ++px) {
    const auto& list = raster.pixels[px];
    if (list.empty()) continue;
    const Vec3 dl_dc = color_scale * (raster.image.color[px] - gt.color[px]).unaryExpr(&detail::sign);
    double dl_dd = 0.0;
    if (gt.depth[px] > 0.0) dl_dd = depth_scale * detail::sign(raster.image.depth[px] - gt.depth[px]);

    const double alpha = raster.image.alpha[px];
    const double denom = std::max(alpha, settings.min_depth_alpha);
    const double dl_dn = dl_dd / denom;
    const double dl_da = alpha > settings.min_depth_alpha ? -dl_dd * raster.image.depth[px] / alpha : 0.0;
    if (dl_dc.isZero(0.0) && dl_dn == 0.0 && dl_da == 0.0) continue;

    trans.resize(list.size());
    double t = 1.0;
    for (std::size_t j = 0; j < list.size(); ++j) {
      trans[j] = t;
      t *= 1.0 - list[j].weight;
    }

    const int row = static_cast<int>(px / static_cast<std::size_t>(width));
    const int col = static_cast<int>(px % static_cast<std::size_t>(width));
    // Quantities composited behind the current entry, excluding its own
    // transmittance.
    Vec3 behind_color = Vec3::Zero();
    double behind_depth = 0.0;
    double behind_alpha = 0.0;
    for (std::size_t jj = list.size(); jj-- > 0;) {
      const auto& c = list[jj];
      const auto& p = raster.splats[c.splat];
      const double tj = trans[jj];
      const double wt = c.weight * tj;

      g_color[c.splat] += wt * dl_dc;
      g_depth[c.splat] += wt * dl_dn;

      const double dl_dw = tj * (dl_dc.dot(p.color - behind_color) + dl_dn * (p.cam.z() - behind_depth) +
                                 dl_da * (1.0 - behind_alpha));
      g_opacity[c.splat] += dl_dw * c.falloff;
      const double q_exp = c.falloff / norm + tail;  // exp(-q/2)
      const double dl_dq = dl_dw * p.opacity * (-0.5 * q_exp * norm);
      const Vec2 d(col + 0.5 - p.mean.x(), row + 0.5 - p.mean.y());
      const Vec2 ad = p.conic * d;
      g_mean[c.splat] += dl_dq * (-2.0 * ad);
      g_cov2[c.splat] += dl_dq * (-(ad * ad.transpose()));

      behind_color = p.color * c.weight + (1.0 - c.weight) * behind_color;
      behind_depth = p.cam.z() * c.weight + (1.0 - c.weight) * behind_depth;
      behind_alpha = c.weight + (1.0 - c.weight) * behind_alpha;
    }
  }

  const Pose cw = pose.inverse();
  Vec3 g_rot = Vec3::Zero();
  Vec3 g_trans = Vec3::Zero();
  for (std::size_t n = 0; n < ns; ++n) {
    const auto& p = raster.splats[n];
    const Mat23& j = p.proj_jacobian;
    const Mat2& g = g_cov2[n];
    const double x = p.cam.x();
    const double y = p.cam.y();
    const double z = p.cam.z();

    // Camera-frame point: through the mean, the Jacobian inside the projected
    // covariance, and the composited depth.
    Vec3 g_m = j.transpose() * g_mean[n];
    const Mat23 g_j = 2.0 * g * j * p.cov_cam;
    const double iz2 = 1.0 / (z * z);
    const double iz3 = iz2 / z;
    g_m.x() += g_j(0, 2) * (-k.fx * iz2);
    g_m.y() += g_j(1, 2) * (-k.fy * iz2);
    g_m.z() += g_j(0, 0) * (-k.fx * iz2) + g_j(0, 2) * (2.0 * k.fx * x * iz3) +
               g_j(1, 1) * (-k.fy * iz2) + g_j(1, 2) * (2.0 * k.fy * y * iz3);
    g_m.z() += g_depth[n];

    const Mat3 g_cov_cam = j.transpose() * g * j;

    if (request.pose) {
      const Mat3 b = p.cov_cam * g_cov_cam - g_cov_cam * p.cov_cam;
      g_trans += g_m;
      g_rot += p.cam.cross(g_m) + 2.0 * Vec3(b(1, 2), b(2, 0), b(0, 1));
    }
    if (request.splats) {
      const auto& s = map.splats[p.index];
      auto& out_g = out.splat_gradients[p.index];
      out_g.center = cw.rotation.transpose() * g_m;
      const Mat3 g_cov = cw.rotation.transpose() * g_cov_cam * cw.rotation;
      const Mat3 r = s.orientation.toRotationMatrix();
      for (int a = 0; a < 3; ++a) {
        out_g.log_scale(a) = 2.0 * s.scale(a) * s.scale(a) * r.col(a).dot(g_cov * r.col(a));
      }
      const Mat3 cov = s.covariance();
      const Mat3 b = cov * g_cov - g_cov * cov;
      out_g.rotation = 2.0 * Vec3(b(1, 2), b(2, 0), b(0, 1));
      out_g.color = g_color[n];
      out_g.opacity = g_opacity[n];
    }
  }
  out.pose_gradient << g_rot, g_trans;
  out.image = std::move(raster.image);
  return out;
}

/// Gradient of the blended loss with respect to a camera-side 6-DOF increment
/// (rotation first), see `LossEvaluation`.
inline Vec6 pose_gradient(const GaussianMap& map, const Pose& pose, const Frame& gt,
                          const CameraIntrinsics& k, const LossWeights& w) {
  return evaluate_view(map, pose, gt, k, w, {true, false}).pose_gradient;
}

}  // namespace desksplat
