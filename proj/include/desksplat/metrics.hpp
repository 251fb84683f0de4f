#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "desksplat/error.hpp"
#include "desksplat/geometry.hpp"
#include "desksplat/image.hpp"

namespace desksplat {

/// PSNR reported for identical images.
inline constexpr double kPsnrCap = 100.0;

struct TrajectoryEntry {
  double timestamp = 0.0;
  Pose pose;
};

/// Timestamped poses with strictly increasing timestamps.
class Trajectory {
 public:
  Trajectory() = default;
  explicit Trajectory(std::vector<TrajectoryEntry> entries) {
    for (auto& e : entries) push_back(e.timestamp, e.pose);
  }

  void push_back(double timestamp, const Pose& pose) {
    if (!entries_.empty() && !(timestamp > entries_.back().timestamp)) {
      throw Error(ErrorCode::kInvalidArgument, "trajectory timestamps must increase strictly");
    }
    entries_.push_back({timestamp, pose});
  }

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const TrajectoryEntry& operator[](std::size_t i) const { return entries_[i]; }
  const std::vector<TrajectoryEntry>& entries() const { return entries_; }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  /// Index of the entry nearest to `t` within `max_dt`, or -1.
  std::ptrdiff_t nearest(double t, double max_dt) const {
    auto it = std::lower_bound(entries_.begin(), entries_.end(), t,
                               [](const TrajectoryEntry& e, double v) { return e.timestamp < v; });
    std::ptrdiff_t best = -1;
    double best_dt = max_dt;
    auto consider = [&](decltype(it) c) {
      if (c == entries_.end()) return;
      const double dt = std::abs(c->timestamp - t);
      if (dt <= best_dt && (best < 0 || dt < best_dt)) {
        best_dt = dt;
        best = c - entries_.begin();
      }
    };
    consider(it);
    if (it != entries_.begin()) consider(std::prev(it));
    return best;
  }

 private:
  std::vector<TrajectoryEntry> entries_;
};

inline constexpr double kAssociationWindow = 0.02;

struct AteResult {
  double rmse_cm = 0.0;
  std::size_t pairs = 0;
  Pose alignment;
};

/// Absolute trajectory error: positions are associated by nearest timestamp,
/// the estimate is rigidly aligned onto the ground truth (no scale), and the
/// RMSE of the remaining position differences is returned in centimeters.
inline AteResult ate(const Trajectory& est, const Trajectory& gt, double max_dt = kAssociationWindow) {
  PointSet src;
  PointSet dst;
  for (const auto& e : est) {
    const auto j = gt.nearest(e.timestamp, max_dt);
    if (j < 0) continue;
    src.push_back(e.pose.translation);
    dst.push_back(gt[static_cast<std::size_t>(j)].pose.translation);
  }
  if (src.size() < 2) throw Error(ErrorCode::kInsufficientOverlap, "fewer than 2 associated poses");
  AteResult out;
  out.pairs = src.size();
  out.alignment = detail::fit_rigid(src, dst).pose;
  double sum = 0.0;
  for (std::size_t i = 0; i < src.size(); ++i) sum += (dst[i] - out.alignment * src[i]).squaredNorm();
  out.rmse_cm = 100.0 * std::sqrt(sum / static_cast<double>(src.size()));
  return out;
}

inline double ate_rmse(const Trajectory& est, const Trajectory& gt) { return ate(est, gt).rmse_cm; }

inline double mse(const ColorImage& a, const ColorImage& b) {
  if (!a.same_shape(b) || a.empty()) throw Error(ErrorCode::kShapeError, "image shapes differ");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += (a[i] - b[i]).squaredNorm();
  return sum / (3.0 * static_cast<double>(a.size()));
}

/// 10 log10(1 / MSE) for images in [0, 1], capped at kPsnrCap.
inline double psnr(const ColorImage& a, const ColorImage& b) {
  const double m = mse(a, b);
  if (m <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / m));
}

/// ITU-R BT.601 luma.
inline ScalarImage to_gray(const ColorImage& img) {
  ScalarImage out(img.width(), img.height());
  for (std::size_t i = 0; i < img.size(); ++i) {
    out[i] = 0.299 * img[i].x() + 0.587 * img[i].y() + 0.114 * img[i].z();
  }
  return out;
}

namespace detail {

inline std::vector<double> gaussian_window(int size, double sigma) {
  std::vector<double> w(static_cast<std::size_t>(size));
  const double c = 0.5 * (size - 1);
  double sum = 0.0;
  for (int i = 0; i < size; ++i) {
    w[static_cast<std::size_t>(i)] = std::exp(-0.5 * (i - c) * (i - c) / (sigma * sigma));
    sum += w[static_cast<std::size_t>(i)];
  }
  for (auto& v : w) v /= sum;
  return w;
}

}  // namespace detail

/// Mean SSIM on luma over all valid 11x11 windows (Gaussian sigma 1.5,
/// C1 = 0.01^2, C2 = 0.03^2).
inline double ssim(const ScalarImage& a, const ScalarImage& b) {
  constexpr int kWin = 11;
  constexpr double kC1 = 0.01 * 0.01;
  constexpr double kC2 = 0.03 * 0.03;
  if (!a.same_shape(b)) throw Error(ErrorCode::kShapeError, "image shapes differ");
  if (a.width() < kWin || a.height() < kWin) {
    throw Error(ErrorCode::kWindowError, "images smaller than the 11x11 window");
  }
  const auto g = detail::gaussian_window(kWin, 1.5);
  const int ow = a.width() - kWin + 1;
  const int oh = a.height() - kWin + 1;
  double total = 0.0;
  for (int r = 0; r < oh; ++r) {
    for (int c = 0; c < ow; ++c) {
      double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
      for (int i = 0; i < kWin; ++i) {
        for (int j = 0; j < kWin; ++j) {
          const double wt = g[static_cast<std::size_t>(i)] * g[static_cast<std::size_t>(j)];
          const double x = a(r + i, c + j);
          const double y = b(r + i, c + j);
          ma += wt * x;
          mb += wt * y;
          saa += wt * x * x;
          sbb += wt * y * y;
          sab += wt * x * y;
        }
      }
      const double va = saa - ma * ma;
      const double vb = sbb - mb * mb;
      const double cov = sab - ma * mb;
      total += ((2 * ma * mb + kC1) * (2 * cov + kC2)) / ((ma * ma + mb * mb + kC1) * (va + vb + kC2));
    }
  }
  return total / (static_cast<double>(ow) * static_cast<double>(oh));
}

inline double ssim(const ColorImage& a, const ColorImage& b) { return ssim(to_gray(a), to_gray(b)); }

}  // namespace desksplat
