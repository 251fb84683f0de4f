#pragma once

#include <algorithm>
#include <cmath>
#include <condition_variable>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <deque>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <png.h>

#include "desksplat/error.hpp"
#include "desksplat/geometry.hpp"
#include "desksplat/image.hpp"
#include "desksplat/metrics.hpp"

namespace desksplat {

/// Depth PNG units per meter.
inline constexpr double kTumDepthScale = 5000.0;

namespace detail {

struct PngImage {
  png_image image{};
  PngImage() {
    image.version = PNG_IMAGE_VERSION;
  }
  ~PngImage() { png_image_free(&image); }
  PngImage(const PngImage&) = delete;
  PngImage& operator=(const PngImage&) = delete;
};

inline std::vector<std::uint8_t> read_png_raw(const std::filesystem::path& path, png_uint_32 format,
                                              int& width, int& height) {
  PngImage png;
  if (!png_image_begin_read_from_file(&png.image, path.c_str())) {
    throw Error(ErrorCode::kIoError, "cannot read PNG " + path.string() + ": " + png.image.message);
  }
  png.image.format = format;
  std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(png.image));
  if (!png_image_finish_read(&png.image, nullptr, buffer.data(), 0, nullptr)) {
    throw Error(ErrorCode::kIoError, "cannot decode PNG " + path.string() + ": " + png.image.message);
  }
  width = static_cast<int>(png.image.width);
  height = static_cast<int>(png.image.height);
  return buffer;
}

inline void write_png_raw(const std::filesystem::path& path, png_uint_32 format, int width, int height,
                          const void* data) {
  PngImage png;
  png.image.width = static_cast<png_uint_32>(width);
  png.image.height = static_cast<png_uint_32>(height);
  png.image.format = format;
  if (!png_image_write_to_file(&png.image, path.c_str(), 0, data, 0, nullptr)) {
    throw Error(ErrorCode::kIoError, "cannot write PNG " + path.string() + ": " + png.image.message);
  }
}

}  // namespace detail

/// 8-bit RGB PNG to [0, 1] color.
inline ColorImage read_color_png(const std::filesystem::path& path) {
  int w = 0, h = 0;
  const auto raw = detail::read_png_raw(path, PNG_FORMAT_RGB, w, h);
  ColorImage img(w, h);
  for (std::size_t i = 0; i < img.size(); ++i) {
    img[i] = Vec3(raw[3 * i], raw[3 * i + 1], raw[3 * i + 2]) / 255.0;
  }
  return img;
}

inline void write_color_png(const std::filesystem::path& path, const ColorImage& img) {
  std::vector<std::uint8_t> raw(3 * img.size());
  for (std::size_t i = 0; i < img.size(); ++i) {
    for (int c = 0; c < 3; ++c) {
      raw[3 * i + static_cast<std::size_t>(c)] =
          static_cast<std::uint8_t>(std::lround(std::clamp(img[i](c), 0.0, 1.0) * 255.0));
    }
  }
  detail::write_png_raw(path, PNG_FORMAT_RGB, img.width(), img.height(), raw.data());
}

/// 16-bit single-channel PNG holding depth * scale; 0 means invalid.
inline DepthImage read_depth_png(const std::filesystem::path& path, double scale = kTumDepthScale) {
  int w = 0, h = 0;
  const auto raw = detail::read_png_raw(path, PNG_FORMAT_LINEAR_Y, w, h);
  DepthImage img(w, h);
  for (std::size_t i = 0; i < img.size(); ++i) {
    std::uint16_t v = 0;
    std::memcpy(&v, raw.data() + 2 * i, sizeof(v));
    img[i] = static_cast<double>(v) / scale;
  }
  return img;
}

inline void write_depth_png(const std::filesystem::path& path, const DepthImage& img,
                            double scale = kTumDepthScale) {
  std::vector<std::uint16_t> raw(img.size());
  for (std::size_t i = 0; i < img.size(); ++i) {
    const double v = std::round(img[i] * scale);
    raw[i] = static_cast<std::uint16_t>(std::clamp(v, 0.0, 65535.0));
  }
  detail::write_png_raw(path, PNG_FORMAT_LINEAR_Y, img.width(), img.height(), raw.data());
}

/// Writes `timestamp tx ty tz qx qy qz qw` lines with 6 decimals.
inline void export_trajectory(const Trajectory& traj, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  out << std::fixed << std::setprecision(6);
  for (const auto& e : traj) {
    const auto q = quaternion_from_rotation(e.pose.rotation);
    out << e.timestamp << ' ' << e.pose.translation.x() << ' ' << e.pose.translation.y() << ' '
        << e.pose.translation.z() << ' ' << q(1) << ' ' << q(2) << ' ' << q(3) << ' ' << q(0) << '\n';
  }
  if (!out) throw Error(ErrorCode::kIoError, "write failed for " + path.string());
}

inline Trajectory read_trajectory(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  Trajectory traj;
  std::string line;
  while (std::getline(in, line)) {
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream fields(line);
    double ts, tx, ty, tz, qx, qy, qz, qw;
    if (!(fields >> ts >> tx >> ty >> tz >> qx >> qy >> qz >> qw)) {
      throw Error(ErrorCode::kDatasetError, "malformed trajectory line in " + path.string());
    }
    traj.push_back(ts, Pose{rotation_from_quaternion(qw, qx, qy, qz), Vec3(tx, ty, tz)});
  }
  return traj;
}

struct TimedPath {
  double timestamp = 0.0;
  std::string path;
};

inline std::vector<TimedPath> read_file_list(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kDatasetError, "missing index file " + path.string());
  std::vector<TimedPath> out;
  std::string line;
  while (std::getline(in, line)) {
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream fields(line);
    TimedPath e;
    if (!(fields >> e.timestamp >> e.path)) {
      throw Error(ErrorCode::kDatasetError, "malformed line in " + path.string());
    }
    out.push_back(e);
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const TimedPath& a, const TimedPath& b) { return a.timestamp < b.timestamp; });
  return out;
}

/// Writes `fx fy cx cy near far` next to a TUM-layout dataset.
inline void write_intrinsics(const std::filesystem::path& path, const CameraIntrinsics& k) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  out << std::setprecision(17) << k.fx << ' ' << k.fy << ' ' << k.cx << ' ' << k.cy << ' ' << k.near << ' '
      << k.far << '\n';
}

/// Pinhole parameters for a dataset directory: `intrinsics.txt` when present,
/// otherwise the common TUM default (525, 525, 319.5, 239.5).
inline CameraIntrinsics read_intrinsics(const std::filesystem::path& dir, int width, int height) {
  CameraIntrinsics k{525.0, 525.0, 319.5, 239.5, width, height, 0.1, 10.0};
  const auto path = dir / "intrinsics.txt";
  if (std::filesystem::exists(path)) {
    std::ifstream in(path);
    if (!(in >> k.fx >> k.fy >> k.cx >> k.cy)) {
      throw Error(ErrorCode::kDatasetError, "malformed " + path.string());
    }
    double near = 0, far = 0;
    if (in >> near >> far) {
      k.near = near;
      k.far = far;
    }
  }
  k.width = width;
  k.height = height;
  k.validate();
  return k;
}

struct TumAssociation {
  double timestamp = 0.0;
  std::filesystem::path color;
  std::filesystem::path depth;
  Pose groundtruth;
};

/// Index of a TUM RGB-D directory: color/depth/ground-truth entries associated
/// by nearest timestamp. Images are decoded on demand.
class TumSequence {
 public:
  explicit TumSequence(const std::filesystem::path& dir, double max_dt = kAssociationWindow) : dir_(dir) {
    if (!std::filesystem::is_directory(dir)) throw Error(ErrorCode::kDatasetError, "no such dataset " + dir.string());
    const auto rgb = read_file_list(dir / "rgb.txt");
    const auto depth = read_file_list(dir / "depth.txt");
    if (!std::filesystem::exists(dir / "groundtruth.txt")) {
      throw Error(ErrorCode::kDatasetError, "missing index file " + (dir / "groundtruth.txt").string());
    }
    groundtruth_ = read_trajectory(dir / "groundtruth.txt");

    for (const auto& c : rgb) {
      const auto d = nearest(depth, c.timestamp, max_dt);
      const auto g = groundtruth_.nearest(c.timestamp, max_dt);
      if (!d || g < 0) {
        ++skipped_;
        continue;
      }
      entries_.push_back({c.timestamp, dir / c.path, dir / depth[*d].path,
                          groundtruth_[static_cast<std::size_t>(g)].pose});
    }
    if (entries_.empty()) throw Error(ErrorCode::kDatasetError, "no associated frames in " + dir.string());

    // Image size comes from the first color image.
    const ColorImage first = read_color_png(entries_.front().color);
    intrinsics_ = read_intrinsics(dir, first.width(), first.height());
  }

  std::size_t size() const { return entries_.size(); }
  std::size_t skipped() const { return skipped_; }
  const CameraIntrinsics& intrinsics() const { return intrinsics_; }
  const TumAssociation& entry(std::size_t i) const { return entries_[i]; }

  /// Ground truth at the associated frames.
  Trajectory associated_groundtruth() const {
    Trajectory t;
    for (const auto& e : entries_) t.push_back(e.timestamp, e.groundtruth);
    return t;
  }

  Frame load(std::size_t i) const {
    const auto& e = entries_.at(i);
    Frame f;
    f.id = static_cast<int>(i);
    f.timestamp = e.timestamp;
    f.color = read_color_png(e.color);
    f.depth = read_depth_png(e.depth);
    f.intrinsics = intrinsics_;
    if (!f.valid()) throw Error(ErrorCode::kDatasetError, "frame " + std::to_string(i) + " has inconsistent size");
    return f;
  }

 private:
  static std::optional<std::size_t> nearest(const std::vector<TimedPath>& list, double t, double max_dt) {
    auto it = std::lower_bound(list.begin(), list.end(), t,
                               [](const TimedPath& e, double v) { return e.timestamp < v; });
    std::optional<std::size_t> best;
    double best_dt = max_dt;
    for (auto c : {it, it == list.begin() ? list.end() : std::prev(it)}) {
      if (c == list.end()) continue;
      const double dt = std::abs(c->timestamp - t);
      if (dt <= best_dt && (!best || dt < best_dt)) {
        best_dt = dt;
        best = static_cast<std::size_t>(c - list.begin());
      }
    }
    return best;
  }

  std::filesystem::path dir_;
  Trajectory groundtruth_;
  std::vector<TumAssociation> entries_;
  std::size_t skipped_ = 0;
  CameraIntrinsics intrinsics_;
};

struct TumDataset {
  std::vector<Frame> frames;
  Trajectory groundtruth;
  std::size_t skipped = 0;
};

inline TumDataset load_tum(const std::filesystem::path& dir) {
  const TumSequence seq(dir);
  TumDataset out;
  out.skipped = seq.skipped();
  out.groundtruth = seq.associated_groundtruth();
  for (std::size_t i = 0; i < seq.size(); ++i) out.frames.push_back(seq.load(i));
  return out;
}

/// Writes frames and ground truth in TUM layout (rgb/, depth/, index files,
/// intrinsics.txt).
inline void write_tum(const std::filesystem::path& dir, const std::vector<Frame>& frames,
                      const Trajectory& groundtruth) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "rgb");
  fs::create_directories(dir / "depth");
  std::ofstream rgb(dir / "rgb.txt");
  std::ofstream depth(dir / "depth.txt");
  if (!rgb || !depth) throw Error(ErrorCode::kIoError, "cannot write index files in " + dir.string());
  rgb << "# color images\n# timestamp filename\n" << std::fixed << std::setprecision(6);
  depth << "# depth images\n# timestamp filename\n" << std::fixed << std::setprecision(6);
  for (const auto& f : frames) {
    char name[32];
    std::snprintf(name, sizeof(name), "%06d.png", f.id);
    write_color_png(dir / "rgb" / name, f.color);
    write_depth_png(dir / "depth" / name, f.depth);
    rgb << f.timestamp << " rgb/" << name << '\n';
    depth << f.timestamp << " depth/" << name << '\n';
  }
  export_trajectory(groundtruth, dir / "groundtruth.txt");
  if (!frames.empty()) write_intrinsics(dir / "intrinsics.txt", frames.front().intrinsics);
}

/// Bounded single-producer queue that decodes frames ahead of the consumer.
/// Frames are delivered in index order.
class FramePrefetcher {
 public:
  FramePrefetcher(const TumSequence& seq, std::vector<std::size_t> indices, std::size_t capacity)
      : seq_(seq), indices_(std::move(indices)), capacity_(std::max<std::size_t>(1, capacity)) {
    worker_ = std::thread([this] { produce(); });
  }

  ~FramePrefetcher() {
    {
      std::lock_guard lock(mutex_);
      stop_ = true;
    }
    cv_.notify_all();
    if (worker_.joinable()) worker_.join();
  }

  FramePrefetcher(const FramePrefetcher&) = delete;
  FramePrefetcher& operator=(const FramePrefetcher&) = delete;

  /// Next frame, or nullopt once all indices have been delivered.
  std::optional<Frame> next() {
    std::unique_lock lock(mutex_);
    cv_.wait(lock, [this] { return !queue_.empty() || done_; });
    if (queue_.empty()) {
      if (error_) std::rethrow_exception(error_);
      return std::nullopt;
    }
    Frame f = std::move(queue_.front());
    queue_.pop_front();
    cv_.notify_all();
    return f;
  }

 private:
  void produce() {
    try {
      for (std::size_t i : indices_) {
        Frame f = seq_.load(i);
        std::unique_lock lock(mutex_);
        cv_.wait(lock, [this] { return queue_.size() < capacity_ || stop_; });
        if (stop_) return;
        queue_.push_back(std::move(f));
        cv_.notify_all();
      }
    } catch (...) {
      std::lock_guard lock(mutex_);
      error_ = std::current_exception();
    }
    std::lock_guard lock(mutex_);
    done_ = true;
    cv_.notify_all();
  }

  const TumSequence& seq_;
  std::vector<std::size_t> indices_;
  std::size_t capacity_;
  std::deque<Frame> queue_;
  std::mutex mutex_;
  std::condition_variable cv_;
  bool stop_ = false;
  bool done_ = false;
  std::exception_ptr error_;
  std::thread worker_;
};

}  // namespace desksplat
