#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "desksplat/error.hpp"
#include "desksplat/frontend.hpp"
#include "desksplat/gaussian_map.hpp"
#include "desksplat/geometry.hpp"
#include "desksplat/io.hpp"
#include "desksplat/mapper.hpp"
#include "desksplat/metrics.hpp"
#include "desksplat/renderer.hpp"
#include "desksplat/synthetic.hpp"
#include "desksplat/tracker.hpp"

namespace desksplat {

enum class DatasetType { kSynthetic, kTum };
enum class TrackingMethod { kFeature, kConstantVelocity };

struct SyntheticConfig {
  int n_frames = 50;
  int width = 64;
  int height = 64;
  std::uint64_t scene_seed = 1;
  /// Gaussian pixel noise of the oracle matcher.
  double match_noise_px = 0.0;
  double match_dropout = 0.0;
  double depth_noise = 0.0;
  double corrupt_range = 0.0;
};

struct RunConfig {
  DatasetType dataset_type = DatasetType::kSynthetic;
  std::string dataset_path;
  /// Directory of `matches_<i>_<j>.txt` files. Required for TUM datasets; for
  /// synthetic data the oracle matcher is used when empty.
  std::string matches_path;
  SyntheticConfig synthetic;
  int stride = 1;
  /// 0 processes every available frame.
  int max_frames = 0;
  TrackingMethod method = TrackingMethod::kFeature;
  TrackerConfig tracker;
  LossWeights loss;
  KeyframePolicy keyframes;
  SamplingStrategy sampling;
  DensifyConfig densify;
  int mapping_iters = 60;
  int color_refine_iters = 100;
  std::uint64_t seed = 0;
  std::string output_dir = "out";
  std::size_t prefetch_capacity = 4;

  void validate() const {
    auto fail = [](const std::string& what) { throw Error(ErrorCode::kInvalidArgument, what); };
    if (stride < 1) fail("stride must be >= 1");
    if (max_frames < 0) fail("max_frames must be >= 0");
    if (!tracker.valid()) fail("invalid tracker settings");
    if (!loss.valid()) fail("lambda must lie in [0, 1]");
    if (!keyframes.valid()) fail("invalid keyframe policy");
    if (!sampling.valid()) fail("mixture probability must lie in [0, 1]");
    if (mapping_iters < 0 || color_refine_iters < 0) fail("iteration counts must be >= 0");
    if (prefetch_capacity < 1) fail("prefetch capacity must be >= 1");
    if (dataset_type == DatasetType::kTum && dataset_path.empty()) fail("TUM datasets need a path");
    if (dataset_type == DatasetType::kSynthetic && (synthetic.n_frames < 1 || synthetic.width < 11 ||
                                                     synthetic.height < 11)) {
      fail("synthetic sequences need >= 1 frame of at least 11x11 pixels");
    }
  }
};

inline std::string to_string(DatasetType t) { return t == DatasetType::kTum ? "tum" : "synthetic"; }
inline std::string to_string(TrackingMethod m) {
  return m == TrackingMethod::kFeature ? "feature" : "const_velocity";
}
inline std::string to_string(KeyframeMode m) { return m == KeyframeMode::kDense ? "dense" : "sparse"; }
inline std::string to_string(SamplingMode m) {
  switch (m) {
    case SamplingMode::kRandom: return "random";
    case SamplingMode::kWorstFirst: return "worst_first";
    case SamplingMode::kLossWeighted: return "loss_weighted";
  }
  return "";
}

inline DatasetType parse_dataset_type(const std::string& s) {
  if (s == "synthetic") return DatasetType::kSynthetic;
  if (s == "tum") return DatasetType::kTum;
  throw Error(ErrorCode::kInvalidArgument, "unknown dataset type '" + s + "'");
}
inline TrackingMethod parse_method(const std::string& s) {
  if (s == "feature") return TrackingMethod::kFeature;
  if (s == "const_velocity") return TrackingMethod::kConstantVelocity;
  throw Error(ErrorCode::kInvalidArgument, "unknown method '" + s + "'");
}
inline KeyframeMode parse_keyframe_mode(const std::string& s) {
  if (s == "dense") return KeyframeMode::kDense;
  if (s == "sparse") return KeyframeMode::kSparse;
  throw Error(ErrorCode::kInvalidArgument, "unknown keyframe mode '" + s + "'");
}
inline SamplingMode parse_sampling_mode(const std::string& s) {
  if (s == "random") return SamplingMode::kRandom;
  if (s == "worst_first") return SamplingMode::kWorstFirst;
  if (s == "loss_weighted") return SamplingMode::kLossWeighted;
  throw Error(ErrorCode::kInvalidArgument, "unknown sampling mode '" + s + "'");
}

using Json = nlohmann::ordered_json;

inline Json to_json(const RunConfig& c) {
  Json j;
  j["dataset"] = {{"type", to_string(c.dataset_type)}, {"path", c.dataset_path}, {"matches", c.matches_path}};
  j["synthetic"] = {{"n_frames", c.synthetic.n_frames},
                    {"width", c.synthetic.width},
                    {"height", c.synthetic.height},
                    {"scene_seed", c.synthetic.scene_seed},
                    {"match_noise_px", c.synthetic.match_noise_px},
                    {"match_dropout", c.synthetic.match_dropout},
                    {"depth_noise", c.synthetic.depth_noise},
                    {"corrupt_range", c.synthetic.corrupt_range}};
  j["stride"] = c.stride;
  j["max_frames"] = c.max_frames;
  j["method"] = to_string(c.method);
  j["tracker"] = {{"refine_iters", c.tracker.refine_iters},
                  {"step_scale", c.tracker.step_scale},
                  {"percentile", c.tracker.percentile},
                  {"min_confidence", c.tracker.min_confidence},
                  {"rotation_step", c.tracker.rotation_step},
                  {"translation_step", c.tracker.translation_step},
                  {"step_decay", c.tracker.step_decay}};
  j["loss"] = {{"lambda", c.loss.lambda}};
  j["keyframes"] = {{"mode", to_string(c.keyframes.mode)},
                    {"iou_threshold", c.keyframes.iou_threshold},
                    {"k", c.keyframes.k}};
  j["sampling"] = {{"mode", to_string(c.sampling.mode)}, {"mix_p", c.sampling.mix_p}};
  j["densify"] = {{"tau", c.densify.tau},
                  {"coverage_alpha", c.densify.coverage_alpha},
                  {"pixel_stride", c.densify.pixel_stride},
                  {"correct_pose", c.densify.correct_pose}};
  j["mapping_iters"] = c.mapping_iters;
  j["color_refine_iters"] = c.color_refine_iters;
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  j["prefetch_capacity"] = c.prefetch_capacity;
  return j;
}

namespace detail {

template <class T>
void read_field(const Json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace detail

/// Overlays the keys present in `j` onto `base`.
inline RunConfig config_from_json(const Json& j, RunConfig c = {}) {
  using detail::read_field;
  try {
    if (j.contains("dataset")) {
      const auto& d = j.at("dataset");
      if (d.contains("type")) c.dataset_type = parse_dataset_type(d.at("type").get<std::string>());
      read_field(d, "path", c.dataset_path);
      read_field(d, "matches", c.matches_path);
    }
    if (j.contains("synthetic")) {
      const auto& s = j.at("synthetic");
      read_field(s, "n_frames", c.synthetic.n_frames);
      read_field(s, "width", c.synthetic.width);
      read_field(s, "height", c.synthetic.height);
      read_field(s, "scene_seed", c.synthetic.scene_seed);
      read_field(s, "match_noise_px", c.synthetic.match_noise_px);
      read_field(s, "match_dropout", c.synthetic.match_dropout);
      read_field(s, "depth_noise", c.synthetic.depth_noise);
      read_field(s, "corrupt_range", c.synthetic.corrupt_range);
    }
    read_field(j, "stride", c.stride);
    read_field(j, "max_frames", c.max_frames);
    if (j.contains("method")) c.method = parse_method(j.at("method").get<std::string>());
    if (j.contains("tracker")) {
      const auto& t = j.at("tracker");
      read_field(t, "refine_iters", c.tracker.refine_iters);
      read_field(t, "step_scale", c.tracker.step_scale);
      read_field(t, "percentile", c.tracker.percentile);
      read_field(t, "min_confidence", c.tracker.min_confidence);
      read_field(t, "rotation_step", c.tracker.rotation_step);
      read_field(t, "translation_step", c.tracker.translation_step);
      read_field(t, "step_decay", c.tracker.step_decay);
    }
    if (j.contains("loss")) read_field(j.at("loss"), "lambda", c.loss.lambda);
    if (j.contains("keyframes")) {
      const auto& k = j.at("keyframes");
      if (k.contains("mode")) c.keyframes.mode = parse_keyframe_mode(k.at("mode").get<std::string>());
      read_field(k, "iou_threshold", c.keyframes.iou_threshold);
      read_field(k, "k", c.keyframes.k);
    }
    if (j.contains("sampling")) {
      const auto& s = j.at("sampling");
      if (s.contains("mode")) c.sampling.mode = parse_sampling_mode(s.at("mode").get<std::string>());
      read_field(s, "mix_p", c.sampling.mix_p);
    }
    if (j.contains("densify")) {
      const auto& d = j.at("densify");
      read_field(d, "tau", c.densify.tau);
      read_field(d, "coverage_alpha", c.densify.coverage_alpha);
      read_field(d, "pixel_stride", c.densify.pixel_stride);
      read_field(d, "correct_pose", c.densify.correct_pose);
    }
    read_field(j, "mapping_iters", c.mapping_iters);
    read_field(j, "color_refine_iters", c.color_refine_iters);
    read_field(j, "seed", c.seed);
    read_field(j, "output_dir", c.output_dir);
    read_field(j, "prefetch_capacity", c.prefetch_capacity);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("bad config value: ") + e.what());
  }
  return c;
}

inline RunConfig load_config(const std::filesystem::path& path, RunConfig base = {}) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open config " + path.string());
  try {
    return config_from_json(Json::parse(in), std::move(base));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::kInvalidArgument, path.string() + ": " + e.what());
  }
}

/// Indices 0, s, 2s, ... below n.
inline std::vector<std::size_t> stride_subsample(std::size_t n, int stride) {
  if (stride < 1) throw Error(ErrorCode::kInvalidArgument, "stride must be >= 1");
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < n; i += static_cast<std::size_t>(stride)) out.push_back(i);
  return out;
}

/// Frames plus ground truth and the matcher that serves them.
class DataSource {
 public:
  explicit DataSource(const RunConfig& cfg) {
    if (cfg.dataset_type == DatasetType::kSynthetic) {
      const auto& s = cfg.synthetic;
      scene_ = std::make_unique<SyntheticScene>(SyntheticScene::desk(s.scene_seed));
      SyntheticOptions opts;
      opts.intrinsics = desk_intrinsics(s.width, s.height);
      opts.depth_noise = s.depth_noise;
      opts.corrupt_range = s.corrupt_range;
      opts.seed = s.scene_seed;
      auto seq = generate_synthetic(*scene_, CameraPath::seeded(scene_->look_at, s.scene_seed), s.n_frames, opts);
      frames_ = std::move(seq.frames);
      groundtruth_ = std::move(seq.groundtruth);
      if (cfg.matches_path.empty()) {
        provider_ = std::make_unique<SyntheticMatcher>(*scene_, groundtruth_, s.match_noise_px, s.match_dropout,
                                                       cfg.seed);
      }
      size_ = frames_.size();
    } else {
      tum_ = std::make_unique<TumSequence>(cfg.dataset_path);
      groundtruth_ = tum_->associated_groundtruth();
      skipped_ = tum_->skipped();
      size_ = tum_->size();
      if (cfg.matches_path.empty()) {
        throw Error(ErrorCode::kInvalidArgument, "TUM datasets need a match directory");
      }
    }
    if (!provider_) provider_ = std::make_unique<FileMatcher>(cfg.matches_path);
  }

  std::size_t size() const { return size_; }
  std::size_t skipped() const { return skipped_; }
  const Trajectory& groundtruth() const { return groundtruth_; }
  const CorrespondenceProvider& provider() const { return *provider_; }
  const SyntheticScene* scene() const { return scene_.get(); }
  const TumSequence* tum() const { return tum_.get(); }
  /// In-memory frames; empty for TUM data, which is decoded on demand.
  const std::vector<Frame>& frames() const { return frames_; }

 private:
  std::unique_ptr<SyntheticScene> scene_;
  std::unique_ptr<TumSequence> tum_;
  std::vector<Frame> frames_;
  Trajectory groundtruth_;
  std::unique_ptr<CorrespondenceProvider> provider_;
  std::size_t size_ = 0;
  std::size_t skipped_ = 0;
};

/// Quality metrics of one run. Contains no wall-clock quantities, so equal
/// inputs give equal reports.
struct MetricReport {
  double ate_cm = 0.0;
  double keyframe_ate_cm = 0.0;
  double psnr_db = 0.0;
  double ssim = 0.0;
  std::size_t frames = 0;
  std::size_t keyframes = 0;
  std::size_t splats = 0;
  std::size_t fallbacks = 0;
};

struct TimingReport {
  double ms_per_frame = 0.0;
  double total_ms = 0.0;
};

struct RunResult {
  Trajectory estimate;
  Trajectory keyframe_estimate;
  GaussianMap map;
  std::vector<Keyframe> keyframes;
  MetricReport metrics;
  TimingReport timing;
};

inline Json to_json(const MetricReport& m) {
  return Json{{"ate_cm", m.ate_cm},          {"keyframe_ate_cm", m.keyframe_ate_cm},
              {"psnr_db", m.psnr_db},        {"ssim", m.ssim},
              {"frames", m.frames},          {"keyframes", m.keyframes},
              {"splats", m.splats},          {"fallbacks", m.fallbacks}};
}

inline Json to_json(const TimingReport& t) {
  return Json{{"ms_per_frame", t.ms_per_frame}, {"total_ms", t.total_ms}};
}

/// Mean PSNR and SSIM of the map rendered at the keyframe poses.
inline std::pair<double, double> render_quality(const GaussianMap& map, std::span<const Keyframe> keyframes) {
  if (keyframes.empty()) throw Error(ErrorCode::kEmptyKeyframeSet, "no keyframes");
  double p = 0.0, s = 0.0;
  for (const auto& kf : keyframes) {
    const auto img = render(map, kf.pose, kf.frame.intrinsics).color;
    p += psnr(img, kf.frame.color);
    s += ssim(img, kf.frame.color);
  }
  const auto n = static_cast<double>(keyframes.size());
  return {p / n, s / n};
}

/// Prior-motion tracking: the pose is extrapolated from the two previous
/// estimates and refined against the map.
inline TrackResult track_constant_velocity(const Frame& current, const Pose& previous_pose,
                                           std::optional<Pose> before_previous_pose, const GaussianMap& map,
                                           const TrackerConfig& cfg, const LossWeights& w) {
  const auto start = std::chrono::steady_clock::now();
  TrackResult out;
  out.initial_pose =
      before_previous_pose ? constant_velocity_predict(*before_previous_pose, previous_pose) : previous_pose;
  out.pose = out.initial_pose;
  if (cfg.refine_iters > 0 && !map.empty()) {
    out.pose = refine_pose(out.initial_pose, current, map, current.intrinsics, cfg.refine_iters, w, cfg);
  }
  out.elapsed_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return out;
}

/// Tracks and maps the stride-subsampled sequence. The first processed frame
/// is anchored at its ground-truth pose.
inline RunResult run_experiment(const RunConfig& cfg, const DataSource& data) {
  cfg.validate();
  auto indices = stride_subsample(data.size(), cfg.stride);
  if (cfg.max_frames > 0 && indices.size() > static_cast<std::size_t>(cfg.max_frames)) {
    indices.resize(static_cast<std::size_t>(cfg.max_frames));
  }
  if (indices.size() < 2) throw Error(ErrorCode::kDatasetError, "need at least two frames after subsampling");

  std::unique_ptr<FramePrefetcher> prefetch;
  if (data.tum() != nullptr) prefetch = std::make_unique<FramePrefetcher>(*data.tum(), indices, cfg.prefetch_capacity);
  auto next_frame = [&](std::size_t i) -> Frame {
    if (!prefetch) return data.frames()[i];
    auto f = prefetch->next();
    if (!f) throw Error(ErrorCode::kDatasetError, "frame stream ended early");
    return std::move(*f);
  };

  Rng rng(cfg.seed);
  RunResult out;
  GaussianMap& map = out.map;
  std::vector<Keyframe>& keyframes = out.keyframes;
  MapOptimizer optimizer;
  double tracking_ms = 0.0;
  const auto run_start = std::chrono::steady_clock::now();

  Frame previous;
  Pose previous_pose;
  std::optional<Pose> before_previous;
  for (std::size_t n = 0; n < indices.size(); ++n) {
    Frame frame = next_frame(indices[n]);
    Pose pose;
    if (n == 0) {
      const auto g = data.groundtruth().nearest(frame.timestamp, kAssociationWindow);
      if (g < 0) throw Error(ErrorCode::kDatasetError, "first frame has no ground-truth pose");
      pose = data.groundtruth()[static_cast<std::size_t>(g)].pose;
    } else {
      const TrackResult tr =
          cfg.method == TrackingMethod::kFeature
              ? track_frame(previous, previous_pose, frame, data.provider(), map, cfg.tracker, cfg.loss,
                            before_previous)
              : track_constant_velocity(frame, previous_pose, before_previous, map, cfg.tracker, cfg.loss);
      pose = tr.pose;
      tracking_ms += tr.elapsed_ms;
      out.metrics.fallbacks += tr.fallback ? 1 : 0;
    }

    const auto dens = densify(map, frame, pose, frame.intrinsics, cfg.densify);
    pose = dens.pose;

    const bool is_keyframe =
        should_add_keyframe(cfg.keyframes, map, pose, static_cast<int>(n), frame.intrinsics);
    out.estimate.push_back(frame.timestamp, pose);
    if (is_keyframe) {
      map.add_keyframe(frame.id, pose);
      out.keyframe_estimate.push_back(frame.timestamp, pose);
    }

    keyframes.push_back({frame, pose});
    optimize_map_detailed(map, keyframes, cfg.mapping_iters, cfg.loss, rng, optimizer);
    if (!is_keyframe) keyframes.pop_back();

    before_previous = n == 0 ? std::nullopt : std::optional<Pose>(previous_pose);
    previous = std::move(frame);
    previous_pose = pose;
  }

  if (cfg.color_refine_iters > 0) {
    RefineColorsConfig rc;
    rc.weights = cfg.loss;
    refine_colors(map, keyframes, cfg.color_refine_iters, cfg.sampling, rng, rc);
  }

  const auto total_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - run_start).count();
  auto& m = out.metrics;
  m.frames = indices.size();
  m.keyframes = keyframes.size();
  m.splats = map.splats.size();
  m.ate_cm = ate(out.estimate, data.groundtruth()).rmse_cm;
  m.keyframe_ate_cm = out.keyframe_estimate.size() >= 2 ? ate(out.keyframe_estimate, data.groundtruth()).rmse_cm : 0.0;
  std::tie(m.psnr_db, m.ssim) = render_quality(map, keyframes);
  out.timing.total_ms = total_ms;
  out.timing.ms_per_frame = tracking_ms / static_cast<double>(indices.size() - 1);
  return out;
}

inline RunResult run_experiment(const RunConfig& cfg) {
  cfg.validate();
  const DataSource data(cfg);
  return run_experiment(cfg, data);
}

inline void write_json(const std::filesystem::path& path, const Json& j) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

/// Writes trajectory.txt, keyframes.txt, map.ply, metrics.json, timing.json
/// and the resolved config into `dir`.
inline void write_run_outputs(const std::filesystem::path& dir, const RunConfig& cfg, const RunResult& r) {
  std::filesystem::create_directories(dir);
  export_trajectory(r.estimate, dir / "trajectory.txt");
  export_trajectory(r.keyframe_estimate, dir / "keyframes.txt");
  write_ply(dir / "map.ply", r.map);
  write_json(dir / "metrics.json", to_json(r.metrics));
  write_json(dir / "timing.json", to_json(r.timing));
  write_json(dir / "config.json", to_json(cfg));
}

inline void print_report(std::ostream& os, const MetricReport& m, const TimingReport& t) {
  os << std::fixed << std::setprecision(4);
  os << "frames        " << m.frames << "\n"
     << "keyframes     " << m.keyframes << "\n"
     << "splats        " << m.splats << "\n"
     << "fallbacks     " << m.fallbacks << "\n"
     << "ATE (cm)      " << m.ate_cm << "\n"
     << "KF ATE (cm)   " << m.keyframe_ate_cm << "\n"
     << "PSNR (dB)     " << m.psnr_db << "\n"
     << "SSIM          " << m.ssim << "\n"
     << "ms/frame      " << t.ms_per_frame << "\n";
}

struct AblationRow {
  int stride = 1;
  std::string method;
  double ate_cm = 0.0;
  double psnr_db = 0.0;
  double ssim = 0.0;
  double ms_per_frame = 0.0;
};

inline constexpr const char* kAblationHeader = "stride,method,ate_cm,psnr_db,ssim,ms_per_frame";

inline void write_ablation_csv(std::ostream& os, const std::vector<AblationRow>& rows) {
  os << kAblationHeader << '\n';
  os << std::fixed << std::setprecision(6);
  for (const auto& r : rows) {
    os << r.stride << ',' << r.method << ',' << r.ate_cm << ',' << r.psnr_db << ',' << r.ssim << ','
       << r.ms_per_frame << '\n';
  }
}

struct AblationGrid {
  std::vector<int> strides{10, 20, 40};
  std::vector<TrackingMethod> methods{TrackingMethod::kFeature, TrackingMethod::kConstantVelocity};
  /// Empty keeps the base config's value.
  std::vector<int> refine_iters;
  std::vector<SamplingMode> sampling;
};

/// Runs the cartesian product of the grid on one data source. The method
/// column carries the swept refinement and sampling settings when present.
inline std::vector<AblationRow> run_ablation(const RunConfig& base, const AblationGrid& grid,
                                             const DataSource& data) {
  const std::vector<int> refine = grid.refine_iters.empty() ? std::vector<int>{base.tracker.refine_iters}
                                                            : grid.refine_iters;
  const std::vector<SamplingMode> sampling =
      grid.sampling.empty() ? std::vector<SamplingMode>{base.sampling.mode} : grid.sampling;
  std::vector<AblationRow> rows;
  for (int stride : grid.strides) {
    for (auto method : grid.methods) {
      for (int iters : refine) {
        for (auto mode : sampling) {
          RunConfig cfg = base;
          cfg.stride = stride;
          cfg.method = method;
          cfg.tracker.refine_iters = iters;
          cfg.sampling.mode = mode;
          const auto r = run_experiment(cfg, data);
          std::string label = to_string(method);
          if (!grid.refine_iters.empty()) label += "+refine" + std::to_string(iters);
          if (!grid.sampling.empty()) label += "+" + to_string(mode);
          rows.push_back({stride, label, r.metrics.ate_cm, r.metrics.psnr_db, r.metrics.ssim,
                          r.timing.ms_per_frame});
        }
      }
    }
  }
  return rows;
}

/// Writes a synthetic sequence in TUM layout plus oracle match files for
/// every pair (i, i + s), s in `match_strides`, under `dir/matches`.
inline void write_synthetic_dataset(const std::filesystem::path& dir, const SyntheticConfig& s,
                                    const std::vector<int>& match_strides, std::uint64_t match_seed) {
  const auto scene = SyntheticScene::desk(s.scene_seed);
  SyntheticOptions opts;
  opts.intrinsics = desk_intrinsics(s.width, s.height);
  opts.depth_noise = s.depth_noise;
  opts.corrupt_range = s.corrupt_range;
  opts.seed = s.scene_seed;
  const auto seq = generate_synthetic(scene, CameraPath::seeded(scene.look_at, s.scene_seed), s.n_frames, opts);
  write_tum(dir, seq.frames, seq.groundtruth);
  std::filesystem::create_directories(dir / "matches");
  const SyntheticMatcher matcher(scene, seq.groundtruth, s.match_noise_px, s.match_dropout, match_seed);
  for (int stride : match_strides) {
    if (stride < 1) throw Error(ErrorCode::kInvalidArgument, "match stride must be >= 1");
    for (std::size_t i = 0; i + static_cast<std::size_t>(stride) < seq.frames.size();
         i += static_cast<std::size_t>(stride)) {
      const auto& a = seq.frames[i];
      const auto& b = seq.frames[i + static_cast<std::size_t>(stride)];
      write_match_file(dir / "matches" / match_file_name(a.id, b.id), matcher.match(a, b), a.id, b.id);
    }
  }
}

}  // namespace desksplat
