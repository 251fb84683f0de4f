// Command-line driver: run, eval, synth, ablate.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "desksplat/desksplat.hpp"

namespace {

using namespace desksplat;

/// Flags mirroring RunConfig. Unset flags leave the config file's value.
struct RunFlags {
  std::string config;
  std::optional<std::string> dataset_type, dataset, matches, method, keyframe_mode, sampling, out;
  std::optional<int> stride, max_frames, refine_iters, mapping_iters, color_refine_iters, kf_k;
  std::optional<int> frames, width, height;
  std::optional<double> lambda, iou, mix_p, step_scale, percentile, match_noise, depth_noise;
  std::optional<std::uint64_t> seed, scene_seed;
  std::optional<std::size_t> prefetch;
  bool no_pose_correction = false;

  void add_to(CLI::App& app) {
    app.add_option("-c,--config", config, "JSON config file")->check(CLI::ExistingFile);
    app.add_option("--dataset-type", dataset_type, "synthetic | tum");
    app.add_option("--dataset", dataset, "TUM dataset directory");
    app.add_option("--matches", matches, "directory of matches_<i>_<j>.txt files");
    app.add_option("--method", method, "feature | const_velocity");
    app.add_option("--stride", stride, "frame subsampling stride");
    app.add_option("--max-frames", max_frames, "cap on processed frames (0 = all)");
    app.add_option("--refine-iters", refine_iters, "pose refinement iterations");
    app.add_option("--step-scale", step_scale, "pose refinement step multiplier");
    app.add_option("--percentile", percentile, "depth truncation percentile in (0, 1]");
    app.add_option("--lambda", lambda, "color weight of the blended loss");
    app.add_option("--keyframe-mode", keyframe_mode, "dense | sparse");
    app.add_option("--iou", iou, "dense keyframe IoU threshold");
    app.add_option("--keyframe-k", kf_k, "sparse keyframe interval");
    app.add_option("--sampling", sampling, "random | worst_first | loss_weighted");
    app.add_option("--mix-p", mix_p, "loss-weighted draw probability");
    app.add_option("--mapping-iters", mapping_iters, "map optimization iterations per frame");
    app.add_option("--color-refine-iters", color_refine_iters, "final refinement iterations");
    app.add_option("--frames", frames, "synthetic sequence length");
    app.add_option("--width", width, "synthetic image width");
    app.add_option("--height", height, "synthetic image height");
    app.add_option("--scene-seed", scene_seed, "synthetic scene and path seed");
    app.add_option("--match-noise", match_noise, "oracle match noise, pixels");
    app.add_option("--depth-noise", depth_noise, "synthetic depth noise, meters");
    app.add_option("--seed", seed, "run seed");
    app.add_option("--prefetch", prefetch, "frame queue capacity");
    app.add_option("-o,--out", out, "output directory");
    app.add_flag("--no-pose-correction", no_pose_correction, "ignore ICP pose corrections");
  }

  RunConfig resolve() const {
    RunConfig c = config.empty() ? RunConfig{} : load_config(config);
    if (dataset_type) c.dataset_type = parse_dataset_type(*dataset_type);
    if (dataset) {
      c.dataset_path = *dataset;
      if (!dataset_type) c.dataset_type = DatasetType::kTum;
    }
    if (matches) c.matches_path = *matches;
    if (method) c.method = parse_method(*method);
    if (stride) c.stride = *stride;
    if (max_frames) c.max_frames = *max_frames;
    if (refine_iters) c.tracker.refine_iters = *refine_iters;
    if (step_scale) c.tracker.step_scale = *step_scale;
    if (percentile) c.tracker.percentile = *percentile;
    if (lambda) c.loss.lambda = *lambda;
    if (keyframe_mode) c.keyframes.mode = parse_keyframe_mode(*keyframe_mode);
    if (iou) c.keyframes.iou_threshold = *iou;
    if (kf_k) c.keyframes.k = *kf_k;
    if (sampling) c.sampling.mode = parse_sampling_mode(*sampling);
    if (mix_p) c.sampling.mix_p = *mix_p;
    if (mapping_iters) c.mapping_iters = *mapping_iters;
    if (color_refine_iters) c.color_refine_iters = *color_refine_iters;
    if (frames) c.synthetic.n_frames = *frames;
    if (width) c.synthetic.width = *width;
    if (height) c.synthetic.height = *height;
    if (scene_seed) c.synthetic.scene_seed = *scene_seed;
    if (match_noise) c.synthetic.match_noise_px = *match_noise;
    if (depth_noise) c.synthetic.depth_noise = *depth_noise;
    if (seed) c.seed = *seed;
    if (prefetch) c.prefetch_capacity = *prefetch;
    if (out) c.output_dir = *out;
    if (no_pose_correction) c.densify.correct_pose = false;
    c.validate();
    return c;
  }
};

int cmd_run(const RunFlags& flags) {
  const RunConfig cfg = flags.resolve();
  const DataSource data(cfg);
  if (data.skipped() > 0) std::cerr << "warning: skipped " << data.skipped() << " unassociated frames\n";
  const RunResult r = run_experiment(cfg, data);
  write_run_outputs(cfg.output_dir, cfg, r);
  print_report(std::cout, r.metrics, r.timing);
  return 0;
}

struct EvalFlags {
  std::string estimate, groundtruth, render, reference;
};

int cmd_eval(const EvalFlags& f) {
  Json j;
  if (!f.estimate.empty()) {
    const auto res = ate(read_trajectory(f.estimate), read_trajectory(f.groundtruth));
    j["ate_cm"] = res.rmse_cm;
    j["pairs"] = res.pairs;
  }
  if (!f.render.empty()) {
    const auto a = read_color_png(f.render);
    const auto b = read_color_png(f.reference);
    j["psnr_db"] = psnr(a, b);
    j["ssim"] = ssim(a, b);
  }
  std::cout << j.dump(2) << '\n';
  return 0;
}

struct SynthFlags {
  std::string out;
  SyntheticConfig s;
  std::vector<int> match_strides{1, 10, 20, 40};
  std::uint64_t seed = 0;
};

int cmd_synth(const SynthFlags& f) {
  write_synthetic_dataset(f.out, f.s, f.match_strides, f.seed);
  std::cout << "wrote " << f.s.n_frames << " frames to " << f.out << '\n';
  return 0;
}

struct AblateFlags {
  RunFlags run;
  std::vector<int> strides{10, 20, 40};
  std::vector<std::string> methods{"feature", "const_velocity"};
  std::vector<int> refine_sweep;
  std::vector<std::string> sampling_sweep;
  std::string csv;
};

int cmd_ablate(const AblateFlags& f) {
  const RunConfig base = f.run.resolve();
  AblationGrid grid;
  grid.strides = f.strides;
  grid.methods.clear();
  for (const auto& m : f.methods) grid.methods.push_back(parse_method(m));
  grid.refine_iters = f.refine_sweep;
  for (const auto& s : f.sampling_sweep) grid.sampling.push_back(parse_sampling_mode(s));
  const DataSource data(base);
  const auto rows = run_ablation(base, grid, data);
  if (f.csv.empty()) {
    write_ablation_csv(std::cout, rows);
  } else {
    std::ofstream out(f.csv);
    if (!out) throw Error(ErrorCode::kIoError, "cannot write " + f.csv);
    write_ablation_csv(out, rows);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gaussian-splat RGB-D tracking and mapping"};
  app.require_subcommand(1);

  RunFlags run_flags;
  auto* run = app.add_subcommand("run", "track and map a sequence");
  run_flags.add_to(*run);

  EvalFlags eval_flags;
  auto* eval = app.add_subcommand("eval", "score a saved trajectory and/or rendering");
  eval->add_option("--estimate", eval_flags.estimate, "estimated trajectory")->check(CLI::ExistingFile);
  eval->add_option("--groundtruth", eval_flags.groundtruth, "reference trajectory")->check(CLI::ExistingFile);
  eval->add_option("--render", eval_flags.render, "rendered PNG")->check(CLI::ExistingFile);
  eval->add_option("--reference", eval_flags.reference, "reference PNG")->check(CLI::ExistingFile);

  SynthFlags synth_flags;
  auto* synth = app.add_subcommand("synth", "write a synthetic dataset in TUM layout");
  synth->add_option("-o,--out", synth_flags.out, "output directory")->required();
  synth->add_option("--frames", synth_flags.s.n_frames, "sequence length");
  synth->add_option("--width", synth_flags.s.width, "image width");
  synth->add_option("--height", synth_flags.s.height, "image height");
  synth->add_option("--scene-seed", synth_flags.s.scene_seed, "scene and path seed");
  synth->add_option("--match-noise", synth_flags.s.match_noise_px, "match noise, pixels");
  synth->add_option("--match-dropout", synth_flags.s.match_dropout, "match dropout probability");
  synth->add_option("--depth-noise", synth_flags.s.depth_noise, "depth noise, meters");
  synth->add_option("--corrupt-range", synth_flags.s.corrupt_range, "far-range corruption threshold, meters");
  synth->add_option("--match-strides", synth_flags.match_strides, "pair strides for match files")->delimiter(',');
  synth->add_option("--seed", synth_flags.seed, "match noise seed");

  AblateFlags ablate_flags;
  auto* ablate = app.add_subcommand("ablate", "sweep strides, methods, refinement and sampling; emit CSV");
  ablate_flags.run.add_to(*ablate);
  ablate->add_option("--strides", ablate_flags.strides, "strides to sweep")->delimiter(',');
  ablate->add_option("--methods", ablate_flags.methods, "tracking methods to sweep")->delimiter(',');
  ablate->add_option("--refine-sweep", ablate_flags.refine_sweep, "refinement iterations to sweep")->delimiter(',');
  ablate->add_option("--sampling-sweep", ablate_flags.sampling_sweep, "sampling strategies to sweep")->delimiter(',');
  ablate->add_option("--csv", ablate_flags.csv, "CSV output path (default stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(run_flags);
    if (*eval) {
      if (eval_flags.estimate.empty() == eval_flags.groundtruth.empty() && eval_flags.render.empty() ==
                                                                               eval_flags.reference.empty() &&
          !(eval_flags.estimate.empty() && eval_flags.render.empty())) {
        return cmd_eval(eval_flags);
      }
      std::cerr << "eval needs --estimate with --groundtruth and/or --render with --reference\n";
      return 2;
    }
    if (*synth) return cmd_synth(synth_flags);
    if (*ablate) return cmd_ablate(ablate_flags);
  } catch (const Error& e) {
    std::cerr << "error [" << to_string(e.code()) << "]: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
