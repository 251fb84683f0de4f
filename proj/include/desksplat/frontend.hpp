#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "desksplat/error.hpp"
#include "desksplat/geometry.hpp"
#include "desksplat/image.hpp"

namespace desksplat {

/// Source of 2D correspondences between a previous and a current frame.
/// Implementations are read-only after construction.
class CorrespondenceProvider {
 public:
  virtual ~CorrespondenceProvider() = default;
  virtual std::vector<PixelMatch> match(const Frame& previous, const Frame& current) const = 0;
};

/// A match together with the depths sampled in both frames.
struct DepthMatch {
  PixelMatch match;
  double depth0 = 0;
  double depth1 = 0;
};

struct LiftedPairs {
  PointSet previous;
  PointSet current;
};

/// Keeps matches with confidence >= min_confidence, preserving order.
inline std::vector<PixelMatch> confidence_filter(const std::vector<PixelMatch>& matches,
                                                 double min_confidence) {
  std::vector<PixelMatch> out;
  out.reserve(matches.size());
  std::copy_if(matches.begin(), matches.end(), std::back_inserter(out),
               [&](const PixelMatch& m) { return m.confidence >= min_confidence; });
  return out;
}

/// Nearest-rank percentile: the ceil(p * n)-th smallest value (1-based).
inline double nearest_rank(std::vector<double> values, double percentile) {
  if (values.empty()) throw Error(ErrorCode::kEmptyMatchSet, "no values");
  const auto n = values.size();
  auto rank = static_cast<std::size_t>(std::ceil(percentile * static_cast<double>(n)));
  rank = std::clamp<std::size_t>(rank, 1, n);
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(rank - 1),
                   values.end());
  return values[rank - 1];
}

/// Drops matches whose depth in either frame exceeds the percentile of the
/// current frame's matched depths. If that empties the set, the current-frame
/// test alone is used, so the nearest-rank match always survives.
inline std::vector<DepthMatch> truncate_by_depth(const std::vector<DepthMatch>& matches,
                                                 double percentile) {
  if (matches.empty()) throw Error(ErrorCode::kEmptyMatchSet, "nothing to truncate");
  if (!(percentile > 0.0 && percentile <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "percentile must lie in (0, 1]");
  }
  std::vector<double> current;
  current.reserve(matches.size());
  for (const auto& m : matches) current.push_back(m.depth1);
  const double threshold = nearest_rank(std::move(current), percentile);

  std::vector<DepthMatch> out;
  for (const auto& m : matches) {
    if (m.depth0 <= threshold && m.depth1 <= threshold) out.push_back(m);
  }
  if (out.empty()) {
    for (const auto& m : matches) {
      if (m.depth1 <= threshold) out.push_back(m);
    }
  }
  return out;
}

/// Looks up depth for both ends of each match; matches without a valid depth
/// in either frame are dropped.
inline std::vector<DepthMatch> sample_match_depths(const std::vector<PixelMatch>& matches,
                                                   const Frame& previous, const Frame& current) {
  std::vector<DepthMatch> out;
  out.reserve(matches.size());
  for (const auto& m : matches) {
    if (!previous.intrinsics.in_bounds(m.u0, m.v0) || !current.intrinsics.in_bounds(m.u1, m.v1)) {
      continue;
    }
    const double d0 = sample_depth(previous.depth, m.u0, m.v0);
    const double d1 = sample_depth(current.depth, m.u1, m.v1);
    if (d0 > 0.0 && d1 > 0.0 && std::isfinite(d0) && std::isfinite(d1)) out.push_back({m, d0, d1});
  }
  return out;
}

inline LiftedPairs lift_depth_matches(const std::vector<DepthMatch>& matches,
                                      const CameraIntrinsics& k0, const CameraIntrinsics& k1) {
  LiftedPairs out;
  out.previous.reserve(matches.size());
  out.current.reserve(matches.size());
  for (const auto& m : matches) {
    out.previous.push_back(back_project(m.match.u0, m.match.v0, m.depth0, k0));
    out.current.push_back(back_project(m.match.u1, m.match.v1, m.depth1, k1));
  }
  if (out.previous.size() < 3) {
    throw Error(ErrorCode::kInsufficientCorrespondences,
                "only " + std::to_string(out.previous.size()) + " matches have valid depth");
  }
  return out;
}

/// Back-projects both ends of every match into its own camera frame.
inline LiftedPairs lift_matches(const std::vector<PixelMatch>& matches, const Frame& previous,
                                const Frame& current) {
  return lift_depth_matches(sample_match_depths(matches, previous, current), previous.intrinsics,
                            current.intrinsics);
}

inline std::string match_file_name(int previous_id, int current_id) {
  return "matches_" + std::to_string(previous_id) + "_" + std::to_string(current_id) + ".txt";
}

/// Frame ids from a `# frames <i> <j>` header line.
struct MatchFileHeader {
  int previous_id = 0;
  int current_id = 0;
};

/// Parses `u0 v0 u1 v1 conf` lines; `#` lines and blank lines are skipped.
/// A `# frames <i> <j>` line, if present, is stored in `header`.
inline std::vector<PixelMatch> read_match_file(const std::filesystem::path& path,
                                               std::optional<MatchFileHeader>* header = nullptr) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  std::vector<PixelMatch> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    if (line[first] == '#') {
      std::istringstream comment(line.substr(first + 1));
      std::string tag;
      MatchFileHeader h;
      if (header && comment >> tag && tag == "frames" && comment >> h.previous_id >> h.current_id) {
        *header = h;
      }
      continue;
    }
    std::istringstream fields(line);
    PixelMatch m;
    if (!(fields >> m.u0 >> m.v0 >> m.u1 >> m.v1 >> m.confidence)) {
      throw Error(ErrorCode::kDatasetError,
                  path.string() + ":" + std::to_string(line_no) + ": expected 5 numeric fields");
    }
    std::string extra;
    if (fields >> extra) {
      throw Error(ErrorCode::kDatasetError,
                  path.string() + ":" + std::to_string(line_no) + ": trailing fields");
    }
    out.push_back(m);
  }
  return out;
}

inline void write_match_file(const std::filesystem::path& path, const std::vector<PixelMatch>& matches,
                             int previous_id, int current_id) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  out << "# frames " << previous_id << " " << current_id << "\n";
  out << "# u0 v0 u1 v1 conf\n";
  out << std::fixed << std::setprecision(9);
  for (const auto& m : matches) {
    out << m.u0 << ' ' << m.v0 << ' ' << m.u1 << ' ' << m.v1 << ' ' << m.confidence << '\n';
  }
}

/// Reads externally exported matches from `matches_<i>_<j>.txt` files.
class FileMatcher final : public CorrespondenceProvider {
 public:
  explicit FileMatcher(std::filesystem::path directory) : directory_(std::move(directory)) {
    if (!std::filesystem::is_directory(directory_)) {
      throw Error(ErrorCode::kDatasetError, "match directory not found: " + directory_.string());
    }
  }

  std::vector<PixelMatch> match(const Frame& previous, const Frame& current) const override {
    const auto path = directory_ / match_file_name(previous.id, current.id);
    if (!std::filesystem::exists(path)) {
      throw Error(ErrorCode::kDatasetError, "no match file for pair " + std::to_string(previous.id) +
                                                " -> " + std::to_string(current.id));
    }
    std::optional<MatchFileHeader> header;
    auto matches = read_match_file(path, &header);
    if (header && (header->previous_id != previous.id || header->current_id != current.id)) {
      throw Error(ErrorCode::kDatasetError, path.string() + ": header names frames " +
                                                std::to_string(header->previous_id) + " -> " +
                                                std::to_string(header->current_id));
    }
    for (const auto& m : matches) {
      if (!previous.intrinsics.in_bounds(m.u0, m.v0) || !current.intrinsics.in_bounds(m.u1, m.v1) ||
          m.confidence < 0.0 || m.confidence > 1.0) {
        throw Error(ErrorCode::kDatasetError, path.string() + ": match out of bounds");
      }
    }
    return matches;
  }

  const std::filesystem::path& directory() const { return directory_; }

 private:
  std::filesystem::path directory_;
};

}  // namespace desksplat
