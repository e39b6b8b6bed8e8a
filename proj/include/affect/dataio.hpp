#pragma once

#include "affect/types.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace affect {

/// One frame's affect representation as emitted by the backbone.
struct FrameFeatures {
  std::int64_t frame_index = 0;
  std::vector<double> embedding;
  std::array<double, kNumLogits> logits{};
  double valence = 0.0;
  double arousal = 0.0;

  bool operator==(const FrameFeatures&) const = default;
};

struct VideoTrack {
  std::string video_id;
  std::vector<FrameFeatures> frames;  // strictly increasing frame_index

  bool operator==(const VideoTrack&) const = default;
};

/// Feature side of a dataset. Tracks are ordered by video_id.
struct Dataset {
  std::size_t dim = 0;
  std::vector<VideoTrack> tracks;

  std::size_t num_frames() const;
  const VideoTrack* find(const std::string& video_id) const;

  bool operator==(const Dataset&) const = default;
};

using AuBits = std::array<std::uint8_t, kNumActionUnits>;

inline constexpr double kVaInvalid = -5.0;
inline constexpr int kClassInvalid = -1;

/// Ground truth for one video and one task; entry i belongs to frame i.
/// Only the vector matching `task` is populated.
struct TaskLabels {
  Task task = Task::VA;
  std::vector<std::array<double, 2>> va;
  std::vector<int> expr;
  std::vector<AuBits> au;
  std::vector<std::uint8_t> invalid;

  std::size_t size() const { return invalid.size(); }
  bool operator==(const TaskLabels&) const = default;
};

using LabelMap = std::map<std::string, TaskLabels>;

/// Reads the versioned feature CSV (JSON header line + rows).
Dataset load_features(const std::filesystem::path& path);
Dataset read_features(std::istream& in, const std::string& source = "<stream>");

void write_features(const Dataset& dataset, const std::filesystem::path& path);
void write_features(const Dataset& dataset, std::ostream& out);

/// Loads every `<video_id>.txt` annotation file of one task from `dir`.
LabelMap load_labels(const std::filesystem::path& dir, Task task);
TaskLabels parse_labels(std::istream& in, Task task, const std::string& source = "<stream>");

void write_labels(const LabelMap& labels, const std::filesystem::path& dir);

struct FrameRef {
  std::size_t track = 0;     // index into Dataset::tracks
  std::size_t position = 0;  // index into VideoTrack::frames
};

/// Valid labeled frames joined with their features, ordered by (video_id, frame_index).
struct AlignedSet {
  Task task = Task::VA;
  std::vector<FrameRef> frames;
  std::vector<std::array<double, 2>> va;
  std::vector<int> expr;
  std::vector<AuBits> au;
  std::size_t skipped = 0;  // labeled frames with no feature row

  std::size_t size() const { return frames.size(); }
};

/// Throws DataError listing label video ids with no feature track.
AlignedSet align(const Dataset& dataset, const LabelMap& labels, Task task);

struct SyntheticData {
  Dataset dataset;
  LabelMap labels;
};

struct SyntheticOptions {
  Task task = Task::VA;
  int n_videos = 4;
  int frames_per_video = 500;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
  std::size_t embedding_dim = 16;
};

/// Latent affect walks as AR(1) processes; features are a fixed affine map of
/// the latent state plus noise; labels are deterministic functions of it.
SyntheticData generate_synthetic(const SyntheticOptions& options);

/// Latent valence trajectory used by generate_synthetic, exposed for checks.
std::vector<double> synthetic_latent_valence(int frames, std::uint64_t seed);

inline constexpr double kLatentAutoregression = 0.98;

}  // namespace affect
