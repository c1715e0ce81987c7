#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "gazeattn/tensor.hpp"

namespace gazeattn {

/// Suturing gesture vocabulary. There is no G7.
enum class Gesture : std::int8_t { G1, G2, G3, G4, G5, G6, G8, G9, G10, G11, Unlabeled = -1 };

inline constexpr int kNumGestures = 10;

std::string_view gesture_name(Gesture g);
std::string_view gesture_description(Gesture g);
/// "G1".."G11" (no G7). Throws ValidationError otherwise.
Gesture parse_gesture(std::string_view token);
/// Dense class index 0..9; -1 for Unlabeled.
inline int gesture_index(Gesture g) { return static_cast<int>(g); }
Gesture gesture_from_index(int index);

struct Segment {
  int start_frame = 0;
  int end_frame = 0;  // inclusive
  Gesture label = Gesture::Unlabeled;

  bool operator==(const Segment&) const = default;
};

using GestureTimeline = std::vector<Gesture>;

struct GazePoint {
  double x = 0.0;
  double y = 0.0;

  bool operator==(const GazePoint&) const = default;
};

struct GazeTrack {
  std::vector<GazePoint> points;
  int frame_width = 0;
  int frame_height = 0;
};

struct Trial {
  std::string trial_id;
  std::string user_id;
  int num_frames = 0;
  int fps = 0;
  std::vector<Segment> segments;
  GazeTrack gaze;
};

/// Decoded frames for one trial: count x height x width x 3 bytes.
struct FrameStore {
  int width = 0;
  int height = 0;
  int count = 0;
  std::vector<std::uint8_t> pixels;

  const std::uint8_t* frame(int index) const {
    return pixels.data() + std::size_t(index) * width * height * 3;
  }
};

// ---------------------------------------------------------------- text formats

/// Parses "start end Gk" lines. Segments come back sorted; overlap is a ValidationError.
std::vector<Segment> parse_transcription(std::string_view text);
std::string format_transcription(const std::vector<Segment>& segments);

/// Parses a "frame,x,y" CSV and clamps every point into the frame.
GazeTrack parse_gaze_csv(std::string_view text, int frame_width, int frame_height);
std::string format_gaze_csv(const GazeTrack& gaze);

GazePoint clamp_gaze(GazePoint p, int frame_width, int frame_height);

// ------------------------------------------------------------------- timelines

GestureTimeline timeline_from_segments(const std::vector<Segment>& segments, int num_frames);
/// Run-length encoding of labeled runs; Unlabeled runs are dropped.
std::vector<Segment> segments_from_timeline(const GestureTimeline& timeline);

struct Subsampled {
  GestureTimeline timeline;
  GazeTrack gaze;
  std::vector<int> source_frames;  // original frame index of each kept entry
};

/// Keeps every (src_fps/dst_fps)-th frame starting at 0, for labels and gaze alike.
Subsampled subsample_timeline(const GestureTimeline& timeline, const GazeTrack& gaze, int src_fps, int dst_fps);

// --------------------------------------------------------------------- windows

/// Frame indices and gaze of one sliding window; pixels are fetched separately.
struct ClipWindow {
  std::vector<int> frames;
  std::vector<GazePoint> gaze;
  Gesture label = Gesture::Unlabeled;
  int end_frame_index = 0;
};

/// A materialized clip: frames is T x H x W x 3 in [0,1].
struct Clip {
  Tensor<float> frames;
  std::vector<GazePoint> gaze;
  Gesture label = Gesture::Unlabeled;
  int end_frame_index = 0;
};

/// Index list for the window ending at `end`, left-padded by repeating frame 0.
std::vector<int> window_indices(int end, int length);

/// One window per labeled frame. `frame_map` translates timeline positions into
/// FrameStore indices (empty means identity).
std::vector<ClipWindow> make_windows(const GestureTimeline& timeline, const GazeTrack& gaze, int length,
                                     const std::vector<int>& frame_map = {});

Clip extract_clip(const FrameStore& frames, const ClipWindow& window);

// ------------------------------------------------------------------------ LOUO

struct Fold {
  std::string test_user;
  std::vector<std::size_t> train;  // indices into the trial list
  std::vector<std::size_t> test;
};

enum class FoldMode { Strict, Relaxed };

inline constexpr int kLouoUsers = 8;

/// Leave-one-user-out folds ordered by user id. With a non-empty roster every
/// roster user must own at least one trial and no trial may fall outside it.
std::vector<Fold> louo_folds(const std::vector<Trial>& trials, FoldMode mode = FoldMode::Strict,
                             const std::vector<std::string>& roster = {});

/// JIGSAWS trial ids look like "Suturing_B001": the user is the letter after '_'.
std::string user_from_trial_id(const std::string& trial_id);

// ---------------------------------------------------------------- on-disk data

struct DatasetInfo {
  std::filesystem::path root;
  std::vector<Trial> trials;
  int width = 0;
  int height = 0;
  int classes = 0;
};

/// Reads every trial directory under `root` (metadata, transcription, gaze).
DatasetInfo load_dataset(const std::filesystem::path& root);
/// Raw frames ("frames.raw" + "frames.txt") or a directory "frames/" of PNG files.
FrameStore load_frames(const std::filesystem::path& trial_dir);
void save_frames_raw(const std::filesystem::path& trial_dir, const FrameStore& frames);
void save_trial(const std::filesystem::path& trial_dir, const Trial& trial);

/// Flat "key = value" text, '#' comments.
std::vector<std::pair<std::string, std::string>> parse_key_values(std::string_view text);
std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace gazeattn
