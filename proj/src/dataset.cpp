#include "gazeattn/dataset.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "gazeattn/error.hpp"
#include "gazeattn/image.hpp"

namespace gazeattn {
namespace fs = std::filesystem;

namespace {

constexpr std::array<std::string_view, kNumGestures> kGestureNames = {"G1", "G2", "G3", "G4", "G5",
                                                                      "G6", "G8", "G9", "G10", "G11"};

constexpr std::array<std::string_view, kNumGestures> kGestureDescriptions = {
    "Reaching for needle with right hand",
    "Positioning needle",
    "Pushing needle through tissue",
    "Transferring needle from left to right",
    "Moving to center with needle in grip",
    "Pulling suture with left hand",
    "Orienting needle",
    "Using right hand to help tighten suture",
    "Loosening more suture",
    "Dropping suture at end and moving to end points",
};

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) {
      if (pos < text.size()) lines.push_back(text.substr(pos));
      break;
    }
    lines.push_back(text.substr(pos, nl - pos));
    pos = nl + 1;
  }
  return lines;
}

std::vector<std::string_view> split_fields(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  if (sep == ' ') {
    std::size_t pos = 0;
    while (pos < line.size()) {
      pos = line.find_first_not_of(" \t", pos);
      if (pos == std::string_view::npos) break;
      const auto end = line.find_first_of(" \t", pos);
      out.push_back(line.substr(pos, end == std::string_view::npos ? std::string_view::npos : end - pos));
      pos = end == std::string_view::npos ? line.size() : end;
    }
    return out;
  }
  std::size_t pos = 0;
  while (true) {
    const auto end = line.find(sep, pos);
    out.push_back(trim(line.substr(pos, end == std::string_view::npos ? std::string_view::npos : end - pos)));
    if (end == std::string_view::npos) break;
    pos = end + 1;
  }
  return out;
}

template <typename Number>
bool parse_number(std::string_view s, Number& out) {
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end;
}

int require_int(const std::map<std::string, std::string>& kv, const std::string& key, const fs::path& file) {
  const auto it = kv.find(key);
  int v = 0;
  if (it == kv.end() || !parse_number(std::string_view(it->second), v)) {
    throw ValidationError(file.string() + ": missing or invalid integer '" + key + "'");
  }
  return v;
}

}  // namespace

// ------------------------------------------------------------------ gestures

std::string_view gesture_name(Gesture g) {
  if (g == Gesture::Unlabeled) return "U";
  return kGestureNames.at(std::size_t(gesture_index(g)));
}

std::string_view gesture_description(Gesture g) {
  if (g == Gesture::Unlabeled) return "Unlabeled";
  return kGestureDescriptions.at(std::size_t(gesture_index(g)));
}

Gesture parse_gesture(std::string_view token) {
  for (int i = 0; i < kNumGestures; ++i) {
    if (kGestureNames[i] == token) return Gesture(i);
  }
  throw ValidationError("unknown gesture label '" + std::string(token) + "'");
}

Gesture gesture_from_index(int index) {
  if (index == -1) return Gesture::Unlabeled;
  if (index < 0 || index >= kNumGestures) throw ValidationError("gesture index out of range");
  return Gesture(index);
}

// ------------------------------------------------------------- transcription

std::vector<Segment> parse_transcription(std::string_view text) {
  std::vector<Segment> segments;
  const auto lines = split_lines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const int line_no = int(i) + 1;
    const auto line = trim(lines[i]);
    if (line.empty()) continue;
    const auto fields = split_fields(line, ' ');
    if (fields.size() != 3) throw ParseError(line_no, "expected 'start end Gk', got '" + std::string(line) + "'");
    Segment seg;
    if (!parse_number(fields[0], seg.start_frame) || !parse_number(fields[1], seg.end_frame)) {
      throw ParseError(line_no, "non-integer frame bounds");
    }
    if (seg.start_frame < 0) throw ParseError(line_no, "negative start frame");
    if (seg.end_frame < seg.start_frame) throw ParseError(line_no, "end frame precedes start frame");
    try {
      seg.label = parse_gesture(fields[2]);
    } catch (const ValidationError& e) {
      throw ParseError(line_no, e.what());
    }
    segments.push_back(seg);
  }
  std::stable_sort(segments.begin(), segments.end(),
                   [](const Segment& a, const Segment& b) { return a.start_frame < b.start_frame; });
  for (std::size_t i = 1; i < segments.size(); ++i) {
    if (segments[i].start_frame <= segments[i - 1].end_frame) {
      throw ValidationError("segments overlap at frame " + std::to_string(segments[i].start_frame));
    }
  }
  return segments;
}

std::string format_transcription(const std::vector<Segment>& segments) {
  std::string out;
  for (const auto& s : segments) {
    out += std::to_string(s.start_frame) + ' ' + std::to_string(s.end_frame) + ' ' +
           std::string(gesture_name(s.label)) + '\n';
  }
  return out;
}

// ----------------------------------------------------------------------- gaze

GazePoint clamp_gaze(GazePoint p, int frame_width, int frame_height) {
  return {std::clamp(p.x, 0.0, double(frame_width - 1)), std::clamp(p.y, 0.0, double(frame_height - 1))};
}

GazeTrack parse_gaze_csv(std::string_view text, int frame_width, int frame_height) {
  if (frame_width < 1 || frame_height < 1) throw ValidationError("gaze frame dimensions must be positive");
  GazeTrack track;
  track.frame_width = frame_width;
  track.frame_height = frame_height;
  const auto lines = split_lines(text);
  bool header = false;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const int line_no = int(i) + 1;
    const auto line = trim(lines[i]);
    if (line.empty()) continue;
    const auto fields = split_fields(line, ',');
    if (!header) {
      if (fields.size() != 3 || fields[0] != "frame" || fields[1] != "x" || fields[2] != "y") {
        throw ParseError(line_no, "expected header 'frame,x,y'");
      }
      header = true;
      continue;
    }
    if (fields.size() != 3) throw ParseError(line_no, "expected 3 fields");
    int frame = 0;
    GazePoint p;
    if (!parse_number(fields[0], frame) || !parse_number(fields[1], p.x) || !parse_number(fields[2], p.y)) {
      throw ParseError(line_no, "malformed gaze row");
    }
    if (frame != int(track.points.size())) {
      throw ParseError(line_no, "expected frame " + std::to_string(track.points.size()));
    }
    track.points.push_back(clamp_gaze(p, frame_width, frame_height));
  }
  if (!header) throw ParseError(1, "missing header 'frame,x,y'");
  return track;
}

std::string format_gaze_csv(const GazeTrack& gaze) {
  std::ostringstream os;
  os.precision(6);
  os << std::fixed << "frame,x,y\n";
  for (std::size_t i = 0; i < gaze.points.size(); ++i) {
    os << i << ',' << gaze.points[i].x << ',' << gaze.points[i].y << '\n';
  }
  return os.str();
}

// ------------------------------------------------------------------ timelines

GestureTimeline timeline_from_segments(const std::vector<Segment>& segments, int num_frames) {
  if (num_frames < 0) throw ValidationError("negative frame count");
  GestureTimeline timeline(std::size_t(num_frames), Gesture::Unlabeled);
  int previous_end = -1;
  for (const auto& s : segments) {
    if (s.start_frame < 0 || s.end_frame < s.start_frame) throw ValidationError("invalid segment bounds");
    if (s.end_frame >= num_frames) {
      throw ValidationError("segment ending at frame " + std::to_string(s.end_frame) + " exceeds " +
                            std::to_string(num_frames) + " frames");
    }
    if (s.start_frame <= previous_end) throw ValidationError("segments overlap or are unsorted");
    std::fill(timeline.begin() + s.start_frame, timeline.begin() + s.end_frame + 1, s.label);
    previous_end = s.end_frame;
  }
  return timeline;
}

std::vector<Segment> segments_from_timeline(const GestureTimeline& timeline) {
  std::vector<Segment> out;
  for (int i = 0; i < int(timeline.size());) {
    int j = i;
    while (j + 1 < int(timeline.size()) && timeline[j + 1] == timeline[i]) ++j;
    if (timeline[i] != Gesture::Unlabeled) out.push_back({i, j, timeline[i]});
    i = j + 1;
  }
  return out;
}

Subsampled subsample_timeline(const GestureTimeline& timeline, const GazeTrack& gaze, int src_fps, int dst_fps) {
  if (src_fps < 1 || dst_fps < 1 || src_fps % dst_fps != 0) {
    throw ConfigError("source rate " + std::to_string(src_fps) + " fps is not a multiple of " +
                      std::to_string(dst_fps) + " fps");
  }
  if (!gaze.points.empty() && gaze.points.size() != timeline.size()) {
    throw ValidationError("gaze track length does not match timeline length");
  }
  const int stride = src_fps / dst_fps;
  Subsampled out;
  out.gaze.frame_width = gaze.frame_width;
  out.gaze.frame_height = gaze.frame_height;
  for (int i = 0; i < int(timeline.size()); i += stride) {
    out.timeline.push_back(timeline[i]);
    if (!gaze.points.empty()) out.gaze.points.push_back(gaze.points[i]);
    out.source_frames.push_back(i);
  }
  return out;
}

// -------------------------------------------------------------------- windows

std::vector<int> window_indices(int end, int length) {
  std::vector<int> idx(static_cast<std::size_t>(length));
  for (int k = 0; k < length; ++k) idx[k] = std::max(0, end - length + 1 + k);
  return idx;
}

std::vector<ClipWindow> make_windows(const GestureTimeline& timeline, const GazeTrack& gaze, int length,
                                     const std::vector<int>& frame_map) {
  if (length < 1) throw ConfigError("window length must be at least 1");
  if (gaze.points.size() != timeline.size()) throw ValidationError("gaze track length does not match timeline");
  if (!frame_map.empty() && frame_map.size() != timeline.size()) {
    throw ValidationError("frame map length does not match timeline");
  }
  std::vector<ClipWindow> windows;
  for (int t = 0; t < int(timeline.size()); ++t) {
    if (timeline[t] == Gesture::Unlabeled) continue;
    ClipWindow w;
    w.label = timeline[t];
    w.end_frame_index = t;
    for (int i : window_indices(t, length)) {
      w.frames.push_back(frame_map.empty() ? i : frame_map[i]);
      w.gaze.push_back(gaze.points[i]);
    }
    windows.push_back(std::move(w));
  }
  return windows;
}

Clip extract_clip(const FrameStore& frames, const ClipWindow& window) {
  const int length = int(window.frames.size());
  Clip clip;
  clip.frames = Tensor<float>({length, frames.height, frames.width, 3});
  const std::size_t frame_size = std::size_t(frames.width) * frames.height * 3;
  for (int k = 0; k < length; ++k) {
    const int f = window.frames[k];
    if (f < 0 || f >= frames.count) throw ValidationError("window references missing frame " + std::to_string(f));
    const std::uint8_t* src = frames.frame(f);
    float* dst = clip.frames.data() + k * frame_size;
    for (std::size_t i = 0; i < frame_size; ++i) dst[i] = float(src[i]) / 255.0f;
  }
  clip.gaze = window.gaze;
  clip.label = window.label;
  clip.end_frame_index = window.end_frame_index;
  return clip;
}

// ----------------------------------------------------------------------- LOUO

std::string user_from_trial_id(const std::string& trial_id) {
  const auto us = trial_id.rfind('_');
  if (us == std::string::npos || us + 1 >= trial_id.size()) {
    throw ValidationError("cannot derive user from trial id '" + trial_id + "'");
  }
  return trial_id.substr(us + 1, 1);
}

std::vector<Fold> louo_folds(const std::vector<Trial>& trials, FoldMode mode, const std::vector<std::string>& roster) {
  std::map<std::string, std::vector<std::size_t>> by_user;
  for (const auto& u : roster) by_user[u];
  for (std::size_t i = 0; i < trials.size(); ++i) {
    if (!roster.empty() && !by_user.contains(trials[i].user_id)) {
      throw ValidationError("trial " + trials[i].trial_id + " belongs to user '" + trials[i].user_id +
                            "' outside the roster");
    }
    by_user[trials[i].user_id].push_back(i);
  }
  for (const auto& [user, idx] : by_user) {
    if (idx.empty()) throw ValidationError("user '" + user + "' has no trials");
  }
  if (by_user.empty()) throw ValidationError("no trials to fold");
  if (mode == FoldMode::Strict && by_user.size() != kLouoUsers) {
    throw ValidationError("leave-one-user-out needs exactly " + std::to_string(kLouoUsers) + " users, found " +
                          std::to_string(by_user.size()));
  }
  std::vector<Fold> folds;
  for (const auto& [user, idx] : by_user) {
    Fold f;
    f.test_user = user;
    f.test = idx;
    for (std::size_t i = 0; i < trials.size(); ++i) {
      if (trials[i].user_id != user) f.train.push_back(i);
    }
    folds.push_back(std::move(f));
  }
  return folds;
}

// ------------------------------------------------------------------ on disk

std::vector<std::pair<std::string, std::string>> parse_key_values(std::string_view text) {
  std::vector<std::pair<std::string, std::string>> out;
  const auto lines = split_lines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    auto line = lines[i];
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError(int(i) + 1, "expected 'key = value'");
    const auto key = trim(line.substr(0, eq));
    if (key.empty()) throw ParseError(int(i) + 1, "empty key");
    out.emplace_back(std::string(key), std::string(trim(line.substr(eq + 1))));
  }
  return out;
}

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_text_file(const fs::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(text.data(), std::streamsize(text.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

namespace {

std::map<std::string, std::string> read_kv_map(const fs::path& path) {
  const auto kv = parse_key_values(read_text_file(path));
  return {kv.begin(), kv.end()};
}

}  // namespace

void save_trial(const fs::path& trial_dir, const Trial& trial) {
  std::error_code ec;
  fs::create_directories(trial_dir, ec);
  if (ec) throw IoError("cannot create " + trial_dir.string() + ": " + ec.message());
  std::ostringstream meta;
  meta << "trial_id = " << trial.trial_id << "\nuser_id = " << trial.user_id << "\nnum_frames = " << trial.num_frames
       << "\nfps = " << trial.fps << "\nwidth = " << trial.gaze.frame_width << "\nheight = " << trial.gaze.frame_height
       << '\n';
  write_text_file(trial_dir / "trial.txt", meta.str());
  write_text_file(trial_dir / "transcription.txt", format_transcription(trial.segments));
  write_text_file(trial_dir / "gaze.csv", format_gaze_csv(trial.gaze));
}

void save_frames_raw(const fs::path& trial_dir, const FrameStore& frames) {
  std::ostringstream manifest;
  manifest << "width = " << frames.width << "\nheight = " << frames.height << "\nchannels = 3\ncount = "
           << frames.count << "\ndtype = uint8\n";
  write_text_file(trial_dir / "frames.txt", manifest.str());
  std::ofstream out(trial_dir / "frames.raw", std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + (trial_dir / "frames.raw").string());
  out.write(reinterpret_cast<const char*>(frames.pixels.data()), std::streamsize(frames.pixels.size()));
  if (!out) throw IoError("failed writing frames for " + trial_dir.string());
}

FrameStore load_frames(const fs::path& trial_dir) {
  FrameStore fsr;
  if (fs::exists(trial_dir / "frames.txt")) {
    const auto kv = read_kv_map(trial_dir / "frames.txt");
    fsr.width = require_int(kv, "width", trial_dir / "frames.txt");
    fsr.height = require_int(kv, "height", trial_dir / "frames.txt");
    fsr.count = require_int(kv, "count", trial_dir / "frames.txt");
    if (require_int(kv, "channels", trial_dir / "frames.txt") != 3 || !kv.contains("dtype") ||
        kv.at("dtype") != "uint8") {
      throw ValidationError(trial_dir.string() + ": only 3-channel uint8 frames are supported");
    }
    fsr.pixels.resize(std::size_t(fsr.width) * fsr.height * 3 * fsr.count);
    std::ifstream in(trial_dir / "frames.raw", std::ios::binary);
    if (!in) throw IoError("cannot read " + (trial_dir / "frames.raw").string());
    in.read(reinterpret_cast<char*>(fsr.pixels.data()), std::streamsize(fsr.pixels.size()));
    if (in.gcount() != std::streamsize(fsr.pixels.size())) {
      throw ValidationError(trial_dir.string() + ": frames.raw is shorter than its manifest");
    }
    return fsr;
  }
  const auto png_dir = trial_dir / "frames";
  if (!fs::is_directory(png_dir)) throw IoError(trial_dir.string() + ": no frames.txt or frames/ directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(png_dir)) {
    if (e.path().extension() == ".png") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    const Image img = read_png(f);
    if (fsr.count == 0) {
      fsr.width = img.width;
      fsr.height = img.height;
    } else if (img.width != fsr.width || img.height != fsr.height) {
      throw ValidationError(f.string() + ": frame size differs from the first frame");
    }
    fsr.pixels.insert(fsr.pixels.end(), img.rgb.begin(), img.rgb.end());
    ++fsr.count;
  }
  return fsr;
}

DatasetInfo load_dataset(const fs::path& root) {
  if (!fs::is_directory(root)) throw IoError("dataset directory " + root.string() + " does not exist");
  DatasetInfo info;
  info.root = root;
  if (fs::exists(root / "dataset.txt")) {
    const auto kv = read_kv_map(root / "dataset.txt");
    if (kv.contains("classes")) info.classes = require_int(kv, "classes", root / "dataset.txt");
  }
  std::vector<fs::path> dirs;
  for (const auto& e : fs::directory_iterator(root)) {
    if (e.is_directory() && fs::exists(e.path() / "trial.txt")) dirs.push_back(e.path());
  }
  std::sort(dirs.begin(), dirs.end());
  for (const auto& dir : dirs) {
    const auto kv = read_kv_map(dir / "trial.txt");
    Trial trial;
    trial.trial_id = kv.contains("trial_id") ? kv.at("trial_id") : dir.filename().string();
    trial.user_id = kv.contains("user_id") ? kv.at("user_id") : user_from_trial_id(trial.trial_id);
    trial.num_frames = require_int(kv, "num_frames", dir / "trial.txt");
    trial.fps = require_int(kv, "fps", dir / "trial.txt");
    const int width = require_int(kv, "width", dir / "trial.txt");
    const int height = require_int(kv, "height", dir / "trial.txt");
    trial.segments = parse_transcription(read_text_file(dir / "transcription.txt"));
    trial.gaze = parse_gaze_csv(read_text_file(dir / "gaze.csv"), width, height);
    if (int(trial.gaze.points.size()) != trial.num_frames) {
      throw ValidationError(dir.string() + ": gaze has " + std::to_string(trial.gaze.points.size()) +
                            " rows for " + std::to_string(trial.num_frames) + " frames");
    }
    timeline_from_segments(trial.segments, trial.num_frames);  // bounds check
    if (info.trials.empty()) {
      info.width = width;
      info.height = height;
    }
    info.trials.push_back(std::move(trial));
  }
  if (info.trials.empty()) throw ValidationError(root.string() + " contains no trials");
  if (info.classes == 0) {
    for (const auto& t : info.trials)
      for (const auto& s : t.segments) info.classes = std::max(info.classes, gesture_index(s.label) + 1);
  }
  return info;
}

}  // namespace gazeattn
