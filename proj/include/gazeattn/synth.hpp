#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gazeattn/dataset.hpp"

namespace gazeattn {

/// Desk-scale surrogate: two colored "instrument" blobs over a textured
/// background. Each class is a distinct two-blob motion (approach, crossover,
/// orbit, retract; classes past four reuse the motions rotated by 60 degrees).
/// Gaze follows the class's active blob with isotropic Gaussian noise.
struct SynthConfig {
  std::uint64_t seed = 7;
  int num_users = 8;
  int trials_per_user = 4;
  int height = 64;
  int width = 64;
  int classes = 4;
  int fps = 5;
  int segments_per_trial = 8;
  int min_segment = 20;  // frames, inclusive
  int max_segment = 60;
  double gaze_noise = 2.0;  // pixels

  void validate() const;
};

struct SynthTrial {
  Trial trial;
  FrameStore frames;
};

struct SynthSummary {
  int trials = 0;
  long frames = 0;
  std::vector<long> class_frames;  // labeled frames per class index
};

/// User ids are single letters starting at 'B' (JIGSAWS convention).
std::string synth_user_id(int user);

/// Pure function of (config, user, trial).
SynthTrial render_synthetic_trial(const SynthConfig& config, int user, int trial);

/// Writes dataset.txt and one directory per trial. Output bytes depend only on the config.
SynthSummary synth_generate(const SynthConfig& config, const std::filesystem::path& out_dir);

}  // namespace gazeattn
