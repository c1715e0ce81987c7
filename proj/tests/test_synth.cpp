#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "gazeattn/dataset.hpp"
#include "gazeattn/error.hpp"
#include "gazeattn/synth.hpp"

using namespace gazeattn;
namespace fs = std::filesystem;

namespace {

std::map<std::string, std::string> read_tree(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    files[fs::relative(e.path(), root).string()] =
        std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }
  return files;
}

SynthConfig small() {
  SynthConfig c;
  c.num_users = 2;
  c.trials_per_user = 2;
  c.height = c.width = 32;
  c.segments_per_trial = 4;
  return c;
}

}  // namespace

TEST(Synth, SameSeedGivesIdenticalTrees) {
  const fs::path a = fs::temp_directory_path() / "gazeattn_synth_a", b = fs::temp_directory_path() / "gazeattn_synth_b";
  fs::remove_all(a);
  fs::remove_all(b);
  synth_generate(small(), a);
  synth_generate(small(), b);
  const auto ta = read_tree(a), tb = read_tree(b);
  EXPECT_FALSE(ta.empty());
  EXPECT_TRUE(ta == tb);

  auto other = small();
  other.seed = 8;
  fs::remove_all(b);
  synth_generate(other, b);
  EXPECT_FALSE(read_tree(b) == ta);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Synth, DefaultDatasetShapeAndClassBalance) {
  const fs::path dir = fs::temp_directory_path() / "gazeattn_synth_default";
  fs::remove_all(dir);
  const SynthSummary summary = synth_generate(SynthConfig{}, dir);
  EXPECT_EQ(summary.trials, 32);

  // Independent recount straight from the transcription files.
  std::map<std::string, long> counts;
  long total = 0;
  int trials = 0;
  std::set<std::string> users;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_directory()) continue;
    ++trials;
    users.insert(e.path().filename().string().substr(9, 1));
    std::ifstream in(e.path() / "transcription.txt");
    long start, end;
    std::string label;
    while (in >> start >> end >> label) {
      counts[label] += end - start + 1;
      total += end - start + 1;
    }
  }
  EXPECT_EQ(trials, 32);
  EXPECT_EQ(users.size(), 8u);
  ASSERT_EQ(counts.size(), 4u);
  for (std::size_t k = 0; k < 4; ++k) {
    const std::string name(gesture_name(gesture_from_index(int(k))));
    EXPECT_EQ(counts[name], summary.class_frames[k]) << name;
    const double share = double(counts[name]) / double(total);
    EXPECT_GT(share, 0.15) << name;
    EXPECT_LT(share, 0.35) << name;
  }

  const auto data = load_dataset(dir);
  EXPECT_EQ(data.width, 64);
  EXPECT_EQ(data.classes, 4);
  EXPECT_EQ(louo_folds(data.trials).size(), 8u);
  for (const auto& t : data.trials) {
    EXPECT_EQ(t.fps, 5);
    EXPECT_EQ(int(t.gaze.points.size()), t.num_frames);
    for (const auto& s : t.segments) {
      EXPECT_GE(s.end_frame - s.start_frame + 1, 20);
      EXPECT_LE(s.end_frame - s.start_frame + 1, 60);
    }
    for (const auto& g : t.gaze.points) {
      EXPECT_GE(g.x, 0.0);
      EXPECT_LE(g.x, 63.0);
    }
  }
  fs::remove_all(dir);
}

TEST(Synth, GazeTracksTheActiveBlob) {
  // Gaze noise is 2 px: averaged over a trial, gaze must sit near a bright blob, i.e. on pixels
  // brighter than the background mean.
  const auto t = render_synthetic_trial(SynthConfig{}, 0, 0);
  double on = 0.0, mean = 0.0;
  const int w = t.frames.width, h = t.frames.height;
  for (int f = 0; f < t.trial.num_frames; ++f) {
    const auto* px = t.frames.frame(f);
    const auto g = t.trial.gaze.points[std::size_t(f)];
    const int x = int(std::lround(g.x)), y = int(std::lround(g.y));
    auto lum = [&](int xx, int yy) {
      const auto* p = px + (std::size_t(yy) * w + xx) * 3;
      return (p[0] + p[1] + p[2]) / 3.0;
    };
    on += lum(x, y);
    double m = 0.0;
    for (int yy = 0; yy < h; yy += 4)
      for (int xx = 0; xx < w; xx += 4) m += lum(xx, yy);
    mean += m / ((h / 4) * (w / 4));
  }
  EXPECT_GT(on, mean * 1.1);
}

TEST(Synth, RejectsBadConfig) {
  auto c = SynthConfig{};
  c.classes = 11;
  EXPECT_THROW(c.validate(), ConfigError);
  c = SynthConfig{};
  c.min_segment = 70;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Synth, UserIds) {
  EXPECT_EQ(synth_user_id(0), "B");
  EXPECT_EQ(synth_user_id(7), "I");
}
