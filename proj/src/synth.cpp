#include "gazeattn/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "gazeattn/error.hpp"

namespace gazeattn {

namespace {

constexpr int kPeriod = 15;  // frames per motion cycle at unit speed

struct Rgb {
  double r, g, b;
};

constexpr Rgb kBlobA{0.92, 0.25, 0.18};
constexpr Rgb kBlobB{0.20, 0.85, 0.30};

struct UserStyle {
  double speed;
  double dx, dy;
  Rgb tint;
  double blob_sigma;
};

struct Texture {
  double amp[3], fx[3], fy[3], phase[3];
};

std::mt19937_64 seeded(std::uint64_t seed, std::uint32_t a, std::uint32_t b) {
  std::seed_seq seq{std::uint32_t(seed), std::uint32_t(seed >> 32), a, b};
  return std::mt19937_64(seq);
}

UserStyle user_style(const SynthConfig& c, int user) {
  auto rng = seeded(c.seed, 0x5553u, std::uint32_t(user));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  UserStyle s;
  s.speed = 0.8 + 0.4 * u(rng);
  s.dx = -5.0 + 10.0 * u(rng);
  s.dy = -5.0 + 10.0 * u(rng);
  s.tint = {0.85 + 0.3 * u(rng), 0.85 + 0.3 * u(rng), 0.85 + 0.3 * u(rng)};
  s.blob_sigma = 2.5 + 1.0 * u(rng);
  return s;
}

struct BlobPair {
  double ax, ay, bx, by;
  bool active_is_a;
};

// Positions on a 64x64 canvas centered at the origin, before user offset and scaling.
BlobPair motion(int cls, double u) {
  BlobPair p{};
  switch (cls % 4) {
    case 0: {  // approach
      const double d = 22.0 * (1.0 - u);
      p = {d, 0.0, -d, 0.0, true};
      break;
    }
    case 1:  // crossover
      p = {-20.0 + 40.0 * u, -12.0 + 24.0 * u, 20.0 - 40.0 * u, -12.0 + 24.0 * u, false};
      break;
    case 2: {  // orbit
      const double th = 2.0 * std::numbers::pi * u;
      p = {16.0 * std::cos(th), 16.0 * std::sin(th), -16.0 * std::cos(th), -16.0 * std::sin(th), true};
      break;
    }
    default: {  // retract
      const double d = 4.0 + 20.0 * u;
      p = {0.0, -d, 0.0, d, false};
      break;
    }
  }
  const double rot = (cls / 4) * std::numbers::pi / 3.0;
  if (rot != 0.0) {
    const double c = std::cos(rot), s = std::sin(rot);
    auto turn = [&](double& x, double& y) {
      const double nx = c * x - s * y, ny = s * x + c * y;
      x = nx;
      y = ny;
    };
    turn(p.ax, p.ay);
    turn(p.bx, p.by);
  }
  return p;
}

std::vector<int> segment_classes(const SynthConfig& c, std::mt19937_64& rng) {
  std::vector<int> out;
  std::vector<int> perm(static_cast<std::size_t>(c.classes));
  for (int i = 0; i < c.classes; ++i) perm[i] = i;
  while (int(out.size()) < c.segments_per_trial) {
    std::shuffle(perm.begin(), perm.end(), rng);
    if (!out.empty() && perm.size() > 1 && perm.front() == out.back()) std::swap(perm[0], perm[1]);
    for (int k : perm) {
      if (int(out.size()) == c.segments_per_trial) break;
      out.push_back(k);
    }
  }
  return out;
}

std::uint8_t to_byte(double v) { return std::uint8_t(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); }

}  // namespace

void SynthConfig::validate() const {
  if (num_users < 1 || num_users > 25) throw ConfigError("num_users must lie in 1..25");
  if (trials_per_user < 1) throw ConfigError("trials_per_user must be positive");
  if (height < 8 || width < 8) throw ConfigError("synthetic frames must be at least 8x8");
  if (classes < 1 || classes > kNumGestures) throw ConfigError("classes must lie in 1..10");
  if (fps < 1) throw ConfigError("fps must be positive");
  if (segments_per_trial < 1) throw ConfigError("segments_per_trial must be positive");
  if (min_segment < 1 || max_segment < min_segment) throw ConfigError("invalid segment duration range");
  if (gaze_noise < 0.0) throw ConfigError("gaze_noise must be non-negative");
}

std::string synth_user_id(int user) { return std::string(1, char('B' + user)); }

SynthTrial render_synthetic_trial(const SynthConfig& c, int user, int trial_index) {
  c.validate();
  const UserStyle style = user_style(c, user);
  auto rng = seeded(c.seed, std::uint32_t(user + 1), std::uint32_t(trial_index + 1));
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::uniform_int_distribution<int> duration(c.min_segment, c.max_segment);
  std::normal_distribution<double> gaze_noise(0.0, 1.0);
  std::normal_distribution<double> pixel_noise(0.0, 0.015);

  Texture tex{};
  for (int k = 0; k < 3; ++k) {
    tex.amp[k] = 0.03 + 0.05 * u01(rng);
    tex.fx[k] = 0.05 + 0.35 * u01(rng);
    tex.fy[k] = 0.05 + 0.35 * u01(rng);
    tex.phase[k] = 2.0 * std::numbers::pi * u01(rng);
  }

  SynthTrial out;
  Trial& t = out.trial;
  char id[64];
  std::snprintf(id, sizeof id, "Suturing_%s%03d", synth_user_id(user).c_str(), trial_index + 1);
  t.trial_id = id;
  t.user_id = synth_user_id(user);
  t.fps = c.fps;
  const auto classes = segment_classes(c, rng);
  int frame = 0;
  for (int cls : classes) {
    const int len = duration(rng);
    t.segments.push_back({frame, frame + len - 1, gesture_from_index(cls)});
    frame += len;
  }
  t.num_frames = frame;
  t.gaze.frame_width = c.width;
  t.gaze.frame_height = c.height;

  const double sx = c.width / 64.0, sy = c.height / 64.0;
  std::vector<double> background(std::size_t(c.width) * c.height);
  for (int y = 0; y < c.height; ++y)
    for (int x = 0; x < c.width; ++x) {
      double v = 0.35;
      for (int k = 0; k < 3; ++k) v += tex.amp[k] * std::sin(tex.fx[k] * x / sx + tex.fy[k] * y / sy + tex.phase[k]);
      background[std::size_t(y) * c.width + x] = v;
    }

  FrameStore& fs = out.frames;
  fs.width = c.width;
  fs.height = c.height;
  fs.count = t.num_frames;
  fs.pixels.resize(std::size_t(fs.count) * c.width * c.height * 3);
  const double blob_sigma = style.blob_sigma * std::min(sx, sy);
  const double inv2s2 = 1.0 / (2.0 * blob_sigma * blob_sigma);

  for (const auto& seg : t.segments) {
    const int cls = gesture_index(seg.label);
    for (int f = seg.start_frame; f <= seg.end_frame; ++f) {
      const double phase = style.speed * double(f - seg.start_frame) / kPeriod;
      const BlobPair p = motion(cls, phase - std::floor(phase));
      const double cx = (32.0 + style.dx) * sx, cy = (32.0 + style.dy) * sy;
      const double ax = cx + p.ax * sx, ay = cy + p.ay * sy, bx = cx + p.bx * sx, by = cy + p.by * sy;

      const double gx = (p.active_is_a ? ax : bx) + c.gaze_noise * gaze_noise(rng);
      const double gy = (p.active_is_a ? ay : by) + c.gaze_noise * gaze_noise(rng);
      t.gaze.points.push_back(clamp_gaze({gx, gy}, c.width, c.height));

      std::uint8_t* px = fs.pixels.data() + std::size_t(f) * c.width * c.height * 3;
      for (int y = 0; y < c.height; ++y)
        for (int x = 0; x < c.width; ++x) {
          const double bg = background[std::size_t(y) * c.width + x];
          const double wa = std::exp(-((x - ax) * (x - ax) + (y - ay) * (y - ay)) * inv2s2);
          const double wb = std::exp(-((x - bx) * (x - bx) + (y - by) * (y - by)) * inv2s2);
          const double keep = std::max(0.0, 1.0 - wa - wb);
          const double n = pixel_noise(rng);
          const Rgb col{bg * style.tint.r * keep + kBlobA.r * wa + kBlobB.r * wb + n,
                        bg * style.tint.g * keep + kBlobA.g * wa + kBlobB.g * wb + n,
                        bg * style.tint.b * keep + kBlobA.b * wa + kBlobB.b * wb + n};
          std::uint8_t* o = px + (std::size_t(y) * c.width + x) * 3;
          o[0] = to_byte(col.r);
          o[1] = to_byte(col.g);
          o[2] = to_byte(col.b);
        }
    }
  }
  return out;
}

SynthSummary synth_generate(const SynthConfig& c, const std::filesystem::path& out_dir) {
  c.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec || !std::filesystem::is_directory(out_dir)) {
    throw IoError("cannot create output directory " + out_dir.string() + (ec ? ": " + ec.message() : ""));
  }
  std::ostringstream manifest;
  manifest << "format = gazeattn-synthetic\nversion = 1\nseed = " << c.seed << "\nnum_users = " << c.num_users
           << "\ntrials_per_user = " << c.trials_per_user << "\nwidth = " << c.width << "\nheight = " << c.height
           << "\nfps = " << c.fps << "\nclasses = " << c.classes << "\ntrials = " << c.num_users * c.trials_per_user
           << '\n';
  write_text_file(out_dir / "dataset.txt", manifest.str());

  SynthSummary summary;
  summary.class_frames.assign(std::size_t(c.classes), 0);
  const int total = c.num_users * c.trials_per_user;
  std::vector<SynthTrial> rendered(static_cast<std::size_t>(total));
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < total; ++i) rendered[i] = render_synthetic_trial(c, i / c.trials_per_user, i % c.trials_per_user);
  for (const auto& st : rendered) {
    const auto dir = out_dir / st.trial.trial_id;
    save_trial(dir, st.trial);
    save_frames_raw(dir, st.frames);
    summary.trials += 1;
    summary.frames += st.trial.num_frames;
    for (const auto& s : st.trial.segments) summary.class_frames[gesture_index(s.label)] += s.end_frame - s.start_frame + 1;
  }
  return summary;
}

}  // namespace gazeattn
