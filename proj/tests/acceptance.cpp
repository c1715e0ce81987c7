// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "gazeattn/attention.hpp"
#include "gazeattn/backbone.hpp"
#include "gazeattn/checkpoint.hpp"
#include "gazeattn/dataset.hpp"
#include "gazeattn/evaluation.hpp"
#include "gazeattn/layers.hpp"
#include "gazeattn/synth.hpp"
#include "gazeattn/training.hpp"

using namespace gazeattn;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

template <typename... Args>
std::string fmt(const char* f, Args... args) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, static_cast<double>(args)...);
  return buf;
}

template <typename T>
Tensor<T> random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor<T> t(std::move(shape));
  for (auto& v : t.values()) v = T(u(rng));
  return t;
}

// ------------------------------------------------------------------ 1
// Oracle: a 2D network written with direct loops, run per frame in double.

std::vector<double> conv2d(const std::vector<double>& x, int cin, int h, int w, const Tensor<float>& k2d,
                           const Tensor<float>& bias, int cout, int ks, int pad) {
  const int oh = h + 2 * pad - ks + 1, ow = w + 2 * pad - ks + 1;
  std::vector<double> y(std::size_t(cout) * oh * ow);
  for (int o = 0; o < cout; ++o)
    for (int i = 0; i < oh; ++i)
      for (int j = 0; j < ow; ++j) {
        double s = bias[o];
        for (int c = 0; c < cin; ++c)
          for (int a = 0; a < ks; ++a)
            for (int b = 0; b < ks; ++b) {
              const int yy = i + a - pad, xx = j + b - pad;
              if (yy < 0 || xx < 0 || yy >= h || xx >= w) continue;
              s += double(k2d[((std::size_t(o) * cin + c) * ks + a) * ks + b]) * x[(std::size_t(c) * h + yy) * w + xx];
            }
        y[(std::size_t(o) * oh + i) * ow + j] = s;
      }
  return y;
}

std::vector<double> relu_maxpool2(const std::vector<double>& x, int c, int h, int w) {
  std::vector<double> y(std::size_t(c) * (h / 2) * (w / 2));
  for (int k = 0; k < c; ++k)
    for (int i = 0; i < h / 2; ++i)
      for (int j = 0; j < w / 2; ++j) {
        double m = -1e300;
        for (int a = 0; a < 2; ++a)
          for (int b = 0; b < 2; ++b) m = std::max(m, x[(std::size_t(k) * h + 2 * i + a) * w + 2 * j + b]);
        y[(std::size_t(k) * (h / 2) + i) * (w / 2) + j] = std::max(0.0, m);
      }
  return y;
}

Outcome boring_video() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(101);
  const int cin = 3, c1 = 8, c2 = 6, h = 20, w = 20, n1 = 3, n2 = 3, frames = 9;
  const auto k1 = random_tensor<float>({c1, cin, 3, 3}, rng, -0.5, 0.5);
  const auto b1 = random_tensor<float>({c1}, rng, -0.1, 0.1);
  const auto k2 = random_tensor<float>({c2, c1, 3, 3}, rng, -0.5, 0.5);
  const auto b2 = random_tensor<float>({c2}, rng, -0.1, 0.1);
  const auto image = random_tensor<float>({cin, h, w}, rng, 0.0, 1.0);

  // 2D oracle.
  std::vector<double> x2d(image.values().begin(), image.values().end());
  const auto y1 = relu_maxpool2(conv2d(x2d, cin, h, w, k1, b1, c1, 3, 1), c1, h, w);
  const auto y2 = conv2d(y1, c1, h / 2, w / 2, k2, b2, c2, 3, 1);

  // Inflated 3D network on the frame repeated in time. Temporal padding is zero so every
  // output frame sees only copies of the image.
  Conv3d<float> l1("l1", cin, c1, {n1, 3, 3}, {1, 1, 1}, {0, 1, 1});
  Conv3d<float> l2("l2", c1, c2, {n2, 3, 3}, {1, 1, 1}, {0, 1, 1});
  l1.weight.value = inflate_2d(k1, n1);
  l1.bias.value = b1;
  l2.weight.value = inflate_2d(k2, n2);
  l2.bias.value = b2;
  MaxPool3d<float> pool({1, 2, 2}, {1, 2, 2}, {0, 0, 0});
  ReLU<float> relu;
  Tensor<float> video({1, cin, frames, h, w});
  for (int c = 0; c < cin; ++c)
    for (int t = 0; t < frames; ++t)
      std::copy_n(image.data() + std::size_t(c) * h * w, h * w, video.data() + (std::size_t(c) * frames + t) * h * w);
  const auto out = l2.forward(relu.forward(pool.forward(l1.forward(video))));

  const int tout = out.dim(2), plane = (h / 2) * (w / 2);
  double err = 0.0;
  for (int c = 0; c < c2; ++c)
    for (int t = 0; t < tout; ++t)
      for (int i = 0; i < plane; ++i)
        err = std::max(err, std::abs(double(out[(std::size_t(c) * tout + t) * plane + i]) -
                                     y2[std::size_t(c) * plane + i]));
  const double secs = seconds_since(t0);
  return {err <= 1e-5 && secs < 10.0 && tout == frames - n1 - n2 + 2,
          fmt("max abs error %.3g over %.0f frames (<= 1e-5), %.2f s (< 10 s)", err, tout, secs)};
}

// ------------------------------------------------------------------ 2

Outcome gradient_check() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(202);
  // Shape (C,T,H,W) = (3,2,4,4), batch of one.
  AttentionModule<double> m(3, AttentionWidths{4, 3, 2, 2, 3, 2});
  m.init(rng);
  for (auto* p : m.params()) p->value = random_tensor<double>(p->value.shape(), rng, -0.6, 0.6);
  auto x = random_tensor<double>({1, 3, 2, 4, 4}, rng);
  Tensor<double> g({1, 2, 4, 4});
  for (int t = 0; t < 2; ++t) {
    double s = 0.0;
    for (int i = 0; i < 16; ++i) s += (g[t * 16 + i] = std::uniform_real_distribution<double>(0.0, 1.0)(rng));
    for (int i = 0; i < 16; ++i) g[t * 16 + i] /= s;
  }
  const auto probe = random_tensor<double>(x.shape(), rng);

  // L = attention_loss(A, G) + <apply_attention(X, A), probe>
  auto loss = [&] {
    const auto a = m.forward(x);
    const auto y = apply_attention(x, a);
    double s = attention_loss(a, g);
    for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * probe[i];
    return s;
  };

  for (auto* p : m.params()) p->grad.fill(0.0);
  const auto a = m.forward(x);
  Tensor<double> dx_apply, da_apply, da_loss;
  apply_attention_backward(x, a, probe, dx_apply, da_apply);
  attention_loss(a, g, &da_loss);
  Tensor<double> da(a.shape());
  for (std::size_t i = 0; i < da.size(); ++i) da[i] = da_apply[i] + da_loss[i];
  auto dx = m.backward(da);
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dx_apply[i];

  double worst = 0.0;
  std::string worst_name;
  auto check = [&](Tensor<double>& value, const Tensor<double>& analytic, const std::string& name) {
    for (std::size_t i = 0; i < value.size(); ++i) {
      // h near eps^(1/3): round-off in fd stays ~1e-10, well under the 1e-6 floor
      const double saved = value[i], h = 1e-5;
      value[i] = saved + h;
      const double fp = loss();
      value[i] = saved - h;
      const double fm = loss();
      value[i] = saved;
      const double fd = (fp - fm) / (2 * h);
      const double rel = std::abs(fd - analytic[i]) / std::max({std::abs(fd), std::abs(analytic[i]), 1e-6});
      if (rel > worst) worst = rel, worst_name = name;
    }
  };
  check(x, dx, "X");
  for (auto* p : m.params()) check(p->value, p->grad, p->name);
  const double secs = seconds_since(t0);
  return {worst <= 1e-3 && secs < 60.0,
          fmt("max relative error %.3g (<= 1e-3), %.2f s (< 60 s)", worst, secs) + " worst at " + worst_name};
}

// ------------------------------------------------------------------ 3

int oracle_lev(const std::vector<Gesture>& a, std::size_t i, const std::vector<Gesture>& b, std::size_t j) {
  if (i == a.size()) return int(b.size() - j);
  if (j == b.size()) return int(a.size() - i);
  if (a[i] == b[j]) return oracle_lev(a, i + 1, b, j + 1);
  return 1 + std::min({oracle_lev(a, i + 1, b, j), oracle_lev(a, i, b, j + 1), oracle_lev(a, i + 1, b, j + 1)});
}

Outcome levenshtein_and_metrics() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(303);
  std::uniform_int_distribution<int> len(0, 8), sym(0, 3);
  auto seq = [&] {
    std::vector<Gesture> s(std::size_t(len(rng)));
    for (auto& g : s) g = gesture_from_index(sym(rng));
    return s;
  };
  int oracle_fail = 0, axiom_fail = 0;
  for (int k = 0; k < 1000; ++k) {
    const auto a = seq(), b = seq();
    oracle_fail += levenshtein(a, b) != oracle_lev(a, 0, b, 0);
  }
  for (int k = 0; k < 500; ++k) {
    const auto a = seq(), b = seq(), c = seq();
    axiom_fail += levenshtein(a, b) != levenshtein(b, a);
    axiom_fail += levenshtein(a, c) > levenshtein(a, b) + levenshtein(b, c);
    axiom_fail += (levenshtein(a, b) == 0) != (a == b);
  }

  using G = Gesture;
  const G U = G::Unlabeled;
  int example_fail = 0;
  auto expect = [&](bool ok) { example_fail += !ok; };
  expect(frame_accuracy({G::G1, G::G1, G::G2, G::G3}, {G::G1, G::G2, G::G2, G::G3}) == 75.0);
  {
    // Both classes: 12 TP, 3 FP, 8 FN -> P 0.8, R 0.6. Misses spill into G3, which gt never uses.
    GestureTimeline gt, pred;
    for (G c : {G::G1, G::G2}) {
      const G other = c == G::G1 ? G::G2 : G::G1;
      for (int i = 0; i < 12; ++i) gt.push_back(c), pred.push_back(c);
      for (int i = 0; i < 3; ++i) gt.push_back(c), pred.push_back(other);
      for (int i = 0; i < 5; ++i) gt.push_back(c), pred.push_back(G::G3);
    }
    expect(std::round(macro_f1(pred, gt) * 100) / 100 == 68.57);
  }
  expect(macro_f1({G::G1, G::G1, G::G1, G::G1, G::G2, G::G2, G::G3, G::G3, G::G3, G::G3},
                  {G::G1, G::G1, G::G1, G::G1, G::G2, G::G2, G::G2, G::G2, G::G2, G::G2}) == 75.0);
  expect(rle_segments({G::G1, G::G1, G::G2, G::G2, G::G2, G::G1}) == std::vector<G>{G::G1, G::G2, G::G1});
  expect(rle_segments({U, G::G1, U}) == std::vector<G>{G::G1});
  expect(levenshtein(std::vector<G>{G::G1, G::G2, G::G3}, std::vector<G>{G::G1, G::G3}) == 1);
  expect(std::round(edit_score({G::G1, G::G3}, {G::G1, G::G2, G::G3}) * 100) / 100 == 66.67);
  {
    FoldResult a, b;
    a.accuracy = a.f1 = a.edit = 80;
    b.accuracy = b.f1 = b.edit = 90;
    const auto s = aggregate_louo({a, b});
    expect(s.accuracy.mean == 85.0 && std::round(*s.accuracy.std * 1000) / 1000 == 7.071);
  }
  const double secs = seconds_since(t0);
  return {oracle_fail == 0 && axiom_fail == 0 && example_fail == 0 && secs < 30.0,
          fmt("oracle mismatches %.0f/1000, axiom violations %.0f/500, worked-example failures %.0f, %.2f s (< 30 s)",
              oracle_fail, axiom_fail, example_fail, secs)};
}

// ------------------------------------------------------------------ 4

Outcome attention_range() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(404);
  std::uniform_int_distribution<int> ch(1, 6), dim(1, 5);
  std::uniform_real_distribution<double> scale(0.01, 10.0);
  int range_fail = 0, attain_fail = 0, shape_fail = 0, degenerate = 0;
  for (int k = 0; k < 200; ++k) {
    const int c = ch(rng), n = 1 + k % 2, t = dim(rng), h = dim(rng), w = dim(rng);
    AttentionModule<float> m(c, AttentionWidths{4, 4, 2, 2, 3, 2});
    m.init(rng);
    const double s = scale(rng);
    for (auto* p : m.params()) p->value = random_tensor<float>(p->value.shape(), rng, -s, s);
    const auto x = random_tensor<float>({n, c, t, h, w}, rng, -5.0, 5.0);
    const auto a = m.forward(x);
    shape_fail += a.shape() != Shape{n, t, h, w};
    shape_fail += apply_attention(x, a).shape() != x.shape();
    for (float v : a.values()) range_fail += !(v >= 0.0f && v <= 1.0f);
    const std::size_t vol = std::size_t(t) * h * w;
    for (int i = 0; i < n; ++i) {
      const float* r = m.response().data() + i * vol;
      const float* p = a.data() + i * vol;
      const bool constant = std::all_of(r, r + vol, [&](float v) { return v == r[0]; });
      if (constant) {
        ++degenerate;
        attain_fail += std::any_of(p, p + vol, [](float v) { return v != 0.0f; });
      } else {
        attain_fail += *std::min_element(p, p + vol) != 0.0f || *std::max_element(p, p + vol) != 1.0f;
      }
    }
  }
  const double secs = seconds_since(t0);
  return {range_fail == 0 && attain_fail == 0 && shape_fail == 0 && secs < 60.0,
          fmt("out-of-range values %.0f, missing 0/1 %.0f, shape errors %.0f over 200 draws (%.0f degenerate), "
              "%.2f s (< 60 s)",
              range_fail, attain_fail, shape_fail, degenerate, secs)};
}

// ------------------------------------------------------------------ 5, 6

struct EndToEnd {
  double acc_attn = 0.0, acc_plain = 0.0;
  double mass_attn = 0.0, mass_plain = 0.0;
  double secs_attn = 0.0;
};

EndToEnd run_end_to_end(const fs::path& data_dir) {
  const DatasetInfo data = load_dataset(data_dir);
  const Fold fold = louo_folds(data.trials).front();
  BackboneConfig model_cfg;  // T=8, 64x64, 4 classes
  const auto train_split = prepare_trials(data, fold.train, 5, model_cfg.frames);
  const auto test_split = prepare_trials(data, fold.test, 5, model_cfg.frames);
  const auto probe_clips = sample_clips(test_split, 2);

  TrainConfig cfg;
  cfg.total_iters = 2000;
  cfg.lr_decay_at_iter = 500;
  cfg.seed = 1;
  const double radius = 2.0 * cfg.heatmap.sigma;

  EndToEnd r;
  for (double lambda : {1.0, 0.0}) {
    const auto t0 = Clock::now();
    cfg.lambda_attn = lambda;
    TrainOutputs out;
    out.progress = &std::cerr;
    out.progress_every = 250;
    std::cerr << "[acceptance] training fold " << fold.test_user << " with lambda " << lambda << "\n";
    const auto result = train(train_split, cfg, model_cfg, out);
    Backbone<float> model(model_cfg);
    restore_checkpoint<float>(result.checkpoint, model, nullptr);
    const FoldResult fr = evaluate_fold(model_classifier(model), test_split, fold.test_user);
    const double mass = attention_gaze_mass(model, probe_clips, radius);
    std::cerr << "[acceptance] lambda " << lambda << ": accuracy " << fr.accuracy << ", F1 " << fr.f1 << ", edit "
              << fr.edit << ", gaze-disk mass " << mass << ", " << seconds_since(t0) << " s\n";
    if (lambda > 0) {
      r.acc_attn = fr.accuracy;
      r.mass_attn = mass;
      r.secs_attn = seconds_since(t0);
    } else {
      r.acc_plain = fr.accuracy;
      r.mass_plain = mass;
    }
  }
  return r;
}

// ------------------------------------------------------------------ 7

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

Outcome reproducibility(const fs::path& first, const fs::path& scratch) {
  const fs::path second = scratch / "synth_again";
  fs::remove_all(second);
  synth_generate(SynthConfig{}, second);
  const auto a = read_tree(first), b = read_tree(second);
  const bool same_data = !a.empty() && a == b;
  fs::remove_all(second);

  const DatasetInfo data = load_dataset(first);
  const Fold fold = louo_folds(data.trials).front();
  BackboneConfig model_cfg;
  const auto split = prepare_trials(data, fold.train, 5, model_cfg.frames);
  TrainConfig cfg;
  cfg.total_iters = 20;
  cfg.seed = 9;
  std::vector<std::uint8_t> bytes[2];
  for (int run = 0; run < 2; ++run) {
    const fs::path dir = scratch / ("ckpt_run" + std::to_string(run));
    train(split, cfg, model_cfg, {dir, "acceptance\n"});
    std::ifstream in(dir / "checkpoint.bin", std::ios::binary);
    bytes[run] = std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }
  const bool same_ckpt = !bytes[0].empty() && bytes[0] == bytes[1];
  return {same_data && same_ckpt, std::string("dataset trees ") + (same_data ? "identical" : "DIFFER") + " (" +
                                      std::to_string(a.size()) + " files), checkpoints " +
                                      (same_ckpt ? "identical" : "DIFFER") + " (" + std::to_string(bytes[0].size()) +
                                      " bytes)"};
}

}  // namespace

int main() {
  const fs::path scratch = fs::temp_directory_path() / "gazeattn_acceptance";
  fs::remove_all(scratch);
  fs::create_directories(scratch);

  std::vector<std::pair<int, Outcome>> results;
  auto report = [&](int id, const std::string& name, const Outcome& o) {
    std::cout << "criterion " << id << " [" << name << "]: " << (o.pass ? "PASS" : "FAIL") << " - " << o.detail
              << std::endl;
    results.push_back({id, o});
  };
  auto guarded = [&](int id, const std::string& name, const std::function<Outcome()>& f) {
    try {
      report(id, name, f());
    } catch (const std::exception& e) {
      report(id, name, {false, std::string("exception: ") + e.what()});
    }
  };

  guarded(1, "inflation boring-video equivalence", boring_video);
  guarded(2, "attention gradient fidelity", gradient_check);
  guarded(3, "levenshtein oracle and worked metrics", levenshtein_and_metrics);
  guarded(4, "attention range and shape", attention_range);

  const fs::path data_dir = scratch / "synth";
  EndToEnd e2e;
  std::string e2e_error;
  try {
    synth_generate(SynthConfig{}, data_dir);
    e2e = run_end_to_end(data_dir);
  } catch (const std::exception& e) {
    e2e_error = e.what();
  }
  if (!e2e_error.empty()) {
    report(5, "synthetic end-to-end", {false, "exception: " + e2e_error});
    report(6, "gaze-alignment ablation", {false, "exception: " + e2e_error});
  } else {
    report(5, "synthetic end-to-end",
           {e2e.acc_attn >= 80.0 && e2e.secs_attn <= 1800.0,
            fmt("held-out frame accuracy %.2f%% (>= 80%%), train+eval %.0f s (<= 1800 s)", e2e.acc_attn,
                e2e.secs_attn)});
    const double ratio = e2e.mass_plain > 0 ? e2e.mass_attn / e2e.mass_plain : 0.0;
    report(6, "gaze-alignment ablation",
           {ratio >= 1.2 && e2e.acc_attn >= e2e.acc_plain - 2.0,
            fmt("gaze-disk mass %.4f vs %.4f (ratio %.3f >= 1.2); accuracy %.2f vs lambda=0 %.2f", e2e.mass_attn,
                e2e.mass_plain, ratio, e2e.acc_attn, e2e.acc_plain) +
                fmt(" (needs >= %.2f)", e2e.acc_plain - 2.0)});
  }
  guarded(7, "byte-identical dataset and checkpoint", [&] {
    if (!fs::exists(data_dir)) synth_generate(SynthConfig{}, data_dir);
    return reproducibility(data_dir, scratch);
  });

  fs::remove_all(scratch);
  int failed = 0;
  for (const auto& [id, o] : results) failed += !o.pass;
  std::cout << (failed ? "acceptance: " + std::to_string(failed) + " criterion(s) failed" : "acceptance: all passed")
            << std::endl;
  return failed ? 1 : 0;
}
