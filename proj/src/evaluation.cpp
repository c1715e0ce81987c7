#include "gazeattn/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include "gazeattn/attention.hpp"
#include "gazeattn/error.hpp"

namespace gazeattn {

namespace {

std::size_t check_lengths(const GestureTimeline& pred, const GestureTimeline& gt) {
  if (pred.size() != gt.size()) {
    throw ValidationError("prediction has " + std::to_string(pred.size()) + " frames, ground truth " +
                          std::to_string(gt.size()));
  }
  const auto labeled =
      std::size_t(std::count_if(gt.begin(), gt.end(), [](Gesture g) { return g != Gesture::Unlabeled; }));
  if (labeled == 0) throw ValidationError("score undefined: ground truth has no labeled frames");
  return labeled;
}

}  // namespace

double frame_accuracy(const GestureTimeline& pred, const GestureTimeline& gt) {
  const std::size_t labeled = check_lengths(pred, gt);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) hits += (gt[i] != Gesture::Unlabeled && pred[i] == gt[i]) ? 1 : 0;
  return 100.0 * double(hits) / double(labeled);
}

double macro_f1(const GestureTimeline& pred, const GestureTimeline& gt) {
  check_lengths(pred, gt);
  struct Tally {
    double tp = 0, predicted = 0, actual = 0;
  };
  std::map<Gesture, Tally> tally;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (gt[i] == Gesture::Unlabeled) continue;
    tally[gt[i]].actual += 1;
    tally[pred[i]].predicted += 1;
    if (pred[i] == gt[i]) tally[gt[i]].tp += 1;
  }
  double sum = 0.0;
  int classes = 0;
  for (const auto& [label, t] : tally) {
    if (label == Gesture::Unlabeled || t.actual == 0) continue;
    const double p = t.predicted > 0 ? t.tp / t.predicted : 0.0;
    const double r = t.tp / t.actual;
    sum += (p + r) > 0 ? 2.0 * p * r / (p + r) : 0.0;
    ++classes;
  }
  return 100.0 * sum / classes;
}

std::vector<Gesture> rle_segments(const GestureTimeline& timeline) {
  std::vector<Gesture> out;
  for (std::size_t i = 0; i < timeline.size(); ++i) {
    if (i > 0 && timeline[i] == timeline[i - 1]) continue;
    if (timeline[i] != Gesture::Unlabeled) out.push_back(timeline[i]);
  }
  return out;
}

int levenshtein(std::span<const Gesture> a, std::span<const Gesture> b) {
  std::vector<int> prev(b.size() + 1), cur(b.size() + 1);
  std::iota(prev.begin(), prev.end(), 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = int(i);
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const int sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double edit_score(const GestureTimeline& pred, const GestureTimeline& gt) {
  const auto p = rle_segments(pred);
  const auto g = rle_segments(gt);
  const double denom = double(std::max({p.size(), g.size(), std::size_t{1}}));
  return std::clamp(100.0 * (1.0 - double(levenshtein(p, g)) / denom), 0.0, 100.0);
}

TrialResult score_trial(std::string trial_id, GestureTimeline gt, GestureTimeline pred) {
  TrialResult r;
  r.trial_id = std::move(trial_id);
  r.accuracy = frame_accuracy(pred, gt);
  r.f1 = macro_f1(pred, gt);
  r.edit = edit_score(pred, gt);
  r.gt = std::move(gt);
  r.pred = std::move(pred);
  return r;
}

FoldResult summarize_fold(std::string test_user, std::vector<TrialResult> trials) {
  if (trials.empty()) throw ValidationError("fold has no test trials");
  FoldResult f;
  f.test_user = std::move(test_user);
  for (const auto& t : trials) {
    f.accuracy += t.accuracy;
    f.f1 += t.f1;
    f.edit += t.edit;
  }
  const double n = double(trials.size());
  f.accuracy /= n;
  f.f1 /= n;
  f.edit /= n;
  f.trials = std::move(trials);
  return f;
}

FoldResult evaluate_fold(const ClipClassifier& classify, const std::vector<PreparedTrial>& test,
                         const std::string& test_user, int batch_size) {
  std::vector<TrialResult> results;
  for (const auto& trial : test) {
    GestureTimeline pred(trial.timeline.size(), Gesture::Unlabeled);
    for (std::size_t start = 0; start < trial.windows.size(); start += std::size_t(batch_size)) {
      const std::size_t end = std::min(trial.windows.size(), start + std::size_t(batch_size));
      std::vector<Clip> clips;
      for (std::size_t w = start; w < end; ++w) clips.push_back(extract_clip(trial.frames, trial.windows[w]));
      const auto classes = classify(clips);
      if (classes.size() != clips.size()) throw ShapeError("classifier returned the wrong number of predictions");
      for (std::size_t w = start; w < end; ++w) {
        pred[std::size_t(trial.windows[w].end_frame_index)] = gesture_from_index(classes[w - start]);
      }
    }
    results.push_back(score_trial(trial.trial.trial_id, trial.timeline, std::move(pred)));
  }
  return summarize_fold(test_user, std::move(results));
}

ClipClassifier model_classifier(Backbone<float>& model) {
  return [&model](const std::vector<Clip>& clips) {
    const auto out = model.forward(pack_clips(clips), Mode::Eval);
    const int k = out.logits.dim(1);
    std::vector<int> classes;
    for (int n = 0; n < out.logits.dim(0); ++n) {
      const float* row = out.logits.data() + std::size_t(n) * k;
      classes.push_back(int(std::max_element(row, row + k) - row));
    }
    return classes;
  };
}

double sample_std(std::span<const double> values) {
  if (values.size() < 2) throw ValidationError("standard deviation needs at least two folds");
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / double(values.size());
  double sq = 0.0;
  for (double v : values) sq += (v - mean) * (v - mean);
  return std::sqrt(sq / double(values.size() - 1));
}

LouoSummary aggregate_louo(const std::vector<FoldResult>& folds) {
  if (folds.empty()) throw ValidationError("no folds to aggregate");
  auto stat = [&](auto field) {
    std::vector<double> v;
    for (const auto& f : folds) v.push_back(f.*field);
    MeanStd m;
    m.mean = std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
    if (v.size() >= 2) m.std = sample_std(v);
    return m;
  };
  LouoSummary s;
  s.accuracy = stat(&FoldResult::accuracy);
  s.f1 = stat(&FoldResult::f1);
  s.edit = stat(&FoldResult::edit);
  s.folds = int(folds.size());
  return s;
}

nlohmann::json fold_to_json(const FoldResult& fold) {
  nlohmann::json j;
  j["test_user"] = fold.test_user;
  j["accuracy"] = fold.accuracy;
  j["f1"] = fold.f1;
  j["edit"] = fold.edit;
  j["trials"] = nlohmann::json::array();
  for (const auto& t : fold.trials) {
    j["trials"].push_back({{"trial_id", t.trial_id}, {"accuracy", t.accuracy}, {"f1", t.f1}, {"edit", t.edit},
                           {"frames", t.gt.size()}});
  }
  return j;
}

nlohmann::json summary_to_json(const LouoSummary& s) {
  auto one = [](const MeanStd& m) {
    nlohmann::json j;
    j["mean"] = m.mean;
    j["std"] = m.std ? nlohmann::json(*m.std) : nlohmann::json(nullptr);
    return j;
  };
  return {{"folds", s.folds}, {"accuracy", one(s.accuracy)}, {"f1", one(s.f1)}, {"edit", one(s.edit)}};
}

nlohmann::json results_json(const std::vector<FoldResult>& folds) {
  nlohmann::json j;
  j["folds"] = nlohmann::json::array();
  for (const auto& f : folds) j["folds"].push_back(fold_to_json(f));
  j["aggregate"] = summary_to_json(aggregate_louo(folds));
  return j;
}

std::string timeline_csv(const TrialResult& trial) {
  std::ostringstream os;
  os << "frame,gt,pred\n";
  for (std::size_t i = 0; i < trial.gt.size(); ++i) {
    os << i << ',' << gesture_name(trial.gt[i]) << ',' << gesture_name(trial.pred[i]) << '\n';
  }
  return os.str();
}

std::vector<Clip> sample_clips(const std::vector<PreparedTrial>& trials, int stride) {
  std::vector<Clip> clips;
  for (const auto& t : trials)
    for (std::size_t w = 0; w < t.windows.size(); w += std::size_t(std::max(1, stride))) {
      clips.push_back(extract_clip(t.frames, t.windows[w]));
    }
  return clips;
}

double attention_gaze_mass(Backbone<float>& model, const std::vector<Clip>& clips, double radius, int batch_size) {
  const auto [mt, mh, mw] = model.config().attention_dims();
  const std::size_t plane = std::size_t(mh) * mw;
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t start = 0; start < clips.size(); start += std::size_t(batch_size)) {
    const std::vector<Clip> batch(clips.begin() + long(start),
                                  clips.begin() + long(std::min(clips.size(), start + std::size_t(batch_size))));
    const auto out = model.forward(pack_clips(batch), Mode::Eval);
    for (std::size_t n = 0; n < batch.size(); ++n) {
      const auto& s = batch[n].frames.shape();
      for (int k = 0; k < mt; ++k) {
        const GazePoint g = batch[n].gaze[std::size_t(heatmap_source_frame(k, s[0], mt))];
        const float* a = out.attention.data() + (n * mt + k) * plane;
        std::vector<double> norm(plane);
        for (std::size_t i = 0; i < plane; ++i) norm[i] = double(a[i]) + kAttentionEps;
        total += disk_mass(norm, mh, mw, frame_to_grid(g.x, s[2], mw), frame_to_grid(g.y, s[1], mh), radius);
        ++count;
      }
    }
  }
  return count ? total / double(count) : 0.0;
}

}  // namespace gazeattn
