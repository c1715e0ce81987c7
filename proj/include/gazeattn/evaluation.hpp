#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "gazeattn/backbone.hpp"
#include "gazeattn/dataset.hpp"
#include "gazeattn/gaze.hpp"
#include "gazeattn/training.hpp"

namespace gazeattn {

// All scores are percentages. Frames whose ground truth is Unlabeled are ignored.

double frame_accuracy(const GestureTimeline& pred, const GestureTimeline& gt);
/// Mean per-class F1 over the classes present in the ground truth.
double macro_f1(const GestureTimeline& pred, const GestureTimeline& gt);
/// Labels of maximal runs, Unlabeled runs dropped.
std::vector<Gesture> rle_segments(const GestureTimeline& timeline);
int levenshtein(std::span<const Gesture> a, std::span<const Gesture> b);
/// 100 * (1 - lev(rle(pred), rle(gt)) / max(|rle(pred)|, |rle(gt)|, 1)).
double edit_score(const GestureTimeline& pred, const GestureTimeline& gt);

struct TrialResult {
  std::string trial_id;
  GestureTimeline gt;
  GestureTimeline pred;
  double accuracy = 0.0;
  double f1 = 0.0;
  double edit = 0.0;
};

struct FoldResult {
  std::string test_user;
  std::vector<TrialResult> trials;
  double accuracy = 0.0;  // unweighted means over trials
  double f1 = 0.0;
  double edit = 0.0;
};

/// Scores one trial and fills its metric fields.
TrialResult score_trial(std::string trial_id, GestureTimeline gt, GestureTimeline pred);
/// Averages already-scored trials.
FoldResult summarize_fold(std::string test_user, std::vector<TrialResult> trials);

/// Maps a batch of clips to class indices.
using ClipClassifier = std::function<std::vector<int>(const std::vector<Clip>&)>;

/// Predicts every labeled frame from the window ending at it (no look-ahead).
FoldResult evaluate_fold(const ClipClassifier& classify, const std::vector<PreparedTrial>& test,
                         const std::string& test_user, int batch_size = 32);

/// Argmax of the model's eval-mode logits.
ClipClassifier model_classifier(Backbone<float>& model);

struct MeanStd {
  double mean = 0.0;
  std::optional<double> std;  // sample std; absent with fewer than two folds
};

struct LouoSummary {
  MeanStd accuracy, f1, edit;
  int folds = 0;
};

/// Sample standard deviation (n - 1). Throws ValidationError for fewer than two values.
double sample_std(std::span<const double> values);
LouoSummary aggregate_louo(const std::vector<FoldResult>& folds);

nlohmann::json fold_to_json(const FoldResult& fold);
nlohmann::json summary_to_json(const LouoSummary& summary);
nlohmann::json results_json(const std::vector<FoldResult>& folds);

/// "frame,gt,pred" with gesture names.
std::string timeline_csv(const TrialResult& trial);

/// Mean fraction of normalized attention mass within `radius` cells of the
/// gaze point, over every timestamp of every given clip.
double attention_gaze_mass(Backbone<float>& model, const std::vector<Clip>& clips, double radius,
                           int batch_size = 32);

/// Every `stride`-th window of each trial, materialized.
std::vector<Clip> sample_clips(const std::vector<PreparedTrial>& trials, int stride);

}  // namespace gazeattn
