#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "gazeattn/backbone.hpp"
#include "gazeattn/checkpoint.hpp"
#include "gazeattn/dataset.hpp"
#include "gazeattn/gaze.hpp"

namespace gazeattn {

struct TrainConfig {
  int batch_size = 12;
  double momentum = 0.9;
  double weight_decay = 7e-7;
  double lr0 = 0.1;
  double lr_decay_factor = 0.1;
  int lr_decay_at_iter = 1000;
  int lr_step_every = 0;  // > 0 decays every this many iterations instead of once
  int total_iters = 10000;
  double lambda_attn = 1.0;
  double flip_prob = 0.5;
  std::uint64_t seed = 0;
  int checkpoint_every = 0;  // 0 writes only the final checkpoint
  double grad_clip = 0.0;    // global L2 norm bound; 0 disables
  HeatmapConfig heatmap{};

  void validate() const;
};

double lr_at(long iter, const TrainConfig& config);

/// g' = grad + wd * param; buf = momentum * buf + g'; param -= lr * buf.
/// Throws NumericError naming the parameter if any gradient is non-finite.
template <typename T>
void sgd_step(const std::vector<Param<T>*>& params, SgdState<T>& state, T lr, T momentum, T weight_decay);

/// Scales all gradients so their global L2 norm is at most `max_norm`. Returns the norm before scaling.
template <typename T>
double clip_grad_norm(const std::vector<Param<T>*>& params, double max_norm);

/// Softmax cross-entropy of one logit row; writes d/dlogits into `grad` when non-empty.
template <typename T>
T cross_entropy(std::span<const T> logits, int label, std::span<T> grad = {});

/// cross_entropy(logits, label) + lambda * attention_loss(A, G) for one sample.
template <typename T>
T total_loss(std::span<const T> logits, Gesture label, const Tensor<T>& attention, const Tensor<T>& gaze_map,
             T lambda);

struct LossBreakdown {
  double ce = 0.0;
  double attn = 0.0;
  double total = 0.0;
};

/// Batch mean of the composite loss and its gradients w.r.t. logits and attention.
template <typename T>
LossBreakdown batch_loss(const Tensor<T>& logits, const std::vector<int>& labels, const Tensor<T>& attention,
                         const Tensor<T>& gaze_maps, const std::vector<bool>& valid, T lambda, Tensor<T>* dlogits,
                         Tensor<T>* dattention);

/// Mirrors every frame left-right and maps gaze x through flip_gaze.
void flip_clip(Clip& clip);
/// Flips with probability flip_prob; returns whether it flipped.
bool augment(Clip& clip, std::mt19937_64& rng, double flip_prob);

/// A trial resampled to the working frame rate with its windows and frames.
struct PreparedTrial {
  Trial trial;
  GestureTimeline timeline;
  GazeTrack gaze;
  std::vector<int> frame_map;  // working-rate index -> stored frame index
  std::vector<ClipWindow> windows;
  FrameStore frames;
};

PreparedTrial prepare_trial(const DatasetInfo& data, std::size_t index, int dst_fps, int window_length);
std::vector<PreparedTrial> prepare_trials(const DatasetInfo& data, const std::vector<std::size_t>& indices,
                                          int dst_fps, int window_length);

/// Gaze heatmaps for a batch of clips at the model's attention resolution.
Tensor<float> batch_heatmaps(const std::vector<Clip>& clips, const BackboneConfig& model, const HeatmapConfig& cfg,
                             std::vector<bool>& valid);

struct TrainLogRow {
  long iter = 0;
  double lr = 0.0;
  double ce_loss = 0.0;
  double attn_loss = 0.0;
  double total = 0.0;
};

std::string log_row_json(const TrainLogRow& row);

struct TrainOutputs {
  std::filesystem::path dir;     // empty: keep everything in memory
  std::string config_text;       // embedded into every checkpoint
  std::ostream* progress = nullptr;
  int progress_every = 50;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<TrainLogRow> log;
};

/// Iteration-driven SGD over uniformly shuffled windows (reshuffled on
/// exhaustion). Deterministic for a fixed seed. Writes train_log.jsonl and
/// checkpoint.bin into outputs.dir; on a non-finite loss the last good state is
/// persisted and NumericError is thrown.
TrainResult train(const std::vector<PreparedTrial>& split, const TrainConfig& config,
                  const BackboneConfig& model_config, const TrainOutputs& outputs);

}  // namespace gazeattn
