#include "gazeattn/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>

#include <json.hpp>

#include "gazeattn/error.hpp"

namespace gazeattn {

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0,1)");
  if (weight_decay < 0.0) throw ConfigError("weight_decay must be non-negative");
  if (!(lr0 > 0.0)) throw ConfigError("lr0 must be positive");
  if (!(lr_decay_factor > 0.0)) throw ConfigError("lr_decay_factor must be positive");
  if (lr_decay_at_iter < 0 || lr_step_every < 0) throw ConfigError("learning-rate schedule steps must be >= 0");
  if (total_iters < 1) throw ConfigError("total_iters must be positive");
  if (lambda_attn < 0.0) throw ConfigError("lambda_attn must be non-negative");
  if (!(flip_prob >= 0.0 && flip_prob <= 1.0)) throw ConfigError("flip_prob must lie in [0,1]");
  if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be >= 0");
  if (grad_clip < 0.0) throw ConfigError("grad_clip must be >= 0");
  if (!(heatmap.sigma > 0.0)) throw ConfigError("heatmap sigma must be positive");
}

double lr_at(long iter, const TrainConfig& config) {
  if (config.lr_step_every > 0) {
    return config.lr0 * std::pow(config.lr_decay_factor, double(iter / config.lr_step_every));
  }
  return iter < config.lr_decay_at_iter ? config.lr0 : config.lr0 * config.lr_decay_factor;
}

template <typename T>
void sgd_step(const std::vector<Param<T>*>& params, SgdState<T>& state, T lr, T momentum, T weight_decay) {
  if (state.momentum.empty()) {
    for (auto* p : params) state.momentum.emplace_back(p->value.shape());
  }
  if (state.momentum.size() != params.size()) throw ShapeError("optimizer state does not match parameter list");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& g = params[i]->grad;
    require_shape(g.shape(), params[i]->value.shape(), params[i]->name + " grad");
    require_shape(state.momentum[i].shape(), params[i]->value.shape(), params[i]->name + " momentum");
    for (std::size_t j = 0; j < g.size(); ++j) {
      if (!std::isfinite(g[j])) {
        throw NumericError("non-finite gradient in " + params[i]->name + " at element " + std::to_string(j));
      }
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    T* w = params[i]->value.data();
    const T* g = params[i]->grad.data();
    T* buf = state.momentum[i].data();
    const std::size_t n = params[i]->value.size();
    for (std::size_t j = 0; j < n; ++j) {
      const T gj = g[j] + weight_decay * w[j];
      buf[j] = momentum * buf[j] + gj;
      w[j] -= lr * buf[j];
    }
  }
}

template <typename T>
double clip_grad_norm(const std::vector<Param<T>*>& params, double max_norm) {
  double sq = 0.0;
  for (auto* p : params)
    for (T g : p->grad.values()) sq += double(g) * double(g);
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const T scale = T(max_norm / norm);
    for (auto* p : params)
      for (T& g : p->grad.values()) g *= scale;
  }
  return norm;
}

template <typename T>
T cross_entropy(std::span<const T> logits, int label, std::span<T> grad) {
  if (label < 0 || label >= int(logits.size())) {
    throw ValidationError("label " + std::to_string(label) + " is not a valid class for " +
                          std::to_string(logits.size()) + " logits");
  }
  const T mx = *std::max_element(logits.begin(), logits.end());
  T sum{0};
  for (T v : logits) sum += std::exp(v - mx);
  const T log_z = mx + std::log(sum);
  if (!grad.empty()) {
    for (std::size_t k = 0; k < logits.size(); ++k) {
      grad[k] = std::exp(logits[k] - log_z) - (int(k) == label ? T{1} : T{0});
    }
  }
  return log_z - logits[std::size_t(label)];
}

template <typename T>
T total_loss(std::span<const T> logits, Gesture label, const Tensor<T>& attention, const Tensor<T>& gaze_map,
             T lambda) {
  if (label == Gesture::Unlabeled) throw ValidationError("unlabeled frames are not training targets");
  const T ce = cross_entropy<T>(logits, gesture_index(label));
  if (lambda == T{0}) return ce;
  return ce + lambda * attention_loss<T>(attention, gaze_map);
}

template <typename T>
LossBreakdown batch_loss(const Tensor<T>& logits, const std::vector<int>& labels, const Tensor<T>& attention,
                         const Tensor<T>& gaze_maps, const std::vector<bool>& valid, T lambda, Tensor<T>* dlogits,
                         Tensor<T>* dattention) {
  const int n = logits.dim(0), k = logits.dim(1);
  if (int(labels.size()) != n) throw ShapeError("label count does not match batch");
  LossBreakdown out;
  if (dlogits) dlogits->resize(logits.shape());
  for (int s = 0; s < n; ++s) {
    std::span<const T> row(logits.data() + std::size_t(s) * k, std::size_t(k));
    std::span<T> grow;
    if (dlogits) grow = std::span<T>(dlogits->data() + std::size_t(s) * k, std::size_t(k));
    out.ce += double(cross_entropy<T>(row, labels[s], grow));
  }
  out.ce /= n;
  if (dlogits)
    for (auto& g : dlogits->values()) g /= T(n);
  if (lambda > T{0}) {
    Tensor<T> grad;
    out.attn = double(attention_loss<T>(attention, gaze_maps, dattention ? &grad : nullptr, &valid));
    if (dattention) {
      for (auto& g : grad.values()) g *= lambda;
      *dattention = std::move(grad);
    }
  } else if (dattention) {
    dattention->resize(attention.shape());
  }
  out.total = out.ce + double(lambda) * out.attn;
  return out;
}

// --------------------------------------------------------- augmentation

void flip_clip(Clip& clip) {
  const Shape& s = clip.frames.shape();
  const int t = s.at(0), h = s.at(1), w = s.at(2);
  for (int f = 0; f < t; ++f)
    for (int y = 0; y < h; ++y) {
      float* row = clip.frames.data() + ((std::size_t(f) * h + y) * w) * 3;
      for (int x = 0; x < w / 2; ++x) {
        for (int c = 0; c < 3; ++c) std::swap(row[x * 3 + c], row[(w - 1 - x) * 3 + c]);
      }
    }
  for (auto& g : clip.gaze) g.x = flip_gaze(g.x, w);
}

bool augment(Clip& clip, std::mt19937_64& rng, double flip_prob) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const bool flip = u(rng) < flip_prob;
  if (flip) flip_clip(clip);
  return flip;
}

// ------------------------------------------------------------- data prep

PreparedTrial prepare_trial(const DatasetInfo& data, std::size_t index, int dst_fps, int window_length) {
  PreparedTrial p;
  p.trial = data.trials.at(index);
  const auto timeline = timeline_from_segments(p.trial.segments, p.trial.num_frames);
  auto sub = subsample_timeline(timeline, p.trial.gaze, p.trial.fps, dst_fps);
  p.timeline = std::move(sub.timeline);
  p.gaze = std::move(sub.gaze);
  p.frame_map = std::move(sub.source_frames);
  p.windows = make_windows(p.timeline, p.gaze, window_length, p.frame_map);
  p.frames = load_frames(data.root / p.trial.trial_id);
  if (p.frames.count < p.trial.num_frames) {
    throw ValidationError(p.trial.trial_id + ": " + std::to_string(p.frames.count) + " frames stored for " +
                          std::to_string(p.trial.num_frames) + " annotated");
  }
  return p;
}

std::vector<PreparedTrial> prepare_trials(const DatasetInfo& data, const std::vector<std::size_t>& indices,
                                          int dst_fps, int window_length) {
  std::vector<PreparedTrial> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(prepare_trial(data, i, dst_fps, window_length));
  return out;
}

Tensor<float> batch_heatmaps(const std::vector<Clip>& clips, const BackboneConfig& model, const HeatmapConfig& cfg,
                             std::vector<bool>& valid) {
  const auto [mt, mh, mw] = model.attention_dims();
  const std::size_t vol = std::size_t(mt) * mh * mw;
  Tensor<float> maps({int(clips.size()), mt, mh, mw});
  valid.clear();
  for (std::size_t n = 0; n < clips.size(); ++n) {
    const auto& s = clips[n].frames.shape();
    const auto hm = heatmap_volume(clips[n].gaze, s[2], s[1], mt, mh, mw, cfg);
    for (std::size_t i = 0; i < vol; ++i) maps[n * vol + i] = float(hm.values[i]);
    valid.insert(valid.end(), hm.valid.begin(), hm.valid.end());
  }
  return maps;
}

// ------------------------------------------------------------- the loop

std::string log_row_json(const TrainLogRow& row) {
  nlohmann::json j;
  j["iter"] = row.iter;
  j["lr"] = row.lr;
  j["ce_loss"] = row.ce_loss;
  j["attn_loss"] = row.attn_loss;
  j["total"] = row.total;
  return j.dump();
}

namespace {

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t id) {
  std::seed_seq seq{std::uint32_t(seed), std::uint32_t(seed >> 32), std::uint32_t(id)};
  return std::mt19937_64(seq);
}

struct WindowRef {
  std::size_t trial;
  std::size_t window;
};

}  // namespace

TrainResult train(const std::vector<PreparedTrial>& split, const TrainConfig& config,
                  const BackboneConfig& model_config, const TrainOutputs& outputs) {
  config.validate();
  model_config.validate();
  std::vector<WindowRef> pool;
  for (std::size_t t = 0; t < split.size(); ++t) {
    const auto& fr = split[t].frames;
    if (fr.width != model_config.width || fr.height != model_config.height) {
      throw ShapeError(split[t].trial.trial_id + " frames are " + std::to_string(fr.width) + "x" +
                       std::to_string(fr.height) + ", model expects " + std::to_string(model_config.width) + "x" +
                       std::to_string(model_config.height));
    }
    for (std::size_t w = 0; w < split[t].windows.size(); ++w) {
      const Gesture label = split[t].windows[w].label;
      if (gesture_index(label) >= model_config.num_classes) {
        throw ValidationError(split[t].trial.trial_id + " uses " + std::string(gesture_name(label)) +
                              " beyond the model's " + std::to_string(model_config.num_classes) + " classes");
      }
      if (int(split[t].windows[w].frames.size()) != model_config.frames) {
        throw ShapeError("window length does not match the model's clip length");
      }
      pool.push_back({t, w});
    }
  }
  if (pool.empty()) throw ValidationError("training split has no labeled windows");

  std::ofstream log_file;
  if (!outputs.dir.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(outputs.dir, ec);
    if (ec) throw IoError("cannot create " + outputs.dir.string() + ": " + ec.message());
    log_file.open(outputs.dir / "train_log.jsonl", std::ios::trunc);
    if (!log_file) throw IoError("cannot write training log in " + outputs.dir.string());
  }

  Backbone<float> model(model_config);
  model.init(config.seed);
  SgdState<float> state;
  auto sampler = stream(config.seed, 1);
  auto augment_rng = stream(config.seed, 2);
  auto dropout_rng = stream(config.seed, 3);

  std::vector<std::size_t> order(pool.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), sampler);
  std::size_t cursor = 0;

  TrainResult result;
  Checkpoint last_good = make_checkpoint(model, &state, 0, outputs.config_text);
  const auto params = model.params();

  for (long iter = 0; iter < config.total_iters; ++iter) {
    std::vector<Clip> clips;
    std::vector<int> labels;
    for (int b = 0; b < config.batch_size; ++b) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), sampler);
        cursor = 0;
      }
      const WindowRef ref = pool[order[cursor++]];
      Clip clip = extract_clip(split[ref.trial].frames, split[ref.trial].windows[ref.window]);
      augment(clip, augment_rng, config.flip_prob);
      labels.push_back(gesture_index(clip.label));
      clips.push_back(std::move(clip));
    }
    std::vector<bool> valid;
    const Tensor<float> maps = batch_heatmaps(clips, model_config, config.heatmap, valid);
    const Tensor<float> input = pack_clips(clips);

    const double lr = lr_at(iter, config);
    model.zero_grad();
    const auto fw = model.forward(input, Mode::Train, &dropout_rng);
    Tensor<float> dlogits, dattn;
    const LossBreakdown loss = batch_loss<float>(fw.logits, labels, fw.attention, maps, valid,
                                                 float(config.lambda_attn), &dlogits, &dattn);
    if (!std::isfinite(loss.total)) {
      if (!outputs.dir.empty()) save_checkpoint(outputs.dir / "checkpoint.bin", last_good);
      throw NumericError("non-finite loss at iteration " + std::to_string(iter) + " (ce=" +
                         std::to_string(loss.ce) + ", attn=" + std::to_string(loss.attn) +
                         "); last good checkpoint kept");
    }
    model.backward(dlogits, config.lambda_attn > 0.0 ? &dattn : nullptr);
    if (config.grad_clip > 0.0) clip_grad_norm(params, config.grad_clip);
    try {
      sgd_step<float>(params, state, float(lr), float(config.momentum), float(config.weight_decay));
    } catch (const NumericError&) {
      if (!outputs.dir.empty()) save_checkpoint(outputs.dir / "checkpoint.bin", last_good);
      throw;
    }

    TrainLogRow row{iter, lr, loss.ce, loss.attn, loss.total};
    result.log.push_back(row);
    if (log_file) log_file << log_row_json(row) << '\n';
    if (outputs.progress && (iter % std::max(1, outputs.progress_every) == 0 || iter + 1 == config.total_iters)) {
      *outputs.progress << "iter " << iter << " lr " << lr << " ce " << loss.ce << " attn " << loss.attn
                        << " total " << loss.total << std::endl;
    }

    const long done = iter + 1;
    const bool cadence = config.checkpoint_every > 0 && done % config.checkpoint_every == 0;
    if (cadence || done == config.total_iters) {
      last_good = make_checkpoint(model, &state, done, outputs.config_text);
      if (!outputs.dir.empty()) {
        if (cadence) save_checkpoint(outputs.dir / ("checkpoint_iter" + std::to_string(done) + ".bin"), last_good);
        save_checkpoint(outputs.dir / "checkpoint.bin", last_good);
      }
    }
  }
  result.checkpoint = std::move(last_good);
  return result;
}

#define GAZEATTN_TRAINING(T)                                                                                   \
  template void sgd_step<T>(const std::vector<Param<T>*>&, SgdState<T>&, T, T, T);                             \
  template double clip_grad_norm<T>(const std::vector<Param<T>*>&, double);                                    \
  template T cross_entropy<T>(std::span<const T>, int, std::span<T>);                                          \
  template T total_loss<T>(std::span<const T>, Gesture, const Tensor<T>&, const Tensor<T>&, T);                \
  template LossBreakdown batch_loss<T>(const Tensor<T>&, const std::vector<int>&, const Tensor<T>&,            \
                                       const Tensor<T>&, const std::vector<bool>&, T, Tensor<T>*, Tensor<T>*);

GAZEATTN_TRAINING(float)
GAZEATTN_TRAINING(double)

}  // namespace gazeattn
