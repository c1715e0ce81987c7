// gazeattn: synth / train / eval / heatmap front end.
//
// Exit codes: 0 ok, 2 usage, 3 validation (bad input data or config), 4 runtime (io, numeric).

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "gazeattn/backbone.hpp"
#include "gazeattn/checkpoint.hpp"
#include "gazeattn/dataset.hpp"
#include "gazeattn/error.hpp"
#include "gazeattn/evaluation.hpp"
#include "gazeattn/gaze.hpp"
#include "gazeattn/image.hpp"
#include "gazeattn/plot.hpp"
#include "gazeattn/run_config.hpp"
#include "gazeattn/synth.hpp"
#include "gazeattn/training.hpp"

namespace fs = std::filesystem;
using namespace gazeattn;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitValidation = 3;
constexpr int kExitRuntime = 4;

std::string flag_name(const std::string& key) {
  std::string s = key;
  std::replace(s.begin(), s.end(), '_', '-');
  return "--" + s;
}

/// Registers one string option per config key; values are applied after the config file.
struct ConfigFlags {
  std::string config_file;
  std::map<std::string, std::string> values;

  void attach(CLI::App* app, const std::vector<std::string>& skip = {}) {
    app->add_option("--config", config_file, "key = value file applied before flags")->check(CLI::ExistingFile);
    for (const auto& key : config_keys()) {
      if (std::find(skip.begin(), skip.end(), key.name) != skip.end()) continue;
      app->add_option(flag_name(key.name), values[key.name], key.help);
    }
  }

  RunConfig resolve(CLI::App* app) const {
    RunConfig cfg;
    if (!config_file.empty()) apply_config_text(cfg, read_text_file(config_file));
    for (const auto& [key, value] : values)
      if (app->count(flag_name(key)) > 0) set_config_value(cfg, key, value);
    return cfg;
  }
};

std::vector<Fold> select_folds(const RunConfig& cfg, const DatasetInfo& data) {
  auto folds = louo_folds(data.trials, cfg.fold_mode);
  if (cfg.fold == "all") return folds;
  for (const auto& f : folds)
    if (f.test_user == cfg.fold) return {f};
  int index = -1;
  try {
    std::size_t used = 0;
    index = std::stoi(cfg.fold, &used);
    if (used != cfg.fold.size()) index = -1;
  } catch (const std::exception&) {
  }
  if (index < 0 || index >= int(folds.size()))
    throw ConfigError("fold '" + cfg.fold + "' is neither 'all', a user id, nor an index below " +
                      std::to_string(folds.size()));
  return {folds[std::size_t(index)]};
}

// ------------------------------------------------------------------- synth

int cmd_synth(const SynthConfig& sc, const std::string& out) {
  const SynthSummary s = synth_generate(sc, out);
  std::cout << "dataset: " << out << "\n"
            << "trials: " << s.trials << "\n"
            << "frames: " << s.frames << "\n"
            << "class histogram (labeled frames):\n";
  for (std::size_t k = 0; k < s.class_frames.size(); ++k)
    std::cout << "  " << gesture_name(gesture_from_index(int(k))) << " " << s.class_frames[k] << "\n";
  return 0;
}

// ------------------------------------------------------------------- train

int cmd_train(RunConfig cfg) {
  if (cfg.data_dir.empty()) throw ConfigError("train needs --data-dir (or --data)");
  if (cfg.out_dir.empty()) throw ConfigError("train needs --out-dir (or --out)");
  const DatasetInfo data = load_dataset(cfg.data_dir);
  cfg.resolve(data);
  const auto folds = select_folds(cfg, data);

  fs::create_directories(cfg.out_dir);
  write_text_file(fs::path(cfg.out_dir) / "run_config.txt", format_run_config(cfg));

  for (const auto& fold : folds) {
    RunConfig fold_cfg = cfg;
    fold_cfg.fold = fold.test_user;
    const fs::path dir = fs::path(cfg.out_dir) / ("fold_" + fold.test_user);
    fs::create_directories(dir);
    const std::string text = format_run_config(fold_cfg);
    write_text_file(dir / "run_config.txt", text);

    std::cerr << "fold " << fold.test_user << ": " << fold.train.size() << " train trials, " << fold.test.size()
              << " test trials\n";
    const auto split = prepare_trials(data, fold.train, cfg.dst_fps, cfg.model.frames);
    TrainOutputs outputs{dir, text, &std::cerr, 50};
    train(split, cfg.train, cfg.model, outputs);
    std::cerr << "fold " << fold.test_user << ": wrote " << (dir / "checkpoint.bin").string() << "\n";
  }
  return 0;
}

// -------------------------------------------------------------------- eval

void plot_attention(Backbone<float>& model, const PreparedTrial& trial, const HeatmapConfig& hm_cfg,
                    const fs::path& dir, int panels) {
  const auto [mt, mh, mw] = model.config().attention_dims();
  const int n = int(trial.windows.size());
  for (int p = 0; p < panels && n > 0; ++p) {
    const auto& window = trial.windows[std::size_t((long(n) * (2 * p + 1)) / (2 * panels))];
    const Clip clip = extract_clip(trial.frames, window);
    const auto out = model.forward(pack_clips({clip}), Mode::Eval);
    const auto hm = heatmap_volume(clip.gaze, clip.frames.dim(2), clip.frames.dim(1), mt, mh, mw, hm_cfg);
    const int h = clip.frames.dim(1), w = clip.frames.dim(2);
    const std::size_t plane = std::size_t(mh) * mw, frame = std::size_t(h) * w * 3;
    std::vector<Image> tiles;
    for (int row = 0; row < 2; ++row)
      for (int k = 0; k < mt; ++k) {
        const int src = heatmap_source_frame(k, clip.frames.dim(0), mt);
        std::vector<double> map(plane);
        for (std::size_t i = 0; i < plane; ++i)
          map[i] = row == 0 ? double(out.attention[std::size_t(k) * plane + i]) : hm.values[std::size_t(k) * plane + i];
        tiles.push_back(render_overlay({clip.frames.data() + std::size_t(src) * frame, frame}, h, w, map, mh, mw,
                                       clip.gaze[std::size_t(src)]));
      }
    Image panel = tile_images(tiles, mt);
    // Caption strip: attention row on top, gaze row below.
    Image framed(panel.width, panel.height + 12, 255);
    draw_text(framed, 2, 2, trial.trial.trial_id + " FRAME " + std::to_string(window.end_frame_index) +
                                " TOP:ATTENTION BOTTOM:GAZE",
              {0, 0, 0});
    for (int y = 0; y < panel.height; ++y) std::copy_n(panel.pixel(0, y), panel.width * 3, framed.pixel(0, y + 12));
    write_png(dir / (trial.trial.trial_id + "_attn_" + std::to_string(p) + ".png"), framed);
  }
}

std::vector<fs::path> find_checkpoints(const std::vector<std::string>& explicit_paths, const std::string& run_dir) {
  std::vector<fs::path> out(explicit_paths.begin(), explicit_paths.end());
  if (!run_dir.empty()) {
    if (!fs::is_directory(run_dir)) throw IoError("run directory not found: " + run_dir);
    for (const auto& entry : fs::directory_iterator(run_dir))
      if (entry.is_directory() && fs::exists(entry.path() / "checkpoint.bin"))
        out.push_back(entry.path() / "checkpoint.bin");
    std::sort(out.begin(), out.end());
  }
  if (out.empty()) throw ConfigError("eval needs --checkpoint or --run");
  return out;
}

struct EvalOptions {
  std::vector<std::string> checkpoints;
  std::string run_dir;
  std::string data_dir;
  std::string out_dir;
  std::string split = "test";
  bool plot_timeline = false;
  bool plot_attn = false;
  int attn_panels = 3;
};

int cmd_eval(const EvalOptions& opt) {
  if (opt.out_dir.empty()) throw ConfigError("eval needs --out");
  fs::create_directories(opt.out_dir);
  std::vector<FoldResult> folds;
  std::optional<DatasetInfo> data;
  for (const auto& path : find_checkpoints(opt.checkpoints, opt.run_dir)) {
    const Checkpoint ckpt = load_checkpoint(path);
    RunConfig cfg;
    apply_config_text(cfg, ckpt.get_text("meta/config"));
    if (!opt.data_dir.empty()) cfg.data_dir = opt.data_dir;
    if (!data || data->root != fs::path(cfg.data_dir)) data = load_dataset(cfg.data_dir);
    Backbone<float> model(cfg.model);
    restore_checkpoint<float>(ckpt, model, nullptr);

    const auto fold = select_folds(cfg, *data).front();
    std::vector<std::size_t> indices = opt.split == "train" ? fold.train : fold.test;
    if (opt.split == "all") indices.insert(indices.end(), fold.train.begin(), fold.train.end());
    const auto trials = prepare_trials(*data, indices, cfg.dst_fps, cfg.model.frames);
    std::cerr << "evaluating " << path.string() << " on " << trials.size() << " " << opt.split << " trials\n";
    FoldResult result = evaluate_fold(model_classifier(model), trials, fold.test_user, cfg.eval_batch);

    const fs::path timelines = fs::path(opt.out_dir) / "timelines";
    const fs::path plots = fs::path(opt.out_dir) / "plots";
    fs::create_directories(timelines);
    if (opt.plot_timeline || opt.plot_attn) fs::create_directories(plots);
    for (const auto& t : result.trials) {
      write_text_file(timelines / (t.trial_id + ".csv"), timeline_csv(t));
      if (opt.plot_timeline) {
        char title[160];
        std::snprintf(title, sizeof title, "%s  ACC %.1f  F1 %.1f  EDIT %.1f", t.trial_id.c_str(), t.accuracy, t.f1,
                      t.edit);
        write_png(plots / (t.trial_id + "_timeline.png"), render_timeline(title, t.gt, t.pred, cfg.model.num_classes));
      }
    }
    if (opt.plot_attn)
      for (const auto& t : trials) plot_attention(model, t, cfg.train.heatmap, plots, opt.attn_panels);
    std::cerr << "fold " << result.test_user << ": accuracy " << result.accuracy << ", F1 " << result.f1
              << ", edit " << result.edit << "\n";
    folds.push_back(std::move(result));
  }
  const auto json = results_json(folds);
  write_text_file(fs::path(opt.out_dir) / "results.json", json.dump(2) + "\n");
  std::cout << json["aggregate"].dump(2) << "\n";
  return 0;
}

// ----------------------------------------------------------------- heatmap

int cmd_heatmap(const std::string& data_dir, const std::string& trial_id, const std::string& out, int windows,
                const RunConfig& cfg) {
  DatasetInfo data = load_dataset(data_dir);
  RunConfig resolved = cfg;
  resolved.resolve(data);
  std::size_t index = data.trials.size();
  for (std::size_t i = 0; i < data.trials.size(); ++i)
    if (data.trials[i].trial_id == trial_id) index = i;
  if (index == data.trials.size()) throw ValidationError("no trial '" + trial_id + "' in " + data_dir);
  const auto trial = prepare_trial(data, index, resolved.dst_fps, resolved.model.frames);
  const auto [mt, mh, mw] = resolved.model.attention_dims();
  fs::create_directories(out);
  const int n = int(trial.windows.size());
  for (int p = 0; p < windows && n > 0; ++p) {
    const auto& window = trial.windows[std::size_t((long(n) * (2 * p + 1)) / (2 * windows))];
    const Clip clip = extract_clip(trial.frames, window);
    const int h = clip.frames.dim(1), w = clip.frames.dim(2);
    const auto hm = heatmap_volume(clip.gaze, w, h, mt, mh, mw, resolved.train.heatmap);
    const std::size_t plane = std::size_t(mh) * mw, frame = std::size_t(h) * w * 3;
    std::vector<Image> tiles;
    for (int k = 0; k < mt; ++k) {
      const int src = heatmap_source_frame(k, clip.frames.dim(0), mt);
      tiles.push_back(render_overlay({clip.frames.data() + std::size_t(src) * frame, frame}, h, w,
                                     {hm.values.data() + std::size_t(k) * plane, plane}, mh, mw,
                                     clip.gaze[std::size_t(src)]));
    }
    write_png(fs::path(out) / (trial_id + "_gaze_" + std::to_string(p) + ".png"), tile_images(tiles, mt));
  }
  std::cout << "wrote " << windows << " heatmap strips to " << out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gaze-guided spatio-temporal attention for gesture recognition"};
  app.require_subcommand(1);

  SynthConfig sc;
  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "generate the synthetic surrogate dataset");
  synth->add_option("--seed", sc.seed, "generator seed");
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--users", sc.num_users, "number of users");
  synth->add_option("--trials", sc.trials_per_user, "trials per user");
  synth->add_option("--classes", sc.classes, "gesture classes (1-10)");
  synth->add_option("--height", sc.height, "frame height");
  synth->add_option("--width", sc.width, "frame width");
  synth->add_option("--segments", sc.segments_per_trial, "segments per trial");
  synth->add_option("--gaze-noise", sc.gaze_noise, "gaze noise std in pixels");

  ConfigFlags train_flags;
  std::string data_alias, out_alias;
  std::optional<int> iters;
  bool no_attention = false;
  auto* train_cmd = app.add_subcommand("train", "train one LOUO fold (or all folds)");
  train_flags.attach(train_cmd);
  train_cmd->add_option("--data", data_alias, "alias of --data-dir");
  train_cmd->add_option("--out", out_alias, "alias of --out-dir");
  train_cmd->add_option("--iters", iters, "alias of --total-iters");
  train_cmd->add_flag("--no-attention", no_attention, "ablation: attention-loss weight 0");

  EvalOptions eval_opt;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate checkpoints and write metrics and plots");
  eval_cmd->add_option("--checkpoint", eval_opt.checkpoints, "checkpoint file (repeatable)");
  eval_cmd->add_option("--run", eval_opt.run_dir, "training output directory with fold_* checkpoints");
  eval_cmd->add_option("--data", eval_opt.data_dir, "override the dataset root stored in the checkpoint");
  eval_cmd->add_option("--out", eval_opt.out_dir, "output directory")->required();
  eval_cmd->add_option("--split", eval_opt.split, "trials to score")->check(CLI::IsMember({"test", "train", "all"}));
  eval_cmd->add_flag("--plot-timeline", eval_opt.plot_timeline, "per-trial gt/prediction ribbon PNGs");
  eval_cmd->add_flag("--plot-attn", eval_opt.plot_attn, "attention and gaze overlay PNGs");
  eval_cmd->add_option("--attn-panels", eval_opt.attn_panels, "overlay panels per trial");

  ConfigFlags hm_flags;
  std::string hm_data, hm_trial, hm_out;
  int hm_windows = 3;
  auto* hm_cmd = app.add_subcommand("heatmap", "render gaze supervision heatmaps for one trial");
  hm_cmd->add_option("--data", hm_data, "dataset root")->required();
  hm_cmd->add_option("--trial", hm_trial, "trial id")->required();
  hm_cmd->add_option("--out", hm_out, "output directory")->required();
  hm_cmd->add_option("--windows", hm_windows, "number of windows");
  hm_flags.attach(hm_cmd, {"data_dir", "out_dir"});

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*synth) return cmd_synth(sc, synth_out);
    if (*train_cmd) {
      RunConfig cfg = train_flags.resolve(train_cmd);
      if (!data_alias.empty()) set_config_value(cfg, "data_dir", data_alias);
      if (!out_alias.empty()) set_config_value(cfg, "out_dir", out_alias);
      if (iters) set_config_value(cfg, "total_iters", std::to_string(*iters));
      if (no_attention) set_config_value(cfg, "lambda_attn", "0");
      return cmd_train(cfg);
    }
    if (*eval_cmd) return cmd_eval(eval_opt);
    if (*hm_cmd) return cmd_heatmap(hm_data, hm_trial, hm_out, hm_windows, hm_flags.resolve(hm_cmd));
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    switch (e.kind()) {
      case ErrorKind::Io:
      case ErrorKind::Numeric: return kExitRuntime;
      default: return kExitValidation;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}
