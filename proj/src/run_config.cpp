#include "gazeattn/run_config.hpp"

#include <charconv>
#include <type_traits>
#include <sstream>

#include "gazeattn/error.hpp"

namespace gazeattn {

namespace {

template <typename T>
T parse_number(std::string_view key, std::string_view v) {
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size())
    throw ConfigError("config key '" + std::string(key) + "': cannot parse '" + std::string(v) + "'");
  return out;
}

bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config key '" + std::string(key) + "': expected true/false, got '" + std::string(v) + "'");
}

std::string fmt(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string fmt_triple(const Triple& t) {
  return std::to_string(t[0]) + "," + std::to_string(t[1]) + "," + std::to_string(t[2]);
}

std::vector<int> parse_int_list(std::string_view key, std::string_view v) {
  std::vector<int> out;
  std::size_t pos = 0;
  while (pos <= v.size()) {
    const std::size_t comma = std::min(v.find(',', pos), v.size());
    out.push_back(parse_number<int>(key, v.substr(pos, comma - pos)));
    pos = comma + 1;
  }
  return out;
}

Triple parse_triple(std::string_view key, std::string_view v) {
  const auto xs = parse_int_list(key, v);
  if (xs.size() != 3) throw ConfigError("config key '" + std::string(key) + "' needs three comma-separated integers");
  return {xs[0], xs[1], xs[2]};
}

template <typename Field>
ConfigKey int_key(std::string name, std::string help, Field field) {
  return {name, std::move(help), [field](const RunConfig& c) { return std::to_string(field(const_cast<RunConfig&>(c))); },
          [field, name](RunConfig& c, std::string_view v) {
            field(c) = parse_number<std::remove_reference_t<decltype(field(c))>>(name, v);
          }};
}

template <typename Field>
ConfigKey double_key(std::string name, std::string help, Field field) {
  return {name, std::move(help), [field](const RunConfig& c) { return fmt(field(const_cast<RunConfig&>(c))); },
          [field, name](RunConfig& c, std::string_view v) { field(c) = parse_number<double>(name, v); }};
}

std::vector<ConfigKey> build_keys() {
  std::vector<ConfigKey> k;
  k.push_back({"data_dir", "dataset root", [](const RunConfig& c) { return c.data_dir; },
               [](RunConfig& c, std::string_view v) { c.data_dir = v; }});
  k.push_back({"out_dir", "output directory", [](const RunConfig& c) { return c.out_dir; },
               [](RunConfig& c, std::string_view v) { c.out_dir = v; }});
  k.push_back({"fold", "fold index, test user id, or 'all'", [](const RunConfig& c) { return c.fold; },
               [](RunConfig& c, std::string_view v) { c.fold = v; }});
  k.push_back({"fold_mode", "strict (exactly 8 users) or relaxed",
               [](const RunConfig& c) { return std::string(c.fold_mode == FoldMode::Strict ? "strict" : "relaxed"); },
               [](RunConfig& c, std::string_view v) {
                 if (v == "strict") c.fold_mode = FoldMode::Strict;
                 else if (v == "relaxed") c.fold_mode = FoldMode::Relaxed;
                 else throw ConfigError("fold_mode must be strict or relaxed");
               }});
  k.push_back(int_key("dst_fps", "working frame rate", [](RunConfig& c) -> int& { return c.dst_fps; }));
  k.push_back(int_key("eval_batch", "clips per evaluation batch", [](RunConfig& c) -> int& { return c.eval_batch; }));

  k.push_back(int_key("batch_size", "clips per SGD step", [](RunConfig& c) -> int& { return c.train.batch_size; }));
  k.push_back(double_key("momentum", "SGD momentum", [](RunConfig& c) -> double& { return c.train.momentum; }));
  k.push_back(double_key("weight_decay", "L2 weight decay", [](RunConfig& c) -> double& { return c.train.weight_decay; }));
  k.push_back(double_key("lr0", "initial learning rate", [](RunConfig& c) -> double& { return c.train.lr0; }));
  k.push_back(double_key("lr_decay_factor", "learning-rate decay factor",
                         [](RunConfig& c) -> double& { return c.train.lr_decay_factor; }));
  k.push_back(int_key("lr_decay_at_iter", "iteration of the (first) decay",
                      [](RunConfig& c) -> int& { return c.train.lr_decay_at_iter; }));
  k.push_back(int_key("lr_step_every", "repeat the decay every N iterations (0: once)",
                      [](RunConfig& c) -> int& { return c.train.lr_step_every; }));
  k.push_back(int_key("total_iters", "training iterations", [](RunConfig& c) -> int& { return c.train.total_iters; }));
  k.push_back(double_key("lambda_attn", "attention-loss weight", [](RunConfig& c) -> double& { return c.train.lambda_attn; }));
  k.push_back(double_key("flip_prob", "horizontal flip probability", [](RunConfig& c) -> double& { return c.train.flip_prob; }));
  k.push_back(int_key("seed", "training seed", [](RunConfig& c) -> std::uint64_t& { return c.train.seed; }));
  k.push_back(int_key("checkpoint_every", "checkpoint cadence in iterations (0: end only)",
                      [](RunConfig& c) -> int& { return c.train.checkpoint_every; }));
  k.push_back(double_key("grad_clip", "global gradient-norm bound (0: off)",
                         [](RunConfig& c) -> double& { return c.train.grad_clip; }));
  k.push_back(double_key("heatmap_sigma", "gaze Gaussian sigma in attention cells",
                         [](RunConfig& c) -> double& { return c.train.heatmap.sigma; }));
  k.push_back({"heatmap_skip_out_of_frame", "drop supervision for out-of-frame gaze instead of clamping",
               [](const RunConfig& c) { return std::string(c.train.heatmap.skip_out_of_frame ? "true" : "false"); },
               [](RunConfig& c, std::string_view v) {
                 c.train.heatmap.skip_out_of_frame = parse_bool("heatmap_skip_out_of_frame", v);
               }});

  k.push_back(int_key("frames", "clip length T", [](RunConfig& c) -> int& { return c.model.frames; }));
  k.push_back(int_key("height", "frame height", [](RunConfig& c) -> int& { return c.model.height; }));
  k.push_back(int_key("width", "frame width", [](RunConfig& c) -> int& { return c.model.width; }));
  k.push_back(int_key("num_classes", "number of gesture classes", [](RunConfig& c) -> int& { return c.model.num_classes; }));
  k.push_back(int_key("stem_channels", "stem output channels", [](RunConfig& c) -> int& { return c.model.stem_channels; }));
  k.push_back({"stem_kernel", "stem kernel t,h,w", [](const RunConfig& c) { return fmt_triple(c.model.stem_kernel); },
               [](RunConfig& c, std::string_view v) { c.model.stem_kernel = parse_triple("stem_kernel", v); }});
  k.push_back({"stem_stride", "stem stride t,h,w", [](const RunConfig& c) { return fmt_triple(c.model.stem_stride); },
               [](RunConfig& c, std::string_view v) { c.model.stem_stride = parse_triple("stem_stride", v); }});
  k.push_back({"stage_channels", "comma-separated channels per stage",
               [](const RunConfig& c) {
                 std::string s;
                 for (const auto& st : c.model.stages) s += (s.empty() ? "" : ",") + std::to_string(st.channels);
                 return s;
               },
               [](RunConfig& c, std::string_view v) {
                 const auto xs = parse_int_list("stage_channels", v);
                 c.model.stages.resize(xs.size());
                 for (std::size_t i = 0; i < xs.size(); ++i) c.model.stages[i].channels = xs[i];
               }});
  k.push_back({"stage_spatial_strides", "comma-separated spatial stride per stage",
               [](const RunConfig& c) {
                 std::string s;
                 for (const auto& st : c.model.stages) s += (s.empty() ? "" : ",") + std::to_string(st.stride[1]);
                 return s;
               },
               [](RunConfig& c, std::string_view v) {
                 const auto xs = parse_int_list("stage_spatial_strides", v);
                 c.model.stages.resize(xs.size());
                 for (std::size_t i = 0; i < xs.size(); ++i) c.model.stages[i].stride = {1, xs[i], xs[i]};
               }});
  k.push_back(int_key("attention_stage", "stage (1-based) followed by the attention module",
                      [](RunConfig& c) -> int& { return c.model.attention_stage; }));
  k.push_back({"attention_scope", "minmax scope: volume or per_timestamp",
               [](const RunConfig& c) {
                 return std::string(c.model.attention_scope == ScaleScope::Volume ? "volume" : "per_timestamp");
               },
               [](RunConfig& c, std::string_view v) {
                 if (v == "volume") c.model.attention_scope = ScaleScope::Volume;
                 else if (v == "per_timestamp") c.model.attention_scope = ScaleScope::PerTimestamp;
                 else throw ConfigError("attention_scope must be volume or per_timestamp");
               }});
  k.push_back(double_key("dropout", "dropout rate before the classifier", [](RunConfig& c) -> double& { return c.model.dropout; }));
  return k;
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = build_keys();
  return keys;
}

void set_config_value(RunConfig& config, std::string_view key, std::string_view value) {
  for (const auto& k : config_keys())
    if (k.name == key) {
      k.set(config, value);
      config.explicit_keys.insert(k.name);
      return;
    }
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

std::string get_config_value(const RunConfig& config, std::string_view key) {
  for (const auto& k : config_keys())
    if (k.name == key) return k.get(config);
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

void apply_config_text(RunConfig& config, std::string_view text) {
  for (const auto& [key, value] : parse_key_values(text)) set_config_value(config, key, value);
}

std::string format_run_config(const RunConfig& config) {
  std::ostringstream out;
  for (const auto& k : config_keys()) out << k.name << " = " << k.get(config) << '\n';
  return out.str();
}

void RunConfig::resolve(const DatasetInfo& data) {
  auto fill = [&](const char* key, int& field, int actual) {
    if (actual <= 0) return;
    if (!explicit_keys.count(key)) field = actual;
    else if (field != actual)
      throw ConfigError(std::string(key) + " = " + std::to_string(field) + " disagrees with the dataset (" +
                        std::to_string(actual) + ")");
  };
  fill("height", model.height, data.height);
  fill("width", model.width, data.width);
  if (data.classes > 0 && !explicit_keys.count("num_classes")) model.num_classes = data.classes;
  validate();
}

void RunConfig::validate() const {
  if (dst_fps <= 0) throw ConfigError("dst_fps must be positive");
  if (eval_batch <= 0) throw ConfigError("eval_batch must be positive");
  train.validate();
  model.validate();
}

}  // namespace gazeattn
