#include "gazeattn/gaze.hpp"

#include <algorithm>
#include <cmath>

#include "gazeattn/error.hpp"

namespace gazeattn {

double frame_to_grid(double coord, int frame_extent, int cells) {
  const double clamped = std::clamp(coord, 0.0, double(frame_extent - 1));
  const double g = (clamped + 0.5) * double(cells) / double(frame_extent) - 0.5;
  return std::clamp(g, 0.0, double(cells - 1));
}

Tensor<double> gaze_to_heatmap(GazePoint gaze, int frame_width, int frame_height, int target_width,
                               int target_height, double sigma) {
  if (!(sigma > 0.0)) throw ConfigError("heatmap sigma must be positive");
  if (frame_width < 1 || frame_height < 1 || target_width < 1 || target_height < 1) {
    throw ConfigError("heatmap dimensions must be positive");
  }
  const double gx = frame_to_grid(gaze.x, frame_width, target_width);
  const double gy = frame_to_grid(gaze.y, frame_height, target_height);
  Tensor<double> map({target_height, target_width});
  const double denom = 2.0 * sigma * sigma;
  double total = 0.0;
  for (int i = 0; i < target_height; ++i)
    for (int j = 0; j < target_width; ++j) {
      const double d2 = (i - gy) * (i - gy) + (j - gx) * (j - gx);
      const double v = std::exp(-d2 / denom);
      map[std::size_t(i) * target_width + j] = v;
      total += v;
    }
  // The cell nearest the center always carries exp(-d2/denom) with d2 <= 0.5, so total > 0.
  for (auto& v : map.values()) v /= total;
  return map;
}

int heatmap_source_frame(int k, int clip_length, int map_length) {
  if (map_length < 1 || clip_length < map_length || clip_length % map_length != 0) {
    throw ValidationError("attention length " + std::to_string(map_length) + " does not evenly pool clip length " +
                          std::to_string(clip_length));
  }
  const int stride = clip_length / map_length;
  if (stride == 1) return k;
  return k * stride + stride / 2;
}

GazeHeatmap heatmap_volume(std::span<const GazePoint> clip_gaze, int frame_width, int frame_height, int map_length,
                           int map_height, int map_width, const HeatmapConfig& config) {
  const int clip_length = int(clip_gaze.size());
  GazeHeatmap out;
  out.sigma = config.sigma;
  out.values = Tensor<double>({map_length, map_height, map_width});
  out.valid.assign(std::size_t(map_length), true);
  const std::size_t plane = std::size_t(map_height) * map_width;
  for (int k = 0; k < map_length; ++k) {
    const GazePoint g = clip_gaze[std::size_t(heatmap_source_frame(k, clip_length, map_length))];
    const bool outside = g.x < 0.0 || g.y < 0.0 || g.x > frame_width - 1 || g.y > frame_height - 1;
    if (outside && config.skip_out_of_frame) {
      out.valid[k] = false;
      continue;
    }
    const auto map = gaze_to_heatmap(g, frame_width, frame_height, map_width, map_height, config.sigma);
    std::copy(map.data(), map.data() + plane, out.values.data() + k * plane);
  }
  return out;
}

double disk_mass(std::span<const double> map, int height, int width, double cx, double cy, double radius) {
  if (map.size() != std::size_t(height) * width) throw ShapeError("disk_mass: map size mismatch");
  double inside = 0.0, total = 0.0;
  for (int i = 0; i < height; ++i)
    for (int j = 0; j < width; ++j) {
      const double v = map[std::size_t(i) * width + j];
      total += v;
      if ((i - cy) * (i - cy) + (j - cx) * (j - cx) <= radius * radius) inside += v;
    }
  return total > 0.0 ? inside / total : 0.0;
}

}  // namespace gazeattn
