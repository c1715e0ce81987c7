#pragma once

#include <span>
#include <vector>

#include "gazeattn/dataset.hpp"
#include "gazeattn/tensor.hpp"

namespace gazeattn {

struct HeatmapConfig {
  double sigma = 1.5;               // in attention-grid cells
  bool skip_out_of_frame = false;   // default clamps out-of-frame gaze to the border
};

/// Mirrors a horizontal gaze coordinate: x -> W - 1 - x.
inline double flip_gaze(double x, int frame_width) { return double(frame_width) - 1.0 - x; }

/// Continuous grid coordinate of a frame-scale coordinate, clamped to [0, cells-1].
/// Pixel centers map onto cell centers, so mirroring commutes with the mapping.
double frame_to_grid(double coord, int frame_extent, int cells);

/// Normalized Gaussian (h x w, sums to 1) centered on the gaze point.
Tensor<double> gaze_to_heatmap(GazePoint gaze, int frame_width, int frame_height, int target_width,
                               int target_height, double sigma);

/// Timestamp of the clip that supervises attention slice k when the clip of
/// length `clip_length` is pooled to `map_length` slices.
int heatmap_source_frame(int k, int clip_length, int map_length);

struct GazeHeatmap {
  Tensor<double> values;     // T' x h x w
  std::vector<bool> valid;   // false where supervision was skipped
  double sigma = 0.0;
};

/// Stacks one heatmap per attention timestamp, sampling gaze at stride centers.
GazeHeatmap heatmap_volume(std::span<const GazePoint> clip_gaze, int frame_width, int frame_height, int map_length,
                           int map_height, int map_width, const HeatmapConfig& config = {});

/// Fraction of a non-negative map's mass within `radius` cells of (cx, cy).
double disk_mass(std::span<const double> map, int height, int width, double cx, double cy, double radius);

}  // namespace gazeattn
