#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string_view>

#include "gazeattn/dataset.hpp"
#include "gazeattn/image.hpp"

namespace gazeattn {

/// Fixed gesture -> color table (G1..G11 follow the tab10 palette; Unlabeled is light gray).
std::array<std::uint8_t, 3> gesture_color(Gesture g);

/// 5x7 bitmap text; lowercase is drawn as uppercase, unknown glyphs as blanks.
void draw_text(Image& image, int x, int y, std::string_view text, std::array<std::uint8_t, 3> color, int scale = 1);
void fill_rect(Image& image, int x, int y, int w, int h, std::array<std::uint8_t, 3> color);

/// Ground-truth band above, prediction band below, legend underneath.
Image render_timeline(std::string_view title, const GestureTimeline& gt, const GestureTimeline& pred,
                      int num_classes);

/// Alpha-blends a non-negative map (map_h x map_w, nearest upsampling,
/// normalized to its max) over a frame given as H x W x 3 floats in [0,1],
/// marks the gaze point, and magnifies by `zoom`.
Image render_overlay(std::span<const float> frame, int height, int width, std::span<const double> map, int map_h,
                     int map_w, GazePoint gaze, int zoom = 3);

/// Places equally sized images side by side (row-major grid with `columns` columns).
Image tile_images(std::span<const Image> images, int columns, int gap = 2);

}  // namespace gazeattn
