#include "gazeattn/plot.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "gazeattn/error.hpp"

namespace gazeattn {

namespace {

using Color = std::array<std::uint8_t, 3>;

constexpr Color kWhite{255, 255, 255};
constexpr Color kBlack{0, 0, 0};

const std::uint8_t* glyph(char ch) {
  static const std::uint8_t digits[10][7] = {
      {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E}, {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E},
      {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F}, {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E},
      {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02}, {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E},
      {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E}, {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08},
      {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E}, {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C}};
  static const std::uint8_t letters[26][7] = {
      {0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}, {0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E},
      {0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E}, {0x1C, 0x12, 0x11, 0x11, 0x11, 0x12, 0x1C},
      {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F}, {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10},
      {0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F}, {0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11},
      {0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E}, {0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C},
      {0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11}, {0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F},
      {0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11}, {0x11, 0x11, 0x19, 0x15, 0x13, 0x11, 0x11},
      {0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}, {0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10},
      {0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D}, {0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11},
      {0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E}, {0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04},
      {0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}, {0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04},
      {0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0A}, {0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11},
      {0x11, 0x11, 0x11, 0x0A, 0x04, 0x04, 0x04}, {0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F}};
  static const std::uint8_t dash[7] = {0, 0, 0, 0x1F, 0, 0, 0};
  static const std::uint8_t dot[7] = {0, 0, 0, 0, 0, 0x0C, 0x0C};
  static const std::uint8_t colon[7] = {0, 0x0C, 0x0C, 0, 0x0C, 0x0C, 0};
  static const std::uint8_t underscore[7] = {0, 0, 0, 0, 0, 0, 0x1F};
  if (ch >= '0' && ch <= '9') return digits[ch - '0'];
  if (ch >= 'a' && ch <= 'z') ch = char(ch - 'a' + 'A');
  if (ch >= 'A' && ch <= 'Z') return letters[ch - 'A'];
  switch (ch) {
    case '-': return dash;
    case '.': return dot;
    case ':': return colon;
    case '_': return underscore;
    default: return nullptr;
  }
}

void put(Image& img, int x, int y, Color c) {
  if (x < 0 || y < 0 || x >= img.width || y >= img.height) return;
  std::copy(c.begin(), c.end(), img.pixel(x, y));
}

}  // namespace

Color gesture_color(Gesture g) {
  static constexpr Color table[kNumGestures] = {{31, 119, 180}, {255, 127, 14}, {44, 160, 44},  {214, 39, 40},
                                                {148, 103, 189}, {140, 86, 75}, {227, 119, 194}, {127, 127, 127},
                                                {188, 189, 34},  {23, 190, 207}};
  if (g == Gesture::Unlabeled) return {235, 235, 235};
  return table[gesture_index(g)];
}

void fill_rect(Image& image, int x, int y, int w, int h, Color color) {
  for (int yy = std::max(0, y); yy < std::min(image.height, y + h); ++yy)
    for (int xx = std::max(0, x); xx < std::min(image.width, x + w); ++xx) put(image, xx, yy, color);
}

void draw_text(Image& image, int x, int y, std::string_view text, Color color, int scale) {
  for (char ch : text) {
    if (const std::uint8_t* rows = glyph(ch)) {
      for (int r = 0; r < 7; ++r)
        for (int c = 0; c < 5; ++c)
          if (rows[r] & (0x10 >> c)) fill_rect(image, x + c * scale, y + r * scale, scale, scale, color);
    }
    x += 6 * scale;
  }
}

Image render_timeline(std::string_view title, const GestureTimeline& gt, const GestureTimeline& pred,
                      int num_classes) {
  if (gt.size() != pred.size()) throw ValidationError("timeline plot needs equal-length timelines");
  const int frames = std::max<int>(1, int(gt.size()));
  const int scale = std::max(1, 900 / frames);
  const int left = 40, band = 24, width = left + frames * scale + 10;
  const int legend_rows = (num_classes + 4) / 5;
  const int height = 16 + 2 * (band + 6) + 8 + legend_rows * 14 + 6;
  Image img(width, height, 255);
  draw_text(img, 4, 4, title, kBlack);
  const int y_gt = 16, y_pred = y_gt + band + 6;
  draw_text(img, 4, y_gt + band / 2 - 3, "GT", kBlack);
  draw_text(img, 4, y_pred + band / 2 - 3, "PRED", kBlack);
  for (int f = 0; f < int(gt.size()); ++f) {
    fill_rect(img, left + f * scale, y_gt, scale, band, gesture_color(gt[f]));
    fill_rect(img, left + f * scale, y_pred, scale, band, gesture_color(pred[f]));
  }
  const int y_legend = y_pred + band + 8;
  for (int k = 0; k < num_classes; ++k) {
    const Gesture g = gesture_from_index(k);
    const int x = left + (k % 5) * 60, y = y_legend + (k / 5) * 14;
    fill_rect(img, x, y, 10, 10, gesture_color(g));
    draw_text(img, x + 14, y + 2, gesture_name(g), kBlack);
  }
  return img;
}

Image render_overlay(std::span<const float> frame, int height, int width, std::span<const double> map, int map_h,
                     int map_w, GazePoint gaze, int zoom) {
  if (frame.size() != std::size_t(height) * width * 3) throw ShapeError("overlay frame size mismatch");
  if (map.size() != std::size_t(map_h) * map_w) throw ShapeError("overlay map size mismatch");
  const double peak = std::max(1e-12, *std::max_element(map.begin(), map.end()));
  Image img(width * zoom, height * zoom);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const int my = std::min(map_h - 1, y * map_h / height), mx = std::min(map_w - 1, x * map_w / width);
      const double a = 0.6 * map[std::size_t(my) * map_w + mx] / peak;
      const float* p = frame.data() + (std::size_t(y) * width + x) * 3;
      // Heat color ramps black -> red -> yellow with the map value.
      const double heat_r = std::min(1.0, 2.0 * a / 0.6), heat_g = std::max(0.0, 2.0 * a / 0.6 - 1.0);
      const Color c{std::uint8_t(std::lround(255.0 * ((1 - a) * p[0] + a * heat_r))),
                    std::uint8_t(std::lround(255.0 * ((1 - a) * p[1] + a * heat_g))),
                    std::uint8_t(std::lround(255.0 * ((1 - a) * p[2])))};
      fill_rect(img, x * zoom, y * zoom, zoom, zoom, c);
    }
  const int gx = int(std::lround(gaze.x * zoom + zoom / 2.0)), gy = int(std::lround(gaze.y * zoom + zoom / 2.0));
  // dark halo first so the cross stays visible over saturated heat
  for (int d = -2 * zoom - 1; d <= 2 * zoom + 1; ++d)
    for (int o = -1; o <= 1; ++o) {
      put(img, gx + d, gy + o, {0, 0, 0});
      put(img, gx + o, gy + d, {0, 0, 0});
    }
  for (int d = -2 * zoom; d <= 2 * zoom; ++d) {
    put(img, gx + d, gy, {0, 255, 255});
    put(img, gx, gy + d, {0, 255, 255});
  }
  return img;
}

Image tile_images(std::span<const Image> images, int columns, int gap) {
  if (images.empty()) return {};
  const int w = images[0].width, h = images[0].height;
  const int cols = std::max(1, std::min<int>(columns, int(images.size())));
  const int rows = (int(images.size()) + cols - 1) / cols;
  Image out(cols * w + (cols - 1) * gap, rows * h + (rows - 1) * gap, 255);
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i].width != w || images[i].height != h) throw ShapeError("tile_images needs equal-sized images");
    const int ox = int(i % cols) * (w + gap), oy = int(i / cols) * (h + gap);
    for (int y = 0; y < h; ++y) std::copy_n(images[i].pixel(0, y), w * 3, out.pixel(ox, oy + y));
  }
  return out;
}

}  // namespace gazeattn
