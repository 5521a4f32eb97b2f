#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <vector>

namespace dsm {

using Rng = std::mt19937_64;

struct Point2 {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point2&, const Point2&) = default;
};

// Read-only view of one H x W x C frame, row-major with interleaved channels.
struct FrameView {
  std::span<const float> data;
  int height = 0;
  int width = 0;
  int channels = 0;

  float at(int y, int x, int c) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
};

// Dense T x H x W x C clip of floats in [0,1], laid out (t, y, x, c).
class VideoClip {
 public:
  static constexpr int kMinSide = 8;

  VideoClip() = default;
  // Zero-filled clip.
  VideoClip(int frames, int height, int width, int channels);
  // Takes ownership of data; validates size, range and finiteness.
  VideoClip(int frames, int height, int width, int channels, std::vector<float> data);

  int frames() const { return frames_; }
  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  std::size_t frame_size() const {
    return static_cast<std::size_t>(height_) * width_ * channels_;
  }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<const float> data() const { return data_; }
  std::span<float> mutable_data() { return data_; }

  std::size_t index(int t, int y, int x, int c) const {
    return ((static_cast<std::size_t>(t) * height_ + y) * width_ + x) * channels_ + c;
  }
  float at(int t, int y, int x, int c) const { return data_[index(t, y, x, c)]; }
  float& at(int t, int y, int x, int c) { return data_[index(t, y, x, c)]; }

  FrameView frame(int t) const;
  std::span<float> mutable_frame(int t);

  bool same_shape(const VideoClip& other) const {
    return frames_ == other.frames_ && height_ == other.height_ && width_ == other.width_ &&
           channels_ == other.channels_;
  }

  friend bool operator==(const VideoClip&, const VideoClip&) = default;

 private:
  int frames_ = 0;
  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<float> data_;
};

// Spatial window applied identically to every frame, then resized to out_h x out_w.
struct CropWindow {
  int top = 0;
  int left = 0;
  int crop_h = 0;
  int crop_w = 0;
  int out_h = 0;
  int out_w = 0;

  bool fits(int height, int width) const;
  friend bool operator==(const CropWindow&, const CropWindow&) = default;
};

// Bilinear interpolation at (x, y) in pixel coordinates. Taps falling outside
// the frame read as zero. Writes frame.channels values into out.
void bilinear_sample(const FrameView& frame, double x, double y, std::span<float> out);

// Crops every frame with the same window and bilinearly resizes to the window's
// output size. Throws InvalidArgument if the window does not fit.
VideoClip apply_crop(const VideoClip& clip, const CropWindow& window);

// Square window, side round(u * min(H, W)) with u ~ U[scale_lo, scale_hi],
// uniformly placed.
CropWindow sample_crop_window(int height, int width, Rng& rng, double scale_lo, double scale_hi,
                              int out_h, int out_w);

// Identity window covering the whole frame, resized to out_h x out_w.
CropWindow full_frame_window(int height, int width, int out_h, int out_w);

VideoClip horizontal_flip(const VideoClip& clip);

// Basic anchor augmentation: horizontal flip with probability flip_prob, then an
// optional brightness/contrast jitter shared by all frames (strength 0 disables it).
VideoClip basic_augment(const VideoClip& clip, Rng& rng, double flip_prob, double jitter_strength);

// Frames at the given indices (any order, repeats allowed) of a source clip.
VideoClip gather_frames(const VideoClip& video, std::span<const int> indices);

}  // namespace dsm
