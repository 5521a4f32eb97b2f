#include "dsm/video.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dsm/error.hpp"

namespace dsm {

namespace {

void check_dims(int frames, int height, int width, int channels) {
  if (frames < 1 || height < VideoClip::kMinSide || width < VideoClip::kMinSide ||
      (channels != 1 && channels != 3)) {
    throw InvalidArgument("invalid clip shape " + std::to_string(frames) + "x" +
                          std::to_string(height) + "x" + std::to_string(width) + "x" +
                          std::to_string(channels));
  }
}

}  // namespace

VideoClip::VideoClip(int frames, int height, int width, int channels)
    : frames_(frames), height_(height), width_(width), channels_(channels) {
  check_dims(frames, height, width, channels);
  data_.assign(static_cast<std::size_t>(frames) * height * width * channels, 0.0f);
}

VideoClip::VideoClip(int frames, int height, int width, int channels, std::vector<float> data)
    : frames_(frames), height_(height), width_(width), channels_(channels), data_(std::move(data)) {
  check_dims(frames, height, width, channels);
  if (data_.size() != static_cast<std::size_t>(frames) * height * width * channels) {
    throw ShapeMismatch("clip data length " + std::to_string(data_.size()) +
                        " does not match its shape");
  }
  for (float v : data_) {
    if (!(v >= 0.0f && v <= 1.0f)) {
      throw InvalidArgument("clip value outside [0,1] or not finite");
    }
  }
}

FrameView VideoClip::frame(int t) const {
  return {std::span<const float>(data_).subspan(t * frame_size(), frame_size()), height_, width_,
          channels_};
}

std::span<float> VideoClip::mutable_frame(int t) {
  return std::span<float>(data_).subspan(t * frame_size(), frame_size());
}

bool CropWindow::fits(int height, int width) const {
  return top >= 0 && left >= 0 && crop_h > 0 && crop_w > 0 && out_h > 0 && out_w > 0 &&
         top + crop_h <= height && left + crop_w <= width;
}

void bilinear_sample(const FrameView& frame, double x, double y, std::span<float> out) {
  const int channels = frame.channels;
  const double fx0 = std::floor(x);
  const double fy0 = std::floor(y);
  const double ax = x - fx0;
  const double ay = y - fy0;
  // Far outside: everything is fill. Also guards the int conversion below.
  if (!(fx0 > -2.0 && fy0 > -2.0 && fx0 < frame.width && fy0 < frame.height)) {
    std::fill(out.begin(), out.begin() + channels, 0.0f);
    return;
  }
  const int x0 = static_cast<int>(fx0);
  const int y0 = static_cast<int>(fy0);
  const double w[4] = {(1.0 - ax) * (1.0 - ay), ax * (1.0 - ay), (1.0 - ax) * ay, ax * ay};
  const int xs[4] = {x0, x0 + 1, x0, x0 + 1};
  const int ys[4] = {y0, y0, y0 + 1, y0 + 1};
  for (int c = 0; c < channels; ++c) {
    double acc = 0.0;
    for (int k = 0; k < 4; ++k) {
      if (w[k] == 0.0) continue;
      if (xs[k] < 0 || ys[k] < 0 || xs[k] >= frame.width || ys[k] >= frame.height) continue;
      acc += w[k] * frame.at(ys[k], xs[k], c);
    }
    out[c] = static_cast<float>(acc);
  }
}

VideoClip apply_crop(const VideoClip& clip, const CropWindow& window) {
  if (!window.fits(clip.height(), clip.width())) {
    throw InvalidArgument("crop window exceeds clip bounds");
  }
  VideoClip out(clip.frames(), window.out_h, window.out_w, clip.channels());
  // Corner-aligned mapping keeps every tap inside the window.
  const double sy = window.out_h > 1
                        ? static_cast<double>(window.crop_h - 1) / (window.out_h - 1)
                        : 0.0;
  const double sx = window.out_w > 1
                        ? static_cast<double>(window.crop_w - 1) / (window.out_w - 1)
                        : 0.0;
  const int channels = clip.channels();
  for (int t = 0; t < clip.frames(); ++t) {
    const FrameView src = clip.frame(t);
    std::span<float> dst = out.mutable_frame(t);
    for (int oy = 0; oy < window.out_h; ++oy) {
      const double y = window.top + oy * sy;
      for (int ox = 0; ox < window.out_w; ++ox) {
        const double x = window.left + ox * sx;
        bilinear_sample(src, x, y,
                        dst.subspan((static_cast<std::size_t>(oy) * window.out_w + ox) * channels,
                                    channels));
      }
    }
  }
  return out;
}

CropWindow sample_crop_window(int height, int width, Rng& rng, double scale_lo, double scale_hi,
                              int out_h, int out_w) {
  if (!(scale_lo > 0.0 && scale_lo <= scale_hi && scale_hi <= 1.0)) {
    throw InvalidArgument("crop scale range must satisfy 0 < lo <= hi <= 1");
  }
  const int min_side = std::min(height, width);
  std::uniform_real_distribution<double> scale(scale_lo, scale_hi);
  const double u = scale_lo == scale_hi ? scale_lo : scale(rng);
  const int side = std::clamp(static_cast<int>(std::lround(u * min_side)), 1, min_side);
  std::uniform_int_distribution<int> top(0, height - side);
  std::uniform_int_distribution<int> left(0, width - side);
  CropWindow w;
  w.top = top(rng);
  w.left = left(rng);
  w.crop_h = side;
  w.crop_w = side;
  w.out_h = out_h;
  w.out_w = out_w;
  return w;
}

CropWindow full_frame_window(int height, int width, int out_h, int out_w) {
  return {0, 0, height, width, out_h, out_w};
}

VideoClip horizontal_flip(const VideoClip& clip) {
  VideoClip out(clip.frames(), clip.height(), clip.width(), clip.channels());
  const int w = clip.width();
  for (int t = 0; t < clip.frames(); ++t) {
    for (int y = 0; y < clip.height(); ++y) {
      for (int x = 0; x < w; ++x) {
        for (int c = 0; c < clip.channels(); ++c) {
          out.at(t, y, x, c) = clip.at(t, y, w - 1 - x, c);
        }
      }
    }
  }
  return out;
}

VideoClip basic_augment(const VideoClip& clip, Rng& rng, double flip_prob, double jitter_strength) {
  std::bernoulli_distribution flip(flip_prob);
  VideoClip out = flip(rng) ? horizontal_flip(clip) : clip;
  if (jitter_strength > 0.0) {
    std::uniform_real_distribution<double> offset(-jitter_strength, jitter_strength);
    const double brightness = offset(rng);
    const double contrast = 1.0 + offset(rng);
    for (float& v : out.mutable_data()) {
      v = static_cast<float>(std::clamp((v - 0.5) * contrast + 0.5 + brightness, 0.0, 1.0));
    }
  }
  return out;
}

VideoClip gather_frames(const VideoClip& video, std::span<const int> indices) {
  VideoClip out(static_cast<int>(indices.size()), video.height(), video.width(), video.channels());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const int t = indices[i];
    if (t < 0 || t >= video.frames()) {
      throw InvalidArgument("frame index " + std::to_string(t) + " out of range");
    }
    const FrameView src = video.frame(t);
    std::span<float> dst = out.mutable_frame(static_cast<int>(i));
    std::copy(src.data.begin(), src.data.end(), dst.begin());
  }
  return out;
}

}  // namespace dsm
