#pragma once

#include <functional>
#include <span>
#include <vector>

#include "dsm/optical_flow.hpp"
#include "dsm/video.hpp"

namespace dsm {

// Frames start, start + stride, ..., start + (frames - 1) * stride.
struct ClipSampling {
  int start = 0;
  int frames = 16;
  int stride = 4;
};

struct ShiftParams {
  int alpha1 = 2;
  int alpha2 = 20;
};

struct ScaleParams {
  double max_scale = 5.0;
  std::vector<double> phi;  // one factor per consecutive frame pair
};

// Per-step factors phi(t) ~ U[0, max_scale], t = 0 .. steps-1.
ScaleParams sample_scale_params(int steps, double max_scale, Rng& rng);

// out(x, y) = frame(x + phi * vx(x, y), y + phi * vy(x, y)), zero fill outside.
std::vector<float> flow_scale_step(const FrameView& frame, const FlowField& flow, double phi);

// Output frame 0 is input frame 0; output frame t+1 is resynthesized from the
// original input frame t with flows[t] scaled by params.phi[t].
VideoClip flow_scale_clip(const VideoClip& clip, std::span<const FlowField> flows,
                          const ScaleParams& params);

// (start + i * stride + tau) mod length for i in [0, frames), wrapping to the
// beginning of the untrimmed video.
std::vector<int> temporal_shift_indices(int start, int frames, int stride, int tau, int length);

// Warp flow relating full-video frame `from` to frame `to`.
using FlowProvider = std::function<FlowField(int from, int to)>;

struct NegativeConfig {
  bool temporal_shift = true;
  bool flow_scaling = true;
  ShiftParams shift{};
  double max_scale = 5.0;
  HornSchunckOptions flow_options{};
};

struct NegativeSample {
  VideoClip clip;
  int tau = 0;
  std::vector<int> indices;
  ScaleParams scale;
};

// Motion-breaking negative: temporal shift of the anchor window, then
// flow-scaled resynthesis. Flows come from `flows` when given, otherwise they
// are estimated with Horn-Schunck on the shifted clip.
NegativeSample make_negative(const VideoClip& video, const ClipSampling& anchor,
                             const NegativeConfig& config, Rng& rng,
                             const FlowProvider& flows = nullptr);

}  // namespace dsm
