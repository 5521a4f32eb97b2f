#pragma once

#include <cstddef>
#include <vector>

#include "dsm/video.hpp"

namespace dsm {

// Per-pixel displacement field (vx, vy) in pixels, row-major.
//
// Convention used throughout the library ("warp flow"): for a flow relating
// frame a to frame b, b(x, y) ~= a(x + vx(x, y), y + vy(x, y)). This is the
// form consumed by flow-scaled resynthesis. A sprite translating by +d between
// a and b therefore carries flow -d inside its footprint in b.
struct FlowField {
  int height = 0;
  int width = 0;
  std::vector<float> vx;
  std::vector<float> vy;

  FlowField() = default;
  FlowField(int h, int w) : height(h), width(w), vx(std::size_t(h) * w, 0.0f), vy(std::size_t(h) * w, 0.0f) {}

  std::size_t index(int y, int x) const { return static_cast<std::size_t>(y) * width + x; }
  friend bool operator==(const FlowField&, const FlowField&) = default;
};

struct HornSchunckOptions {
  double smoothness = 1.0;  // alpha; weights the squared-gradient term by alpha^2
  int iterations = 100;
  // Intensities are multiplied by this before differentiation, so alpha is
  // expressed in 8-bit grey levels as in classic Horn-Schunck setups.
  double intensity_scale = 255.0;
};

// Single-channel luma, 0.299 R + 0.587 G + 0.114 B. Requires C = 3.
VideoClip rgb_to_gray(const VideoClip& clip);

// Grey frame pair -> dense flow by Jacobi iterations of the Horn-Schunck
// update. The result is the standard forward flow from `first` to `second`
// (second(p + v) ~= first(p)). Pass the frames in reverse order to obtain the
// warp flow that carries `first` onto `second`.
FlowField estimate_flow_horn_schunck(const FrameView& first, const FrameView& second,
                                     const HornSchunckOptions& options = {});

// Same solver, exposing the discrete energy every `every` iterations (index 0
// is the initial zero flow). Used by tests and benchmarks.
FlowField estimate_flow_horn_schunck_traced(const FrameView& first, const FrameView& second,
                                            const HornSchunckOptions& options, int every,
                                            std::vector<double>& energies);

// Brightness-constancy residual plus alpha^2 times the squared forward
// differences of the flow, in the solver's intensity units.
double horn_schunck_energy(const FrameView& first, const FrameView& second, const FlowField& flow,
                           const HornSchunckOptions& options);

// Warp flows for consecutive frame pairs of a clip: result[t] relates frame t
// to frame t+1. Colour clips are converted to grey first.
std::vector<FlowField> estimate_clip_flows(const VideoClip& clip,
                                           const HornSchunckOptions& options = {});

// Crops and resizes a flow field with the same mapping as apply_crop, scaling
// the vectors into output pixel units.
FlowField crop_flow(const FlowField& flow, const CropWindow& window);

}  // namespace dsm
