#include "dsm/temporal.hpp"

#include <string>

#include "dsm/error.hpp"

namespace dsm {

ScaleParams sample_scale_params(int steps, double max_scale, Rng& rng) {
  if (!(max_scale > 0.0)) throw InvalidArgument("max_scale must be positive");
  ScaleParams params;
  params.max_scale = max_scale;
  std::uniform_real_distribution<double> phi(0.0, max_scale);
  params.phi.reserve(steps > 0 ? steps : 0);
  for (int t = 0; t < steps; ++t) params.phi.push_back(phi(rng));
  return params;
}

std::vector<float> flow_scale_step(const FrameView& frame, const FlowField& flow, double phi) {
  if (flow.height != frame.height || flow.width != frame.width) {
    throw ShapeMismatch("flow field does not match frame shape");
  }
  if (!(phi >= 0.0)) throw InvalidArgument("scale factor must be non-negative");
  std::vector<float> out(frame.data.size());
  const int c = frame.channels;
  for (int y = 0; y < frame.height; ++y) {
    for (int x = 0; x < frame.width; ++x) {
      const std::size_t i = flow.index(y, x);
      bilinear_sample(frame, x + phi * flow.vx[i], y + phi * flow.vy[i],
                      std::span<float>(out).subspan(i * c, c));
    }
  }
  return out;
}

VideoClip flow_scale_clip(const VideoClip& clip, std::span<const FlowField> flows,
                          const ScaleParams& params) {
  const std::size_t steps = static_cast<std::size_t>(clip.frames() - 1);
  if (flows.size() != steps) {
    throw InvalidArgument("expected " + std::to_string(steps) + " flow fields, got " +
                          std::to_string(flows.size()));
  }
  if (params.phi.size() != steps) {
    throw InvalidArgument("expected one scale factor per frame pair");
  }
  VideoClip out(clip.frames(), clip.height(), clip.width(), clip.channels());
  {
    const FrameView first = clip.frame(0);
    std::copy(first.data.begin(), first.data.end(), out.mutable_frame(0).begin());
  }
  for (std::size_t t = 0; t < steps; ++t) {
    const std::vector<float> next = flow_scale_step(clip.frame(static_cast<int>(t)), flows[t], params.phi[t]);
    std::copy(next.begin(), next.end(), out.mutable_frame(static_cast<int>(t + 1)).begin());
  }
  return out;
}

std::vector<int> temporal_shift_indices(int start, int frames, int stride, int tau, int length) {
  if (length <= 0) throw InvalidArgument("video length must be positive");
  if (frames < 1 || stride < 1) throw InvalidArgument("frames and stride must be positive");
  std::vector<int> indices(static_cast<std::size_t>(frames));
  for (int i = 0; i < frames; ++i) {
    const long long raw = static_cast<long long>(start) + static_cast<long long>(i) * stride + tau;
    long long m = raw % length;
    if (m < 0) m += length;
    indices[static_cast<std::size_t>(i)] = static_cast<int>(m);
  }
  return indices;
}

NegativeSample make_negative(const VideoClip& video, const ClipSampling& anchor,
                             const NegativeConfig& config, Rng& rng, const FlowProvider& flows) {
  const int length = video.frames();
  if (length <= anchor.frames * anchor.stride) {
    throw InvalidArgument("video of length " + std::to_string(length) +
                          " is too short for a shifted window of " + std::to_string(anchor.frames) +
                          " x stride " + std::to_string(anchor.stride));
  }
  NegativeSample sample;
  if (config.temporal_shift) {
    const ShiftParams& s = config.shift;
    if (!(1 <= s.alpha1 && s.alpha1 <= s.alpha2 && s.alpha2 < length)) {
      throw InvalidArgument("shift bounds must satisfy 1 <= alpha1 <= alpha2 < L");
    }
    std::uniform_int_distribution<int> tau(s.alpha1, s.alpha2);
    sample.tau = tau(rng);
  }
  sample.indices = temporal_shift_indices(anchor.start, anchor.frames, anchor.stride, sample.tau, length);
  VideoClip shifted = gather_frames(video, sample.indices);

  if (!config.flow_scaling || anchor.frames < 2) {
    sample.clip = std::move(shifted);
    return sample;
  }

  std::vector<FlowField> step_flows;
  if (flows) {
    step_flows.reserve(sample.indices.size() - 1);
    for (std::size_t t = 0; t + 1 < sample.indices.size(); ++t) {
      step_flows.push_back(flows(sample.indices[t], sample.indices[t + 1]));
    }
  } else {
    step_flows = estimate_clip_flows(shifted, config.flow_options);
  }
  sample.scale = sample_scale_params(anchor.frames - 1, config.max_scale, rng);
  sample.clip = flow_scale_clip(shifted, step_flows, sample.scale);
  return sample;
}

}  // namespace dsm
