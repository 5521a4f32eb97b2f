#include "dsm/optical_flow.hpp"

#include <algorithm>
#include <cmath>

#include "dsm/error.hpp"

namespace dsm {

namespace {

struct Derivatives {
  int height = 0;
  int width = 0;
  std::vector<double> ix, iy, it;
};

void check_pair(const FrameView& a, const FrameView& b) {
  if (a.channels != 1 || b.channels != 1) {
    throw ShapeMismatch("optical flow expects single-channel frames");
  }
  if (a.height != b.height || a.width != b.width) {
    throw ShapeMismatch("optical flow frame pair has mismatched shapes");
  }
}

// Spatial central differences of the pair average, forward difference in time.
Derivatives derivatives(const FrameView& a, const FrameView& b, double scale) {
  Derivatives d;
  d.height = a.height;
  d.width = a.width;
  const std::size_t n = static_cast<std::size_t>(a.height) * a.width;
  std::vector<double> avg(n);
  d.it.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    avg[i] = 0.5 * scale * (static_cast<double>(a.data[i]) + b.data[i]);
    d.it[i] = scale * (static_cast<double>(b.data[i]) - a.data[i]);
  }
  d.ix.resize(n);
  d.iy.resize(n);
  const int h = a.height;
  const int w = a.width;
  for (int y = 0; y < h; ++y) {
    const int ym = std::max(y - 1, 0);
    const int yp = std::min(y + 1, h - 1);
    for (int x = 0; x < w; ++x) {
      const int xm = std::max(x - 1, 0);
      const int xp = std::min(x + 1, w - 1);
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      d.ix[i] = 0.5 * (avg[static_cast<std::size_t>(y) * w + xp] - avg[static_cast<std::size_t>(y) * w + xm]);
      d.iy[i] = 0.5 * (avg[static_cast<std::size_t>(yp) * w + x] - avg[static_cast<std::size_t>(ym) * w + x]);
    }
  }
  return d;
}

double energy(const Derivatives& d, const std::vector<double>& u, const std::vector<double>& v,
              double alpha2) {
  double data = 0.0;
  double smooth = 0.0;
  const int h = d.height;
  const int w = d.width;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      const double r = d.ix[i] * u[i] + d.iy[i] * v[i] + d.it[i];
      data += r * r;
      if (x + 1 < w) {
        const double du = u[i + 1] - u[i];
        const double dv = v[i + 1] - v[i];
        smooth += du * du + dv * dv;
      }
      if (y + 1 < h) {
        const double du = u[i + w] - u[i];
        const double dv = v[i + w] - v[i];
        smooth += du * du + dv * dv;
      }
    }
  }
  return data + alpha2 * smooth;
}

FlowField solve(const FrameView& first, const FrameView& second, const HornSchunckOptions& options,
                int every, std::vector<double>* energies) {
  check_pair(first, second);
  if (!(options.smoothness > 0.0) || options.iterations < 1) {
    throw InvalidArgument("Horn-Schunck needs smoothness > 0 and iterations >= 1");
  }
  const Derivatives d = derivatives(first, second, options.intensity_scale);
  const int h = d.height;
  const int w = d.width;
  const std::size_t n = static_cast<std::size_t>(h) * w;
  const double alpha2 = options.smoothness * options.smoothness;

  std::vector<double> u(n, 0.0), v(n, 0.0), un(n), vn(n);
  if (energies) {
    energies->clear();
    energies->push_back(energy(d, u, v, alpha2));
  }
  for (int iter = 1; iter <= options.iterations; ++iter) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * w + x;
        double su = 0.0, sv = 0.0;
        int count = 0;
        if (x > 0) { su += u[i - 1]; sv += v[i - 1]; ++count; }
        if (x + 1 < w) { su += u[i + 1]; sv += v[i + 1]; ++count; }
        if (y > 0) { su += u[i - w]; sv += v[i - w]; ++count; }
        if (y + 1 < h) { su += u[i + w]; sv += v[i + w]; ++count; }
        const double ubar = su / count;
        const double vbar = sv / count;
        const double ix = d.ix[i];
        const double iy = d.iy[i];
        const double num = ix * ubar + iy * vbar + d.it[i];
        const double den = count * alpha2 + ix * ix + iy * iy;
        un[i] = ubar - ix * num / den;
        vn[i] = vbar - iy * num / den;
      }
    }
    u.swap(un);
    v.swap(vn);
    if (energies && every > 0 && iter % every == 0) {
      energies->push_back(energy(d, u, v, alpha2));
    }
  }

  FlowField flow(h, w);
  for (std::size_t i = 0; i < n; ++i) {
    flow.vx[i] = static_cast<float>(u[i]);
    flow.vy[i] = static_cast<float>(v[i]);
  }
  return flow;
}

}  // namespace

VideoClip rgb_to_gray(const VideoClip& clip) {
  if (clip.channels() != 3) {
    throw ShapeMismatch("rgb_to_gray expects a 3-channel clip");
  }
  VideoClip out(clip.frames(), clip.height(), clip.width(), 1);
  const auto src = clip.data();
  auto dst = out.mutable_data();
  for (std::size_t i = 0; i < dst.size(); ++i) {
    const double luma = 0.299 * src[3 * i] + 0.587 * src[3 * i + 1] + 0.114 * src[3 * i + 2];
    dst[i] = static_cast<float>(std::clamp(luma, 0.0, 1.0));
  }
  return out;
}

FlowField estimate_flow_horn_schunck(const FrameView& first, const FrameView& second,
                                     const HornSchunckOptions& options) {
  return solve(first, second, options, 0, nullptr);
}

FlowField estimate_flow_horn_schunck_traced(const FrameView& first, const FrameView& second,
                                            const HornSchunckOptions& options, int every,
                                            std::vector<double>& energies) {
  return solve(first, second, options, every, &energies);
}

double horn_schunck_energy(const FrameView& first, const FrameView& second, const FlowField& flow,
                           const HornSchunckOptions& options) {
  check_pair(first, second);
  if (flow.height != first.height || flow.width != first.width) {
    throw ShapeMismatch("flow field does not match frame shape");
  }
  const Derivatives d = derivatives(first, second, options.intensity_scale);
  std::vector<double> u(flow.vx.begin(), flow.vx.end());
  std::vector<double> v(flow.vy.begin(), flow.vy.end());
  return energy(d, u, v, options.smoothness * options.smoothness);
}

std::vector<FlowField> estimate_clip_flows(const VideoClip& clip, const HornSchunckOptions& options) {
  const VideoClip gray = clip.channels() == 1 ? clip : rgb_to_gray(clip);
  std::vector<FlowField> flows;
  flows.reserve(gray.frames() > 0 ? gray.frames() - 1 : 0);
  for (int t = 0; t + 1 < gray.frames(); ++t) {
    flows.push_back(estimate_flow_horn_schunck(gray.frame(t + 1), gray.frame(t), options));
  }
  return flows;
}

FlowField crop_flow(const FlowField& flow, const CropWindow& window) {
  if (!window.fits(flow.height, flow.width)) {
    throw InvalidArgument("crop window exceeds flow bounds");
  }
  const double sy = window.out_h > 1 ? static_cast<double>(window.crop_h - 1) / (window.out_h - 1) : 1.0;
  const double sx = window.out_w > 1 ? static_cast<double>(window.crop_w - 1) / (window.out_w - 1) : 1.0;
  FlowField out(window.out_h, window.out_w);
  auto tap = [&](const std::vector<float>& plane, double x, double y) {
    const int x0 = std::clamp(static_cast<int>(std::floor(x)), 0, flow.width - 1);
    const int y0 = std::clamp(static_cast<int>(std::floor(y)), 0, flow.height - 1);
    const int x1 = std::min(x0 + 1, flow.width - 1);
    const int y1 = std::min(y0 + 1, flow.height - 1);
    const double ax = x - x0;
    const double ay = y - y0;
    return (1 - ax) * (1 - ay) * plane[flow.index(y0, x0)] + ax * (1 - ay) * plane[flow.index(y0, x1)] +
           (1 - ax) * ay * plane[flow.index(y1, x0)] + ax * ay * plane[flow.index(y1, x1)];
  };
  for (int oy = 0; oy < window.out_h; ++oy) {
    const double y = window.top + oy * sy;
    for (int ox = 0; ox < window.out_w; ++ox) {
      const double x = window.left + ox * sx;
      const std::size_t i = out.index(oy, ox);
      out.vx[i] = static_cast<float>(tap(flow.vx, x, y) / sx);
      out.vy[i] = static_cast<float>(tap(flow.vy, x, y) / sy);
    }
  }
  return out;
}

}  // namespace dsm
