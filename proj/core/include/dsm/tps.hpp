#pragma once

#include <array>
#include <vector>

#include "dsm/video.hpp"

namespace dsm {

// Control points in normalized [0,1]^2 frame coordinates (x right, y down).
// sources[i] = destinations[i] + offsets[i].
struct ControlPointSet {
  std::vector<Point2> destinations;
  std::vector<Point2> offsets;
  std::vector<Point2> sources;

  std::size_t size() const { return destinations.size(); }
};

// Thin-plate spline mapping destination coordinates to source coordinates:
//   f(p) = a0 + ax * p.x + ay * p.y + sum_i w_i U(|p - d_i|),  U(r) = r^2 log r^2.
class TpsTransform {
 public:
  TpsTransform() = default;
  TpsTransform(std::vector<Point2> destinations, std::vector<Point2> sources,
               std::vector<Point2> radial_weights, std::array<Point2, 3> affine);

  Point2 operator()(Point2 p) const;

  const std::vector<Point2>& destinations() const { return destinations_; }
  const std::vector<Point2>& sources() const { return sources_; }
  const std::vector<Point2>& radial_weights() const { return weights_; }
  // {constant, x coefficient, y coefficient}; each is the (x, y) output pair.
  const std::array<Point2, 3>& affine() const { return affine_; }

 private:
  std::vector<Point2> destinations_;
  std::vector<Point2> sources_;
  std::vector<Point2> weights_;
  std::array<Point2, 3> affine_{};
};

double tps_kernel(double r2);

struct PositiveConfig {
  int grid_n = 4;            // control points per axis
  double max_offset = 0.1;   // C in normalized units (one tenth of the frame)
  bool border_anchors = false;  // pin lattice points on the frame border
  int max_retries = 3;
};

// grid_n x grid_n lattice over [0,1]^2 with offsets ~ U[-max_offset, max_offset].
ControlPointSet sample_control_points(int grid_n, double max_offset, Rng& rng,
                                      bool border_anchors = false);

// Solves the interpolation system exactly (no regularisation). Throws
// SingularSystemError for degenerate destination sets.
TpsTransform solve_tps(const ControlPointSet& points);

// Backward warp: each output pixel reads the same-index input frame at the
// transformed location with bilinear sampling. One sampling grid for all frames.
VideoClip apply_tps(const VideoClip& clip, const TpsTransform& transform);

// Scene-breaking positive: sample -> solve -> warp, resampling offsets on a
// singular system up to max_retries times.
VideoClip make_positive(const VideoClip& clip, const PositiveConfig& config, Rng& rng);

}  // namespace dsm
