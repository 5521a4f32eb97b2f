#include "dsm/tps.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <string>

#include "dsm/error.hpp"

namespace dsm {

namespace {

// Grid coordinates within this distance of an integer are snapped to it, so
// solver round-off on an identity warp cannot leak sub-ulp blends of
// neighbouring pixels into the output.
constexpr double kSnapTolerance = 1e-9;

double snap(double v) {
  const double r = std::round(v);
  return std::abs(v - r) < kSnapTolerance ? r : v;
}

}  // namespace

double tps_kernel(double r2) { return r2 > 0.0 ? r2 * std::log(r2) : 0.0; }

TpsTransform::TpsTransform(std::vector<Point2> destinations, std::vector<Point2> sources,
                           std::vector<Point2> radial_weights, std::array<Point2, 3> affine)
    : destinations_(std::move(destinations)),
      sources_(std::move(sources)),
      weights_(std::move(radial_weights)),
      affine_(affine) {}

Point2 TpsTransform::operator()(Point2 p) const {
  Point2 out{affine_[0].x + affine_[1].x * p.x + affine_[2].x * p.y,
             affine_[0].y + affine_[1].y * p.x + affine_[2].y * p.y};
  for (std::size_t i = 0; i < destinations_.size(); ++i) {
    const double dx = p.x - destinations_[i].x;
    const double dy = p.y - destinations_[i].y;
    const double u = tps_kernel(dx * dx + dy * dy);
    out.x += weights_[i].x * u;
    out.y += weights_[i].y * u;
  }
  return out;
}

ControlPointSet sample_control_points(int grid_n, double max_offset, Rng& rng, bool border_anchors) {
  if (grid_n < 2) throw InvalidArgument("grid_n must be at least 2");
  if (!(max_offset >= 0.0 && max_offset <= 0.2)) {
    throw InvalidArgument("max_offset must lie in [0, 0.2]");
  }
  ControlPointSet set;
  const std::size_t n = static_cast<std::size_t>(grid_n) * grid_n;
  set.destinations.reserve(n);
  set.offsets.reserve(n);
  set.sources.reserve(n);
  std::uniform_real_distribution<double> offset(-max_offset, max_offset);
  for (int gy = 0; gy < grid_n; ++gy) {
    for (int gx = 0; gx < grid_n; ++gx) {
      const Point2 d{static_cast<double>(gx) / (grid_n - 1), static_cast<double>(gy) / (grid_n - 1)};
      Point2 delta{0.0, 0.0};
      if (max_offset > 0.0) {
        delta.x = offset(rng);
        delta.y = offset(rng);
      }
      const bool on_border = gx == 0 || gy == 0 || gx == grid_n - 1 || gy == grid_n - 1;
      if (border_anchors && on_border) delta = {0.0, 0.0};
      set.destinations.push_back(d);
      set.offsets.push_back(delta);
      set.sources.push_back({d.x + delta.x, d.y + delta.y});
    }
  }
  return set;
}

TpsTransform solve_tps(const ControlPointSet& points) {
  const auto n = static_cast<Eigen::Index>(points.destinations.size());
  if (n < 3 || points.sources.size() != points.destinations.size()) {
    throw InvalidArgument("TPS needs at least 3 matched control points");
  }
  Eigen::MatrixXd system = Eigen::MatrixXd::Zero(n + 3, n + 3);
  Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(n + 3, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Point2& di = points.destinations[i];
    for (Eigen::Index j = 0; j < n; ++j) {
      const Point2& dj = points.destinations[j];
      const double dx = di.x - dj.x;
      const double dy = di.y - dj.y;
      system(i, j) = tps_kernel(dx * dx + dy * dy);
    }
    system(i, n) = 1.0;
    system(i, n + 1) = di.x;
    system(i, n + 2) = di.y;
    system(n, i) = 1.0;
    system(n + 1, i) = di.x;
    system(n + 2, i) = di.y;
    rhs(i, 0) = points.sources[i].x;
    rhs(i, 1) = points.sources[i].y;
  }

  Eigen::FullPivLU<Eigen::MatrixXd> lu(system);
  lu.setThreshold(1e-10);
  if (!lu.isInvertible()) {
    throw SingularSystemError("TPS system is singular (rank " + std::to_string(lu.rank()) + " of " +
                              std::to_string(n + 3) + "); destinations are duplicate or collinear");
  }
  const Eigen::MatrixXd solution = lu.solve(rhs);

  std::vector<Point2> weights(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) weights[i] = {solution(i, 0), solution(i, 1)};
  const std::array<Point2, 3> affine{Point2{solution(n, 0), solution(n, 1)},
                                     Point2{solution(n + 1, 0), solution(n + 1, 1)},
                                     Point2{solution(n + 2, 0), solution(n + 2, 1)}};
  return TpsTransform(points.destinations, points.sources, std::move(weights), affine);
}

VideoClip apply_tps(const VideoClip& clip, const TpsTransform& transform) {
  const int h = clip.height();
  const int w = clip.width();
  const double sx = w - 1;
  const double sy = h - 1;
  // Sampling grid, shared by every frame.
  std::vector<Point2> grid(static_cast<std::size_t>(h) * w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const Point2 src = transform({x / sx, y / sy});
      grid[static_cast<std::size_t>(y) * w + x] = {snap(src.x * sx), snap(src.y * sy)};
    }
  }
  VideoClip out(clip.frames(), h, w, clip.channels());
  const int c = clip.channels();
  for (int t = 0; t < clip.frames(); ++t) {
    const FrameView src = clip.frame(t);
    std::span<float> dst = out.mutable_frame(t);
    for (std::size_t i = 0; i < grid.size(); ++i) {
      bilinear_sample(src, grid[i].x, grid[i].y, dst.subspan(i * c, c));
    }
  }
  return out;
}

VideoClip make_positive(const VideoClip& clip, const PositiveConfig& config, Rng& rng) {
  for (int attempt = 0;; ++attempt) {
    const ControlPointSet points =
        sample_control_points(config.grid_n, config.max_offset, rng, config.border_anchors);
    try {
      return apply_tps(clip, solve_tps(points));
    } catch (const SingularSystemError&) {
      if (attempt >= config.max_retries) throw;
    }
  }
}

}  // namespace dsm
