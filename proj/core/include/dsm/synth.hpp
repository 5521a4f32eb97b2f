#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dsm/optical_flow.hpp"
#include "dsm/temporal.hpp"
#include "dsm/video.hpp"

namespace dsm {

enum class SceneKind : int { kCheckerboard = 0, kGradient = 1, kNoiseBlobs = 2, kStripes = 3 };
enum class MotionKind : int { kStatic = 0, kLinear = 1, kCircular = 2, kOscillating = 3 };
enum class SpriteShape : int { kDisk = 0, kSquare = 1, kDiamond = 2 };

inline constexpr int kSceneKinds = 4;
inline constexpr int kMotionKinds = 4;
inline constexpr double kMaxSpriteSpeed = 3.0;

// One synthetic video: a soft-edged sprite composited over a static textured
// background. Everything not listed here (palette, texture phase, start
// position, direction) is derived deterministically from the seed.
struct SyntheticSpec {
  int scene_id = 0;
  int motion_id = 0;
  SpriteShape shape = SpriteShape::kDisk;
  double sprite_radius = 4.0;  // px
  double speed = 1.0;          // peak px/frame
  int length = 80;
  int height = 48;
  int width = 48;
  std::uint64_t seed = 0;
  // Direction of travel in radians (0 = +x, pi/2 = +y) for linear and
  // oscillating motion. Drawn from the seed when unset.
  std::optional<double> heading;

  void validate() const;
};

struct GeneratedVideo {
  VideoClip video;
  std::vector<FlowField> flows;  // flows[t] relates frame t to t+1 (warp flow)
};

// Deterministic in the spec. Ground-truth flow is the sprite displacement
// inside the sprite footprint and zero elsewhere.
GeneratedVideo generate_video(const SyntheticSpec& spec);

// Sprite centre at (possibly fractional) time t.
Point2 sprite_center(const SyntheticSpec& spec, double t);

// Analytic warp flow relating frame `from` to frame `to` of the video.
FlowField ground_truth_flow(const SyntheticSpec& spec, int from, int to);
FlowProvider ground_truth_provider(const SyntheticSpec& spec);

struct SampledClip {
  VideoClip clip;
  int start = 0;
};

// Frames start + i * stride with start uniform over valid starts.
SampledClip sample_clip(const VideoClip& video, int frames, int stride, Rng& rng);

struct ManifestEntry {
  std::string path;  // relative to the manifest directory
  int scene_label = 0;
  int motion_label = 0;
  int length = 0;
  bool train = true;
};

struct DatasetManifest {
  std::filesystem::path base_dir;
  std::vector<ManifestEntry> entries;

  std::filesystem::path resolve(const ManifestEntry& e) const { return base_dir / e.path; }
};

// Tab separated: path, scene label, motion label, length, train|test.
void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);
DatasetManifest read_manifest(const std::filesystem::path& path);

// key = value sidecar stored next to each generated clip (<clip>.spec) so the
// analytic flow can be recomputed at training time.
void write_spec_sidecar(const std::filesystem::path& path, const SyntheticSpec& spec);
SyntheticSpec read_spec_sidecar(const std::filesystem::path& path);
std::filesystem::path sidecar_path(const std::filesystem::path& clip_path);

struct FactorialOptions {
  int height = 48;
  int width = 48;
  int length = 80;
  std::uint64_t seed = 1;
  double train_fraction = 0.8;
};

// scenes x motions x per_cell videos plus manifest.tsv in out_dir. The first
// round(train_fraction * per_cell) videos of each cell are train, the rest test.
DatasetManifest build_factorial_dataset(int scenes, int motions, int per_cell,
                                        const std::filesystem::path& out_dir,
                                        const FactorialOptions& options = {});

// Spec for cell (scene, motion), replicate k, with shape/size/speed drawn from the seed.
SyntheticSpec factorial_spec(int scene, int motion, int replicate, const FactorialOptions& options);

}  // namespace dsm
