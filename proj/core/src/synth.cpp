#include "dsm/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

#include "dsm/clip_io.hpp"
#include "dsm/config.hpp"
#include "dsm/error.hpp"

namespace dsm {

namespace {

using Rgb = std::array<double, 3>;

// Per-class palette endpoints; scene identity is readable from colour and layout.
constexpr std::array<std::array<Rgb, 2>, kSceneKinds> kPalettes{{
    {{{0.22, 0.28, 0.52}, {0.42, 0.48, 0.72}}},
    {{{0.22, 0.48, 0.24}, {0.44, 0.70, 0.40}}},
    {{{0.54, 0.26, 0.24}, {0.74, 0.44, 0.40}}},
    {{{0.52, 0.48, 0.20}, {0.74, 0.70, 0.40}}},
}};

constexpr double kSpriteOpacity = 1.0;
constexpr double kSpriteSoftness = 1.5;  // half-width of the alpha ramp, px

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

struct Blob {
  double x, y, sigma, weight;
};

// Everything derived from the seed, drawn in a fixed order.
struct Derived {
  Rgb c0{}, c1{};
  Rgb sprite{};
  double period = 14.0;
  double angle = 0.0;
  double phase_x = 0.0, phase_y = 0.0;
  std::vector<Blob> blobs;
  double blob_min = 0.0, blob_max = 1.0;
  // trajectory
  Point2 origin{};
  Point2 direction{1.0, 0.0};
  double radius = 0.0;      // circular radius or oscillation amplitude
  double omega = 0.0;       // rad/frame
  double phase = 0.0;
  double margin = 0.0;      // sprite half extent + softness
};

double reflect(double p, double lo, double hi) {
  const double span = hi - lo;
  if (span <= 0.0) return lo;
  double q = std::fmod(p - lo, 2.0 * span);
  if (q < 0.0) q += 2.0 * span;
  if (q > span) q = 2.0 * span - q;
  return lo + q;
}

Derived derive(const SyntheticSpec& spec) {
  Rng rng(splitmix64(spec.seed));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  Derived d;
  const auto& palette = kPalettes[static_cast<std::size_t>(spec.scene_id)];
  for (int c = 0; c < 3; ++c) {
    const double jitter = uniform(-0.06, 0.06);
    d.c0[c] = palette[0][c] + jitter;
    d.c1[c] = palette[1][c] + jitter;
  }
  d.period = uniform(12.0, 18.0);
  d.angle = uniform(0.0, std::numbers::pi);
  d.phase_x = uniform(0.0, 2.0 * std::numbers::pi);
  d.phase_y = uniform(0.0, 2.0 * std::numbers::pi);
  const int blobs = 6;
  for (int i = 0; i < blobs; ++i) {
    d.blobs.push_back({uniform(0.0, spec.width - 1.0), uniform(0.0, spec.height - 1.0),
                       uniform(4.0, 8.0), uniform(-1.0, 1.0)});
  }
  // Moderate contrast against the palette midpoint keeps disocclusion error small.
  const double sign = unit(rng) < 0.5 ? 1.0 : -1.0;
  const double contrast = uniform(0.4, 0.5);
  for (int c = 0; c < 3; ++c) d.sprite[c] = std::clamp(0.5 * (d.c0[c] + d.c1[c]) + sign * contrast, 0.0, 1.0);

  d.margin = spec.sprite_radius + kSpriteSoftness + 1.0;
  const double theta = spec.heading.value_or(uniform(0.0, 2.0 * std::numbers::pi));
  d.direction = {std::cos(theta), std::sin(theta)};
  d.phase = uniform(0.0, 2.0 * std::numbers::pi);
  const double w = spec.width - 1.0;
  const double h = spec.height - 1.0;
  const double room = std::min(w, h) / 2.0 - d.margin;
  switch (static_cast<MotionKind>(spec.motion_id)) {
    case MotionKind::kStatic:
    case MotionKind::kLinear:
      d.origin = {uniform(d.margin, w - d.margin), uniform(d.margin, h - d.margin)};
      break;
    case MotionKind::kCircular:
    case MotionKind::kOscillating: {
      d.radius = std::max(1.0, std::min(room * 0.8, uniform(6.0, 10.0)));
      d.omega = spec.speed / d.radius;
      const double slack = std::max(0.0, room - d.radius);
      d.origin = {w / 2.0 + uniform(-slack, slack), h / 2.0 + uniform(-slack, slack)};
      break;
    }
  }
  return d;
}

double texture(const SyntheticSpec& spec, const Derived& d, double x, double y) {
  const double k = 2.0 * std::numbers::pi / d.period;
  switch (static_cast<SceneKind>(spec.scene_id)) {
    case SceneKind::kCheckerboard: {
      const double s = std::sin(k * x + d.phase_x) * std::sin(k * y + d.phase_y);
      return 0.5 + 0.5 * std::tanh(1.5 * s) / std::tanh(1.5);
    }
    case SceneKind::kGradient: {
      const double diag = std::hypot(spec.width, spec.height);
      const double u = ((x - spec.width / 2.0) * std::cos(d.angle) + (y - spec.height / 2.0) * std::sin(d.angle)) / diag;
      return std::clamp(0.5 + u * 1.4, 0.0, 1.0);
    }
    case SceneKind::kNoiseBlobs: {
      double v = 0.0;
      for (const Blob& b : d.blobs) {
        const double r2 = (x - b.x) * (x - b.x) + (y - b.y) * (y - b.y);
        v += b.weight * std::exp(-r2 / (2.0 * b.sigma * b.sigma));
      }
      return std::clamp(0.5 + 0.5 * v, 0.0, 1.0);
    }
    case SceneKind::kStripes: {
      const double u = x * std::cos(d.angle) + y * std::sin(d.angle);
      return 0.5 + 0.5 * std::sin(k * u + d.phase_x);
    }
  }
  return 0.5;
}

// Signed distance to the sprite outline, negative inside.
double sprite_distance(const SyntheticSpec& spec, double dx, double dy) {
  const double r = spec.sprite_radius;
  switch (spec.shape) {
    case SpriteShape::kDisk:
      return std::hypot(dx, dy) - r;
    case SpriteShape::kSquare:
      return std::max(std::abs(dx), std::abs(dy)) - r;
    case SpriteShape::kDiamond:
      return (std::abs(dx) + std::abs(dy) - r) / std::numbers::sqrt2;
  }
  return 1e9;
}

double sprite_alpha(double distance) {
  const double s = std::clamp((kSpriteSoftness - distance) / (2.0 * kSpriteSoftness), 0.0, 1.0);
  return kSpriteOpacity * s * s * (3.0 - 2.0 * s);
}

Point2 center_at(const SyntheticSpec& spec, const Derived& d, double t) {
  const double w = spec.width - 1.0;
  const double h = spec.height - 1.0;
  switch (static_cast<MotionKind>(spec.motion_id)) {
    case MotionKind::kStatic:
      return d.origin;
    case MotionKind::kLinear:
      return {reflect(d.origin.x + spec.speed * d.direction.x * t, d.margin, w - d.margin),
              reflect(d.origin.y + spec.speed * d.direction.y * t, d.margin, h - d.margin)};
    case MotionKind::kCircular:
      return {d.origin.x + d.radius * std::cos(d.omega * t + d.phase),
              d.origin.y + d.radius * std::sin(d.omega * t + d.phase)};
    case MotionKind::kOscillating: {
      const double s = d.radius * std::sin(d.omega * t + d.phase);
      return {d.origin.x + s * d.direction.x, d.origin.y + s * d.direction.y};
    }
  }
  return d.origin;
}

std::string shape_name(SpriteShape s) {
  switch (s) {
    case SpriteShape::kDisk: return "disk";
    case SpriteShape::kSquare: return "square";
    case SpriteShape::kDiamond: return "diamond";
  }
  return "disk";
}

SpriteShape parse_shape(const std::string& s) {
  if (s == "disk") return SpriteShape::kDisk;
  if (s == "square") return SpriteShape::kSquare;
  if (s == "diamond") return SpriteShape::kDiamond;
  throw ConfigError("unknown sprite shape '" + s + "'");
}

}  // namespace

void SyntheticSpec::validate() const {
  if (scene_id < 0 || scene_id >= kSceneKinds) throw InvalidArgument("scene_id out of range");
  if (motion_id < 0 || motion_id >= kMotionKinds) throw InvalidArgument("motion_id out of range");
  if (!(speed >= 0.0 && speed <= kMaxSpriteSpeed)) throw InvalidArgument("sprite speed must lie in [0, 3] px/frame");
  if (length < 64) throw InvalidArgument("synthetic videos need at least 64 frames");
  if (height < VideoClip::kMinSide || width < VideoClip::kMinSide) throw InvalidArgument("frame too small");
  if (!(sprite_radius > 0.0)) throw InvalidArgument("sprite radius must be positive");
  const double extent = 2.0 * (sprite_radius + kSpriteSoftness + 1.0);
  if (extent >= std::min(height, width)) throw InvalidArgument("sprite larger than frame");
}

Point2 sprite_center(const SyntheticSpec& spec, double t) {
  spec.validate();
  return center_at(spec, derive(spec), t);
}

GeneratedVideo generate_video(const SyntheticSpec& spec) {
  spec.validate();
  const Derived d = derive(spec);
  const int h = spec.height, w = spec.width;

  std::vector<Rgb> background(static_cast<std::size_t>(h) * w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double v = texture(spec, d, x, y);
      Rgb& px = background[static_cast<std::size_t>(y) * w + x];
      for (int c = 0; c < 3; ++c) px[c] = d.c0[c] * (1.0 - v) + d.c1[c] * v;
    }
  }

  GeneratedVideo out;
  out.video = VideoClip(spec.length, h, w, 3);
  for (int t = 0; t < spec.length; ++t) {
    const Point2 c = center_at(spec, d, t);
    std::span<float> frame = out.video.mutable_frame(t);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * w + x;
        const double a = sprite_alpha(sprite_distance(spec, x - c.x, y - c.y));
        for (int ch = 0; ch < 3; ++ch) {
          const double v = (1.0 - a) * background[i][ch] + a * d.sprite[ch];
          frame[i * 3 + ch] = static_cast<float>(std::clamp(v, 0.0, 1.0));
        }
      }
    }
  }
  out.flows.reserve(static_cast<std::size_t>(spec.length - 1));
  for (int t = 0; t + 1 < spec.length; ++t) out.flows.push_back(ground_truth_flow(spec, t, t + 1));
  return out;
}

FlowField ground_truth_flow(const SyntheticSpec& spec, int from, int to) {
  spec.validate();
  const Derived d = derive(spec);
  const Point2 a = center_at(spec, d, from);
  const Point2 b = center_at(spec, d, to);
  FlowField flow(spec.height, spec.width);
  const float vx = static_cast<float>(a.x - b.x);
  const float vy = static_cast<float>(a.y - b.y);
  if (vx == 0.0f && vy == 0.0f) return flow;
  for (int y = 0; y < spec.height; ++y) {
    for (int x = 0; x < spec.width; ++x) {
      if (sprite_distance(spec, x - b.x, y - b.y) < kSpriteSoftness ||
          sprite_distance(spec, x - a.x, y - a.y) < kSpriteSoftness) {
        flow.vx[flow.index(y, x)] = vx;
        flow.vy[flow.index(y, x)] = vy;
      }
    }
  }
  return flow;
}

FlowProvider ground_truth_provider(const SyntheticSpec& spec) {
  return [spec](int from, int to) { return ground_truth_flow(spec, from, to); };
}

SampledClip sample_clip(const VideoClip& video, int frames, int stride, Rng& rng) {
  if (frames < 1 || stride < 1) throw InvalidArgument("frames and stride must be positive");
  const int span = (frames - 1) * stride;
  if (video.frames() <= span) {
    throw InvalidArgument("video of " + std::to_string(video.frames()) + " frames is too short for " +
                          std::to_string(frames) + " frames at stride " + std::to_string(stride));
  }
  std::uniform_int_distribution<int> start(0, video.frames() - 1 - span);
  SampledClip out;
  out.start = start(rng);
  std::vector<int> idx(static_cast<std::size_t>(frames));
  for (int i = 0; i < frames; ++i) idx[static_cast<std::size_t>(i)] = out.start + i * stride;
  out.clip = gather_frames(video, idx);
  return out;
}

void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  for (const ManifestEntry& e : manifest.entries) {
    out << e.path << '\t' << e.scene_label << '\t' << e.motion_label << '\t' << e.length << '\t'
        << (e.train ? "train" : "test") << '\n';
  }
  out.flush();
  if (!out) throw IoError("write failed for " + path.string());
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  DatasetManifest manifest;
  manifest.base_dir = path.parent_path();
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, '\t')) fields.push_back(field);
    const std::string where = path.string() + ":" + std::to_string(line_no);
    if (fields.size() != 5) throw FormatError("bad_manifest", "expected 5 tab-separated fields at " + where);
    ManifestEntry e;
    e.path = fields[0];
    try {
      e.scene_label = std::stoi(fields[1]);
      e.motion_label = std::stoi(fields[2]);
      e.length = std::stoi(fields[3]);
    } catch (const std::exception&) {
      throw FormatError("bad_manifest", "non-integer label or length at " + where);
    }
    if (e.scene_label < 0 || e.motion_label < 0 || e.length < 1) {
      throw FormatError("bad_manifest", "label or length out of range at " + where);
    }
    if (fields[4] == "train") {
      e.train = true;
    } else if (fields[4] == "test") {
      e.train = false;
    } else {
      throw FormatError("bad_manifest", "split must be train or test at " + where);
    }
    if (!std::filesystem::exists(manifest.base_dir / e.path)) {
      throw IoError("manifest entry does not exist: " + (manifest.base_dir / e.path).string());
    }
    manifest.entries.push_back(std::move(e));
  }
  return manifest;
}

std::filesystem::path sidecar_path(const std::filesystem::path& clip_path) {
  std::filesystem::path p = clip_path;
  p += ".spec";
  return p;
}

void write_spec_sidecar(const std::filesystem::path& path, const SyntheticSpec& spec) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.precision(17);
  out << "scene = " << spec.scene_id << '\n'
      << "motion = " << spec.motion_id << '\n'
      << "shape = " << shape_name(spec.shape) << '\n'
      << "radius = " << spec.sprite_radius << '\n'
      << "speed = " << spec.speed << '\n'
      << "length = " << spec.length << '\n'
      << "height = " << spec.height << '\n'
      << "width = " << spec.width << '\n'
      << "seed = " << spec.seed << '\n';
  if (spec.heading) out << "heading = " << *spec.heading << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

SyntheticSpec read_spec_sidecar(const std::filesystem::path& path) {
  const KeyValueConfig kv = KeyValueConfig::load(path);
  const std::vector<std::string> known{"scene", "motion", "shape", "radius", "speed",
                                       "length", "height", "width", "seed", "heading"};
  kv.reject_unknown(known);
  SyntheticSpec s;
  s.scene_id = kv.get_int("scene");
  s.motion_id = kv.get_int("motion");
  s.shape = parse_shape(kv.get_string("shape"));
  s.sprite_radius = kv.get_double("radius");
  s.speed = kv.get_double("speed");
  s.length = kv.get_int("length");
  s.height = kv.get_int("height");
  s.width = kv.get_int("width");
  s.seed = kv.get_uint64("seed");
  if (kv.has("heading")) s.heading = kv.get_double("heading");
  s.validate();
  return s;
}

SyntheticSpec factorial_spec(int scene, int motion, int replicate, const FactorialOptions& options) {
  const std::uint64_t seed = splitmix64(splitmix64(splitmix64(options.seed) ^ static_cast<std::uint64_t>(scene)) ^
                                        (static_cast<std::uint64_t>(motion) << 20)) ^
                             static_cast<std::uint64_t>(replicate);
  Rng rng(splitmix64(seed));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  SyntheticSpec s;
  s.scene_id = scene % kSceneKinds;
  s.motion_id = motion % kMotionKinds;
  s.shape = static_cast<SpriteShape>(static_cast<int>(unit(rng) * 3.0) % 3);
  s.sprite_radius = 7.0 + 2.0 * unit(rng);
  s.speed = s.motion_id == static_cast<int>(MotionKind::kStatic) ? 0.0 : 0.9 + 0.6 * unit(rng);
  s.length = options.length;
  s.height = options.height;
  s.width = options.width;
  s.seed = seed;
  return s;
}

DatasetManifest build_factorial_dataset(int scenes, int motions, int per_cell,
                                        const std::filesystem::path& out_dir,
                                        const FactorialOptions& options) {
  if (scenes < 2 || motions < 2) throw InvalidArgument("need at least 2 scenes and 2 motions");
  if (scenes > kSceneKinds || motions > kMotionKinds) {
    throw InvalidArgument("at most 4 scene and 4 motion classes are available");
  }
  if (per_cell < 1) throw InvalidArgument("per_cell must be positive");
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "videos", ec);
  if (ec) throw IoError("cannot create " + (out_dir / "videos").string() + ": " + ec.message());

  const int train_count = static_cast<int>(std::lround(options.train_fraction * per_cell));
  DatasetManifest manifest;
  manifest.base_dir = out_dir;
  for (int s = 0; s < scenes; ++s) {
    for (int m = 0; m < motions; ++m) {
      for (int k = 0; k < per_cell; ++k) {
        const SyntheticSpec spec = factorial_spec(s, m, k, options);
        char name[64];
        std::snprintf(name, sizeof(name), "videos/s%d_m%d_%03d.dsmc", s, m, k);
        const std::filesystem::path clip_path = out_dir / name;
        const GeneratedVideo video = generate_video(spec);
        write_clip(clip_path, video.video);
        write_spec_sidecar(sidecar_path(clip_path), spec);
        manifest.entries.push_back({name, s, m, spec.length, k < train_count});
      }
    }
  }
  write_manifest(out_dir / "manifest.tsv", manifest);
  return manifest;
}

}  // namespace dsm
