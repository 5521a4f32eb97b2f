#include "dsm/clip_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "binary_io.hpp"
#include "dsm/error.hpp"

namespace dsm {

namespace {

constexpr char kClipMagic[5] = "DSMC";
constexpr char kFlowMagic[5] = "DSMF";
// 2^31 values (8 GiB of floats) is far beyond anything this library produces.
constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 31;

struct Header {
  std::uint32_t t = 0, h = 0, w = 0, c = 0;
  std::uint64_t elements = 0;
};

void write_header(std::ostream& out, const char (&magic)[5], std::uint32_t t, std::uint32_t h,
                  std::uint32_t w, std::uint32_t c) {
  out.write(magic, 4);
  detail::write_le<std::uint16_t>(out, kClipFormatVersion);
  detail::write_le<std::uint32_t>(out, t);
  detail::write_le<std::uint32_t>(out, h);
  detail::write_le<std::uint32_t>(out, w);
  detail::write_le<std::uint32_t>(out, c);
}

Header read_header(std::istream& in, const char (&magic)[5], const std::string& origin) {
  detail::expect_magic(in, magic, origin);
  const auto version = detail::read_le<std::uint16_t>(in, "format version");
  if (version != kClipFormatVersion) {
    throw FormatError("bad_version", "unsupported format version " + std::to_string(version) +
                                         " in " + origin);
  }
  Header hd;
  hd.t = detail::read_le<std::uint32_t>(in, "T");
  hd.h = detail::read_le<std::uint32_t>(in, "H");
  hd.w = detail::read_le<std::uint32_t>(in, "W");
  hd.c = detail::read_le<std::uint32_t>(in, "C");
  if (hd.t == 0 || hd.h == 0 || hd.w == 0 || hd.c == 0) {
    throw DimensionError("zero dimension in header of " + origin);
  }
  std::uint64_t n = hd.t;
  for (std::uint32_t d : {hd.h, hd.w, hd.c}) {
    if (n > kMaxElements / d) {
      throw DimensionError("declared dimensions overflow in " + origin);
    }
    n *= d;
  }
  hd.elements = n;
  // Detect truncation before allocating when the stream can report its size.
  const auto here = in.tellg();
  if (here != std::streampos(-1)) {
    in.seekg(0, std::ios::end);
    const auto end = in.tellg();
    in.seekg(here);
    if (end != std::streampos(-1) &&
        static_cast<std::uint64_t>(end - here) < n * sizeof(float)) {
      throw TruncatedError("payload shorter than T*H*W*C*4 bytes in " + origin);
    }
  }
  return hd;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string() + " for reading");
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  return out;
}

void finish(std::ostream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace

void write_clip(std::ostream& out, const VideoClip& clip) {
  write_header(out, kClipMagic, static_cast<std::uint32_t>(clip.frames()),
               static_cast<std::uint32_t>(clip.height()), static_cast<std::uint32_t>(clip.width()),
               static_cast<std::uint32_t>(clip.channels()));
  detail::write_f32_array(out, clip.data().data(), clip.size());
}

VideoClip read_clip(std::istream& in, const std::string& origin) {
  const Header hd = read_header(in, kClipMagic, origin);
  if (hd.c != 1 && hd.c != 3) {
    throw DimensionError("clip channel count must be 1 or 3 in " + origin);
  }
  if (hd.h < static_cast<std::uint32_t>(VideoClip::kMinSide) ||
      hd.w < static_cast<std::uint32_t>(VideoClip::kMinSide)) {
    throw DimensionError("clip frames smaller than 8x8 in " + origin);
  }
  std::vector<float> data(hd.elements);
  detail::read_f32_array(in, data.data(), data.size(), origin.c_str());
  return VideoClip(static_cast<int>(hd.t), static_cast<int>(hd.h), static_cast<int>(hd.w),
                   static_cast<int>(hd.c), std::move(data));
}

void write_clip(const std::filesystem::path& path, const VideoClip& clip) {
  auto out = open_out(path);
  write_clip(out, clip);
  finish(out, path);
}

VideoClip read_clip(const std::filesystem::path& path) {
  auto in = open_in(path);
  return read_clip(in, path.string());
}

void write_flows(std::ostream& out, const std::vector<FlowField>& flows) {
  if (flows.empty()) throw InvalidArgument("cannot write an empty flow sequence");
  const int h = flows.front().height;
  const int w = flows.front().width;
  write_header(out, kFlowMagic, static_cast<std::uint32_t>(flows.size()), static_cast<std::uint32_t>(h),
               static_cast<std::uint32_t>(w), 2);
  std::vector<float> row(static_cast<std::size_t>(h) * w * 2);
  for (const FlowField& f : flows) {
    if (f.height != h || f.width != w) throw ShapeMismatch("flow sequence has mixed shapes");
    for (std::size_t i = 0; i < f.vx.size(); ++i) {
      row[2 * i] = f.vx[i];
      row[2 * i + 1] = f.vy[i];
    }
    detail::write_f32_array(out, row.data(), row.size());
  }
}

std::vector<FlowField> read_flows(std::istream& in, const std::string& origin) {
  const Header hd = read_header(in, kFlowMagic, origin);
  if (hd.c != 2) throw DimensionError("flow dump must have C = 2 in " + origin);
  std::vector<FlowField> flows;
  flows.reserve(hd.t);
  std::vector<float> row(static_cast<std::size_t>(hd.h) * hd.w * 2);
  for (std::uint32_t t = 0; t < hd.t; ++t) {
    detail::read_f32_array(in, row.data(), row.size(), origin.c_str());
    FlowField f(static_cast<int>(hd.h), static_cast<int>(hd.w));
    for (std::size_t i = 0; i < f.vx.size(); ++i) {
      f.vx[i] = row[2 * i];
      f.vy[i] = row[2 * i + 1];
      if (!std::isfinite(f.vx[i]) || !std::isfinite(f.vy[i])) {
        throw FormatError("non_finite", "non-finite flow value in " + origin);
      }
    }
    flows.push_back(std::move(f));
  }
  return flows;
}

void write_flows(const std::filesystem::path& path, const std::vector<FlowField>& flows) {
  auto out = open_out(path);
  write_flows(out, flows);
  finish(out, path);
}

std::vector<FlowField> read_flows(const std::filesystem::path& path) {
  auto in = open_in(path);
  return read_flows(in, path.string());
}

void write_ppm(const std::filesystem::path& path, const FrameView& frame) {
  auto out = open_out(path);
  out << "P6\n" << frame.width << " " << frame.height << "\n255\n";
  std::vector<unsigned char> bytes(static_cast<std::size_t>(frame.width) * frame.height * 3);
  for (int y = 0; y < frame.height; ++y) {
    for (int x = 0; x < frame.width; ++x) {
      for (int c = 0; c < 3; ++c) {
        const float v = frame.at(y, x, frame.channels == 3 ? c : 0);
        bytes[(static_cast<std::size_t>(y) * frame.width + x) * 3 + c] =
            static_cast<unsigned char>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
      }
    }
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  finish(out, path);
}

namespace {

int read_ppm_int(std::istream& in, const std::string& origin) {
  int c = in.peek();
  while (c != EOF) {
    if (c == '#') {
      std::string skip;
      std::getline(in, skip);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      break;
    }
    c = in.peek();
  }
  int value = 0;
  if (!(in >> value)) throw FormatError("bad_ppm", "malformed PPM header in " + origin);
  return value;
}

std::vector<float> read_ppm(const std::filesystem::path& path, int& height, int& width) {
  auto in = open_in(path);
  char magic[2] = {};
  in.read(magic, 2);
  if (in.gcount() != 2 || magic[0] != 'P' || magic[1] != '6') {
    throw BadMagicError("not a binary PPM (P6): " + path.string());
  }
  width = read_ppm_int(in, path.string());
  height = read_ppm_int(in, path.string());
  const int maxval = read_ppm_int(in, path.string());
  if (maxval != 255) throw FormatError("bad_ppm", "only 8-bit PPM is supported: " + path.string());
  if (width <= 0 || height <= 0) throw DimensionError("bad PPM dimensions in " + path.string());
  in.get();  // single whitespace before raster
  std::vector<unsigned char> bytes(static_cast<std::size_t>(width) * height * 3);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) {
    throw TruncatedError("PPM raster truncated: " + path.string());
  }
  std::vector<float> values(bytes.size());
  std::transform(bytes.begin(), bytes.end(), values.begin(),
                 [](unsigned char b) { return static_cast<float>(b) / 255.0f; });
  return values;
}

std::filesystem::path frame_name(const std::filesystem::path& dir, int index) {
  char name[32];
  std::snprintf(name, sizeof(name), "frame_%06d.ppm", index);
  return dir / name;
}

}  // namespace

VideoClip import_ppm_sequence(const std::filesystem::path& dir) {
  std::vector<float> data;
  int height = 0, width = 0, frames = 0;
  while (std::filesystem::exists(frame_name(dir, frames))) {
    int h = 0, w = 0;
    std::vector<float> frame = read_ppm(frame_name(dir, frames), h, w);
    if (frames == 0) {
      height = h;
      width = w;
    } else if (h != height || w != width) {
      throw ShapeMismatch("PPM sequence has frames of different sizes");
    }
    data.insert(data.end(), frame.begin(), frame.end());
    ++frames;
  }
  if (frames == 0) throw IoError("no frame_000000.ppm in " + dir.string());
  return VideoClip(frames, height, width, 3, std::move(data));
}

void export_ppm_sequence(const std::filesystem::path& dir, const VideoClip& clip) {
  std::filesystem::create_directories(dir);
  for (int t = 0; t < clip.frames(); ++t) write_ppm(frame_name(dir, t), clip.frame(t));
}

}  // namespace dsm
