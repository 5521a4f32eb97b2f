#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "dsm/optical_flow.hpp"
#include "dsm/video.hpp"

namespace dsm {

// Clip container: "DSMC", u16 version = 1, u32 T, H, W, C, then T*H*W*C
// float32 values in (t, y, x, c) order. All integers and floats little-endian.
inline constexpr std::uint16_t kClipFormatVersion = 1;

void write_clip(std::ostream& out, const VideoClip& clip);
VideoClip read_clip(std::istream& in, const std::string& origin = "<stream>");
void write_clip(const std::filesystem::path& path, const VideoClip& clip);
VideoClip read_clip(const std::filesystem::path& path);

// Flow dump: same container with magic "DSMF" and C fixed at 2 (vx, vy
// interleaved per pixel). T counts flow fields.
void write_flows(std::ostream& out, const std::vector<FlowField>& flows);
std::vector<FlowField> read_flows(std::istream& in, const std::string& origin = "<stream>");
void write_flows(const std::filesystem::path& path, const std::vector<FlowField>& flows);
std::vector<FlowField> read_flows(const std::filesystem::path& path);

// Binary PPM (P6, maxval 255). Grey clips are written with equal RGB.
void write_ppm(const std::filesystem::path& path, const FrameView& frame);
// Reads frame_%06d.ppm starting at index 0 until the first missing file.
VideoClip import_ppm_sequence(const std::filesystem::path& dir);
void export_ppm_sequence(const std::filesystem::path& dir, const VideoClip& clip);

}  // namespace dsm
