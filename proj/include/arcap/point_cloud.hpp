#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "arcap/byte_io.hpp"
#include "arcap/pose.hpp"

namespace arcap {

using Rgb = std::array<std::uint8_t, 3>;

struct ColoredPoint {
  Vec3 position = Vec3::Zero();
  Rgb rgb{0, 0, 0};

  bool operator==(const ColoredPoint& o) const { return position == o.position && rgb == o.rgb; }
};

struct ColoredPointCloud {
  std::vector<ColoredPoint> points;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  bool operator==(const ColoredPointCloud&) const = default;
};

// Applies `pose` to every point (double precision).
ColoredPointCloud transform_cloud(const ColoredPointCloud& cloud, const Pose& pose);

// Nearest f32 value, widened back to double.
double round_to_f32(double v);

// Rounds every coordinate through f32, i.e. the precision stored on disk.
ColoredPointCloud quantize_cloud(const ColoredPointCloud& cloud);

// ARCPCD1 record stream: {f32 x, y, z; u8 r, g, b} per point.
void encode_points(ByteWriter& out, const ColoredPointCloud& cloud);
ColoredPointCloud decode_points(ByteReader& in, std::uint32_t count);

// Scene files: binary ARCPCD1 ("ARCPCD1" magic, u32 count, records) or plain
// text with one "x y z r g b" point per line. The reader detects the format.
ColoredPointCloud read_point_cloud(const std::filesystem::path& path);
void write_point_cloud(const std::filesystem::path& path, const ColoredPointCloud& cloud);
void write_point_cloud_text(const std::filesystem::path& path, const ColoredPointCloud& cloud);

std::vector<std::uint8_t> encode_point_cloud_file(const ColoredPointCloud& cloud);
ColoredPointCloud decode_point_cloud_file(std::span<const std::uint8_t> bytes);

}  // namespace arcap
