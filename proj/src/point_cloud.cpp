#include "arcap/point_cloud.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>

#include "arcap/errors.hpp"

namespace arcap {

namespace {

constexpr std::string_view kMagic = "ARCPCD1";

ColoredPointCloud parse_text_cloud(std::string_view text) {
  ColoredPointCloud cloud;
  std::istringstream in{std::string(text)};
  std::string line;
  std::int64_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream fields(line);
    double x, y, z;
    int r, g, b;
    if (!(fields >> x >> y >> z >> r >> g >> b) || !std::isfinite(x) || !std::isfinite(y) || !std::isfinite(z) ||
        r < 0 || r > 255 || g < 0 || g > 255 || b < 0 || b > 255)
      throw IntegrityError("malformed xyzrgb point on line " + std::to_string(line_no));
    cloud.points.push_back(
        {Vec3(x, y, z), Rgb{static_cast<std::uint8_t>(r), static_cast<std::uint8_t>(g), static_cast<std::uint8_t>(b)}});
  }
  return cloud;
}

}  // namespace

// Kept out of line: GCC 11's SLP vectorizer folds an inlined
// double->float->double round trip back into the identity.
[[gnu::noinline]] double round_to_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

ColoredPointCloud transform_cloud(const ColoredPointCloud& cloud, const Pose& pose) {
  ColoredPointCloud out;
  out.points.reserve(cloud.size());
  const Eigen::Matrix3d R = pose.rotation();
  for (const auto& p : cloud.points) out.points.push_back({R * p.position + pose.position, p.rgb});
  return out;
}

ColoredPointCloud quantize_cloud(const ColoredPointCloud& cloud) {
  ColoredPointCloud out = cloud;
  for (auto& p : out.points)
    for (int a = 0; a < 3; ++a) p.position[a] = round_to_f32(p.position[a]);
  return out;
}

void encode_points(ByteWriter& out, const ColoredPointCloud& cloud) {
  for (const auto& p : cloud.points) {
    out.put(static_cast<float>(p.position.x()));
    out.put(static_cast<float>(p.position.y()));
    out.put(static_cast<float>(p.position.z()));
    out.put(p.rgb[0]);
    out.put(p.rgb[1]);
    out.put(p.rgb[2]);
  }
}

ColoredPointCloud decode_points(ByteReader& in, std::uint32_t count) {
  if (static_cast<std::uint64_t>(count) * 15 > in.remaining())
    throw IntegrityError("point records extend past the end of the data at byte offset " +
                             std::to_string(in.offset()),
                         -1, static_cast<std::int64_t>(in.offset()));
  ColoredPointCloud cloud;
  cloud.points.resize(count);
  for (auto& p : cloud.points) {
    const float x = in.get<float>();
    const float y = in.get<float>();
    const float z = in.get<float>();
    p.position = Vec3(x, y, z);
    p.rgb = {in.get<std::uint8_t>(), in.get<std::uint8_t>(), in.get<std::uint8_t>()};
    if (!p.position.allFinite())
      throw IntegrityError("non-finite point coordinate before byte offset " + std::to_string(in.offset()), -1,
                           static_cast<std::int64_t>(in.offset()));
  }
  return cloud;
}

std::vector<std::uint8_t> encode_point_cloud_file(const ColoredPointCloud& cloud) {
  ByteWriter w;
  w.put_bytes(kMagic);
  w.put(static_cast<std::uint32_t>(cloud.size()));
  encode_points(w, cloud);
  return w.take();
}

ColoredPointCloud decode_point_cloud_file(std::span<const std::uint8_t> bytes) {
  if (bytes.size() >= kMagic.size() && std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) {
    ByteReader r(bytes);
    r.get_bytes(kMagic.size());
    const auto count = r.get<std::uint32_t>();
    ColoredPointCloud cloud = decode_points(r, count);
    if (!r.done())
      throw IntegrityError("trailing bytes after point records at byte offset " + std::to_string(r.offset()), -1,
                           static_cast<std::int64_t>(r.offset()));
    return cloud;
  }
  return parse_text_cloud(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

ColoredPointCloud read_point_cloud(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IntegrityError("cannot open point cloud '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_point_cloud_file(bytes);
}

void write_point_cloud(const std::filesystem::path& path, const ColoredPointCloud& cloud) {
  const auto bytes = encode_point_cloud_file(cloud);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IntegrityError("failed to write point cloud '" + path.string() + "'");
}

void write_point_cloud_text(const std::filesystem::path& path, const ColoredPointCloud& cloud) {
  std::ofstream out(path, std::ios::trunc);
  out.precision(9);
  for (const auto& p : cloud.points)
    out << p.position.x() << ' ' << p.position.y() << ' ' << p.position.z() << ' ' << int(p.rgb[0]) << ' '
        << int(p.rgb[1]) << ' ' << int(p.rgb[2]) << '\n';
  if (!out) throw IntegrityError("failed to write point cloud '" + path.string() + "'");
}

}  // namespace arcap
