#include <hdf5.h>

#include <string>
#include <vector>

#include "arcap/errors.hpp"
#include "arcap/recording.hpp"

namespace arcap {

namespace {

// Closes an HDF5 handle on scope exit.
class Handle {
 public:
  Handle(hid_t id, herr_t (*close)(hid_t), const std::string& what) : id_(id), close_(close) {
    if (id_ < 0) throw IntegrityError("HDF5 export failed: " + what);
  }
  ~Handle() { close_(id_); }
  Handle(const Handle&) = delete;
  Handle& operator=(const Handle&) = delete;
  operator hid_t() const { return id_; }

 private:
  hid_t id_;
  herr_t (*close_)(hid_t);
};

void write_dataset(hid_t parent, const char* name, hid_t type, const std::vector<hsize_t>& dims, const void* data) {
  Handle space(H5Screate_simple(static_cast<int>(dims.size()), dims.data(), nullptr), H5Sclose, name);
  Handle set(H5Dcreate2(parent, name, type, space, H5P_DEFAULT, H5P_DEFAULT, H5P_DEFAULT), H5Dclose, name);
  hsize_t count = 1;
  for (auto d : dims) count *= d;
  if (count == 0) return;
  if (H5Dwrite(set, type, H5S_ALL, H5S_ALL, H5P_DEFAULT, data) < 0)
    throw IntegrityError(std::string("HDF5 export failed writing ") + name);
}

void append_pose(std::vector<float>& out, const Pose& p) {
  out.insert(out.end(), {static_cast<float>(p.position.x()), static_cast<float>(p.position.y()),
                         static_cast<float>(p.position.z()), static_cast<float>(p.orientation.w()),
                         static_cast<float>(p.orientation.x()), static_cast<float>(p.orientation.y()),
                         static_cast<float>(p.orientation.z())});
}

}  // namespace

void export_hdf5(const std::filesystem::path& path, const std::vector<ProcessedFrame>& frames) {
  const hsize_t T = frames.size();
  const hsize_t dof = frames.empty() ? 0 : frames.front().q.size();

  std::vector<double> timestamps;
  std::vector<float> cloud, joints, headset, base;
  std::vector<std::uint8_t> sources, events;
  std::vector<std::uint64_t> offsets{0};
  std::vector<std::int8_t> gripper;
  for (const auto& f : frames) {
    if (f.q.size() != dof) throw ContractError("frames disagree on the joint count");
    timestamps.push_back(f.timestamp);
    for (std::size_t i = 0; i < f.cloud.size(); ++i) {
      const auto& p = f.cloud.points[i];
      cloud.insert(cloud.end(), {static_cast<float>(p.position.x()), static_cast<float>(p.position.y()),
                                 static_cast<float>(p.position.z()), p.rgb[0] / 255.0f, p.rgb[1] / 255.0f,
                                 p.rgb[2] / 255.0f});
      sources.push_back(static_cast<std::uint8_t>(f.sources[i]));
    }
    offsets.push_back(offsets.back() + f.cloud.size());
    for (double v : f.q) joints.push_back(static_cast<float>(v));
    append_pose(headset, f.headset);
    append_pose(base, f.robot_base);
    gripper.push_back(!f.gripper ? -1 : (*f.gripper == GripperCommand::Closed ? 1 : 0));
    events.push_back(f.events);
  }
  const hsize_t N = sources.size();

  Handle file(H5Fcreate(path.c_str(), H5F_ACC_TRUNC, H5P_DEFAULT, H5P_DEFAULT), H5Fclose, path.string());
  Handle obs(H5Gcreate2(file, "obs", H5P_DEFAULT, H5P_DEFAULT, H5P_DEFAULT), H5Gclose, "/obs");
  Handle poses(H5Gcreate2(file, "poses", H5P_DEFAULT, H5P_DEFAULT, H5P_DEFAULT), H5Gclose, "/poses");
  Handle actions(H5Gcreate2(file, "actions", H5P_DEFAULT, H5P_DEFAULT, H5P_DEFAULT), H5Gclose, "/actions");

  write_dataset(file, "timestamps", H5T_NATIVE_DOUBLE, {T}, timestamps.data());
  write_dataset(obs, "point_cloud", H5T_NATIVE_FLOAT, {N, 6}, cloud.data());
  write_dataset(obs, "point_cloud_offsets", H5T_NATIVE_UINT64, {T + 1}, offsets.data());
  write_dataset(obs, "point_source", H5T_NATIVE_UINT8, {N}, sources.data());
  write_dataset(obs, "joint_angles", H5T_NATIVE_FLOAT, {T, dof}, joints.data());
  write_dataset(obs, "events", H5T_NATIVE_UINT8, {T}, events.data());
  write_dataset(poses, "headset", H5T_NATIVE_FLOAT, {T, 7}, headset.data());
  write_dataset(poses, "robot_base", H5T_NATIVE_FLOAT, {T, 7}, base.data());
  write_dataset(actions, "gripper", H5T_NATIVE_INT8, {T}, gripper.data());
}

}  // namespace arcap
