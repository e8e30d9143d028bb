#include "poselift/camgeom.hpp"

#include "poselift/errors.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <set>

namespace poselift {

Eigen::Matrix3d CameraIntrinsics::matrix() const {
  Eigen::Matrix3d K;
  K << alpha_x, 0.0, x0, 0.0, alpha_y, y0, 0.0, 0.0, 1.0;
  return K;
}

Eigen::Matrix<double, 3, 4> CameraParams::projection_matrix() const {
  Eigen::Matrix<double, 3, 4> Rt;
  Rt.leftCols<3>() = extrinsics.R;
  Rt.col(3) = extrinsics.R * extrinsics.T;
  return intrinsics.matrix() * Rt;
}

void validate(const CameraParams& cam) {
  if (!(cam.intrinsics.alpha_x > 0.0) || !(cam.intrinsics.alpha_y > 0.0))
    throw InvalidArgument("focal lengths must be positive");
  const Eigen::Matrix3d& R = cam.extrinsics.R;
  if ((R.transpose() * R - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > 1e-9 ||
      std::abs(R.determinant() - 1.0) > 1e-9)
    throw InvalidArgument("R is not a proper rotation");
  if (!cam.extrinsics.T.allFinite()) throw InvalidArgument("T is not finite");
}

Projection project(const Pose3D& v, const CameraParams& cam) {
  const Eigen::Matrix3d K = cam.intrinsics.matrix();
  Projection out;
  for (std::size_t i = 0; i < kNumJoints; ++i) {
    const Eigen::Vector3d X = v.coords.row(i).transpose();
    const Eigen::Vector3d h = K * cam.extrinsics.to_camera(X);
    if (!(h.z() > 1e-9)) throw BehindCamera(i);
    out.pixels.coords(i, 0) = h.x() / h.z();
    out.pixels.coords(i, 1) = h.y() / h.z();
    out.depths(i) = h.z();
  }
  return out;
}

Pose3D to_camera_frame(const Pose3D& v, const CameraExtrinsics& ext) {
  Pose3D out;
  out.coords = ((v.coords.rowwise() + ext.T.transpose()) * ext.R.transpose());
  return out;
}

CameraExtrinsics look_at_extrinsics(const Eigen::Vector3d& camera_pos,
                                    const Eigen::Vector3d& target,
                                    const Eigen::Vector3d& up) {
  const Eigen::Vector3d view = target - camera_pos;
  if (view.norm() < 1e-12) throw DegenerateGeometry("camera position equals target");
  const Eigen::Vector3d forward = view.normalized();
  const Eigen::Vector3d side = forward.cross(up);
  if (side.norm() < 1e-9 * std::max(1.0, up.norm()))
    throw DegenerateGeometry("up vector is parallel to the viewing direction");
  const Eigen::Vector3d right = side.normalized();
  const Eigen::Vector3d down = forward.cross(right);

  CameraExtrinsics ext;
  ext.R.row(0) = right.transpose();
  ext.R.row(1) = down.transpose();
  ext.R.row(2) = forward.transpose();
  ext.T = -camera_pos;
  return ext;
}

double wrap_angle(double a) {
  const double two_pi = 2.0 * std::numbers::pi;
  double w = std::fmod(a, two_pi);
  if (w < 0.0) w += two_pi;
  if (w >= two_pi) w = 0.0;
  return w;
}

int sector_of(double azimuth) {
  const double a = wrap_angle(azimuth);
  const double pos = a / kSectorWidth;
  const double nearest = std::round(pos);
  // Boundary azimuths go to the lower-index sector; 1e-12 absorbs the
  // rounding of degree-to-radian conversions.
  if (std::abs(pos - nearest) < 1e-12) {
    const int b = static_cast<int>(nearest) % kRigSectors;
    return b == 0 ? 0 : b - 1;
  }
  return std::min(static_cast<int>(std::floor(pos)), kRigSectors - 1);
}

double sector_center(int sector) { return (sector + 0.5) * kSectorWidth; }

namespace {
double angular_distance(double a, double b) {
  const double d = std::abs(wrap_angle(a) - wrap_angle(b));
  return std::min(d, 2.0 * std::numbers::pi - d);
}
}  // namespace

SectorPlan plan_sectors(const std::vector<double>& real_azimuths, double test_azimuth) {
  if (real_azimuths.size() > 4)
    throw RigConflict("at most 4 real cameras are supported, got " +
                      std::to_string(real_azimuths.size()));
  SectorPlan plan;
  std::set<int> occupied;
  for (double a : real_azimuths) occupied.insert(sector_of(a));
  plan.occupied.assign(occupied.begin(), occupied.end());

  std::vector<int> free;
  for (int s = 0; s < kRigSectors; ++s)
    if (!occupied.count(s)) free.push_back(s);

  // Nearest by centre distance; ties resolved toward the smaller azimuth.
  std::vector<int> ranked = free;
  std::stable_sort(ranked.begin(), ranked.end(), [&](int a, int b) {
    const double da = angular_distance(sector_center(a), test_azimuth);
    const double db = angular_distance(sector_center(b), test_azimuth);
    if (std::abs(da - db) > 1e-12) return da < db;
    return a < b;
  });
  const std::size_t n_protect = std::min<std::size_t>(2, ranked.size());
  plan.protected_near_test.assign(ranked.begin(), ranked.begin() + n_protect);
  std::sort(plan.protected_near_test.begin(), plan.protected_near_test.end());

  for (int s : free)
    if (std::find(plan.protected_near_test.begin(), plan.protected_near_test.end(), s) ==
        plan.protected_near_test.end())
      plan.emitted.push_back(s);
  if (plan.emitted.empty()) throw RigConflict("no free sector left for virtual cameras");
  return plan;
}

CameraParams rig_camera(const VirtualRig& rig, const CameraIntrinsics& intrinsics,
                        double azimuth) {
  const Eigen::Vector3d pos(rig.subject_center.x() + rig.radius * std::cos(azimuth),
                            rig.subject_center.y() + rig.radius * std::sin(azimuth),
                            rig.height);
  CameraParams cam;
  cam.intrinsics = intrinsics;
  cam.extrinsics = look_at_extrinsics(pos, rig.subject_center, Eigen::Vector3d::UnitZ());
  return cam;
}

std::vector<CameraParams> make_virtual_cameras(const VirtualRig& rig,
                                               const CameraIntrinsics& template_intrinsics,
                                               double test_azimuth) {
  const SectorPlan plan = plan_sectors(rig.real_azimuths, test_azimuth);
  std::vector<CameraParams> cams;
  for (int s : plan.emitted) cams.push_back(rig_camera(rig, template_intrinsics, sector_center(s)));
  return cams;
}

void assign_virtual_azimuths(VirtualRig& rig, double test_azimuth) {
  rig.virtual_azimuths.clear();
  for (int s : plan_sectors(rig.real_azimuths, test_azimuth).emitted)
    rig.virtual_azimuths.push_back(sector_center(s));
}

}  // namespace poselift
