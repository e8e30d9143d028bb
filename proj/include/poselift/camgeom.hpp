#pragma once

// Pinhole camera model and the virtual camera rig used for view augmentation.

#include "poselift/skeleton.hpp"

#include <Eigen/Core>

#include <numbers>
#include <vector>

namespace poselift {

struct CameraIntrinsics {
  double alpha_x = 1.0;
  double alpha_y = 1.0;
  double x0 = 0.0;
  double y0 = 0.0;

  Eigen::Matrix3d matrix() const;
};

/// Rotation R and translation T. A world point X maps to camera coordinates
/// R * (X + T), so the camera centre sits at -T in world coordinates.
struct CameraExtrinsics {
  Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
  Eigen::Vector3d T = Eigen::Vector3d::Zero();

  Eigen::Vector3d center() const { return -T; }
  Eigen::Vector3d to_camera(const Eigen::Vector3d& world) const { return R * (world + T); }
};

struct CameraParams {
  CameraIntrinsics intrinsics;
  CameraExtrinsics extrinsics;

  /// The 3x4 matrix K [R | R T].
  Eigen::Matrix<double, 3, 4> projection_matrix() const;
};

/// Throws InvalidArgument when focal lengths are non-positive or R is not a
/// proper rotation (tolerance 1e-9).
void validate(const CameraParams& cam);

struct Projection {
  Pose2D pixels;
  Eigen::Matrix<double, kNumJoints, 1> depths;
};

/// Perspective projection of every joint. Throws BehindCamera when a joint's
/// depth is <= 1e-9.
Projection project(const Pose3D& v, const CameraParams& cam);

/// Expresses a world-frame pose in the camera frame, R * (X + T).
Pose3D to_camera_frame(const Pose3D& v, const CameraExtrinsics& ext);

/// Camera at `camera_pos` looking at `target`. Image x points right and image
/// y points down relative to `up`. Throws DegenerateGeometry on coincident
/// points or when `up` is parallel to the viewing direction.
CameraExtrinsics look_at_extrinsics(const Eigen::Vector3d& camera_pos,
                                    const Eigen::Vector3d& target,
                                    const Eigen::Vector3d& up);

inline constexpr int kRigSectors = 12;
inline constexpr double kSectorWidth = 2.0 * std::numbers::pi / kRigSectors;

struct VirtualRig {
  Eigen::Vector3d subject_center = Eigen::Vector3d::Zero();
  double radius = 5000.0;
  /// Absolute height of every virtual camera (world z).
  double height = 1500.0;
  std::vector<double> real_azimuths;
  /// Filled by assign_virtual_azimuths.
  std::vector<double> virtual_azimuths;
};

/// Wraps an angle into [0, 2pi).
double wrap_angle(double a);

/// Sector index in [0, 12) of an azimuth; an azimuth exactly on a boundary
/// belongs to the lower-index neighbour (0 itself stays in sector 0).
int sector_of(double azimuth);

double sector_center(int sector);

/// Camera on the rig circle at `azimuth`, aimed at the subject centre.
CameraParams rig_camera(const VirtualRig& rig, const CameraIntrinsics& intrinsics,
                        double azimuth);

/// One camera per free sector at the sector centre: sectors holding a real
/// camera and the two free sectors nearest to `test_azimuth` are skipped.
std::vector<CameraParams> make_virtual_cameras(const VirtualRig& rig,
                                               const CameraIntrinsics& template_intrinsics,
                                               double test_azimuth);

/// Sectors skipped by make_virtual_cameras, occupied ones first.
struct SectorPlan {
  std::vector<int> occupied;
  std::vector<int> protected_near_test;
  std::vector<int> emitted;
};
SectorPlan plan_sectors(const std::vector<double>& real_azimuths, double test_azimuth);

/// Sets `rig.virtual_azimuths` to the sector centres make_virtual_cameras uses.
void assign_virtual_azimuths(VirtualRig& rig, double test_azimuth);

}  // namespace poselift
