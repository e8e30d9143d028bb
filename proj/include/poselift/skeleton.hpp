#pragma once

// Joint vocabulary, pose containers and the grammar chains that structure
// the lifting network.

#include <Eigen/Core>

#include <array>
#include <cstddef>
#include <string_view>
#include <vector>

namespace poselift {

inline constexpr std::size_t kNumJoints = 16;
inline constexpr std::size_t kPose2DDim = 2 * kNumJoints;
inline constexpr std::size_t kPose3DDim = 3 * kNumJoints;

enum class JointId : std::size_t {
  Hip = 0,
  Spine,
  Thorax,
  Head,
  LShoulder,
  LElbow,
  LWrist,
  RShoulder,
  RElbow,
  RWrist,
  LHip,
  LKnee,
  LFoot,
  RHip,
  RKnee,
  RFoot,
};

constexpr std::size_t index(JointId j) { return static_cast<std::size_t>(j); }

std::string_view joint_name(JointId j);
std::array<JointId, kNumJoints> all_joints();

using Coords2D = Eigen::Matrix<double, kNumJoints, 2, Eigen::RowMajor>;
using Coords3D = Eigen::Matrix<double, kNumJoints, 3, Eigen::RowMajor>;
using Flat2D = Eigen::Matrix<double, kPose2DDim, 1>;
using Flat3D = Eigen::Matrix<double, kPose3DDim, 1>;

/// 2D pose in pixels, one row per joint in JointId order.
struct Pose2D {
  Coords2D coords = Coords2D::Zero();

  Eigen::Vector2d joint(JointId j) const { return coords.row(index(j)).transpose(); }
  /// x0 y0 x1 y1 ... in JointId order.
  Flat2D flat() const { return Eigen::Map<const Flat2D>(coords.data()); }
  static Pose2D from_flat(const Eigen::Ref<const Eigen::VectorXd>& v);
  bool all_finite() const { return coords.allFinite(); }
};

/// 3D pose in millimetres; the frame (world or camera) is up to the caller.
struct Pose3D {
  Coords3D coords = Coords3D::Zero();

  Eigen::Vector3d joint(JointId j) const { return coords.row(index(j)).transpose(); }
  Flat3D flat() const { return Eigen::Map<const Flat3D>(coords.data()); }
  static Pose3D from_flat(const Eigen::Ref<const Eigen::VectorXd>& v);
  bool all_finite() const { return coords.allFinite(); }
};

enum class ChainKind { Kinematic, Symmetry, Coordination };

/// One grammar rule. Kinematic chains list joints; symmetry and coordination
/// chains pair two kinematic chains by their index in the catalog.
struct GrammarChain {
  ChainKind kind;
  std::string_view name;
  std::vector<JointId> joints;
  std::array<std::size_t, 2> pair{0, 0};
};

/// The nine chains, in order: spine, l.arm, r.arm, l.leg, r.leg (kinematic),
/// arm, leg (symmetry), l2r, r2l (coordination).
const std::vector<GrammarChain>& grammar_catalog();

struct Normalization {
  Eigen::Vector2d offset = Eigen::Vector2d::Zero();
  double scale = 1.0;
};

/// Zero-mean, unit-RMS radius. Throws DegeneratePose when all joints coincide.
std::pair<Pose2D, Normalization> normalize_pose2d(const Pose2D& p);
Pose2D denormalize_pose2d(const Pose2D& normalized, const Normalization& n);

/// Translates the pose so the hip sits at the origin.
Pose3D root_center_pose3d(const Pose3D& p);

}  // namespace poselift
