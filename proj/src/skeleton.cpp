#include "poselift/skeleton.hpp"

#include "poselift/errors.hpp"

#include <cmath>

namespace poselift {

namespace {
constexpr std::array<std::string_view, kNumJoints> kJointNames = {
    "Hip",    "Spine",  "Thorax", "Head",  "LShoulder", "LElbow",
    "LWrist", "RShoulder", "RElbow", "RWrist", "LHip", "LKnee",
    "LFoot",  "RHip",   "RKnee",  "RFoot",
};
}  // namespace

std::string_view joint_name(JointId j) { return kJointNames.at(index(j)); }

std::array<JointId, kNumJoints> all_joints() {
  std::array<JointId, kNumJoints> out{};
  for (std::size_t i = 0; i < kNumJoints; ++i) out[i] = static_cast<JointId>(i);
  return out;
}

Pose2D Pose2D::from_flat(const Eigen::Ref<const Eigen::VectorXd>& v) {
  if (static_cast<std::size_t>(v.size()) != kPose2DDim)
    throw ShapeMismatch("expected " + std::to_string(kPose2DDim) + " values, got " +
                        std::to_string(v.size()));
  Pose2D p;
  Eigen::Map<Flat2D>(p.coords.data()) = v;
  return p;
}

Pose3D Pose3D::from_flat(const Eigen::Ref<const Eigen::VectorXd>& v) {
  if (static_cast<std::size_t>(v.size()) != kPose3DDim)
    throw ShapeMismatch("expected " + std::to_string(kPose3DDim) + " values, got " +
                        std::to_string(v.size()));
  Pose3D p;
  Eigen::Map<Flat3D>(p.coords.data()) = v;
  return p;
}

const std::vector<GrammarChain>& grammar_catalog() {
  using J = JointId;
  static const std::vector<GrammarChain> catalog = {
      {ChainKind::Kinematic, "spine", {J::Head, J::Thorax, J::Spine, J::Hip}},
      {ChainKind::Kinematic, "l.arm", {J::LShoulder, J::LElbow, J::LWrist}},
      {ChainKind::Kinematic, "r.arm", {J::RShoulder, J::RElbow, J::RWrist}},
      {ChainKind::Kinematic, "l.leg", {J::LHip, J::LKnee, J::LFoot}},
      {ChainKind::Kinematic, "r.leg", {J::RHip, J::RKnee, J::RFoot}},
      {ChainKind::Symmetry, "arm", {}, {1, 2}},
      {ChainKind::Symmetry, "leg", {}, {3, 4}},
      {ChainKind::Coordination, "l2r", {}, {1, 4}},
      {ChainKind::Coordination, "r2l", {}, {2, 3}},
  };
  return catalog;
}

std::pair<Pose2D, Normalization> normalize_pose2d(const Pose2D& p) {
  if (!p.all_finite()) throw DegeneratePose("non-finite coordinates");
  Normalization n;
  n.offset = p.coords.colwise().mean().transpose();
  Pose2D out;
  out.coords = p.coords.rowwise() - n.offset.transpose();
  n.scale = std::sqrt(out.coords.squaredNorm() / static_cast<double>(kNumJoints));
  if (!(n.scale > 0.0)) throw DegeneratePose("all joints coincide");
  out.coords /= n.scale;
  return {out, n};
}

Pose2D denormalize_pose2d(const Pose2D& normalized, const Normalization& n) {
  Pose2D out;
  out.coords = (normalized.coords * n.scale).rowwise() + n.offset.transpose();
  return out;
}

Pose3D root_center_pose3d(const Pose3D& p) {
  Pose3D out;
  const Eigen::RowVector3d hip = p.coords.row(index(JointId::Hip));
  out.coords = p.coords.rowwise() - hip;
  return out;
}

}  // namespace poselift
