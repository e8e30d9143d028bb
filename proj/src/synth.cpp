#include "poselift/synth.hpp"

#include "poselift/errors.hpp"
#include "poselift/rng.hpp"

#include <Eigen/Geometry>

namespace poselift {

namespace {

using J = JointId;

constexpr std::array<JointId, kNumJoints> kParents = {
    J::Hip,       J::Hip,    J::Spine,     J::Thorax, J::Thorax, J::LShoulder,
    J::LElbow,    J::Thorax, J::RShoulder, J::RElbow, J::Hip,    J::LHip,
    J::LKnee,     J::Hip,    J::RHip,      J::RKnee,
};

// Bone direction at rest in the parent frame (x forward, y left, z up).
Eigen::Vector3d rest_direction(JointId child) {
  switch (child) {
    case J::Spine:
    case J::Thorax:
    case J::Head: return Eigen::Vector3d::UnitZ();
    case J::LShoulder:
    case J::LHip: return Eigen::Vector3d::UnitY();
    case J::RShoulder:
    case J::RHip: return -Eigen::Vector3d::UnitY();
    default: return -Eigen::Vector3d::UnitZ();
  }
}

Eigen::Matrix3d euler(double roll, double pitch, double yaw) {
  return (Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitZ()) *
          Eigen::AngleAxisd(pitch, Eigen::Vector3d::UnitY()) *
          Eigen::AngleAxisd(roll, Eigen::Vector3d::UnitX()))
      .toRotationMatrix();
}

BoneRanges mirrored(const BoneRanges& r) {
  return {{-r.roll.hi, -r.roll.lo}, r.pitch, {-r.yaw.hi, -r.yaw.lo}};
}

double draw(Rng& rng, const AngleRange& r) {
  if (r.hi == r.lo) return r.lo;
  return std::uniform_real_distribution<double>(r.lo, r.hi)(rng);
}

}  // namespace

JointId parent_of(JointId j) { return kParents.at(index(j)); }

SynthConfig SynthConfig::defaults() {
  SynthConfig c;
  auto bone = [](JointId child) { return index(child) - 1; };
  auto set = [&](JointId child, double length, BoneRanges r) {
    c.bone_lengths[bone(child)] = length;
    c.ranges[bone(child)] = r;
  };
  set(J::Spine, 230.0, {{-0.2, 0.2}, {-0.1, 0.5}, {-0.3, 0.3}});
  set(J::Thorax, 250.0, {{-0.1, 0.1}, {-0.1, 0.3}, {-0.2, 0.2}});
  set(J::Head, 180.0, {{-0.2, 0.2}, {-0.3, 0.4}, {-0.5, 0.5}});

  const BoneRanges clavicle{{-0.1, 0.1}, {-0.1, 0.1}, {-0.1, 0.1}};
  const BoneRanges upper_arm{{0.0, 1.5}, {-2.5, 0.8}, {-0.5, 0.5}};
  const BoneRanges forearm{{-0.2, 0.2}, {-2.3, 0.0}, {-0.3, 0.3}};
  const BoneRanges pelvis{{-0.05, 0.05}, {-0.05, 0.05}, {-0.05, 0.05}};
  const BoneRanges thigh{{-0.2, 0.6}, {-1.6, 0.4}, {-0.3, 0.3}};
  const BoneRanges shin{{-0.05, 0.05}, {0.0, 2.0}, {-0.1, 0.1}};

  set(J::LShoulder, 160.0, clavicle);
  set(J::LElbow, 280.0, upper_arm);
  set(J::LWrist, 250.0, forearm);
  set(J::RShoulder, 160.0, mirrored(clavicle));
  set(J::RElbow, 280.0, mirrored(upper_arm));
  set(J::RWrist, 250.0, mirrored(forearm));
  set(J::LHip, 130.0, pelvis);
  set(J::LKnee, 440.0, thigh);
  set(J::LFoot, 430.0, shin);
  set(J::RHip, 130.0, mirrored(pelvis));
  set(J::RKnee, 440.0, mirrored(thigh));
  set(J::RFoot, 430.0, mirrored(shin));
  return c;
}

void validate(const SynthConfig& cfg) {
  for (std::size_t b = 0; b < kNumBones; ++b) {
    if (!(cfg.bone_lengths[b] > 0.0))
      throw InvalidArgument("bone " + std::string(joint_name(bone_child(b))) +
                            " must have positive length");
    for (const AngleRange& r : {cfg.ranges[b].roll, cfg.ranges[b].pitch, cfg.ranges[b].yaw})
      if (!(r.lo <= r.hi) || r.hi - r.lo > 2.0 * 3.14159265358979323846)
        throw InvalidArgument("invalid angle range for " +
                              std::string(joint_name(bone_child(b))));
  }
  if (!(cfg.root_yaw.lo <= cfg.root_yaw.hi) || !(cfg.root_tilt.lo <= cfg.root_tilt.hi))
    throw InvalidArgument("invalid root range");
  if (!(cfg.root_jitter >= 0.0)) throw InvalidArgument("root jitter must be non-negative");
}

std::vector<Pose3D> synthesize_poses(const SynthConfig& cfg) {
  validate(cfg);
  Rng rng(cfg.seed);
  std::vector<Pose3D> poses;
  poses.reserve(cfg.n_poses);
  std::array<Eigen::Matrix3d, kNumJoints> frame;
  for (std::size_t n = 0; n < cfg.n_poses; ++n) {
    Pose3D pose;
    const double yaw = draw(rng, cfg.root_yaw);
    const double pitch = draw(rng, cfg.root_tilt);
    const double roll = draw(rng, cfg.root_tilt);
    frame[0] = euler(roll, pitch, yaw);
    Eigen::Vector3d root = cfg.root_position;
    if (cfg.root_jitter > 0.0) {
      std::uniform_real_distribution<double> jitter(-cfg.root_jitter, cfg.root_jitter);
      root.x() += jitter(rng);
      root.y() += jitter(rng);
    }
    pose.coords.row(0) = root.transpose();
    // Joint order lists every parent before its children.
    for (std::size_t b = 0; b < kNumBones; ++b) {
      const JointId child = bone_child(b);
      const std::size_t c = index(child);
      const std::size_t p = index(parent_of(child));
      const BoneRanges& r = cfg.ranges[b];
      const double br = draw(rng, r.roll);
      const double bp = draw(rng, r.pitch);
      const double by = draw(rng, r.yaw);
      frame[c] = frame[p] * euler(br, bp, by);
      const Eigen::Vector3d offset = frame[c] * (cfg.bone_lengths[b] * rest_direction(child));
      pose.coords.row(c) = pose.coords.row(p) + offset.transpose();
    }
    poses.push_back(pose);
  }
  return poses;
}

}  // namespace poselift
