#pragma once

// Synthetic motion-capture stand-in: forward kinematics over the 16-joint
// tree with joint angles drawn uniformly from per-bone ranges.

#include "poselift/skeleton.hpp"

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <vector>

namespace poselift {

inline constexpr std::size_t kNumBones = kNumJoints - 1;

/// Parent of every joint; the hip is its own parent.
JointId parent_of(JointId j);

/// Bone b connects joint b + 1 to its parent.
inline JointId bone_child(std::size_t bone) { return static_cast<JointId>(bone + 1); }

struct AngleRange {
  double lo = 0.0;
  double hi = 0.0;
};

/// Local rotation ranges (radians) about the parent frame's x (roll),
/// y (pitch) and z (yaw) axes.
struct BoneRanges {
  AngleRange roll;
  AngleRange pitch;
  AngleRange yaw;
};

struct SynthConfig {
  std::size_t n_poses = 100;
  /// Millimetres, indexed by bone (see bone_child).
  std::array<double, kNumBones> bone_lengths{};
  std::array<BoneRanges, kNumBones> ranges{};
  /// Whole-body heading about world z; 0 faces +x.
  AngleRange root_yaw{-0.785398163397448, 0.785398163397448};
  AngleRange root_tilt{-0.1, 0.1};
  Eigen::Vector3d root_position{0.0, 0.0, 950.0};
  /// Uniform jitter of the hip position in the ground plane (mm).
  double root_jitter = 100.0;
  std::uint64_t seed = 0;

  /// Adult proportions with mirrored left/right ranges.
  static SynthConfig defaults();
};

/// Throws InvalidArgument on non-positive bones or inverted ranges.
void validate(const SynthConfig& cfg);

/// World-frame poses (z up). Deterministic per seed; every bone has exactly
/// its configured length.
std::vector<Pose3D> synthesize_poses(const SynthConfig& cfg);

}  // namespace poselift
