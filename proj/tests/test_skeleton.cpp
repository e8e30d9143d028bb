#include "poselift/errors.hpp"
#include "poselift/skeleton.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <set>

namespace poselift {
namespace {

using J = JointId;

TEST(Skeleton, JointIndicesAreABijection) {
  std::set<std::size_t> seen;
  for (JointId j : all_joints()) seen.insert(index(j));
  EXPECT_EQ(seen.size(), kNumJoints);
  EXPECT_EQ(*seen.begin(), 0u);
  EXPECT_EQ(*seen.rbegin(), kNumJoints - 1);
  EXPECT_EQ(joint_name(J::Hip), "Hip");
  EXPECT_EQ(joint_name(J::RFoot), "RFoot");
}

TEST(GrammarCatalog, ChainCountsAndOrder) {
  const auto& cat = grammar_catalog();
  ASSERT_EQ(cat.size(), 9u);
  std::size_t kin = 0, sym = 0, crd = 0;
  for (const auto& c : cat) {
    kin += c.kind == ChainKind::Kinematic;
    sym += c.kind == ChainKind::Symmetry;
    crd += c.kind == ChainKind::Coordination;
  }
  EXPECT_EQ(kin, 5u);
  EXPECT_EQ(sym, 2u);
  EXPECT_EQ(crd, 2u);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(cat[i].kind, ChainKind::Kinematic);
  for (std::size_t i = 5; i < 7; ++i) EXPECT_EQ(cat[i].kind, ChainKind::Symmetry);
  for (std::size_t i = 7; i < 9; ++i) EXPECT_EQ(cat[i].kind, ChainKind::Coordination);
}

TEST(GrammarCatalog, KinematicChainsMatchJointForJoint) {
  const auto& cat = grammar_catalog();
  EXPECT_EQ(cat[0].joints, (std::vector<JointId>{J::Head, J::Thorax, J::Spine, J::Hip}));
  EXPECT_EQ(cat[1].joints, (std::vector<JointId>{J::LShoulder, J::LElbow, J::LWrist}));
  EXPECT_EQ(cat[2].joints, (std::vector<JointId>{J::RShoulder, J::RElbow, J::RWrist}));
  EXPECT_EQ(cat[3].joints, (std::vector<JointId>{J::LHip, J::LKnee, J::LFoot}));
  EXPECT_EQ(cat[4].joints, (std::vector<JointId>{J::RHip, J::RKnee, J::RFoot}));
}

TEST(GrammarCatalog, PairChainsReferenceTheRightLimbs) {
  const auto& cat = grammar_catalog();
  auto names = [&](std::size_t c) {
    return std::make_pair(cat[cat[c].pair[0]].name, cat[cat[c].pair[1]].name);
  };
  EXPECT_EQ(names(5), std::make_pair(std::string_view("l.arm"), std::string_view("r.arm")));
  EXPECT_EQ(names(6), std::make_pair(std::string_view("l.leg"), std::string_view("r.leg")));
  EXPECT_EQ(names(7), std::make_pair(std::string_view("l.arm"), std::string_view("r.leg")));
  EXPECT_EQ(names(8), std::make_pair(std::string_view("r.arm"), std::string_view("l.leg")));
  for (std::size_t c = 5; c < 9; ++c) {
    EXPECT_EQ(cat[cat[c].pair[0]].joints.size(), 3u);
    EXPECT_EQ(cat[cat[c].pair[1]].joints.size(), 3u);
  }
}

TEST(GrammarCatalog, LimbJointsAppearOncePerGrammarKind) {
  const auto& cat = grammar_catalog();
  std::array<std::array<int, 3>, kNumJoints> counts{};
  for (const auto& c : cat) {
    const int kind = static_cast<int>(c.kind);
    if (c.kind == ChainKind::Kinematic) {
      for (JointId j : c.joints) ++counts[index(j)][kind];
    } else {
      for (std::size_t side : c.pair)
        for (JointId j : cat[side].joints) ++counts[index(j)][kind];
    }
  }
  for (JointId j : all_joints()) {
    const auto& c = counts[index(j)];
    EXPECT_EQ(c[0], 1) << joint_name(j);
    const bool spine = j == J::Hip || j == J::Spine || j == J::Thorax || j == J::Head;
    EXPECT_EQ(c[1], spine ? 0 : 1) << joint_name(j);
    EXPECT_EQ(c[2], spine ? 0 : 1) << joint_name(j);
  }
}

TEST(NormalizePose2D, IdentityOnNormalizedPose) {
  std::mt19937_64 rng(3);
  const Pose2D p = normalize_pose2d(testing::random_pose2d(rng)).first;
  const auto [q, n] = normalize_pose2d(p);
  EXPECT_LT((q.coords - p.coords).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT(n.offset.norm(), 1e-12);
  EXPECT_NEAR(n.scale, 1.0, 1e-12);
}

TEST(NormalizePose2D, TranslationEquivariant) {
  std::mt19937_64 rng(4);
  const Pose2D base = normalize_pose2d(testing::random_pose2d(rng)).first;
  Pose2D shifted = base;
  shifted.coords.rowwise() += Eigen::RowVector2d(5.0, 7.0);
  const auto [q, n] = normalize_pose2d(shifted);
  EXPECT_LT((q.coords - base.coords).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_NEAR(n.offset.x(), 5.0, 1e-12);
  EXPECT_NEAR(n.offset.y(), 7.0, 1e-12);
}

TEST(NormalizePose2D, RoundTripOnRandomPoses) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const Pose2D p = testing::random_pose2d(rng, 1.0 + trial);
    const auto [q, n] = normalize_pose2d(p);
    EXPECT_LT(q.coords.colwise().mean().norm(), 1e-12);
    EXPECT_NEAR(std::sqrt(q.coords.squaredNorm() / kNumJoints), 1.0, 1e-12);
    const Pose2D back = denormalize_pose2d(q, n);
    EXPECT_LE((back.coords - p.coords).norm(), 1e-9 * p.coords.norm());
  }
}

TEST(NormalizePose2D, CoincidentJointsAreDegenerate) {
  Pose2D p;
  p.coords.rowwise() = Eigen::RowVector2d(3.0, -2.0);
  EXPECT_THROW(normalize_pose2d(p), DegeneratePose);
}

TEST(RootCenter, MovesHipToOrigin) {
  std::mt19937_64 rng(6);
  Pose3D p = testing::random_pose3d(rng);
  p.coords.row(0) = Eigen::RowVector3d(10.0, 20.0, 30.0);
  const Pose3D c = root_center_pose3d(p);
  EXPECT_EQ(c.joint(J::Hip), Eigen::Vector3d::Zero());
  EXPECT_EQ(c.coords.row(5), p.coords.row(5) - Eigen::RowVector3d(10.0, 20.0, 30.0));

  const Pose3D again = root_center_pose3d(c);
  EXPECT_EQ(again.coords, c.coords);
}

TEST(RootCenter, PreservesPairwiseDistances) {
  std::mt19937_64 rng(7);
  Pose3D p = testing::random_pose3d(rng);
  p.coords.row(0) = Eigen::RowVector3d(0.25, -0.5, 1.0);
  const Pose3D c = root_center_pose3d(p);
  for (std::size_t a = 0; a < kNumJoints; ++a)
    for (std::size_t b = 0; b < kNumJoints; ++b)
      EXPECT_EQ((c.coords.row(a) - c.coords.row(b)).norm(), (p.coords.row(a) - p.coords.row(b)).norm());
}

}  // namespace
}  // namespace poselift
