#include "poselift/errors.hpp"
#include "poselift/metrics.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <sstream>

namespace poselift {
namespace {

Pose3D rooted(std::mt19937_64& rng) { return root_center_pose3d(testing::random_pose3d(rng, 500.0)); }

Pose3D transform(const Pose3D& p, const Eigen::Matrix3d& R, const Eigen::Vector3d& t, double s = 1.0) {
  Pose3D out;
  out.coords = ((p.coords * R.transpose()) * s).rowwise() + t.transpose();
  return out;
}

double naive_mpjpe(const Pose3D& a, const Pose3D& b) {
  double sum = 0.0;
  for (std::size_t j = 0; j < kNumJoints; ++j) {
    double d2 = 0.0;
    for (int k = 0; k < 3; ++k) d2 += (a.coords(j, k) - b.coords(j, k)) * (a.coords(j, k) - b.coords(j, k));
    sum += std::sqrt(d2);
  }
  return sum / kNumJoints;
}

TEST(Mpjpe, HandCases) {
  std::mt19937_64 rng(61);
  const Pose3D gt = rooted(rng);
  EXPECT_EQ(mpjpe(gt, gt), 0.0);
  Pose3D shifted = gt;
  shifted.coords.col(0).array() += 1.0;
  EXPECT_NEAR(mpjpe(shifted, gt), 1.0, 1e-12);
}

TEST(Mpjpe, MatchesNaiveOracle) {
  std::mt19937_64 rng(62);
  for (int i = 0; i < 100; ++i) {
    const Pose3D a = rooted(rng), b = rooted(rng);
    EXPECT_NEAR(mpjpe(a, b), naive_mpjpe(a, b), 1e-12);
  }
}

TEST(Mpjpe, MetricProperties) {
  std::mt19937_64 rng(63);
  for (int i = 0; i < 200; ++i) {
    const Pose3D a = rooted(rng), b = rooted(rng), c = rooted(rng);
    EXPECT_EQ(mpjpe(a, b), mpjpe(b, a));
    EXPECT_GT(mpjpe(a, b), 0.0);
    EXPECT_LE(mpjpe(a, c), mpjpe(a, b) + mpjpe(b, c) + 1e-12);
  }
}

TEST(RigidAlign, ExactlyRecoversProperMotions) {
  std::mt19937_64 rng(64);
  std::uniform_real_distribution<double> u(-1000.0, 1000.0);
  for (int i = 0; i < 200; ++i) {
    const Pose3D gt = rooted(rng);
    const Eigen::Matrix3d R = testing::random_rotation(rng);
    const Pose3D pred = transform(gt, R, Eigen::Vector3d(u(rng), u(rng), u(rng)));
    const Alignment a = rigid_align(pred, gt);
    EXPECT_LT(mpjpe(a.aligned, gt), 1e-9);
    EXPECT_NEAR(a.transform.R.determinant(), 1.0, 1e-12);
    EXPECT_EQ(a.transform.scale, 1.0);
  }
}

TEST(RigidAlign, ScaleOnlyWhenAllowed) {
  std::mt19937_64 rng(65);
  const Pose3D gt = rooted(rng);
  Pose3D pred = gt;
  pred.coords *= 2.0;
  EXPECT_LT(mpjpe(rigid_align(pred, gt, true).aligned, gt), 1e-9);
  EXPECT_NEAR(rigid_align(pred, gt, true).transform.scale, 0.5, 1e-12);
  EXPECT_GT(mpjpe(rigid_align(pred, gt, false).aligned, gt), 1.0);
}

TEST(RigidAlign, ReflectionIsNotUsed) {
  std::mt19937_64 rng(66);
  const Pose3D gt = rooted(rng);
  Pose3D mirrored = gt;
  mirrored.coords.col(0) *= -1.0;
  const Alignment a = rigid_align(mirrored, gt);
  EXPECT_NEAR(a.transform.R.determinant(), 1.0, 1e-12);
  EXPECT_GT(mpjpe(a.aligned, gt), 1.0);
}

TEST(RigidAlign, BeatsRandomSearch) {
  std::mt19937_64 rng(67);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 5; ++trial) {
    const Pose3D gt = rooted(rng), pred = rooted(rng);
    for (bool scale : {false, true}) {
      const Alignment a = rigid_align(pred, gt, scale);
      const double best = (a.aligned.coords - gt.coords).squaredNorm();
      for (int k = 0; k < 1000; ++k) {
        // Perturb the optimum and also try unrelated motions.
        Eigen::Matrix3d R = k % 2 ? testing::random_rotation(rng)
                                  : Eigen::Matrix3d(Eigen::AngleAxisd(0.05 * n(rng), Eigen::Vector3d(n(rng), n(rng), n(rng)).normalized()) * a.transform.R);
        const Eigen::Vector3d t = a.transform.t + 20.0 * Eigen::Vector3d(n(rng), n(rng), n(rng));
        const double s = scale ? a.transform.scale * std::exp(0.1 * n(rng)) : 1.0;
        const Pose3D cand = transform(pred, R, t, s);
        EXPECT_LE(best, (cand.coords - gt.coords).squaredNorm() + 1e-9);
      }
    }
  }
}

TEST(RigidAlign, InvariantToPreAppliedMotion) {
  std::mt19937_64 rng(68);
  for (int i = 0; i < 50; ++i) {
    const Pose3D gt = rooted(rng), pred = rooted(rng);
    const Pose3D moved = transform(pred, testing::random_rotation(rng), Eigen::Vector3d(10.0, -200.0, 30.0));
    EXPECT_NEAR(mpjpe(rigid_align(pred, gt).aligned, gt), mpjpe(rigid_align(moved, gt).aligned, gt), 1e-9);
    Pose3D bigger = pred;
    bigger.coords *= 3.5;
    EXPECT_NEAR(mpjpe(rigid_align(pred, gt, true).aligned, gt), mpjpe(rigid_align(bigger, gt, true).aligned, gt), 1e-9);
  }
}

TEST(RigidAlign, DegenerateConfiguration) {
  std::mt19937_64 rng(69);
  const Pose3D gt = rooted(rng);
  Pose3D pred;
  pred.coords.setZero();
  EXPECT_THROW(rigid_align(pred, gt), DegenerateConfiguration);
  for (std::size_t j = 0; j < kNumJoints; ++j) pred.coords.row(j) = Eigen::RowVector3d(1.0, 2.0, 3.0) * double(j);
  EXPECT_THROW(rigid_align(pred, gt), DegenerateConfiguration);
}

std::vector<EvalSample> samples(std::mt19937_64& rng, std::size_t n) {
  std::vector<EvalSample> out;
  for (std::size_t i = 0; i < n; ++i) {
    EvalSample s;
    s.input = testing::random_pose2d(rng);
    s.gt = testing::random_pose3d(rng);
    s.tag = i % 3 == 0 ? "walk" : "sit";
    out.push_back(s);
  }
  return out;
}

TEST(Score, PerfectPredictorIsZeroUnderEveryProtocol) {
  std::mt19937_64 rng(70);
  const auto test = samples(rng, 9);
  std::vector<Pose3D> preds;
  for (const auto& s : test) preds.push_back(root_center_pose3d(s.gt));
  for (Protocol p : {Protocol::P1, Protocol::P2, Protocol::P3}) {
    const EvalReport r = score(preds, test, p);
    EXPECT_LT(r.overall.mpjpe_mm, 1e-9);
    EXPECT_EQ(r.overall.n, 9u);
  }
}

TEST(Score, MatchesNaiveRecomputationAndAlignmentHelps) {
  std::mt19937_64 rng(71);
  const auto test = samples(rng, 12);
  std::vector<Pose3D> preds;
  for (std::size_t i = 0; i < test.size(); ++i) preds.push_back(rooted(rng));
  const EvalReport p1 = score(preds, test, Protocol::P1);
  const EvalReport p2 = score(preds, test, Protocol::P2);
  double total = 0.0, walk = 0.0;
  std::array<double, kNumJoints> joints{};
  for (std::size_t i = 0; i < test.size(); ++i) {
    const Pose3D gt = root_center_pose3d(test[i].gt);
    const double e = naive_mpjpe(preds[i], gt);
    total += e;
    if (test[i].tag == "walk") walk += e;
    for (std::size_t j = 0; j < kNumJoints; ++j) joints[j] += (preds[i].coords.row(j) - gt.coords.row(j)).norm();
  }
  EXPECT_NEAR(p1.overall.mpjpe_mm, total / 12.0, 1e-12);
  EXPECT_NEAR(p1.groups.at("walk").mpjpe_mm, walk / 4.0, 1e-12);
  EXPECT_EQ(p1.groups.at("sit").n, 8u);
  for (std::size_t j = 0; j < kNumJoints; ++j) EXPECT_NEAR(p1.per_joint_mm[j], joints[j] / 12.0, 1e-12);
  EXPECT_LE(p2.overall.mpjpe_mm, p1.overall.mpjpe_mm);
  for (const auto& [tag, g] : p2.groups) EXPECT_LE(g.mpjpe_mm, p1.groups.at(tag).mpjpe_mm);
}

TEST(Score, EmptyAndMismatchedInputs) {
  EXPECT_THROW(score({}, {}, Protocol::P1), EmptySplit);
}

TEST(Report, CsvLayout) {
  std::mt19937_64 rng(72);
  const auto test = samples(rng, 3);
  std::vector<Pose3D> preds;
  for (const auto& s : test) preds.push_back(root_center_pose3d(s.gt));
  std::ostringstream ss;
  write_report_csv(ss, score(preds, test, Protocol::P1));
  const std::string csv = ss.str();
  EXPECT_EQ(csv.rfind("group,n,mpjpe_mm\n", 0), 0u);
  EXPECT_NE(csv.find("\nall,3,"), std::string::npos);
  EXPECT_NE(csv.find("\nsit,2,"), std::string::npos);
}

TEST(Protocols, ParseAndName) {
  EXPECT_EQ(parse_protocol("p2"), Protocol::P2);
  EXPECT_EQ(protocol_name(Protocol::P3), "p3");
  EXPECT_THROW(parse_protocol("p4"), InvalidArgument);
}

TEST(CrossViewSplit, HoldsOutOneCamera) {
  const std::set<std::string> cams{"c0", "c1", "c2", "c3"}, subjects{"S1", "S5", "S9", "S11"};
  const SplitSpec s = make_cross_view_split(cams, subjects, "c3", {"S9", "S11"});
  EXPECT_EQ(s.train_cameras.size(), 3u);
  EXPECT_FALSE(s.train_cameras.count("c3"));
  EXPECT_EQ(s.test_cameras, std::set<std::string>{"c3"});
  std::set<std::string> all = s.train_cameras;
  all.insert(s.test_cameras.begin(), s.test_cameras.end());
  EXPECT_EQ(all, cams);
  EXPECT_EQ(s.train_subjects, (std::set<std::string>{"S1", "S5"}));
  EXPECT_THROW(make_cross_view_split(cams, subjects, "c9", {"S9"}), InvalidSplit);
  EXPECT_THROW(make_cross_view_split(cams, subjects, "c0", {"S99"}), InvalidSplit);
  EXPECT_THROW(make_cross_view_split(cams, subjects, "c0", subjects), InvalidSplit);
}

}  // namespace
}  // namespace poselift
