#include "poselift/errors.hpp"
#include "poselift/textio.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <sstream>

namespace poselift {
namespace {

template <class W, class R>
auto round_trip(const W& write, const R& read) {
  std::stringstream ss;
  write(ss);
  return read(ss);
}

std::size_t parse_error_line(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const ParseError& e) {
    return e.line();
  }
  return 0;
}

TEST(TextIo, PosesRoundTripBitExact) {
  std::mt19937_64 rng(81);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Pose2D> p2;
    std::vector<Pose3D> p3;
    for (int i = 0; i < 5; ++i) {
      p2.push_back(testing::random_pose2d(rng, std::pow(10.0, trial % 7 - 3)));
      p3.push_back(testing::random_pose3d(rng, std::pow(10.0, trial % 5)));
    }
    const auto b2 = round_trip([&](std::ostream& o) { textio::write_poses2d(o, p2); },
                               [](std::istream& i) { return textio::read_poses2d(i, "mem"); });
    const auto b3 = round_trip([&](std::ostream& o) { textio::write_poses3d(o, p3); },
                               [](std::istream& i) { return textio::read_poses3d(i, "mem"); });
    ASSERT_EQ(b2.size(), 5u);
    for (int i = 0; i < 5; ++i) {
      EXPECT_EQ(b2[i].coords, p2[i].coords);
      EXPECT_EQ(b3[i].coords, p3[i].coords);
    }
  }
}

TEST(TextIo, CamerasRoundTrip) {
  std::mt19937_64 rng(82);
  std::vector<CameraParams> cams{testing::random_camera(rng), testing::random_camera(rng)};
  const auto back = round_trip([&](std::ostream& o) { textio::write_cameras(o, cams); },
                               [](std::istream& i) { return textio::read_cameras(i, "mem"); });
  ASSERT_EQ(back.size(), 2u);
  for (int c = 0; c < 2; ++c) {
    EXPECT_EQ(back[c].extrinsics.R, cams[c].extrinsics.R);
    EXPECT_EQ(back[c].extrinsics.T, cams[c].extrinsics.T);
    EXPECT_EQ(back[c].intrinsics.matrix(), cams[c].intrinsics.matrix());
  }
}

TEST(TextIo, MixtureRoundTrip) {
  ResidualMixture m = white_noise_baseline(2.5);
  m.weights = {0.25, 0.75};
  m.means = Eigen::MatrixXd::Constant(2, kPose2DDim, 1.0 / 3.0);
  JointBlocks b(kNumJoints);
  for (auto& x : b) x << 2.0, 0.3, 0.3, 1.0 / 7.0;
  m.joint_covs.push_back(b);
  const auto back = round_trip([&](std::ostream& o) { textio::write_mixture(o, m); },
                               [](std::istream& i) { return textio::read_mixture(i, "mem"); });
  EXPECT_EQ(back.weights, m.weights);
  EXPECT_EQ(back.means, m.means);
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t j = 0; j < kNumJoints; ++j) EXPECT_EQ(back.joint_covs[c][j], m.joint_covs[c][j]);
}

TEST(TextIo, ResidualsRoundTrip) {
  ResidualSet set;
  set.residuals = Eigen::MatrixXd::Random(6, kPose2DDim) * 7.0;
  const auto back = round_trip([&](std::ostream& o) { textio::write_residuals(o, set); },
                               [](std::istream& i) { return textio::read_residuals(i, "mem"); });
  EXPECT_EQ(back.residuals, set.residuals);
}

TEST(TextIo, PairsRoundTrip) {
  std::mt19937_64 rng(83);
  std::vector<TrainingPair> pairs;
  for (const char* tag : {"real0", "virt3", "real2"}) {
    TrainingPair p;
    p.u = testing::random_pose2d(rng);
    p.v = testing::random_pose3d(rng);
    p.camera_tag = tag;
    p.is_virtual = std::string(tag).rfind("virt", 0) == 0;
    pairs.push_back(p);
  }
  const auto back = round_trip([&](std::ostream& o) { textio::write_pairs(o, pairs); },
                               [](std::istream& i) { return textio::read_pairs(i, "mem"); });
  ASSERT_EQ(back.size(), 3u);
  for (int i = 0; i < 3; ++i) {
    EXPECT_EQ(back[i].u.coords, pairs[i].u.coords);
    EXPECT_EQ(back[i].v.coords, pairs[i].v.coords);
    EXPECT_EQ(back[i].camera_tag, pairs[i].camera_tag);
    EXPECT_EQ(back[i].is_virtual, pairs[i].is_virtual);
  }
}

TEST(TextIo, CommentsAndBlankLinesSkipped) {
  std::string line;
  for (int i = 0; i < 32; ++i) line += std::to_string(i) + " ";
  std::stringstream ss("# header\n\n" + line + "\n");
  const auto poses = textio::read_poses2d(ss, "mem");
  ASSERT_EQ(poses.size(), 1u);
  EXPECT_EQ(poses[0].coords(15, 1), 31.0);
}

TEST(TextIo, MalformedInputsReportLineNumbers) {
  std::string good;
  for (int i = 0; i < 48; ++i) good += "1 ";
  EXPECT_EQ(parse_error_line([&] {
    std::stringstream ss(good + "\n# c\n" + good + "x\n");
    textio::read_poses3d(ss, "f");
  }), 3u);
  EXPECT_EQ(parse_error_line([&] {
    std::stringstream ss(good + "\n1 2 3\n");
    textio::read_poses3d(ss, "f");
  }), 2u);
  EXPECT_EQ(parse_error_line([&] {
    std::stringstream ss("2 16\n");
    textio::read_mixture(ss, "f");
  }), 1u);
  EXPECT_EQ(parse_error_line([&] {
    std::stringstream ss("real0 1 2\n");
    textio::read_pairs(ss, "f");
  }), 1u);
  EXPECT_EQ(parse_error_line([&] {
    std::stringstream ss("1 1 0 0 1 0 0 0 1 0 0 0 1 0 0 nan\n");
    textio::read_cameras(ss, "f");
  }), 1u);
}

TEST(TextIo, MissingFileIsIoError) {
  EXPECT_THROW(textio::read_file("/nonexistent/poselift/file"), IoError);
}

TEST(TextIo, HistoryCsv) {
  std::ostringstream ss;
  textio::write_history_csv(ss, {{1, 0, 12.5}, {2, 3, 0.25}});
  EXPECT_EQ(ss.str(), "stage,epoch,loss\n1,0,12.5\n2,3,0.25\n");
}

}  // namespace
}  // namespace poselift
