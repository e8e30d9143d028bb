#pragma once

// Evaluation protocols: raw per-joint error, error after rigid alignment, and
// the cross-view camera/subject split.

#include "poselift/posenet.hpp"
#include "poselift/skeleton.hpp"

#include <Eigen/Core>

#include <array>
#include <iosfwd>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace poselift {

/// Mean over joints of the per-joint Euclidean distance (mm).
double mpjpe(const Pose3D& pred, const Pose3D& gt);

struct RigidTransform {
  Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
  Eigen::Vector3d t = Eigen::Vector3d::Zero();
  double scale = 1.0;

  Eigen::Vector3d apply(const Eigen::Vector3d& p) const { return scale * (R * p) + t; }
};

struct Alignment {
  Pose3D aligned;
  RigidTransform transform;
};

/// Least-squares rotation + translation (+ uniform scale) taking `pred` onto
/// `gt`; reflections are excluded. Throws DegenerateConfiguration when the
/// cross-covariance has rank below 2.
Alignment rigid_align(const Pose3D& pred, const Pose3D& gt, bool allow_scale = false);

enum class Protocol { P1, P2, P3 };
Protocol parse_protocol(std::string_view s);
std::string_view protocol_name(Protocol p);

struct EvalSample {
  Pose2D input;
  Pose3D gt;  // any translation; root-centred before scoring
  std::string tag;
};

struct GroupError {
  std::size_t n = 0;
  double mpjpe_mm = 0.0;
};

struct EvalReport {
  std::map<std::string, GroupError> groups;
  GroupError overall;
  std::array<double, kNumJoints> per_joint_mm{};
};

/// Scores fixed predictions. P2 aligns each prediction to its ground truth
/// first. Throws EmptySplit when there is nothing to score.
EvalReport score(const std::vector<Pose3D>& predictions, const std::vector<EvalSample>& test,
                 Protocol protocol, bool allow_scale = false);

/// Runs the network in eval mode over `test` and scores the output.
EvalReport evaluate(GrammarNet& net, const std::vector<EvalSample>& test, Protocol protocol,
                    bool allow_scale = false);

/// `group,n,mpjpe_mm` rows; the overall mean is reported as group "all".
void write_report_csv(std::ostream& out, const EvalReport& report);
void write_report_table(std::ostream& out, const EvalReport& report);

struct SplitSpec {
  std::set<std::string> train_cameras;
  std::set<std::string> test_cameras;
  std::set<std::string> train_subjects;
  std::set<std::string> test_subjects;
};

/// Trains on every other camera and subject; tests on the held-out camera and
/// subjects. Throws InvalidSplit.
SplitSpec make_cross_view_split(const std::set<std::string>& cameras,
                                const std::set<std::string>& subjects,
                                const std::string& test_camera,
                                const std::set<std::string>& test_subjects);

}  // namespace poselift
