#include "poselift/metrics.hpp"

#include "poselift/errors.hpp"
#include "poselift/numfmt.hpp"

#include <Eigen/LU>
#include <Eigen/SVD>

#include <algorithm>
#include <iomanip>
#include <ostream>

namespace poselift {

double mpjpe(const Pose3D& pred, const Pose3D& gt) {
  return (pred.coords - gt.coords).rowwise().norm().mean();
}

Alignment rigid_align(const Pose3D& pred, const Pose3D& gt, bool allow_scale) {
  const Eigen::RowVector3d mu_p = pred.coords.colwise().mean();
  const Eigen::RowVector3d mu_g = gt.coords.colwise().mean();
  const Eigen::MatrixXd P = pred.coords.rowwise() - mu_p;
  const Eigen::MatrixXd G = gt.coords.rowwise() - mu_g;

  const Eigen::Matrix3d cov = G.transpose() * P;
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::Vector3d s = svd.singularValues();
  if (!(s(0) > 0.0) || s(1) <= 1e-12 * s(0))
    throw DegenerateConfiguration("cross-covariance has rank below 2");

  Eigen::Matrix3d D = Eigen::Matrix3d::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) D(2, 2) = -1.0;

  RigidTransform tf;
  tf.R = svd.matrixU() * D * svd.matrixV().transpose();
  if (allow_scale) {
    const double var_p = P.squaredNorm();
    tf.scale = (s.asDiagonal() * D).trace() / var_p;
  }
  tf.t = mu_g.transpose() - tf.scale * tf.R * mu_p.transpose();

  Alignment out;
  out.transform = tf;
  out.aligned.coords = ((tf.scale * (pred.coords * tf.R.transpose())).rowwise() + tf.t.transpose());
  return out;
}

Protocol parse_protocol(std::string_view s) {
  if (s == "p1" || s == "1") return Protocol::P1;
  if (s == "p2" || s == "2") return Protocol::P2;
  if (s == "p3" || s == "3") return Protocol::P3;
  throw InvalidArgument("unknown protocol '" + std::string(s) + "'");
}

std::string_view protocol_name(Protocol p) {
  switch (p) {
    case Protocol::P1: return "p1";
    case Protocol::P2: return "p2";
    case Protocol::P3: return "p3";
  }
  return "p1";
}

EvalReport score(const std::vector<Pose3D>& predictions, const std::vector<EvalSample>& test,
                 Protocol protocol, bool allow_scale) {
  if (test.empty()) throw EmptySplit("no test poses");
  if (predictions.size() != test.size()) throw ShapeMismatch("one prediction per test pose");

  EvalReport report;
  std::map<std::string, double> sums;
  double total = 0.0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const Pose3D gt = root_center_pose3d(test[i].gt);
    Pose3D pred = root_center_pose3d(predictions[i]);
    if (protocol == Protocol::P2) pred = rigid_align(pred, gt, allow_scale).aligned;
    const Eigen::Matrix<double, kNumJoints, 1> err = (pred.coords - gt.coords).rowwise().norm();
    const double e = err.mean();
    const std::string& tag = test[i].tag.empty() ? std::string("all") : test[i].tag;
    sums[tag] += e;
    ++report.groups[tag].n;
    total += e;
    for (std::size_t j = 0; j < kNumJoints; ++j) report.per_joint_mm[j] += err(j);
  }
  for (auto& [tag, g] : report.groups) g.mpjpe_mm = sums[tag] / static_cast<double>(g.n);
  report.overall.n = test.size();
  report.overall.mpjpe_mm = total / static_cast<double>(test.size());
  for (double& v : report.per_joint_mm) v /= static_cast<double>(test.size());
  return report;
}

EvalReport evaluate(GrammarNet& net, const std::vector<EvalSample>& test, Protocol protocol,
                    bool allow_scale) {
  if (test.empty()) throw EmptySplit("no test poses");
  std::vector<Pose2D> inputs;
  inputs.reserve(test.size());
  for (const auto& s : test) inputs.push_back(s.input);
  return score(predict_batch(inputs, net), test, protocol, allow_scale);
}

void write_report_csv(std::ostream& out, const EvalReport& report) {
  out << "group,n,mpjpe_mm\n";
  for (const auto& [tag, g] : report.groups)
    if (tag != "all") out << tag << ',' << g.n << ',' << format_double(g.mpjpe_mm) << '\n';
  out << "all," << report.overall.n << ',' << format_double(report.overall.mpjpe_mm) << '\n';
}

void write_report_table(std::ostream& out, const EvalReport& report) {
  out << std::left << std::setw(20) << "group" << std::right << std::setw(8) << "n"
      << std::setw(14) << "MPJPE (mm)" << '\n';
  auto row = [&](const std::string& tag, const GroupError& g) {
    out << std::left << std::setw(20) << tag << std::right << std::setw(8) << g.n
        << std::setw(14) << std::fixed << std::setprecision(2) << g.mpjpe_mm << '\n';
  };
  for (const auto& [tag, g] : report.groups)
    if (tag != "all") row(tag, g);
  row("all", report.overall);
  out << "per joint:";
  for (std::size_t j = 0; j < kNumJoints; ++j)
    out << ' ' << joint_name(static_cast<JointId>(j)) << '=' << std::setprecision(1)
        << report.per_joint_mm[j];
  out << '\n' << std::defaultfloat << std::setprecision(6);
}

SplitSpec make_cross_view_split(const std::set<std::string>& cameras,
                                const std::set<std::string>& subjects,
                                const std::string& test_camera,
                                const std::set<std::string>& test_subjects) {
  if (!cameras.count(test_camera))
    throw InvalidSplit("test camera '" + test_camera + "' is not among the cameras");
  if (test_subjects.empty()) throw InvalidSplit("no test subjects");
  for (const auto& s : test_subjects)
    if (!subjects.count(s)) throw InvalidSplit("unknown test subject '" + s + "'");

  SplitSpec split;
  split.test_cameras = {test_camera};
  split.test_subjects = test_subjects;
  for (const auto& c : cameras)
    if (c != test_camera) split.train_cameras.insert(c);
  for (const auto& s : subjects)
    if (!test_subjects.count(s)) split.train_subjects.insert(s);
  if (split.train_cameras.empty() || split.train_subjects.empty())
    throw InvalidSplit("split leaves no training data");
  return split;
}

}  // namespace poselift
