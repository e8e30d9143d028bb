#include "poselift/textio.hpp"

#include "poselift/errors.hpp"
#include "poselift/numfmt.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace poselift::textio {

namespace {

struct Record {
  std::size_t line = 0;
  std::vector<std::string> tokens;
};

std::vector<Record> records(std::istream& in) {
  std::vector<Record> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    Record r;
    r.line = n;
    std::istringstream ss(line);
    for (std::string tok; ss >> tok;) r.tokens.push_back(std::move(tok));
    out.push_back(std::move(r));
  }
  return out;
}

Eigen::VectorXd numbers(const Record& r, const std::string& source, std::size_t offset,
                        std::size_t count) {
  if (r.tokens.size() != offset + count)
    throw ParseError(source, r.line, "expected " + std::to_string(offset + count) +
                                         " fields, got " + std::to_string(r.tokens.size()));
  Eigen::VectorXd v(static_cast<Eigen::Index>(count));
  for (std::size_t i = 0; i < count; ++i) {
    const auto d = parse_double(r.tokens[offset + i]);
    if (!d || !std::isfinite(*d))
      throw ParseError(source, r.line, "malformed number '" + r.tokens[offset + i] + "'");
    v(static_cast<Eigen::Index>(i)) = *d;
  }
  return v;
}

void write_row(std::ostream& out, const Eigen::Ref<const Eigen::VectorXd>& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i) out << ' ';
    out << format_double(v(i));
  }
}

}  // namespace

std::vector<Pose2D> read_poses2d(std::istream& in, const std::string& source) {
  std::vector<Pose2D> out;
  for (const auto& r : records(in)) out.push_back(Pose2D::from_flat(numbers(r, source, 0, kPose2DDim)));
  return out;
}

void write_poses2d(std::ostream& out, const std::vector<Pose2D>& poses) {
  for (const auto& p : poses) {
    write_row(out, p.flat());
    out << '\n';
  }
}

std::vector<Pose3D> read_poses3d(std::istream& in, const std::string& source) {
  std::vector<Pose3D> out;
  for (const auto& r : records(in)) out.push_back(Pose3D::from_flat(numbers(r, source, 0, kPose3DDim)));
  return out;
}

void write_poses3d(std::ostream& out, const std::vector<Pose3D>& poses) {
  for (const auto& p : poses) {
    write_row(out, p.flat());
    out << '\n';
  }
}

std::vector<CameraParams> read_cameras(std::istream& in, const std::string& source) {
  std::vector<CameraParams> out;
  for (const auto& r : records(in)) {
    const Eigen::VectorXd v = numbers(r, source, 0, 16);
    CameraParams c;
    c.intrinsics = {v(0), v(1), v(2), v(3)};
    for (int i = 0; i < 9; ++i) c.extrinsics.R(i / 3, i % 3) = v(4 + i);
    c.extrinsics.T = v.segment<3>(13);
    try {
      validate(c);
    } catch (const Error& e) {
      throw ParseError(source, r.line, e.what());
    }
    out.push_back(c);
  }
  return out;
}

void write_cameras(std::ostream& out, const std::vector<CameraParams>& cams) {
  for (const auto& c : cams) {
    Eigen::VectorXd v(16);
    v << c.intrinsics.alpha_x, c.intrinsics.alpha_y, c.intrinsics.x0, c.intrinsics.y0;
    for (int i = 0; i < 9; ++i) v(4 + i) = c.extrinsics.R(i / 3, i % 3);
    v.segment<3>(13) = c.extrinsics.T;
    write_row(out, v);
    out << '\n';
  }
}

ResidualMixture read_mixture(std::istream& in, const std::string& source) {
  const auto recs = records(in);
  if (recs.empty()) throw ParseError(source, 1, "missing header");
  const Eigen::VectorXd head = numbers(recs[0], source, 0, 2);
  if (head(1) != static_cast<double>(kNumJoints))
    throw ParseError(source, recs[0].line, "mixture must cover 16 joints");
  if (!(head(0) >= 1.0) || head(0) != std::floor(head(0)))
    throw ParseError(source, recs[0].line, "bad component count");
  const auto K = static_cast<std::size_t>(head(0));
  if (recs.size() != K + 1)
    throw ParseError(source, recs.back().line, "expected " + std::to_string(K) +
                                                   " component records, got " +
                                                   std::to_string(recs.size() - 1));
  constexpr std::size_t kWidth = 1 + kPose2DDim + 4 * kNumJoints;
  ResidualMixture m;
  m.means.resize(static_cast<Eigen::Index>(K), kPose2DDim);
  for (std::size_t j = 0; j < K; ++j) {
    const Eigen::VectorXd v = numbers(recs[j + 1], source, 0, kWidth);
    m.weights.push_back(v(0));
    m.means.row(static_cast<Eigen::Index>(j)) = v.segment<kPose2DDim>(1).transpose();
    JointBlocks blocks(kNumJoints);
    for (std::size_t i = 0; i < kNumJoints; ++i) {
      const Eigen::Index o = 1 + kPose2DDim + 4 * static_cast<Eigen::Index>(i);
      blocks[i] << v(o), v(o + 1), v(o + 2), v(o + 3);
    }
    m.joint_covs.push_back(std::move(blocks));
  }
  try {
    validate(m);
  } catch (const Error& e) {
    throw ParseError(source, recs.back().line, e.what());
  }
  return m;
}

void write_mixture(std::ostream& out, const ResidualMixture& model) {
  out << model.n_components() << ' ' << kNumJoints << '\n';
  for (std::size_t j = 0; j < model.n_components(); ++j) {
    out << format_double(model.weights[j]) << ' ';
    write_row(out, model.means.row(static_cast<Eigen::Index>(j)).transpose());
    for (const auto& b : model.joint_covs[j])
      out << ' ' << format_double(b(0, 0)) << ' ' << format_double(b(0, 1)) << ' '
          << format_double(b(1, 0)) << ' ' << format_double(b(1, 1));
    out << '\n';
  }
}

ResidualSet read_residuals(std::istream& in, const std::string& source) {
  const auto recs = records(in);
  ResidualSet set;
  set.residuals.resize(static_cast<Eigen::Index>(recs.size()), kPose2DDim);
  for (std::size_t i = 0; i < recs.size(); ++i)
    set.residuals.row(static_cast<Eigen::Index>(i)) = numbers(recs[i], source, 0, kPose2DDim).transpose();
  return set;
}

void write_residuals(std::ostream& out, const ResidualSet& set) {
  for (Eigen::Index i = 0; i < set.residuals.rows(); ++i) {
    write_row(out, set.residuals.row(i).transpose());
    out << '\n';
  }
}

std::vector<TrainingPair> read_pairs(std::istream& in, const std::string& source) {
  std::vector<TrainingPair> out;
  for (const auto& r : records(in)) {
    const Eigen::VectorXd v = numbers(r, source, 1, kPose2DDim + kPose3DDim);
    TrainingPair p;
    p.camera_tag = r.tokens[0];
    p.is_virtual = p.camera_tag.rfind("virt", 0) == 0;
    p.u = Pose2D::from_flat(v.head<kPose2DDim>());
    p.v = Pose3D::from_flat(v.tail<kPose3DDim>());
    out.push_back(std::move(p));
  }
  return out;
}

void write_pairs(std::ostream& out, const std::vector<TrainingPair>& pairs) {
  for (const auto& p : pairs) {
    out << p.camera_tag << ' ';
    write_row(out, p.u.flat());
    out << ' ';
    write_row(out, p.v.flat());
    out << '\n';
  }
}

void write_history_csv(std::ostream& out, const std::vector<HistoryRecord>& history) {
  out << "stage,epoch,loss\n";
  for (const auto& h : history)
    out << h.stage << ',' << h.epoch << ',' << format_double(h.loss) << '\n';
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  f << content;
  if (!f) throw IoError("failed writing '" + path + "'");
}

}  // namespace poselift::textio
