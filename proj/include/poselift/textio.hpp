#pragma once

// Whitespace-separated text formats shared by the command-line tools.
// Comment lines start with '#'; parse failures report the 1-based line.

#include "poselift/camgeom.hpp"
#include "poselift/metrics.hpp"
#include "poselift/mixture.hpp"
#include "poselift/skeleton.hpp"
#include "poselift/trainer.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace poselift::textio {

/// One pose per line: 32 numbers, x then y per joint in JointId order.
std::vector<Pose2D> read_poses2d(std::istream& in, const std::string& source);
void write_poses2d(std::ostream& out, const std::vector<Pose2D>& poses);

/// One pose per line: 48 numbers, x y z per joint.
std::vector<Pose3D> read_poses3d(std::istream& in, const std::string& source);
void write_poses3d(std::ostream& out, const std::vector<Pose3D>& poses);

/// One camera per line: alpha_x alpha_y x0 y0, R row-major (9), T (3).
std::vector<CameraParams> read_cameras(std::istream& in, const std::string& source);
void write_cameras(std::ostream& out, const std::vector<CameraParams>& cams);

/// Header `<N_G> 16`, then one line per component: weight, 32 means and
/// 16 row-major 2x2 blocks.
ResidualMixture read_mixture(std::istream& in, const std::string& source);
void write_mixture(std::ostream& out, const ResidualMixture& model);

/// Rows of 32 residuals, same layout as 2D poses.
ResidualSet read_residuals(std::istream& in, const std::string& source);
void write_residuals(std::ostream& out, const ResidualSet& set);

/// `tag u(32) v(48)` per line. Tags starting with "virt" mark virtual views.
std::vector<TrainingPair> read_pairs(std::istream& in, const std::string& source);
void write_pairs(std::ostream& out, const std::vector<TrainingPair>& pairs);

/// `stage,epoch,loss`.
void write_history_csv(std::ostream& out, const std::vector<HistoryRecord>& history);

/// File helpers; throw IoError when the file cannot be opened.
std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

}  // namespace poselift::textio
