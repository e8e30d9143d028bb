#pragma once

// Gaussian mixture over 2D detection residuals with one 2x2 covariance block
// per joint: fitting (k-means warm start + EM), density and sampling.

#include "poselift/skeleton.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace poselift {

inline constexpr double kCovarianceFloor = 1e-6;

using JointBlocks = std::vector<Eigen::Matrix2d>;  // kNumJoints entries

struct ResidualMixture {
  std::vector<double> weights;
  /// n_components x 32, rows in JointId order (x, y per joint).
  Eigen::MatrixXd means;
  /// n_components entries of kNumJoints blocks each.
  std::vector<JointBlocks> joint_covs;

  std::size_t n_components() const { return weights.size(); }
};

/// Rows are flattened (detection - ground truth) residuals in pixels.
struct ResidualSet {
  Eigen::MatrixXd residuals;  // M x 32

  std::size_t size() const { return static_cast<std::size_t>(residuals.rows()); }
};

/// Throws InvalidArgument unless weights sum to 1 and every block is SPD.
void validate(const ResidualMixture& model);

/// Clamps the eigenvalues of a symmetric 2x2 matrix from below.
Eigen::Matrix2d floor_covariance(const Eigen::Matrix2d& cov, double floor = kCovarianceFloor);

/// Log density of a Gaussian with block-diagonal covariance; `x` and `mean`
/// hold 2 * blocks.size() entries.
double block_gaussian_logpdf(const Eigen::Ref<const Eigen::VectorXd>& x,
                             const Eigen::Ref<const Eigen::VectorXd>& mean,
                             std::span<const Eigen::Matrix2d> blocks);

/// k-means++ seeding, Lloyd iterations (cap 100), then per-cluster weights,
/// centroids and floored per-joint covariances. Throws InsufficientData when
/// there are fewer rows than components.
ResidualMixture kmeans_init(const ResidualSet& data, std::size_t k, std::uint64_t seed);

struct EmResult {
  ResidualMixture model;
  /// Log-likelihood of the initial model followed by one entry per iteration.
  std::vector<double> loglik_trace;
  /// Components pruned because their weight collapsed below 1e-12.
  std::vector<std::string> warnings;
};

/// EM restricted to block-diagonal covariance. Stops after `max_iters`
/// iterations or when the log-likelihood gain drops below `tol`.
EmResult em_fit(const ResidualSet& data, const ResidualMixture& init, std::size_t max_iters,
                double tol);

/// Sum over rows of log sum_j w_j N(row; mu_j, Sigma_j).
double loglik(const ResidualSet& data, const ResidualMixture& model);

/// Ground truth plus one residual drawn from the mixture.
Pose2D sample_detection(const Pose2D& gt, const ResidualMixture& model, std::uint64_t seed);

/// Single zero-mean component with isotropic blocks sigma^2 * I.
ResidualMixture white_noise_baseline(double sigma);

}  // namespace poselift
