#include "poselift/mixture.hpp"

#include "poselift/errors.hpp"
#include "poselift/rng.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace poselift {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;  // log(2 pi)
constexpr double kCollapsedWeight = 1e-12;

void check_width(const ResidualSet& data) {
  if (static_cast<std::size_t>(data.residuals.cols()) != kPose2DDim)
    throw ShapeMismatch("residual rows must have " + std::to_string(kPose2DDim) + " entries");
  if (!data.residuals.allFinite()) throw InvalidArgument("residuals contain non-finite values");
}

// Per-component quantities reused across rows.
struct BlockPrecision {
  std::vector<Eigen::Matrix2d> inverse;
  double log_norm = 0.0;  // -J log(2pi) - 0.5 sum log det
};

BlockPrecision precision_of(std::span<const Eigen::Matrix2d> blocks) {
  BlockPrecision p;
  p.inverse.reserve(blocks.size());
  double logdet = 0.0;
  for (const auto& b : blocks) {
    const double det = b.determinant();
    if (!(det > 0.0)) throw InvalidArgument("covariance block is not positive definite");
    logdet += std::log(det);
    p.inverse.push_back(b.inverse());
  }
  p.log_norm = -static_cast<double>(blocks.size()) * kLog2Pi - 0.5 * logdet;
  return p;
}

double block_quadratic(const Eigen::Ref<const Eigen::VectorXd>& x,
                       const Eigen::Ref<const Eigen::VectorXd>& mean,
                       const std::vector<Eigen::Matrix2d>& inverse) {
  double q = 0.0;
  for (std::size_t i = 0; i < inverse.size(); ++i) {
    const Eigen::Vector2d d = x.segment<2>(2 * i) - mean.segment<2>(2 * i);
    q += d.dot(inverse[i] * d);
  }
  return q;
}

// Responsibilities (M x K) and the total log-likelihood.
double expectation(const ResidualSet& data, const ResidualMixture& model, Eigen::MatrixXd* resp) {
  const std::size_t K = model.n_components();
  const Eigen::Index M = data.residuals.rows();
  std::vector<BlockPrecision> prec;
  prec.reserve(K);
  for (const auto& blocks : model.joint_covs) prec.push_back(precision_of(blocks));

  Eigen::MatrixXd logp(M, static_cast<Eigen::Index>(K));
  for (std::size_t j = 0; j < K; ++j) {
    const double logw = model.weights[j] > 0.0 ? std::log(model.weights[j])
                                               : -std::numeric_limits<double>::infinity();
    const Eigen::VectorXd mu = model.means.row(static_cast<Eigen::Index>(j)).transpose();
    for (Eigen::Index m = 0; m < M; ++m) {
      const double q = block_quadratic(data.residuals.row(m).transpose(), mu, prec[j].inverse);
      logp(m, static_cast<Eigen::Index>(j)) = logw + prec[j].log_norm - 0.5 * q;
    }
  }

  double total = 0.0;
  if (resp) resp->resize(M, static_cast<Eigen::Index>(K));
  for (Eigen::Index m = 0; m < M; ++m) {
    const double mx = logp.row(m).maxCoeff();
    const double lse = mx + std::log((logp.row(m).array() - mx).exp().sum());
    total += lse;
    if (resp) resp->row(m) = (logp.row(m).array() - lse).exp();
  }
  return total;
}

JointBlocks cluster_blocks(const Eigen::MatrixXd& rows, const Eigen::VectorXd& weights,
                           const Eigen::VectorXd& mean, double total_weight) {
  JointBlocks blocks(kNumJoints, Eigen::Matrix2d::Zero());
  if (total_weight > 0.0) {
    for (Eigen::Index m = 0; m < rows.rows(); ++m) {
      const double w = weights(m);
      if (w == 0.0) continue;
      for (std::size_t i = 0; i < kNumJoints; ++i) {
        const Eigen::Vector2d d = rows.row(m).segment<2>(2 * i).transpose() - mean.segment<2>(2 * i);
        blocks[i] += w * d * d.transpose();
      }
    }
    for (auto& b : blocks) b /= total_weight;
  }
  for (auto& b : blocks) b = floor_covariance(b);
  return blocks;
}

}  // namespace

Eigen::Matrix2d floor_covariance(const Eigen::Matrix2d& cov, double floor) {
  const Eigen::Matrix2d sym = 0.5 * (cov + cov.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(sym);
  const Eigen::Vector2d ev = es.eigenvalues().cwiseMax(floor);
  if (ev == es.eigenvalues()) return sym;
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

void validate(const ResidualMixture& model) {
  const std::size_t K = model.n_components();
  if (K == 0) throw InvalidArgument("mixture has no components");
  if (static_cast<std::size_t>(model.means.rows()) != K ||
      static_cast<std::size_t>(model.means.cols()) != kPose2DDim || model.joint_covs.size() != K)
    throw ShapeMismatch("mixture component arrays disagree in size");
  double sum = 0.0;
  for (double w : model.weights) {
    if (!(w >= 0.0)) throw InvalidArgument("negative mixture weight");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw InvalidArgument("mixture weights do not sum to 1");
  if (!model.means.allFinite()) throw InvalidArgument("non-finite mixture mean");
  for (const auto& blocks : model.joint_covs) {
    if (blocks.size() != kNumJoints) throw ShapeMismatch("expected 16 covariance blocks");
    for (const auto& b : blocks) {
      if (!b.allFinite() || std::abs(b(0, 1) - b(1, 0)) > 1e-12 * (1.0 + b.cwiseAbs().maxCoeff()))
        throw InvalidArgument("covariance block is not symmetric");
      if (!(b(0, 0) > 0.0) || !(b.determinant() > 0.0))
        throw InvalidArgument("covariance block is not positive definite");
    }
  }
}

double block_gaussian_logpdf(const Eigen::Ref<const Eigen::VectorXd>& x,
                             const Eigen::Ref<const Eigen::VectorXd>& mean,
                             std::span<const Eigen::Matrix2d> blocks) {
  if (static_cast<std::size_t>(x.size()) != 2 * blocks.size() || x.size() != mean.size())
    throw ShapeMismatch("block density dimensions disagree");
  const BlockPrecision p = precision_of(blocks);
  return p.log_norm - 0.5 * block_quadratic(x, mean, p.inverse);
}

ResidualMixture kmeans_init(const ResidualSet& data, std::size_t k, std::uint64_t seed) {
  check_width(data);
  if (k == 0) throw InvalidArgument("k must be at least 1");
  const Eigen::Index M = data.residuals.rows();
  if (static_cast<std::size_t>(M) < k)
    throw InsufficientData("need at least " + std::to_string(k) + " residuals, got " +
                           std::to_string(M));
  const Eigen::MatrixXd& X = data.residuals;
  const auto K = static_cast<Eigen::Index>(k);
  Rng rng(seed);

  // k-means++ seeding.
  Eigen::MatrixXd centers(K, X.cols());
  {
    std::uniform_int_distribution<Eigen::Index> pick(0, M - 1);
    centers.row(0) = X.row(pick(rng));
    Eigen::VectorXd d2 = (X.rowwise() - centers.row(0)).rowwise().squaredNorm();
    for (Eigen::Index c = 1; c < K; ++c) {
      const double total = d2.sum();
      Eigen::Index chosen = 0;
      if (total > 0.0) {
        double r = std::uniform_real_distribution<double>(0.0, total)(rng);
        chosen = M - 1;
        for (Eigen::Index m = 0; m < M; ++m) {
          r -= d2(m);
          if (r < 0.0 && d2(m) > 0.0) {
            chosen = m;
            break;
          }
        }
      } else {
        chosen = pick(rng);
      }
      centers.row(c) = X.row(chosen);
      d2 = d2.cwiseMin((X.rowwise() - centers.row(c)).rowwise().squaredNorm());
    }
  }

  // Lloyd iterations.
  std::vector<Eigen::Index> assign(static_cast<std::size_t>(M), -1);
  for (int iter = 0; iter < 100; ++iter) {
    bool changed = false;
    for (Eigen::Index m = 0; m < M; ++m) {
      Eigen::Index best = 0;
      (centers.rowwise() - X.row(m)).rowwise().squaredNorm().minCoeff(&best);
      if (assign[m] != best) {
        assign[m] = best;
        changed = true;
      }
    }
    if (!changed && iter > 0) break;

    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(K, X.cols());
    Eigen::VectorXi counts = Eigen::VectorXi::Zero(K);
    for (Eigen::Index m = 0; m < M; ++m) {
      sums.row(assign[m]) += X.row(m);
      ++counts(assign[m]);
    }
    for (Eigen::Index c = 0; c < K; ++c) {
      if (counts(c) > 0) {
        centers.row(c) = sums.row(c) / counts(c);
        continue;
      }
      // Empty cluster: restart at the point farthest from its old centroid.
      Eigen::Index far = 0;
      (X.rowwise() - centers.row(c)).rowwise().squaredNorm().maxCoeff(&far);
      centers.row(c) = X.row(far);
    }
  }

  ResidualMixture model;
  model.means = centers;
  model.weights.resize(k);
  model.joint_covs.resize(k);
  for (Eigen::Index c = 0; c < K; ++c) {
    Eigen::VectorXd member = Eigen::VectorXd::Zero(M);
    for (Eigen::Index m = 0; m < M; ++m)
      if (assign[m] == c) member(m) = 1.0;
    const double n = member.sum();
    model.weights[c] = n / static_cast<double>(M);
    model.joint_covs[c] = cluster_blocks(X, member, centers.row(c).transpose(), n);
  }
  return model;
}

EmResult em_fit(const ResidualSet& data, const ResidualMixture& init, std::size_t max_iters,
                double tol) {
  check_width(data);
  validate(init);
  if (max_iters == 0) throw InvalidArgument("max_iters must be at least 1");

  EmResult result;
  result.model = init;
  ResidualMixture& model = result.model;
  const Eigen::MatrixXd& X = data.residuals;
  const double M = static_cast<double>(X.rows());

  Eigen::MatrixXd resp;
  double ll = expectation(data, model, &resp);
  result.loglik_trace.push_back(ll);

  for (std::size_t iter = 0; iter < max_iters; ++iter) {
    const Eigen::VectorXd mass = resp.colwise().sum().transpose();

    ResidualMixture next;
    for (Eigen::Index j = 0; j < mass.size(); ++j) {
      const double w = mass(j) / M;
      if (w < kCollapsedWeight) {
        result.warnings.push_back("NumericalCollapse: component " + std::to_string(j) +
                                  " pruned at iteration " + std::to_string(iter + 1));
        continue;
      }
      const Eigen::VectorXd mu = (X.transpose() * resp.col(j)) / mass(j);
      next.weights.push_back(w);
      next.joint_covs.push_back(cluster_blocks(X, resp.col(j), mu, mass(j)));
      next.means.conservativeResize(static_cast<Eigen::Index>(next.weights.size()), X.cols());
      next.means.row(next.means.rows() - 1) = mu.transpose();
    }
    if (next.weights.empty()) throw NonFinite("every mixture component collapsed");
    double total = 0.0;
    for (double w : next.weights) total += w;
    for (double& w : next.weights) w /= total;
    model = std::move(next);

    const double next_ll = expectation(data, model, &resp);
    if (!std::isfinite(next_ll)) throw NonFinite("EM log-likelihood is not finite");
    result.loglik_trace.push_back(next_ll);
    const double gain = next_ll - ll;
    ll = next_ll;
    if (gain < tol) break;
  }
  return result;
}

double loglik(const ResidualSet& data, const ResidualMixture& model) {
  check_width(data);
  validate(model);
  return expectation(data, model, nullptr);
}

Pose2D sample_detection(const Pose2D& gt, const ResidualMixture& model, std::uint64_t seed) {
  Rng rng(seed);
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  std::size_t j = 0;
  double acc = model.weights[0];
  while (u >= acc && j + 1 < model.n_components()) acc += model.weights[++j];

  std::normal_distribution<double> normal(0.0, 1.0);
  Pose2D out = gt;
  const auto row = static_cast<Eigen::Index>(j);
  for (std::size_t i = 0; i < kNumJoints; ++i) {
    const Eigen::Matrix2d L = model.joint_covs[j][i].llt().matrixL();
    const Eigen::Vector2d z(normal(rng), normal(rng));
    const Eigen::Vector2d eps = model.means.row(row).segment<2>(2 * i).transpose() + L * z;
    out.coords.row(i) += eps.transpose();
  }
  return out;
}

ResidualMixture white_noise_baseline(double sigma) {
  if (!(sigma > 0.0)) throw InvalidArgument("sigma must be positive");
  ResidualMixture model;
  model.weights = {1.0};
  model.means = Eigen::MatrixXd::Zero(1, kPose2DDim);
  model.joint_covs = {JointBlocks(kNumJoints, sigma * sigma * Eigen::Matrix2d::Identity())};
  return model;
}

}  // namespace poselift
