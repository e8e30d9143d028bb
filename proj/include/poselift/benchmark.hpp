#pragma once

// Synthetic cross-view benchmark and the ablation runner built on it.

#include "poselift/camgeom.hpp"
#include "poselift/metrics.hpp"
#include "poselift/mixture.hpp"
#include "poselift/trainer.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace poselift {

struct BenchmarkRecipe {
  std::size_t n_poses = 2000;
  /// Trailing fraction of poses generated for the held-out subject.
  double test_fraction = 0.2;
  /// Bone-length multiplier of the held-out subject.
  double test_subject_scale = 1.05;
  std::uint64_t data_seed = 7;
  std::vector<double> real_azimuths_deg{0.0, 90.0, 180.0, 270.0};
  std::size_t test_camera = 3;
  bool virtual_views = true;
  double rig_radius = 5000.0;
  double rig_height = 1500.0;
  Eigen::Vector3d subject_center{0.0, 0.0, 950.0};
  CameraIntrinsics intrinsics{1145.0, 1145.0, 512.0, 512.0};
  /// Components of the fitted residual mixture.
  std::size_t gmm_components = 3;
  std::size_t em_iters = 200;
  double em_tol = 1e-6;
};

struct Benchmark {
  std::vector<CameraParams> real_cameras;  // all of them, test camera included
  std::vector<CameraParams> virtual_cameras;
  TrainingSet train;                      // training cameras + virtual views
  std::vector<EvalSample> test;           // held-out camera, held-out subject
  ResidualMixture detector;               // noise of the simulated 2D detector
  ResidualMixture fitted;                 // mixture fitted to detector residuals
  double white_sigma = 0.0;               // RMS of the same residuals
  std::vector<double> fit_loglik;
};

/// Mixture used as the simulated detector: joint-specific biases, correlated
/// anisotropic blocks and a heavy-tailed minority component.
ResidualMixture synthetic_detector_model();

Benchmark build_synthetic_benchmark(const BenchmarkRecipe& recipe);

struct AblationVariant {
  std::string name;
  GrammarVariant grammar = GrammarVariant::Full;
  AugmentKind augmentation = AugmentKind::Gmm;
  bool virtual_views = true;
};

struct AblationManifest {
  BenchmarkRecipe recipe;
  TrainConfig train;  // grammar variant, augmentation and seed set per run
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::vector<AblationVariant> variants;
  Protocol protocol = Protocol::P3;
};

/// JSON manifest; missing keys keep their defaults.
AblationManifest parse_manifest(const std::string& json_text);

/// Grammar-variant x augmentation rows of the default study.
std::vector<AblationVariant> default_ablation_variants();

struct AblationRow {
  std::string variant;
  std::uint64_t seed = 0;
  double mpjpe_mm = 0.0;
};

/// Training configuration used for one (variant, seed) run.
TrainConfig ablation_train_config(const Benchmark& bench, const AblationManifest& manifest,
                                  const AblationVariant& variant, std::uint64_t seed);
TrainingSet ablation_training_set(const Benchmark& bench, const AblationVariant& variant);

using AblationProgress = std::function<void(const AblationRow&)>;

/// One row per (variant, seed), variants outermost.
std::vector<AblationRow> run_ablation(const Benchmark& bench, const AblationManifest& manifest,
                                      const AblationProgress& progress = {});

void write_ablation_csv(std::ostream& out, const std::vector<AblationRow>& rows);

}  // namespace poselift
