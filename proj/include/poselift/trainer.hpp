#pragma once

// Two-stage training: the base network alone, then the grammar hierarchy
// fine-tuned end to end, optionally with per-epoch detection-noise
// augmentation.

#include "poselift/camgeom.hpp"
#include "poselift/mixture.hpp"
#include "poselift/posenet.hpp"
#include "poselift/skeleton.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace poselift {

struct TrainingPair {
  Pose2D u;  // ground-truth 2D in the source camera (pixels)
  Pose3D v;  // root-relative, source camera frame (mm)
  std::string camera_tag;
  bool is_virtual = false;
};

struct TrainingSet {
  std::vector<TrainingPair> pairs;
};

enum class AugmentKind { None, Gmm, White };

struct Augmentation {
  AugmentKind kind = AugmentKind::None;
  ResidualMixture model;  // used for Gmm and White
  bool virtual_only = false;

  static Augmentation none() { return {}; }
  static Augmentation gmm(ResidualMixture m) { return {AugmentKind::Gmm, std::move(m), false}; }
  static Augmentation white(double sigma) {
    return {AugmentKind::White, white_noise_baseline(sigma), false};
  }
};

struct TrainConfig {
  NetConfig net;
  std::size_t stage1_epochs = 200;
  double stage1_lr = 1e-3;
  double lr_decay = 0.96;
  std::size_t stage2_epochs = 200;
  double stage2_lr = 1e-5;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
  Augmentation augmentation;
  bool squared_loss = false;
};

void validate(const TrainConfig& cfg);

struct HistoryRecord {
  int stage = 1;
  std::size_t epoch = 0;
  double loss = 0.0;  // mean training loss over the epoch (mm)
};

struct TrainResult {
  GrammarNet net;
  std::vector<HistoryRecord> history;
};

/// Called after every epoch; used for periodic checkpoints.
using EpochCallback = std::function<void(const HistoryRecord&, const GrammarNet&)>;

/// Stage 1 trains base_forward's v0 at stage1_lr * lr_decay^epoch. Stage 2
/// (skipped for GrammarVariant::None) trains grammar_forward's pooled output
/// at the constant stage2_lr. Throws NonFiniteLoss.
TrainResult train(const TrainingSet& set, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

/// Projects every world-frame pose through every real camera, then through
/// every virtual camera of `rig` (when given). Camera tags are "real<i>" and
/// "virt<k>". BehindCamera errors name the offending pose.
TrainingSet build_augmented_set(const std::vector<Pose3D>& poses,
                                const std::vector<CameraParams>& real_cameras,
                                const std::optional<VirtualRig>& rig,
                                const CameraIntrinsics& template_intrinsics,
                                double test_azimuth);

/// The per-pair 2D network inputs of one epoch (normalised). Exposed so tests
/// can check the resampling contract.
std::vector<Pose2D> epoch_inputs(const TrainingSet& set, const Augmentation& aug,
                                 std::uint64_t seed, std::size_t epoch);

}  // namespace poselift
