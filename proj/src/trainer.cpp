#include "poselift/trainer.hpp"

#include "poselift/errors.hpp"
#include "poselift/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace poselift {

using tensor::Matrix;
using tensor::Mode;
using tensor::Tape;
using tensor::Var;

void validate(const TrainConfig& cfg) {
  validate(cfg.net);
  if (cfg.batch_size < 2) throw InvalidArgument("batch size must be at least 2");
  if (!(cfg.stage1_lr >= 0.0) || !(cfg.stage2_lr >= 0.0))
    throw InvalidArgument("learning rates must be non-negative");
  if (!(cfg.lr_decay > 0.0)) throw InvalidArgument("lr decay must be positive");
  if (cfg.augmentation.kind != AugmentKind::None) validate(cfg.augmentation.model);
}

TrainingSet build_augmented_set(const std::vector<Pose3D>& poses,
                                const std::vector<CameraParams>& real_cameras,
                                const std::optional<VirtualRig>& rig,
                                const CameraIntrinsics& template_intrinsics,
                                double test_azimuth) {
  std::vector<std::pair<std::string, CameraParams>> cams;
  for (std::size_t c = 0; c < real_cameras.size(); ++c)
    cams.emplace_back("real" + std::to_string(c), real_cameras[c]);
  if (rig) {
    const auto virt = make_virtual_cameras(*rig, template_intrinsics, test_azimuth);
    for (std::size_t c = 0; c < virt.size(); ++c)
      cams.emplace_back("virt" + std::to_string(c), virt[c]);
  }

  TrainingSet set;
  set.pairs.reserve(cams.size() * poses.size());
  for (const auto& [tag, cam] : cams) {
    for (std::size_t i = 0; i < poses.size(); ++i) {
      TrainingPair pair;
      try {
        pair.u = project(poses[i], cam).pixels;
      } catch (const BehindCamera& e) {
        throw BehindCamera(e.joint(), "pose " + std::to_string(i) + ", camera " + tag);
      }
      pair.v = root_center_pose3d(to_camera_frame(poses[i], cam.extrinsics));
      pair.camera_tag = tag;
      pair.is_virtual = tag.rfind("virt", 0) == 0;
      set.pairs.push_back(std::move(pair));
    }
  }
  return set;
}

std::vector<Pose2D> epoch_inputs(const TrainingSet& set, const Augmentation& aug,
                                 std::uint64_t seed, std::size_t epoch) {
  std::vector<Pose2D> out;
  out.reserve(set.pairs.size());
  for (std::size_t i = 0; i < set.pairs.size(); ++i) {
    const TrainingPair& p = set.pairs[i];
    const bool noisy = aug.kind != AugmentKind::None && (!aug.virtual_only || p.is_virtual);
    const Pose2D u = noisy ? sample_detection(p.u, aug.model, derive_seed({seed, epoch, i})) : p.u;
    out.push_back(normalize_pose2d(u).first);
  }
  return out;
}

namespace {

// Consecutive batches over a permutation; a trailing singleton joins the
// previous batch so train-mode batch norm always sees >= 2 rows.
std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch_size,
                                                   std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(order[i - 1], order[pick(rng)]);
  }
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < n; start += batch_size)
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(n, start + batch_size)));
  if (batches.size() > 1 && batches.back().size() < 2) {
    auto tail = std::move(batches.back());
    batches.pop_back();
    batches.back().insert(batches.back().end(), tail.begin(), tail.end());
  }
  // Row order inside a batch does not matter to the model; sorting keeps the
  // floating-point reductions independent of the shuffle.
  for (auto& b : batches) std::sort(b.begin(), b.end());
  return batches;
}

Matrix gather_rows(const Matrix& m, const std::vector<std::size_t>& rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(rows[i]));
  return out;
}

}  // namespace

TrainResult train(const TrainingSet& set, const TrainConfig& cfg, const EpochCallback& on_epoch) {
  validate(cfg);
  if (set.pairs.empty()) throw InvalidArgument("training set is empty");
  if (set.pairs.size() < 2) throw BatchTooSmall("training set needs at least 2 pairs");

  TrainResult result{GrammarNet(cfg.net, derive_seed({cfg.seed, 0x6e6574})), {}};
  GrammarNet& net = result.net;

  std::vector<Pose3D> targets;
  targets.reserve(set.pairs.size());
  for (const auto& p : set.pairs) targets.push_back(p.v);
  const Matrix target_mm = target_matrix(targets);

  Matrix clean_inputs;
  if (cfg.augmentation.kind == AugmentKind::None)
    clean_inputs = input_matrix(epoch_inputs(set, cfg.augmentation, cfg.seed, 0));

  const double scale_mm = cfg.net.target_scale_mm;
  const bool has_grammar = cfg.net.variant != GrammarVariant::None;

  auto run_stage = [&](int stage, std::size_t epochs) {
    tensor::Adam adam;
    for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
      const double lr =
          stage == 1 ? cfg.stage1_lr * std::pow(cfg.lr_decay, static_cast<double>(epoch))
                     : cfg.stage2_lr;
      // Epoch index for augmentation seeds runs across both stages.
      const std::size_t global_epoch = stage == 1 ? epoch : cfg.stage1_epochs + epoch;
      const Matrix inputs =
          cfg.augmentation.kind == AugmentKind::None
              ? clean_inputs
              : input_matrix(epoch_inputs(set, cfg.augmentation, cfg.seed, global_epoch));
      const auto batches = make_batches(set.pairs.size(), cfg.batch_size,
                                        derive_seed({cfg.seed, 0x73687566, global_epoch}));
      double loss_sum = 0.0;
      for (std::size_t b = 0; b < batches.size(); ++b) {
        net.params().zero_grad();
        Tape tape;
        Var loss;
        try {
          const Var x = tape.constant(gather_rows(inputs, batches[b]));
          const std::uint64_t drop_seed = derive_seed({cfg.seed, 0x64726f70, global_epoch, b});
          const Var pred = stage == 1 ? base_forward(tape, net, x, Mode::Train, drop_seed).v0
                                      : grammar_forward(tape, net, x, Mode::Train, drop_seed).v_final;
          loss = tensor::euclidean_loss(tape, tensor::scale(tape, pred, scale_mm),
                                        gather_rows(target_mm, batches[b]), cfg.squared_loss);
        } catch (const NonFinite& e) {
          throw NonFiniteLoss(b, e.what());
        }
        const double value = tape.value(loss)(0, 0);
        if (!std::isfinite(value)) throw NonFiniteLoss(b, "loss is not finite");
        tape.backward(loss);
        adam.step(net.params(), lr);
        loss_sum += value * static_cast<double>(batches[b].size());
      }
      HistoryRecord rec{stage, epoch, loss_sum / static_cast<double>(set.pairs.size())};
      result.history.push_back(rec);
      if (on_epoch) on_epoch(rec, net);
    }
  };

  run_stage(1, cfg.stage1_epochs);
  if (has_grammar) run_stage(2, cfg.stage2_epochs);
  return result;
}

}  // namespace poselift
