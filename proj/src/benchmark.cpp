#include "poselift/benchmark.hpp"

#include "poselift/errors.hpp"
#include "poselift/numfmt.hpp"
#include "poselift/rng.hpp"
#include "poselift/synth.hpp"

#include <json.hpp>

#include <cmath>
#include <numbers>
#include <ostream>

namespace poselift {

namespace {

double deg2rad(double d) { return d * std::numbers::pi / 180.0; }

Eigen::Matrix2d block(double sx, double sy, double rho) {
  Eigen::Matrix2d b;
  b << sx * sx, rho * sx * sy, rho * sx * sy, sy * sy;
  return b;
}

}  // namespace

ResidualMixture synthetic_detector_model() {
  using J = JointId;
  ResidualMixture m;
  m.weights = {0.6, 0.3, 0.1};
  m.means = Eigen::MatrixXd::Zero(3, kPose2DDim);
  m.joint_covs.assign(3, JointBlocks(kNumJoints));

  for (std::size_t i = 0; i < kNumJoints; ++i) {
    const double fi = static_cast<double>(i);
    const Eigen::Vector2d bias(3.0 * std::sin(1.7 * fi), 2.5 * std::cos(1.3 * fi) + 1.0);
    for (Eigen::Index c = 0; c < 3; ++c) m.means.row(c).segment<2>(2 * i) = bias.transpose();
    m.joint_covs[0][i] = block(2.5 + 0.1 * fi, 3.0, 0.3 * std::cos(fi));
    m.joint_covs[1][i] = block(5.0, 4.0, -0.4);
    m.joint_covs[2][i] = block(8.0, 8.0, 0.2);
  }
  // Extremities drift in a consistent direction in the minority modes.
  for (J j : {J::LWrist, J::RWrist}) m.means.row(1).segment<2>(2 * index(j)) += Eigen::RowVector2d(8.0, -6.0);
  for (J j : {J::LFoot, J::RFoot}) m.means.row(1).segment<2>(2 * index(j)) += Eigen::RowVector2d(-5.0, 9.0);
  for (J j : {J::LElbow, J::LWrist}) m.means.row(2).segment<2>(2 * index(j)) += Eigen::RowVector2d(16.0, 4.0);
  for (J j : {J::RElbow, J::RWrist}) m.means.row(2).segment<2>(2 * index(j)) += Eigen::RowVector2d(-14.0, 6.0);
  return m;
}

Benchmark build_synthetic_benchmark(const BenchmarkRecipe& recipe) {
  if (recipe.test_camera >= recipe.real_azimuths_deg.size())
    throw InvalidArgument("test camera index out of range");
  if (!(recipe.test_fraction > 0.0 && recipe.test_fraction < 1.0))
    throw InvalidArgument("test fraction must be in (0, 1)");

  Benchmark bench;
  bench.detector = synthetic_detector_model();

  const auto n_test = static_cast<std::size_t>(
      std::round(recipe.test_fraction * static_cast<double>(recipe.n_poses)));
  const std::size_t n_train = recipe.n_poses - n_test;
  if (n_train < 2 || n_test < 1) throw InvalidArgument("too few poses for a train/test split");

  SynthConfig train_cfg = SynthConfig::defaults();
  train_cfg.n_poses = n_train;
  train_cfg.seed = derive_seed({recipe.data_seed, 1});
  train_cfg.root_position = recipe.subject_center;
  SynthConfig test_cfg = train_cfg;
  test_cfg.n_poses = n_test;
  test_cfg.seed = derive_seed({recipe.data_seed, 2});
  for (double& l : test_cfg.bone_lengths) l *= recipe.test_subject_scale;
  const auto train_poses = synthesize_poses(train_cfg);
  const auto test_poses = synthesize_poses(test_cfg);

  VirtualRig rig;
  rig.subject_center = recipe.subject_center;
  rig.radius = recipe.rig_radius;
  rig.height = recipe.rig_height;
  for (double a : recipe.real_azimuths_deg) rig.real_azimuths.push_back(deg2rad(a));
  const double test_azimuth = rig.real_azimuths[recipe.test_camera];
  assign_virtual_azimuths(rig, test_azimuth);

  std::vector<CameraParams> train_cams;
  for (std::size_t c = 0; c < rig.real_azimuths.size(); ++c) {
    bench.real_cameras.push_back(rig_camera(rig, recipe.intrinsics, rig.real_azimuths[c]));
    if (c != recipe.test_camera) train_cams.push_back(bench.real_cameras.back());
  }
  if (recipe.virtual_views)
    bench.virtual_cameras = make_virtual_cameras(rig, recipe.intrinsics, test_azimuth);

  bench.train = build_augmented_set(train_poses, train_cams,
                                    recipe.virtual_views ? std::optional<VirtualRig>(rig)
                                                         : std::nullopt,
                                    recipe.intrinsics, test_azimuth);

  // Residuals of the simulated detector on the real training views.
  std::vector<Eigen::VectorXd> rows;
  std::uint64_t k = 0;
  for (const auto& pair : bench.train.pairs) {
    if (pair.is_virtual) continue;
    const Pose2D det = sample_detection(pair.u, bench.detector, derive_seed({recipe.data_seed, 3, k++}));
    rows.push_back(det.flat() - pair.u.flat());
  }
  ResidualSet residuals;
  residuals.residuals.resize(static_cast<Eigen::Index>(rows.size()), kPose2DDim);
  for (std::size_t i = 0; i < rows.size(); ++i)
    residuals.residuals.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
  const ResidualMixture init =
      kmeans_init(residuals, recipe.gmm_components, derive_seed({recipe.data_seed, 4}));
  EmResult fit = em_fit(residuals, init, recipe.em_iters, recipe.em_tol);
  bench.fitted = std::move(fit.model);
  bench.fit_loglik = std::move(fit.loglik_trace);
  bench.white_sigma = std::sqrt(residuals.residuals.squaredNorm() /
                                static_cast<double>(residuals.residuals.size()));

  const CameraParams& test_cam = bench.real_cameras[recipe.test_camera];
  const std::string tag = "cam" + std::to_string(recipe.test_camera);
  for (std::size_t i = 0; i < test_poses.size(); ++i) {
    EvalSample s;
    const Pose2D gt2d = project(test_poses[i], test_cam).pixels;
    s.input = sample_detection(gt2d, bench.detector, derive_seed({recipe.data_seed, 5, i}));
    s.gt = root_center_pose3d(to_camera_frame(test_poses[i], test_cam.extrinsics));
    s.tag = tag;
    bench.test.push_back(std::move(s));
  }
  return bench;
}

std::vector<AblationVariant> default_ablation_variants() {
  return {
      {"full", GrammarVariant::Full, AugmentKind::Gmm, true},
      {"kinematics-only", GrammarVariant::KinematicsOnly, AugmentKind::Gmm, true},
      {"no-grammar", GrammarVariant::None, AugmentKind::Gmm, true},
      {"white-noise", GrammarVariant::Full, AugmentKind::White, true},
      {"no-augmentation", GrammarVariant::Full, AugmentKind::None, false},
  };
}

namespace {

AugmentKind parse_augment(const std::string& s) {
  if (s == "none") return AugmentKind::None;
  if (s == "gmm") return AugmentKind::Gmm;
  if (s == "white") return AugmentKind::White;
  throw InvalidArgument("unknown augmentation '" + s + "'");
}

template <typename T>
void maybe(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

AblationManifest parse_manifest(const std::string& json_text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("manifest", 1, e.what());
  }
  AblationManifest m;
  m.variants = default_ablation_variants();
  try {
    if (doc.contains("recipe")) {
      const auto& r = doc["recipe"];
      maybe(r, "n_poses", m.recipe.n_poses);
      maybe(r, "test_fraction", m.recipe.test_fraction);
      maybe(r, "test_subject_scale", m.recipe.test_subject_scale);
      maybe(r, "data_seed", m.recipe.data_seed);
      maybe(r, "real_azimuths_deg", m.recipe.real_azimuths_deg);
      maybe(r, "test_camera", m.recipe.test_camera);
      maybe(r, "rig_radius", m.recipe.rig_radius);
      maybe(r, "rig_height", m.recipe.rig_height);
      maybe(r, "gmm_components", m.recipe.gmm_components);
      maybe(r, "em_iters", m.recipe.em_iters);
      maybe(r, "em_tol", m.recipe.em_tol);
    }
    if (doc.contains("train")) {
      const auto& t = doc["train"];
      maybe(t, "stage1_epochs", m.train.stage1_epochs);
      maybe(t, "stage1_lr", m.train.stage1_lr);
      maybe(t, "lr_decay", m.train.lr_decay);
      maybe(t, "stage2_epochs", m.train.stage2_epochs);
      maybe(t, "stage2_lr", m.train.stage2_lr);
      maybe(t, "batch_size", m.train.batch_size);
      maybe(t, "hidden_dim", m.train.net.base.hidden_dim);
      maybe(t, "layers_per_block", m.train.net.base.layers_per_block);
      maybe(t, "dropout", m.train.net.base.dropout_rate);
      maybe(t, "state_dim", m.train.net.state_dim);
      maybe(t, "target_scale_mm", m.train.net.target_scale_mm);
      maybe(t, "squared_loss", m.train.squared_loss);
    }
    maybe(doc, "seeds", m.seeds);
    if (doc.contains("protocol")) m.protocol = parse_protocol(doc["protocol"].get<std::string>());
    if (doc.contains("variants")) {
      m.variants.clear();
      for (const auto& v : doc["variants"]) {
        AblationVariant av;
        av.name = v.at("name").get<std::string>();
        if (v.contains("grammar")) av.grammar = parse_variant(v["grammar"].get<std::string>());
        if (v.contains("augmentation")) av.augmentation = parse_augment(v["augmentation"].get<std::string>());
        maybe(v, "virtual_views", av.virtual_views);
        m.variants.push_back(std::move(av));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("manifest", 1, e.what());
  }
  if (m.seeds.empty()) throw InvalidArgument("manifest lists no seeds");
  if (m.variants.empty()) throw InvalidArgument("manifest lists no variants");
  return m;
}

TrainingSet ablation_training_set(const Benchmark& bench, const AblationVariant& variant) {
  if (variant.virtual_views) return bench.train;
  TrainingSet set;
  for (const auto& p : bench.train.pairs)
    if (!p.is_virtual) set.pairs.push_back(p);
  return set;
}

TrainConfig ablation_train_config(const Benchmark& bench, const AblationManifest& manifest,
                                  const AblationVariant& variant, std::uint64_t seed) {
  TrainConfig cfg = manifest.train;
  cfg.seed = seed;
  cfg.net.variant = variant.grammar;
  switch (variant.augmentation) {
    case AugmentKind::None: cfg.augmentation = Augmentation::none(); break;
    case AugmentKind::Gmm: cfg.augmentation = Augmentation::gmm(bench.fitted); break;
    case AugmentKind::White: cfg.augmentation = Augmentation::white(bench.white_sigma); break;
  }
  return cfg;
}

std::vector<AblationRow> run_ablation(const Benchmark& bench, const AblationManifest& manifest,
                                      const AblationProgress& progress) {
  std::vector<AblationRow> rows;
  for (const auto& variant : manifest.variants) {
    const TrainingSet set = ablation_training_set(bench, variant);
    for (std::uint64_t seed : manifest.seeds) {
      TrainResult res = train(set, ablation_train_config(bench, manifest, variant, seed));
      const EvalReport report = evaluate(res.net, bench.test, manifest.protocol);
      rows.push_back({variant.name, seed, report.overall.mpjpe_mm});
      if (progress) progress(rows.back());
    }
  }
  return rows;
}

void write_ablation_csv(std::ostream& out, const std::vector<AblationRow>& rows) {
  out << "variant,seed,mpjpe_mm\n";
  for (const auto& r : rows) out << r.variant << ',' << r.seed << ',' << format_double(r.mpjpe_mm) << '\n';
}

}  // namespace poselift
