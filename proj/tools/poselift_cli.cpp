// poselift command-line tool. Every file read or written by the pipeline
// goes through here; the library itself never touches the filesystem.

#include "poselift/benchmark.hpp"
#include "poselift/errors.hpp"
#include "poselift/metrics.hpp"
#include "poselift/numfmt.hpp"
#include "poselift/rng.hpp"
#include "poselift/synth.hpp"
#include "poselift/textio.hpp"
#include "poselift/trainer.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <sstream>

namespace fs = std::filesystem;
using namespace poselift;

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

struct Globals {
  std::uint64_t seed = 0;
  std::string out;  // empty: stdout
};

// Writes to --out, or stdout when it is not given.
void emit(const Globals& g, const std::string& content) {
  if (g.out.empty()) {
    std::cout << content;
    std::cout.flush();
  } else {
    textio::write_file(g.out, content);
  }
}

template <typename Fn>
auto read_with(const std::string& path, Fn fn) {
  std::istringstream in(textio::read_file(path));
  return fn(in, path);
}

template <typename T>
std::vector<T> every_nth(const std::vector<T>& v, std::size_t stride) {
  if (stride <= 1) return v;
  std::vector<T> out;
  for (std::size_t i = 0; i < v.size(); i += stride) out.push_back(v[i]);
  return out;
}

// --aug none | gmm | white:<sigma>
Augmentation parse_augmentation(const std::string& spec, const std::string& gmm_path) {
  if (spec == "none") return Augmentation::none();
  if (spec == "gmm") {
    if (gmm_path.empty()) throw InvalidArgument("--aug gmm needs --gmm <model>");
    return Augmentation::gmm(read_with(gmm_path, textio::read_mixture));
  }
  if (spec.rfind("white:", 0) == 0) {
    const auto sigma = parse_double(spec.substr(6));
    if (!sigma || !(*sigma > 0.0)) throw InvalidArgument("white noise sigma must be positive");
    return Augmentation::white(*sigma);
  }
  throw InvalidArgument("--aug must be none, gmm or white:<sigma>");
}

struct SynthOpts {
  std::size_t n = 100;
  double bone_scale = 1.0;
};

void cmd_synth(const Globals& g, const SynthOpts& o) {
  SynthConfig cfg = SynthConfig::defaults();
  cfg.n_poses = o.n;
  cfg.seed = g.seed;
  for (double& l : cfg.bone_lengths) l *= o.bone_scale;
  std::ostringstream out;
  textio::write_poses3d(out, synthesize_poses(cfg));
  emit(g, out.str());
}

struct FitOpts {
  std::string residuals;
  std::size_t k = 3;
  std::size_t max_iters = 200;
  double tol = 1e-6;
};

void cmd_fit_gmm(const Globals& g, const FitOpts& o) {
  const ResidualSet data = read_with(o.residuals, textio::read_residuals);
  const EmResult fit = em_fit(data, kmeans_init(data, o.k, g.seed), o.max_iters, o.tol);
  for (std::size_t i = 0; i < fit.loglik_trace.size(); ++i)
    std::cerr << "iter " << i << " loglik " << format_double(fit.loglik_trace[i]) << '\n';
  for (const auto& w : fit.warnings) std::cerr << "warning: " << w << '\n';
  std::ostringstream out;
  textio::write_mixture(out, fit.model);
  emit(g, out.str());
}

struct SimOpts {
  std::string poses;
  std::string cameras;
  std::vector<double> real_azimuths_deg;
  double test_azimuth_deg = 270.0;
  bool no_virtual = false;
  std::vector<double> center{0.0, 0.0, 950.0};
  double radius = 5000.0;
  double height = 1500.0;
  std::string gmm;
  std::string residuals_out;
};

void cmd_simulate(const Globals& g, const SimOpts& o) {
  const auto poses = read_with(o.poses, textio::read_poses3d);
  const auto cams = read_with(o.cameras, textio::read_cameras);
  if (cams.empty()) throw InvalidArgument("camera file is empty");
  for (const auto& c : cams) validate(c);

  std::optional<VirtualRig> rig;
  if (!o.no_virtual) {
    VirtualRig r;
    r.subject_center = Eigen::Vector3d(o.center[0], o.center[1], o.center[2]);
    r.radius = o.radius;
    r.height = o.height;
    for (double a : o.real_azimuths_deg) r.real_azimuths.push_back(a * kDegToRad);
    rig = r;
  }
  TrainingSet set = build_augmented_set(poses, cams, rig, cams.front().intrinsics,
                                        o.test_azimuth_deg * kDegToRad);

  if (!o.gmm.empty()) {
    // Preview of what the trainer feeds the network: one detection per pair.
    const ResidualMixture model = read_with(o.gmm, textio::read_mixture);
    ResidualSet res;
    res.residuals.resize(static_cast<Eigen::Index>(set.pairs.size()), kPose2DDim);
    for (std::size_t i = 0; i < set.pairs.size(); ++i) {
      const Pose2D det = sample_detection(set.pairs[i].u, model, derive_seed({g.seed, i}));
      res.residuals.row(static_cast<Eigen::Index>(i)) = (det.flat() - set.pairs[i].u.flat()).transpose();
      set.pairs[i].u = det;
    }
    if (!o.residuals_out.empty()) {
      std::ostringstream r;
      textio::write_residuals(r, res);
      textio::write_file(o.residuals_out, r.str());
    }
  }
  std::ostringstream out;
  textio::write_pairs(out, set.pairs);
  emit(g, out.str());
  std::cerr << set.pairs.size() << " pairs\n";
}

struct TrainOpts {
  std::string pairs;
  std::size_t stride = 1;
  TrainConfig cfg;
  bool no_grammar = false;
  bool kinematics_only = false;
  bool kinematics_symmetry = false;
  std::string aug = "none";
  std::string gmm;
  bool virtual_only = false;
  std::string history;
  std::size_t checkpoint_every = 0;
};

std::string checkpoint_text(const GrammarNet& net) {
  std::ostringstream out;
  save_checkpoint(out, net);
  return out.str();
}

void cmd_train(const Globals& g, TrainOpts o) {
  if (o.no_grammar + o.kinematics_only + o.kinematics_symmetry > 1)
    throw InvalidArgument("grammar masking flags are mutually exclusive");
  TrainConfig cfg = o.cfg;
  cfg.seed = g.seed;
  if (o.no_grammar) cfg.net.variant = GrammarVariant::None;
  if (o.kinematics_only) cfg.net.variant = GrammarVariant::KinematicsOnly;
  if (o.kinematics_symmetry) cfg.net.variant = GrammarVariant::KinematicsSymmetry;
  cfg.augmentation = parse_augmentation(o.aug, o.gmm);
  cfg.augmentation.virtual_only = o.virtual_only;

  TrainingSet set;
  set.pairs = every_nth(read_with(o.pairs, textio::read_pairs), o.stride);

  EpochCallback on_epoch = [&](const HistoryRecord& h, const GrammarNet& net) {
    std::cerr << "stage " << h.stage << " epoch " << h.epoch << " loss " << format_double(h.loss) << '\n';
    if (o.checkpoint_every > 0 && !g.out.empty() && (h.epoch + 1) % o.checkpoint_every == 0)
      textio::write_file(g.out + ".s" + std::to_string(h.stage) + "e" + std::to_string(h.epoch + 1),
                         checkpoint_text(net));
  };
  const TrainResult result = train(set, cfg, on_epoch);
  emit(g, checkpoint_text(result.net));
  if (!o.history.empty()) {
    std::ostringstream h;
    textio::write_history_csv(h, result.history);
    textio::write_file(o.history, h.str());
  }
}

struct EvalOpts {
  std::string checkpoint;
  std::string pairs;
  std::string protocol = "p1";
  bool allow_scale = false;
  std::size_t stride = 1;
};

void cmd_eval(const Globals& g, const EvalOpts& o) {
  GrammarNet net = read_with(o.checkpoint, load_checkpoint);
  std::vector<EvalSample> test;
  for (const auto& p : every_nth(read_with(o.pairs, textio::read_pairs), o.stride))
    test.push_back({p.u, p.v, p.camera_tag});
  const EvalReport report = evaluate(net, test, parse_protocol(o.protocol), o.allow_scale);
  std::ostringstream csv;
  write_report_csv(csv, report);
  if (g.out.empty()) {
    std::cout << csv.str();
  } else {
    textio::write_file(g.out, csv.str());
    write_report_table(std::cout, report);
  }
}

struct AblateOpts {
  std::string manifest;
  std::string export_dir;
};

void cmd_ablate(const Globals& g, const AblateOpts& o) {
  const AblationManifest manifest = parse_manifest(textio::read_file(o.manifest));
  const Benchmark bench = build_synthetic_benchmark(manifest.recipe);
  std::cerr << "benchmark: " << bench.train.pairs.size() << " training pairs, " << bench.test.size()
            << " test poses, " << bench.virtual_cameras.size() << " virtual views\n";

  if (!o.export_dir.empty()) {
    fs::create_directories(o.export_dir);
    const fs::path dir(o.export_dir);
    std::ostringstream train, test, gmm;
    textio::write_pairs(train, bench.train.pairs);
    std::vector<TrainingPair> test_pairs;
    for (const auto& s : bench.test) test_pairs.push_back({s.input, s.gt, s.tag, false});
    textio::write_pairs(test, test_pairs);
    textio::write_mixture(gmm, bench.fitted);
    textio::write_file((dir / "train_pairs.txt").string(), train.str());
    textio::write_file((dir / "test_pairs.txt").string(), test.str());
    textio::write_file((dir / "fitted.gmm").string(), gmm.str());
    textio::write_file((dir / "white_sigma.txt").string(), format_double(bench.white_sigma) + "\n");
  }

  std::vector<AblationRow> rows;
  for (const auto& variant : manifest.variants) {
    const TrainingSet set = ablation_training_set(bench, variant);
    for (std::uint64_t seed : manifest.seeds) {
      TrainResult res = train(set, ablation_train_config(bench, manifest, variant, seed));
      const EvalReport report = evaluate(res.net, bench.test, manifest.protocol);
      rows.push_back({variant.name, seed, report.overall.mpjpe_mm});
      std::cerr << variant.name << " seed " << seed << ": " << format_double(report.overall.mpjpe_mm) << " mm\n";
      if (!o.export_dir.empty())
        textio::write_file((fs::path(o.export_dir) / (variant.name + ".seed" + std::to_string(seed) + ".ckpt")).string(),
                           checkpoint_text(res.net));
    }
  }
  std::ostringstream csv;
  write_ablation_csv(csv, rows);
  emit(g, csv.str());
}

int exit_code(ErrorClass c) {
  switch (c) {
    case ErrorClass::Usage: return 1;
    case ErrorClass::Data: return 2;
    case ErrorClass::Numerical: return 3;
  }
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"2D-to-3D pose lifting with grammar networks and virtual-view augmentation"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "Seed for every random stream")->capture_default_str();
  app.add_option("--out", g.out, "Output file (default: stdout)");

  SynthOpts synth;
  auto* s = app.add_subcommand("synth", "Generate world-frame 3D poses by forward kinematics");
  s->add_option("-n,--n-poses", synth.n, "Number of poses")->capture_default_str();
  s->add_option("--bone-scale", synth.bone_scale, "Multiplier on the default bone lengths")
      ->check(CLI::PositiveNumber);

  FitOpts fit;
  auto* f = app.add_subcommand("fit-gmm", "Fit the residual mixture (k-means start, then EM)");
  f->add_option("--residuals", fit.residuals, "Residual file, 32 numbers per line")->required();
  f->add_option("-k,--components", fit.k, "Mixture components")->capture_default_str();
  f->add_option("--max-iters", fit.max_iters)->capture_default_str();
  f->add_option("--tol", fit.tol, "Stop when the log-likelihood gain drops below this")->capture_default_str();

  SimOpts sim;
  auto* m = app.add_subcommand("simulate", "Project 3D poses through real and virtual cameras");
  m->add_option("--poses", sim.poses, "World-frame 3D poses")->required();
  m->add_option("--cameras", sim.cameras, "Training cameras, one per line")->required();
  m->add_option("--real-azimuths", sim.real_azimuths_deg,
                "Azimuths (deg) of every real camera, held-out one included");
  m->add_option("--test-azimuth", sim.test_azimuth_deg, "Azimuth (deg) of the held-out camera")
      ->capture_default_str();
  m->add_flag("--no-virtual", sim.no_virtual, "Real cameras only");
  m->add_option("--rig-center", sim.center, "Subject centre x y z (mm)")->expected(3);
  m->add_option("--rig-radius", sim.radius)->capture_default_str();
  m->add_option("--rig-height", sim.height)->capture_default_str();
  m->add_option("--gmm", sim.gmm, "Replace 2D inputs with one sampled detection each");
  m->add_option("--residuals-out", sim.residuals_out, "Write the sampled residuals (needs --gmm)");

  TrainOpts tr;
  auto* t = app.add_subcommand("train", "Two-stage training; writes a checkpoint");
  t->add_option("--pairs", tr.pairs, "Training pairs")->required();
  t->add_option("--stride", tr.stride, "Keep every n-th pair")->capture_default_str();
  t->add_option("--stage1-epochs", tr.cfg.stage1_epochs)->capture_default_str();
  t->add_option("--stage1-lr", tr.cfg.stage1_lr)->capture_default_str();
  t->add_option("--lr-decay", tr.cfg.lr_decay, "Per-epoch factor on the stage-1 rate")->capture_default_str();
  t->add_option("--stage2-epochs", tr.cfg.stage2_epochs)->capture_default_str();
  t->add_option("--stage2-lr", tr.cfg.stage2_lr)->capture_default_str();
  t->add_option("--batch", tr.cfg.batch_size)->capture_default_str();
  t->add_option("--hidden-dim", tr.cfg.net.base.hidden_dim)->capture_default_str();
  t->add_option("--layers-per-block", tr.cfg.net.base.layers_per_block)->capture_default_str();
  t->add_option("--dropout", tr.cfg.net.base.dropout_rate)->capture_default_str();
  t->add_option("--state-dim", tr.cfg.net.state_dim)->capture_default_str();
  t->add_option("--target-scale", tr.cfg.net.target_scale_mm, "Millimetres per output unit")
      ->capture_default_str();
  t->add_flag("--squared-loss", tr.cfg.squared_loss, "Squared Euclidean loss");
  t->add_flag("--no-grammar", tr.no_grammar, "Base network only (stage 1)");
  t->add_flag("--kinematics-only", tr.kinematics_only, "Mask symmetry and coordination nodes");
  t->add_flag("--kinematics-symmetry", tr.kinematics_symmetry, "Mask coordination nodes");
  t->add_option("--aug", tr.aug, "none, gmm or white:<sigma>")->capture_default_str();
  t->add_option("--gmm", tr.gmm, "Residual mixture for --aug gmm");
  t->add_flag("--virtual-only", tr.virtual_only, "Augment virtual-view pairs only");
  t->add_option("--history", tr.history, "Write stage,epoch,loss CSV here");
  t->add_option("--checkpoint-every", tr.checkpoint_every, "Extra checkpoint every n epochs (needs --out)");

  EvalOpts ev;
  auto* e = app.add_subcommand("eval", "Score a checkpoint on test pairs");
  e->add_option("--checkpoint", ev.checkpoint)->required();
  e->add_option("--pairs", ev.pairs, "Test pairs; tags become report groups")->required();
  e->add_option("--protocol", ev.protocol, "p1, p2 or p3")->capture_default_str();
  e->add_flag("--allow-scale", ev.allow_scale, "Protocol p2 also fits a uniform scale");
  e->add_option("--stride", ev.stride, "Keep every n-th pair")->capture_default_str();

  AblateOpts ab;
  auto* a = app.add_subcommand("ablate", "Run the grammar/augmentation ablation on the synthetic benchmark");
  a->add_option("--manifest", ab.manifest, "JSON manifest")->required();
  a->add_option("--export-dir", ab.export_dir, "Also write benchmark data and per-run checkpoints here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& err) {
    return app.exit(err);
  } catch (const CLI::CallForAllHelp& err) {
    return app.exit(err);
  } catch (const CLI::ParseError& err) {
    app.exit(err);
    return 1;
  }

  try {
    if (*s) cmd_synth(g, synth);
    else if (*f) cmd_fit_gmm(g, fit);
    else if (*m) cmd_simulate(g, sim);
    else if (*t) cmd_train(g, tr);
    else if (*e) cmd_eval(g, ev);
    else if (*a) cmd_ablate(g, ab);
  } catch (const Error& err) {
    std::cerr << "error: " << err.what() << '\n';
    return exit_code(err.error_class());
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 2;
  }
  return 0;
}
