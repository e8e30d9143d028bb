#pragma once

// Two-block base lifting network and the two-layer tree of bidirectional
// recurrent grammar nodes on top of it.

#include "poselift/skeleton.hpp"
#include "poselift/tensor.hpp"

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace poselift {

struct BaseNetConfig {
  std::size_t hidden_dim = 1024;
  std::size_t layers_per_block = 2;
  double dropout_rate = 0.5;
};

/// Which grammar nodes take part in the final pooling. `None` is the base
/// network alone.
enum class GrammarVariant { Full, KinematicsSymmetry, KinematicsOnly, None };

std::string_view variant_name(GrammarVariant v);
GrammarVariant parse_variant(std::string_view name);

struct NetConfig {
  BaseNetConfig base;
  std::size_t state_dim = 128;
  GrammarVariant variant = GrammarVariant::Full;
  /// Millimetres per network output unit.
  double target_scale_mm = 1000.0;
};

void validate(const NetConfig& cfg);

/// One recurrent grammar node bound to a catalog chain.
struct BrnnNode {
  std::size_t chain = 0;  // index into grammar_catalog()
  std::string prefix;     // parameter namespace, e.g. "kin.spine"
  std::size_t steps = 0;
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;  // per step: 3 per emitted joint
  /// Joints emitted at each step, in output column order.
  std::vector<std::vector<JointId>> step_joints;
};

class GrammarNet {
 public:
  explicit GrammarNet(NetConfig cfg, std::uint64_t seed = 0);

  const NetConfig& config() const { return cfg_; }
  void set_variant(GrammarVariant v) { cfg_.variant = v; }

  tensor::ParameterStore& params() { return params_; }
  const tensor::ParameterStore& params() const { return params_; }

  /// All nine nodes in catalog order; inactive ones keep their parameters.
  const std::vector<BrnnNode>& nodes() const { return nodes_; }
  bool node_active(std::size_t node) const;

  /// Number of pooled estimates per joint under the current variant.
  std::array<std::size_t, kNumJoints> fan_in() const;

 private:
  void add_linear(const std::string& name, std::size_t in, std::size_t out, double gain,
                  std::uint64_t seed);
  void add_batch_norm(const std::string& name, std::size_t width);

  NetConfig cfg_;
  tensor::ParameterStore params_;
  std::vector<BrnnNode> nodes_;
};

struct BaseOutput {
  tensor::Var block1_estimate;  // batch x 48, network units
  tensor::Var v0;               // batch x 48, network units
  tensor::Var combined;         // batch x 2 * hidden_dim
};

/// `u` holds normalised 2D poses (batch x 32).
BaseOutput base_forward(tensor::Tape& t, GrammarNet& net, tensor::Var u, tensor::Mode mode,
                        std::uint64_t dropout_seed = 0);

/// Runs one node over per-step inputs (each batch x in_dim). Identical input
/// handles are projected once. Throws StepMismatch on a wrong step count.
std::vector<tensor::Var> brnn_forward(tensor::Tape& t, GrammarNet& net, const BrnnNode& node,
                                      const std::vector<tensor::Var>& inputs);

struct GrammarOutput {
  tensor::Var v_final;  // batch x 48, network units
  tensor::Var v0;
  /// node prefix -> (joint, batch x 3 estimate) for every emitted joint.
  std::map<std::string, std::vector<std::pair<JointId, tensor::Var>>> per_node;
};

/// Base network followed by the active grammar nodes, mean-pooled per joint.
GrammarOutput grammar_forward(tensor::Tape& t, GrammarNet& net, tensor::Var u,
                              tensor::Mode mode, std::uint64_t dropout_seed = 0);

/// Batch of normalised poses as a batch x 32 matrix.
tensor::Matrix input_matrix(const std::vector<Pose2D>& normalized);
/// Root-relative camera-frame targets (batch x 48, millimetres).
tensor::Matrix target_matrix(const std::vector<Pose3D>& poses);

/// Eval-mode inference: normalise, forward, convert to millimetres and
/// root-centre. Never mutates `net`. Throws DegeneratePose.
Pose3D predict(const Pose2D& u, GrammarNet& net);
std::vector<Pose3D> predict_batch(const std::vector<Pose2D>& u, GrammarNet& net);

/// Checkpoint: `config key value` lines followed by parameter records.
void save_checkpoint(std::ostream& out, const GrammarNet& net);
GrammarNet load_checkpoint(std::istream& in, const std::string& source);

}  // namespace poselift
