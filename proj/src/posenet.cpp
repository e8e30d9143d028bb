#include "poselift/posenet.hpp"

#include "poselift/errors.hpp"
#include "poselift/numfmt.hpp"
#include "poselift/rng.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <unordered_map>

namespace poselift {

using tensor::Matrix;
using tensor::Mode;
using tensor::Tape;
using tensor::Var;

namespace {

constexpr double kReluGain = 2.0;
constexpr double kLinearGain = 1.0;

Var param(Tape& t, GrammarNet& net, const std::string& name) {
  return t.parameter(net.params().at(name));
}

Var linear(Tape& t, GrammarNet& net, const std::string& name, Var x) {
  return tensor::affine(t, x, param(t, net, name + ".W"), param(t, net, name + ".b"));
}

// [affine, batch norm, ReLU, dropout] x layers, with the input added back.
Var residual_block(Tape& t, GrammarNet& net, const std::string& name, Var x, Mode mode,
                   std::uint64_t seed) {
  Var h = x;
  for (std::size_t l = 0; l < net.config().base.layers_per_block; ++l) {
    const std::string layer = name + ".l" + std::to_string(l);
    h = linear(t, net, layer, h);
    auto& params = net.params();
    h = tensor::batch_norm(t, h, param(t, net, layer + ".bn.gamma"), param(t, net, layer + ".bn.beta"),
                           params.at(layer + ".bn.mean"), params.at(layer + ".bn.var"), mode);
    h = tensor::relu(t, h);
    h = tensor::dropout(t, h, net.config().base.dropout_rate, mode, derive_seed({seed, l}));
  }
  return tensor::add(t, h, x);
}

}  // namespace

std::string_view variant_name(GrammarVariant v) {
  switch (v) {
    case GrammarVariant::Full: return "full";
    case GrammarVariant::KinematicsSymmetry: return "kinematics-symmetry";
    case GrammarVariant::KinematicsOnly: return "kinematics-only";
    case GrammarVariant::None: return "no-grammar";
  }
  return "full";
}

GrammarVariant parse_variant(std::string_view name) {
  for (auto v : {GrammarVariant::Full, GrammarVariant::KinematicsSymmetry,
                 GrammarVariant::KinematicsOnly, GrammarVariant::None})
    if (variant_name(v) == name) return v;
  throw InvalidArgument("unknown grammar variant '" + std::string(name) + "'");
}

void validate(const NetConfig& cfg) {
  if (cfg.base.hidden_dim < kPose3DDim) throw InvalidArgument("hidden_dim must be at least 48");
  if (cfg.base.layers_per_block < 1) throw InvalidArgument("layers_per_block must be at least 1");
  if (!(cfg.base.dropout_rate >= 0.0 && cfg.base.dropout_rate < 1.0))
    throw InvalidArgument("dropout rate must be in [0, 1)");
  if (cfg.state_dim < 1) throw InvalidArgument("state_dim must be at least 1");
  if (!(cfg.target_scale_mm > 0.0)) throw InvalidArgument("target scale must be positive");
}

GrammarNet::GrammarNet(NetConfig cfg, std::uint64_t seed) : cfg_(cfg) {
  validate(cfg_);
  const std::size_t H = cfg_.base.hidden_dim;
  std::uint64_t stream = 0;
  auto next = [&] { return derive_seed({seed, ++stream}); };

  add_linear("base.in", kPose2DDim, H, kLinearGain, next());
  for (const char* block : {"base.block1", "base.block2"}) {
    for (std::size_t l = 0; l < cfg_.base.layers_per_block; ++l) {
      const std::string layer = std::string(block) + ".l" + std::to_string(l);
      add_linear(layer, H, H, kReluGain, next());
      add_batch_norm(layer + ".bn", H);
    }
  }
  add_linear("base.est1", H, kPose3DDim, kLinearGain, next());
  add_linear("base.reproj1", kPose3DDim, H, kLinearGain, next());
  add_linear("base.est2", H, kPose3DDim, kLinearGain, next());
  add_linear("base.reproj2", kPose3DDim, H, kLinearGain, next());

  const auto& catalog = grammar_catalog();
  const std::size_t S = cfg_.state_dim;
  for (std::size_t c = 0; c < catalog.size(); ++c) {
    const GrammarChain& chain = catalog[c];
    BrnnNode node;
    node.chain = c;
    switch (chain.kind) {
      case ChainKind::Kinematic:
        node.prefix = "kin." + std::string(chain.name);
        node.steps = chain.joints.size();
        node.in_dim = 2 * H;
        node.out_dim = 3;
        for (JointId j : chain.joints) node.step_joints.push_back({j});
        break;
      case ChainKind::Symmetry:
      case ChainKind::Coordination: {
        node.prefix = (chain.kind == ChainKind::Symmetry ? "sym." : "crd.") + std::string(chain.name);
        const auto& a = catalog[chain.pair[0]].joints;
        const auto& b = catalog[chain.pair[1]].joints;
        node.steps = a.size();
        node.in_dim = 6;
        node.out_dim = 6;
        for (std::size_t s = 0; s < a.size(); ++s) node.step_joints.push_back({a[s], b[s]});
        break;
      }
    }
    const std::string& p = node.prefix;
    params_.add(p + ".Wfh", Matrix::Zero(S, S));
    params_.add(p + ".Wbh", Matrix::Zero(S, S));
    params_.add(p + ".Wfa", Matrix::Zero(node.in_dim, S));
    params_.add(p + ".Wba", Matrix::Zero(node.in_dim, S));
    params_.add(p + ".bfh", Matrix::Zero(1, S));
    params_.add(p + ".bbh", Matrix::Zero(1, S));
    params_.add(p + ".Wfy", Matrix::Zero(S, node.out_dim));
    params_.add(p + ".Wby", Matrix::Zero(S, node.out_dim));
    params_.add(p + ".by", Matrix::Zero(1, node.out_dim));
    Rng rng(next());
    auto fill = [&](const std::string& name, double fan_in) {
      const double bound = std::sqrt(3.0 / fan_in);
      std::uniform_real_distribution<double> dist(-bound, bound);
      Matrix& m = params_.at(name).value;
      for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
    };
    fill(p + ".Wfh", static_cast<double>(S + node.in_dim));
    fill(p + ".Wbh", static_cast<double>(S + node.in_dim));
    fill(p + ".Wfa", static_cast<double>(S + node.in_dim));
    fill(p + ".Wba", static_cast<double>(S + node.in_dim));
    fill(p + ".Wfy", static_cast<double>(2 * S));
    fill(p + ".Wby", static_cast<double>(2 * S));
    nodes_.push_back(std::move(node));
  }
}

void GrammarNet::add_linear(const std::string& name, std::size_t in, std::size_t out,
                            double gain, std::uint64_t seed) {
  Rng rng(seed);
  const double bound = std::sqrt(3.0 * gain / static_cast<double>(in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix w(in, out);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = dist(rng);
  params_.add(name + ".W", std::move(w));
  params_.add(name + ".b", Matrix::Zero(1, out));
}

void GrammarNet::add_batch_norm(const std::string& name, std::size_t width) {
  params_.add(name + ".gamma", Matrix::Ones(1, width));
  params_.add(name + ".beta", Matrix::Zero(1, width));
  params_.add(name + ".mean", Matrix::Zero(1, width), false);
  params_.add(name + ".var", Matrix::Ones(1, width), false);
}

bool GrammarNet::node_active(std::size_t node) const {
  const ChainKind kind = grammar_catalog().at(nodes_.at(node).chain).kind;
  switch (cfg_.variant) {
    case GrammarVariant::Full: return true;
    case GrammarVariant::KinematicsSymmetry: return kind != ChainKind::Coordination;
    case GrammarVariant::KinematicsOnly: return kind == ChainKind::Kinematic;
    case GrammarVariant::None: return false;
  }
  return false;
}

std::array<std::size_t, kNumJoints> GrammarNet::fan_in() const {
  std::array<std::size_t, kNumJoints> counts{};
  for (std::size_t n = 0; n < nodes_.size(); ++n) {
    if (!node_active(n)) continue;
    for (const auto& step : nodes_[n].step_joints)
      for (JointId j : step) ++counts[index(j)];
  }
  return counts;
}

BaseOutput base_forward(Tape& t, GrammarNet& net, Var u, Mode mode, std::uint64_t dropout_seed) {
  if (static_cast<std::size_t>(t.value(u).cols()) != kPose2DDim)
    throw ShapeMismatch("base network input must have 32 columns");
  const Var feat2d = linear(t, net, "base.in", u);
  const Var b1 = residual_block(t, net, "base.block1", feat2d, mode, derive_seed({dropout_seed, 1}));
  const Var est1 = linear(t, net, "base.est1", b1);
  const Var r1 = linear(t, net, "base.reproj1", est1);
  const Var b2 = residual_block(t, net, "base.block2", r1, mode, derive_seed({dropout_seed, 2}));
  const Var v0 = linear(t, net, "base.est2", b2);
  const Var feat3d = linear(t, net, "base.reproj2", v0);
  return BaseOutput{est1, v0, tensor::concat(t, {feat3d, feat2d})};
}

std::vector<Var> brnn_forward(Tape& t, GrammarNet& net, const BrnnNode& node,
                              const std::vector<Var>& inputs) {
  const std::size_t T = inputs.size();
  if (T != node.steps)
    throw StepMismatch(node.prefix + " expects " + std::to_string(node.steps) + " steps, got " +
                       std::to_string(T));
  const std::string& p = node.prefix;
  const Var Wfh = param(t, net, p + ".Wfh"), Wbh = param(t, net, p + ".Wbh");
  const Var Wfa = param(t, net, p + ".Wfa"), Wba = param(t, net, p + ".Wba");
  const Var bfh = param(t, net, p + ".bfh"), bbh = param(t, net, p + ".bbh");
  const Var Wfy = param(t, net, p + ".Wfy"), Wby = param(t, net, p + ".Wby");
  const Var by = param(t, net, p + ".by");

  std::unordered_map<std::size_t, std::pair<Var, Var>> projected;
  std::vector<Var> drive_f(T), drive_b(T);
  for (std::size_t s = 0; s < T; ++s) {
    auto it = projected.find(inputs[s].id);
    if (it == projected.end()) {
      const Var pf = tensor::add_bias(t, tensor::matmul(t, inputs[s], Wfa), bfh);
      const Var pb = tensor::add_bias(t, tensor::matmul(t, inputs[s], Wba), bbh);
      it = projected.emplace(inputs[s].id, std::make_pair(pf, pb)).first;
    }
    drive_f[s] = it->second.first;
    drive_b[s] = it->second.second;
  }

  // Boundary states are zero, so the first step of each direction has no
  // recurrent term.
  std::vector<Var> hf(T), hb(T);
  for (std::size_t s = 0; s < T; ++s) {
    Var pre = drive_f[s];
    if (s > 0) pre = tensor::add(t, tensor::matmul(t, hf[s - 1], Wfh), pre);
    hf[s] = tensor::tanh_act(t, pre);
  }
  for (std::size_t s = T; s-- > 0;) {
    Var pre = drive_b[s];
    if (s + 1 < T) pre = tensor::add(t, tensor::matmul(t, hb[s + 1], Wbh), pre);
    hb[s] = tensor::tanh_act(t, pre);
  }

  std::vector<Var> out(T);
  for (std::size_t s = 0; s < T; ++s) {
    const Var y = tensor::add(t, tensor::matmul(t, hf[s], Wfy), tensor::matmul(t, hb[s], Wby));
    out[s] = tensor::add_bias(t, y, by);
  }
  return out;
}

GrammarOutput grammar_forward(Tape& t, GrammarNet& net, Var u, Mode mode,
                              std::uint64_t dropout_seed) {
  const BaseOutput base = base_forward(t, net, u, mode, dropout_seed);
  GrammarOutput out;
  out.v0 = base.v0;
  if (net.config().variant == GrammarVariant::None) {
    out.v_final = base.v0;
    return out;
  }

  const auto& nodes = net.nodes();
  const auto& catalog = grammar_catalog();
  // Per-step outputs of the kinematic nodes, consumed by the top layer.
  std::map<std::size_t, std::vector<Var>> chain_steps;
  std::array<std::vector<Var>, kNumJoints> pooled;

  for (std::size_t n = 0; n < nodes.size(); ++n) {
    const BrnnNode& node = nodes[n];
    if (catalog[node.chain].kind != ChainKind::Kinematic || !net.node_active(n)) continue;
    const std::vector<Var> inputs(node.steps, base.combined);
    const std::vector<Var> steps = brnn_forward(t, net, node, inputs);
    chain_steps[node.chain] = steps;
    auto& record = out.per_node[node.prefix];
    for (std::size_t s = 0; s < node.steps; ++s) {
      const JointId j = node.step_joints[s][0];
      record.emplace_back(j, steps[s]);
      pooled[index(j)].push_back(steps[s]);
    }
  }

  for (std::size_t n = 0; n < nodes.size(); ++n) {
    const BrnnNode& node = nodes[n];
    const GrammarChain& chain = catalog[node.chain];
    if (chain.kind == ChainKind::Kinematic || !net.node_active(n)) continue;
    const auto& a = chain_steps.at(chain.pair[0]);
    const auto& b = chain_steps.at(chain.pair[1]);
    std::vector<Var> inputs(node.steps);
    for (std::size_t s = 0; s < node.steps; ++s) inputs[s] = tensor::concat(t, {a[s], b[s]});
    const std::vector<Var> steps = brnn_forward(t, net, node, inputs);
    auto& record = out.per_node[node.prefix];
    for (std::size_t s = 0; s < node.steps; ++s) {
      for (std::size_t k = 0; k < 2; ++k) {
        const JointId j = node.step_joints[s][k];
        const Var est = tensor::slice_cols(t, steps[s], static_cast<Eigen::Index>(3 * k), 3);
        record.emplace_back(j, est);
        pooled[index(j)].push_back(est);
      }
    }
  }

  std::vector<Var> joints;
  joints.reserve(kNumJoints);
  for (std::size_t j = 0; j < kNumJoints; ++j) {
    if (pooled[j].empty()) throw InvalidArgument("joint without grammar estimate");
    joints.push_back(pooled[j].size() == 1 ? pooled[j][0] : tensor::mean_pool(t, pooled[j]));
  }
  out.v_final = tensor::concat(t, joints);
  return out;
}

Matrix input_matrix(const std::vector<Pose2D>& normalized) {
  Matrix m(static_cast<Eigen::Index>(normalized.size()), kPose2DDim);
  for (std::size_t i = 0; i < normalized.size(); ++i)
    m.row(static_cast<Eigen::Index>(i)) = normalized[i].flat().transpose();
  return m;
}

Matrix target_matrix(const std::vector<Pose3D>& poses) {
  Matrix m(static_cast<Eigen::Index>(poses.size()), kPose3DDim);
  for (std::size_t i = 0; i < poses.size(); ++i)
    m.row(static_cast<Eigen::Index>(i)) = root_center_pose3d(poses[i]).flat().transpose();
  return m;
}

std::vector<Pose3D> predict_batch(const std::vector<Pose2D>& u, GrammarNet& net) {
  if (u.empty()) return {};
  std::vector<Pose2D> normalized;
  normalized.reserve(u.size());
  for (const Pose2D& p : u) normalized.push_back(normalize_pose2d(p).first);
  Tape t;
  const Var x = t.constant(input_matrix(normalized));
  const Matrix out = t.value(grammar_forward(t, net, x, Mode::Eval).v_final) *
                     net.config().target_scale_mm;
  std::vector<Pose3D> poses;
  poses.reserve(u.size());
  for (Eigen::Index r = 0; r < out.rows(); ++r)
    poses.push_back(root_center_pose3d(Pose3D::from_flat(out.row(r).transpose())));
  return poses;
}

Pose3D predict(const Pose2D& u, GrammarNet& net) { return predict_batch({u}, net).front(); }

void save_checkpoint(std::ostream& out, const GrammarNet& net) {
  const NetConfig& c = net.config();
  out << "config hidden_dim " << c.base.hidden_dim << '\n'
      << "config layers_per_block " << c.base.layers_per_block << '\n'
      << "config dropout_rate " << format_double(c.base.dropout_rate) << '\n'
      << "config state_dim " << c.state_dim << '\n'
      << "config variant " << variant_name(c.variant) << '\n'
      << "config target_scale_mm " << format_double(c.target_scale_mm) << '\n';
  tensor::write_parameters(out, net.params());
}

GrammarNet load_checkpoint(std::istream& in, const std::string& source) {
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) lines.push_back(std::move(line));

  NetConfig cfg;
  std::size_t i = 0;
  for (; i < lines.size(); ++i) {
    const std::string& line = lines[i];
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::string head, key, value;
    ss >> head;
    if (head != "config") break;
    const std::size_t line_no = i + 1;
    if (!(ss >> key >> value)) throw ParseError(source, line_no, "incomplete config record");
    const auto number = parse_double(value);
    if (key != "variant" && !number)
      throw ParseError(source, line_no, "malformed config value '" + value + "'");
    if (key == "hidden_dim") cfg.base.hidden_dim = static_cast<std::size_t>(*number);
    else if (key == "layers_per_block") cfg.base.layers_per_block = static_cast<std::size_t>(*number);
    else if (key == "dropout_rate") cfg.base.dropout_rate = *number;
    else if (key == "state_dim") cfg.state_dim = static_cast<std::size_t>(*number);
    else if (key == "target_scale_mm") cfg.target_scale_mm = *number;
    else if (key == "variant") cfg.variant = parse_variant(value);
    else throw ParseError(source, line_no, "unknown config key '" + key + "'");
  }

  GrammarNet net(cfg, 0);
  std::size_t seen = 0;
  for (; i < lines.size(); ++i) {
    const std::string& line = lines[i];
    if (line.empty() || line[0] == '#') continue;
    auto [name, value] = tensor::parse_parameter_record(line, source, i + 1);
    if (!net.params().contains(name))
      throw ParseError(source, i + 1, "unknown parameter '" + name + "'");
    auto& p = net.params().at(name);
    if (p.value.rows() != value.rows() || p.value.cols() != value.cols())
      throw ParseError(source, i + 1, "shape mismatch for '" + name + "'");
    p.value = std::move(value);
    ++seen;
  }
  if (seen != net.params().size())
    throw ParseError(source, lines.size(), "checkpoint has " + std::to_string(seen) + " of " +
                                               std::to_string(net.params().size()) + " parameters");
  return net;
}

}  // namespace poselift
