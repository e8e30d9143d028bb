#include "poselift/errors.hpp"
#include "poselift/posenet.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <sstream>

namespace poselift {
namespace {

using tensor::Matrix;
using tensor::Mode;
using tensor::Tape;
using tensor::Var;

NetConfig small_config(double dropout = 0.0) {
  NetConfig c;
  c.base.hidden_dim = 48;
  c.base.dropout_rate = dropout;
  c.state_dim = 6;
  return c;
}

Matrix random_inputs(std::mt19937_64& rng, std::size_t n) {
  std::vector<Pose2D> u;
  for (std::size_t i = 0; i < n; ++i) u.push_back(normalize_pose2d(testing::random_pose2d(rng)).first);
  return input_matrix(u);
}

Matrix random_targets(std::mt19937_64& rng, std::size_t n) {
  std::normal_distribution<double> d(0.0, 0.3);
  Matrix m(static_cast<Eigen::Index>(n), kPose3DDim);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = d(rng);
  return m;
}

void zero_node(GrammarNet& net, const std::string& prefix) {
  for (const char* s : {".Wfh", ".Wbh", ".Wfa", ".Wba", ".bfh", ".bbh", ".Wfy", ".Wby", ".by"})
    net.params().at(prefix + s).value.setZero();
}

void expect_grads_ok(const std::function<Var(Tape&)>& fn, tensor::ParameterStore& store,
                     std::size_t per_param = 12) {
  tensor::GradCheckOptions opts;
  opts.max_entries_per_param = per_param;
  const auto r = tensor::grad_check(fn, store, opts);
  EXPECT_TRUE(r.passed) << r.worst_param << "[" << r.worst_index << "] analytic " << r.worst_analytic
                        << " numeric " << r.worst_numeric << " rel " << r.max_rel_error;
}

TEST(GrammarNet, TopologyMatchesCatalog) {
  GrammarNet net(small_config());
  ASSERT_EQ(net.nodes().size(), 9u);
  const std::vector<std::size_t> steps{4, 3, 3, 3, 3, 3, 3, 3, 3};
  const std::vector<std::string> prefixes{"kin.spine", "kin.l.arm", "kin.r.arm", "kin.l.leg", "kin.r.leg",
                                          "sym.arm",   "sym.leg",   "crd.l2r",   "crd.r2l"};
  for (std::size_t n = 0; n < 9; ++n) {
    EXPECT_EQ(net.nodes()[n].chain, n);
    EXPECT_EQ(net.nodes()[n].steps, steps[n]);
    EXPECT_EQ(net.nodes()[n].prefix, prefixes[n]);
    EXPECT_EQ(net.params().at(prefixes[n] + ".Wfy").value.cols(), static_cast<Eigen::Index>(net.nodes()[n].out_dim));
    EXPECT_EQ(net.params().at(prefixes[n] + ".Wfh").value.rows(), 6);
  }
}

TEST(GrammarNet, FanInPerVariant) {
  GrammarNet net(small_config());
  auto fan = net.fan_in();
  std::size_t total = 0;
  for (JointId j : all_joints()) {
    const bool spine = j == JointId::Hip || j == JointId::Spine || j == JointId::Thorax || j == JointId::Head;
    EXPECT_EQ(fan[index(j)], spine ? 1u : 3u) << joint_name(j);
    total += fan[index(j)];
  }
  EXPECT_EQ(total, 40u);
  net.set_variant(GrammarVariant::KinematicsSymmetry);
  EXPECT_EQ(net.fan_in()[index(JointId::LWrist)], 2u);
  net.set_variant(GrammarVariant::KinematicsOnly);
  for (std::size_t f : net.fan_in()) EXPECT_EQ(f, 1u);
  net.set_variant(GrammarVariant::None);
  for (std::size_t f : net.fan_in()) EXPECT_EQ(f, 0u);
}

TEST(GrammarNet, InvalidConfigsRejected) {
  NetConfig c = small_config();
  c.base.hidden_dim = 47;
  EXPECT_THROW(GrammarNet{c}, InvalidArgument);
  c = small_config();
  c.base.layers_per_block = 0;
  EXPECT_THROW(GrammarNet{c}, InvalidArgument);
  EXPECT_THROW(parse_variant("bogus"), InvalidArgument);
  EXPECT_EQ(parse_variant("kinematics-only"), GrammarVariant::KinematicsOnly);
}

TEST(BaseForward, OutputShapes) {
  NetConfig c = small_config();
  c.base.hidden_dim = 64;
  GrammarNet net(c, 1);
  std::mt19937_64 rng(41);
  Tape t;
  const BaseOutput out = base_forward(t, net, t.constant(random_inputs(rng, 5)), Mode::Train);
  EXPECT_EQ(t.value(out.v0).rows(), 5);
  EXPECT_EQ(t.value(out.v0).cols(), 48);
  EXPECT_EQ(t.value(out.block1_estimate).cols(), 48);
  EXPECT_EQ(t.value(out.combined).cols(), 128);
  EXPECT_THROW(base_forward(t, net, t.constant(Matrix::Zero(2, 31)), Mode::Train), ShapeMismatch);
}

TEST(BaseForward, DeadBlocksReduceToTerminalAffines) {
  NetConfig c = small_config(0.5);
  GrammarNet net(c, 2);
  for (auto& [name, p] : net.params())
    if (name.rfind("base.block", 0) == 0 && p.trainable) p.value.setZero();
  std::mt19937_64 rng(42);
  const Matrix u = random_inputs(rng, 4);
  auto lin = [&](const std::string& n, const Matrix& x) -> Matrix {
    return (x * net.params().at(n + ".W").value).rowwise() + net.params().at(n + ".b").value.row(0);
  };
  const Matrix want = lin("base.est2", lin("base.reproj1", lin("base.est1", lin("base.in", u))));
  for (Mode mode : {Mode::Train, Mode::Eval}) {
    Tape t;
    const Matrix& v0 = t.value(base_forward(t, net, t.constant(u), mode, 9).v0);
    EXPECT_LT((v0 - want).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Brnn, ZeroWeightsEmitOutputBias) {
  GrammarNet net(small_config(), 3);
  const BrnnNode& node = net.nodes()[0];
  zero_node(net, node.prefix);
  net.params().at(node.prefix + ".by").value << 0.5, -1.0, 2.0;
  std::mt19937_64 rng(43);
  Tape t;
  const Var in = t.constant(random_targets(rng, 3).leftCols(96));
  for (Var y : brnn_forward(t, net, node, std::vector<Var>(4, in)))
    for (Eigen::Index r = 0; r < 3; ++r) EXPECT_EQ(t.value(y).row(r), net.params().at(node.prefix + ".by").value.row(0));
}

TEST(Brnn, SingleStepIsTwoStreamAffine) {
  GrammarNet net(small_config(), 4);
  BrnnNode node = net.nodes()[5];  // sym.arm, 6-d in and out
  node.steps = 1;
  std::mt19937_64 rng(44);
  const Matrix a = random_targets(rng, 3).leftCols(6);
  auto P = [&](const char* s) -> const Matrix& { return net.params().at(node.prefix + s).value; };
  const Matrix hf = ((a * P(".Wfa")).rowwise() + P(".bfh").row(0)).array().tanh().matrix();
  const Matrix hb = ((a * P(".Wba")).rowwise() + P(".bbh").row(0)).array().tanh().matrix();
  const Matrix want = (hf * P(".Wfy") + hb * P(".Wby")).rowwise() + P(".by").row(0);
  Tape t;
  const auto out = brnn_forward(t, net, node, {t.constant(a)});
  EXPECT_LT((t.value(out[0]) - want).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Brnn, RecurrenceOracle) {
  GrammarNet net(small_config(), 5);
  const BrnnNode& node = net.nodes()[6];
  std::mt19937_64 rng(45);
  std::vector<Matrix> a;
  for (int s = 0; s < 3; ++s) a.push_back(random_targets(rng, 2).leftCols(6));
  auto P = [&](const char* s) -> const Matrix& { return net.params().at(node.prefix + s).value; };
  std::vector<Matrix> hf(3), hb(3);
  for (int s = 0; s < 3; ++s) {
    Matrix pre = (a[s] * P(".Wfa")).rowwise() + P(".bfh").row(0);
    if (s > 0) pre += hf[s - 1] * P(".Wfh");
    hf[s] = pre.array().tanh().matrix();
  }
  for (int s = 2; s >= 0; --s) {
    Matrix pre = (a[s] * P(".Wba")).rowwise() + P(".bbh").row(0);
    if (s < 2) pre += hb[s + 1] * P(".Wbh");
    hb[s] = pre.array().tanh().matrix();
  }
  Tape t;
  std::vector<Var> in;
  for (const auto& m : a) in.push_back(t.constant(m));
  const auto out = brnn_forward(t, net, node, in);
  for (int s = 0; s < 3; ++s) {
    const Matrix want = (hf[s] * P(".Wfy") + hb[s] * P(".Wby")).rowwise() + P(".by").row(0);
    EXPECT_LT((t.value(out[s]) - want).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Brnn, StepMismatch) {
  GrammarNet net(small_config());
  Tape t;
  const Var x = t.constant(Matrix::Zero(2, 96));
  EXPECT_THROW(brnn_forward(t, net, net.nodes()[0], std::vector<Var>(3, x)), StepMismatch);
}

TEST(Brnn, GradientThroughBothDirections) {
  GrammarNet net(small_config(), 6);
  const BrnnNode node = net.nodes()[1];
  std::mt19937_64 rng(46);
  const Matrix feat = random_targets(rng, 4).leftCols(96);
  const Matrix target = random_targets(rng, 4).leftCols(9);
  tensor::ParameterStore& store = net.params();
  // Only this node's parameters take part; the rest get zero gradient.
  expect_grads_ok([&](Tape& t) {
    const Var x = t.constant(feat);
    auto out = brnn_forward(t, net, node, {x, x, x});
    return tensor::euclidean_loss(t, tensor::concat(t, out), target);
  }, store, 30);
}

TEST(GrammarForward, ConstantNodesPoolToThatConstant) {
  GrammarNet net(small_config(), 7);
  for (const auto& node : net.nodes()) {
    zero_node(net, node.prefix);
    Matrix& by = net.params().at(node.prefix + ".by").value;
    for (Eigen::Index i = 0; i < by.cols(); ++i) by(0, i) = 1.0 + static_cast<double>(i % 3);
  }
  std::mt19937_64 rng(47);
  Tape t;
  const GrammarOutput out = grammar_forward(t, net, t.constant(random_inputs(rng, 3)), Mode::Eval);
  const Matrix& v = t.value(out.v_final);
  for (Eigen::Index r = 0; r < 3; ++r)
    for (Eigen::Index c = 0; c < 48; ++c) EXPECT_EQ(v(r, c), 1.0 + static_cast<double>(c % 3));
  std::size_t estimates = 0;
  for (const auto& [prefix, list] : out.per_node) estimates += list.size();
  EXPECT_EQ(estimates, 40u);
}

TEST(GrammarForward, MeanPoolOfPerNodeEstimates) {
  GrammarNet net(small_config(), 8);
  std::mt19937_64 rng(48);
  Tape t;
  const GrammarOutput out = grammar_forward(t, net, t.constant(random_inputs(rng, 3)), Mode::Eval);
  std::array<Matrix, kNumJoints> sum;
  std::array<int, kNumJoints> count{};
  for (auto& s : sum) s = Matrix::Zero(3, 3);
  for (const auto& [prefix, list] : out.per_node)
    for (const auto& [j, v] : list) {
      sum[index(j)] += t.value(v);
      ++count[index(j)];
    }
  for (std::size_t j = 0; j < kNumJoints; ++j) {
    const Matrix want = sum[j] / count[j];
    EXPECT_LT((t.value(out.v_final).middleCols(3 * j, 3) - want).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(GrammarForward, NoGrammarReturnsBaseEstimate) {
  NetConfig c = small_config();
  c.variant = GrammarVariant::None;
  GrammarNet net(c, 9);
  std::mt19937_64 rng(49);
  Tape t;
  const GrammarOutput out = grammar_forward(t, net, t.constant(random_inputs(rng, 2)), Mode::Eval);
  EXPECT_EQ(t.value(out.v_final), t.value(out.v0));
  EXPECT_TRUE(out.per_node.empty());
}

TEST(GrammarForward, MaskedNodesLeaveTheGraph) {
  NetConfig c = small_config();
  c.variant = GrammarVariant::KinematicsOnly;
  GrammarNet net(c, 10);
  std::mt19937_64 rng(50);
  Tape t;
  const GrammarOutput out = grammar_forward(t, net, t.constant(random_inputs(rng, 2)), Mode::Eval);
  EXPECT_EQ(out.per_node.size(), 5u);
  EXPECT_FALSE(out.per_node.count("sym.arm"));
}

TEST(GradCheck, BaseNetworkEveryParameter) {
  GrammarNet net(small_config(0.5), 11);
  std::mt19937_64 rng(51);
  const Matrix u = random_inputs(rng, 4), y = random_targets(rng, 4);
  expect_grads_ok([&](Tape& t) {
    return tensor::euclidean_loss(t, base_forward(t, net, t.constant(u), Mode::Train, 3).v0, y);
  }, net.params());
}

TEST(GradCheck, FullNetworkEveryParameter) {
  GrammarNet net(small_config(0.5), 12);
  std::mt19937_64 rng(52);
  const Matrix u = random_inputs(rng, 4), y = random_targets(rng, 4);
  expect_grads_ok([&](Tape& t) {
    return tensor::euclidean_loss(t, grammar_forward(t, net, t.constant(u), Mode::Train, 3).v_final, y);
  }, net.params());
}

TEST(Predict, TranslationInvariantAndRootRelative) {
  GrammarNet net(small_config(0.5), 13);
  std::mt19937_64 rng(53);
  const Pose2D u = testing::random_pose2d(rng);
  Pose2D shifted = u;
  shifted.coords.rowwise() += Eigen::RowVector2d(64.0, -32.0);
  const Pose3D a = predict(u, net), b = predict(shifted, net);
  // Equal up to the rounding of the shifted centroid.
  EXPECT_LT((a.coords - b.coords).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_EQ(a.joint(JointId::Hip), Eigen::Vector3d::Zero());
  EXPECT_EQ(predict(u, net).coords, a.coords);
}

TEST(Predict, BatchOfOneMatchesBatchRow) {
  GrammarNet net(small_config(0.5), 14);
  // Non-trivial running statistics.
  for (auto& [name, p] : net.params())
    if (name.ends_with(".bn.mean")) p.value.setConstant(0.1);
    else if (name.ends_with(".bn.var")) p.value.setConstant(1.7);
  std::mt19937_64 rng(54);
  std::vector<Pose2D> u;
  for (int i = 0; i < 7; ++i) u.push_back(testing::random_pose2d(rng));
  const auto batch = predict_batch(u, net);
  for (std::size_t i = 0; i < u.size(); ++i)
    EXPECT_LT((predict(u[i], net).coords - batch[i].coords).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Predict, DegeneratePoseRejected) {
  GrammarNet net(small_config());
  Pose2D u;
  u.coords.setConstant(3.0);
  EXPECT_THROW(predict(u, net), DegeneratePose);
}

TEST(Checkpoint, RoundTripPredictsIdentically) {
  NetConfig c = small_config(0.25);
  c.variant = GrammarVariant::KinematicsSymmetry;
  GrammarNet net(c, 15);
  std::stringstream ss;
  save_checkpoint(ss, net);
  GrammarNet back = load_checkpoint(ss, "mem");
  EXPECT_EQ(back.config().variant, GrammarVariant::KinematicsSymmetry);
  EXPECT_EQ(back.config().base.dropout_rate, 0.25);
  for (const auto& [name, p] : net.params()) EXPECT_EQ(p.value, back.params().at(name).value) << name;
  std::mt19937_64 rng(55);
  const Pose2D u = testing::random_pose2d(rng);
  EXPECT_EQ(predict(u, net).coords, predict(u, back).coords);
}

TEST(Checkpoint, TruncatedFileRejected) {
  GrammarNet net(small_config());
  std::stringstream ss;
  save_checkpoint(ss, net);
  std::string text = ss.str();
  text.resize(text.rfind('\n', text.size() - 2) + 1);
  std::stringstream cut(text);
  EXPECT_THROW(load_checkpoint(cut, "mem"), ParseError);
}

}  // namespace
}  // namespace poselift
