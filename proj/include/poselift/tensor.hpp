#pragma once

// Minimal tape-based reverse-mode differentiation over dense row-batched
// matrices (rows = samples, columns = features), plus Adam and a
// finite-difference gradient checker.

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace poselift::tensor {

using Matrix = Eigen::MatrixXd;

enum class Mode { Train, Eval };

struct Parameter {
  Matrix value;
  Matrix grad;
  /// Non-trainable slots (batch-norm running statistics) are checkpointed but
  /// never touched by the optimiser.
  bool trainable = true;
};

/// Named parameter registry. Iteration order is lexicographic by name.
class ParameterStore {
 public:
  Parameter& add(const std::string& name, Matrix init, bool trainable = true);
  Parameter& at(const std::string& name);
  const Parameter& at(const std::string& name) const;
  bool contains(const std::string& name) const { return params_.count(name) > 0; }
  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count(bool trainable_only = true) const;
  void zero_grad();

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::map<std::string, Parameter> params_;
};

/// Text records `name rows cols v...`, shortest round-trip decimal form.
void write_parameters(std::ostream& out, const ParameterStore& store);
/// Overwrites the values of existing entries; throws ParseError on unknown
/// names, shape mismatches or malformed numbers.
void read_parameters(std::istream& in, ParameterStore& store, const std::string& source,
                     std::size_t first_line = 1);
/// Parses one record line into (name, value). Throws ParseError.
std::pair<std::string, Matrix> parse_parameter_record(const std::string& line,
                                                      const std::string& source,
                                                      std::size_t line_no);
std::string format_parameter_record(const std::string& name, const Matrix& value);

struct Var {
  std::size_t id = 0;
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, const Matrix& out_grad)>;

  Var constant(Matrix value);
  /// Leaf bound to a parameter; backward accumulates into `p.grad`.
  Var parameter(Parameter& p);

  /// Records a node. Throws NonFinite if `value` has NaN/Inf entries.
  Var record(Matrix value, Backward backward);

  const Matrix& value(Var v) const { return nodes_.at(v.id).value; }
  /// Gradient accumulated for `v` by the last backward(); zero-sized if none.
  const Matrix& grad(Var v) const { return nodes_.at(v.id).grad; }
  void accumulate(Var v, const Matrix& g);

  /// Seeds d(loss)/d(loss) = 1 for a 1x1 node and runs every recorded
  /// backward function in reverse order.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    Backward backward;
  };
  std::vector<Node> nodes_;
};

Var matmul(Tape& t, Var x, Var w);
Var add_bias(Tape& t, Var x, Var b);
Var affine(Tape& t, Var x, Var w, Var b);
Var add(Tape& t, Var a, Var b);
Var scale(Tape& t, Var x, double s);
Var relu(Tape& t, Var x);
Var tanh_act(Tape& t, Var x);
/// Column-wise concatenation.
Var concat(Tape& t, const std::vector<Var>& parts);
Var slice_cols(Tape& t, Var x, Eigen::Index offset, Eigen::Index width);
/// Element-wise mean of equally shaped inputs.
Var mean_pool(Tape& t, const std::vector<Var>& parts);

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

/// Train mode normalises with batch statistics (biased variance) and moves the
/// running statistics with momentum 0.1 (unbiased variance); eval mode uses
/// the running statistics. Throws BatchTooSmall for train batches below 2.
Var batch_norm(Tape& t, Var x, Var gamma, Var beta, Parameter& running_mean,
               Parameter& running_var, Mode mode);

/// Inverted dropout; identity in eval mode or at rate 0.
Var dropout(Tape& t, Var x, double rate, Mode mode, std::uint64_t seed);

/// Mean over the batch of the per-row Euclidean norm of pred - target
/// (squared norm when `squared`). Returns a 1x1 node.
Var euclidean_loss(Tape& t, Var pred, const Matrix& target, bool squared = false);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Bias-corrected Adam over every trainable entry of a ParameterStore.
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  void step(ParameterStore& params, double lr);
  std::int64_t steps() const { return t_; }

 private:
  struct Moments {
    Matrix m;
    Matrix v;
  };
  AdamConfig cfg_;
  std::int64_t t_ = 0;
  std::map<std::string, Moments> moments_;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  Eigen::Index worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;
  bool passed = true;
};

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  /// Denominator floor for the relative error |a - n| / max(|a|, |n|, floor).
  double magnitude_floor = 1e-6;
  /// Entries checked per parameter (evenly strided); 0 checks all of them.
  std::size_t max_entries_per_param = 0;
};

/// Compares tape gradients of the scalar built by `fn` against central
/// differences for every trainable parameter in `params`. `fn` must be
/// deterministic (fixed dropout seeds).
GradCheckReport grad_check(const std::function<Var(Tape&)>& fn, ParameterStore& params,
                           const GradCheckOptions& opts = {});

}  // namespace poselift::tensor
