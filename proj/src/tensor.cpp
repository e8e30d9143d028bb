#include "poselift/tensor.hpp"

#include "poselift/errors.hpp"
#include "poselift/numfmt.hpp"
#include "poselift/rng.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <unordered_map>

namespace poselift::tensor {

// ---------------------------------------------------------------------------
// ParameterStore

Parameter& ParameterStore::add(const std::string& name, Matrix init, bool trainable) {
  if (params_.count(name)) throw InvalidArgument("duplicate parameter '" + name + "'");
  Parameter p;
  p.grad = Matrix::Zero(init.rows(), init.cols());
  p.value = std::move(init);
  p.trainable = trainable;
  return params_.emplace(name, std::move(p)).first->second;
}

Parameter& ParameterStore::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw InvalidArgument("unknown parameter '" + name + "'");
  return it->second;
}

const Parameter& ParameterStore::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw InvalidArgument("unknown parameter '" + name + "'");
  return it->second;
}

std::size_t ParameterStore::scalar_count(bool trainable_only) const {
  std::size_t n = 0;
  for (const auto& [name, p] : params_)
    if (p.trainable || !trainable_only) n += static_cast<std::size_t>(p.value.size());
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& [name, p] : params_) p.grad.setZero(p.value.rows(), p.value.cols());
}

std::string format_parameter_record(const std::string& name, const Matrix& value) {
  std::string line = name + " " + std::to_string(value.rows()) + " " + std::to_string(value.cols());
  // Row-major value order.
  for (Eigen::Index r = 0; r < value.rows(); ++r)
    for (Eigen::Index c = 0; c < value.cols(); ++c) {
      line += ' ';
      line += format_double(value(r, c));
    }
  return line;
}

void write_parameters(std::ostream& out, const ParameterStore& store) {
  for (const auto& [name, p] : store) out << format_parameter_record(name, p.value) << '\n';
}

std::pair<std::string, Matrix> parse_parameter_record(const std::string& line,
                                                      const std::string& source,
                                                      std::size_t line_no) {
  std::istringstream ss(line);
  std::string name, tok;
  if (!(ss >> name)) throw ParseError(source, line_no, "empty parameter record");
  auto next_count = [&](const char* what) {
    if (!(ss >> tok)) throw ParseError(source, line_no, std::string("missing ") + what);
    const auto v = parse_double(tok);
    if (!v || *v < 0 || *v != std::floor(*v))
      throw ParseError(source, line_no, std::string("bad ") + what + " '" + tok + "'");
    return static_cast<Eigen::Index>(*v);
  };
  const Eigen::Index rows = next_count("row count");
  const Eigen::Index cols = next_count("column count");
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) {
      if (!(ss >> tok)) throw ParseError(source, line_no, "too few values for '" + name + "'");
      const auto v = parse_double(tok);
      if (!v) throw ParseError(source, line_no, "malformed number '" + tok + "'");
      m(r, c) = *v;
    }
  if (ss >> tok) throw ParseError(source, line_no, "trailing values after '" + name + "'");
  return {name, m};
}

void read_parameters(std::istream& in, ParameterStore& store, const std::string& source,
                     std::size_t first_line) {
  std::string line;
  std::size_t line_no = first_line - 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    auto [name, value] = parse_parameter_record(line, source, line_no);
    if (!store.contains(name)) throw ParseError(source, line_no, "unknown parameter '" + name + "'");
    Parameter& p = store.at(name);
    if (p.value.rows() != value.rows() || p.value.cols() != value.cols())
      throw ParseError(source, line_no, "shape mismatch for '" + name + "'");
    p.value = std::move(value);
  }
}

// ---------------------------------------------------------------------------
// Tape

Var Tape::record(Matrix value, Backward backward) {
  if (!value.allFinite())
    throw NonFinite("operation " + std::to_string(nodes_.size()) + " produced NaN/Inf");
  nodes_.push_back(Node{std::move(value), Matrix(), std::move(backward)});
  return Var{nodes_.size() - 1};
}

Var Tape::constant(Matrix value) { return record(std::move(value), nullptr); }

Var Tape::parameter(Parameter& p) {
  Parameter* ptr = &p;
  return record(p.value, [ptr](Tape&, const Matrix& g) { ptr->grad += g; });
}

void Tape::accumulate(Var v, const Matrix& g) {
  Node& n = nodes_.at(v.id);
  if (n.grad.size() == 0)
    n.grad = g;
  else
    n.grad += g;
}

void Tape::backward(Var loss) {
  const Node& root = nodes_.at(loss.id);
  if (root.value.rows() != 1 || root.value.cols() != 1)
    throw ShapeMismatch("backward() needs a 1x1 loss");
  for (auto& n : nodes_) n.grad.resize(0, 0);
  nodes_[loss.id].grad = Matrix::Ones(1, 1);
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.grad.size() == 0 || !n.backward) continue;
    n.backward(*this, n.grad);
  }
}

// ---------------------------------------------------------------------------
// Operations

namespace {
void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeMismatch(std::string(op) + ": " + std::to_string(a.rows()) + "x" +
                        std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                        std::to_string(b.cols()));
}
}  // namespace

Var matmul(Tape& t, Var x, Var w) {
  const Matrix& X = t.value(x);
  const Matrix& W = t.value(w);
  if (X.cols() != W.rows()) throw ShapeMismatch("matmul inner dimensions differ");
  return t.record(X * W, [x, w](Tape& tp, const Matrix& g) {
    tp.accumulate(x, g * tp.value(w).transpose());
    tp.accumulate(w, tp.value(x).transpose() * g);
  });
}

Var add_bias(Tape& t, Var x, Var b) {
  const Matrix& X = t.value(x);
  const Matrix& B = t.value(b);
  if (B.rows() != 1 || B.cols() != X.cols()) throw ShapeMismatch("bias must be 1 x features");
  Matrix out = X.rowwise() + B.row(0);
  return t.record(std::move(out), [x, b](Tape& tp, const Matrix& g) {
    tp.accumulate(x, g);
    tp.accumulate(b, g.colwise().sum());
  });
}

Var affine(Tape& t, Var x, Var w, Var b) { return add_bias(t, matmul(t, x, w), b); }

Var add(Tape& t, Var a, Var b) {
  require_same_shape(t.value(a), t.value(b), "add");
  return t.record(t.value(a) + t.value(b), [a, b](Tape& tp, const Matrix& g) {
    tp.accumulate(a, g);
    tp.accumulate(b, g);
  });
}

Var scale(Tape& t, Var x, double s) {
  return t.record(t.value(x) * s, [x, s](Tape& tp, const Matrix& g) { tp.accumulate(x, g * s); });
}

Var relu(Tape& t, Var x) {
  return t.record(t.value(x).cwiseMax(0.0), [x](Tape& tp, const Matrix& g) {
    tp.accumulate(x, (tp.value(x).array() > 0.0).select(g, 0.0));
  });
}

Var tanh_act(Tape& t, Var x) {
  Matrix y = t.value(x).array().tanh().matrix();
  const std::size_t self = t.size();
  return t.record(std::move(y), [x, self](Tape& tp, const Matrix& g) {
    const Matrix& y = tp.value(Var{self});
    tp.accumulate(x, (g.array() * (1.0 - y.array().square())).matrix());
  });
}

Var concat(Tape& t, const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeMismatch("concat of nothing");
  const Eigen::Index rows = t.value(parts[0]).rows();
  Eigen::Index cols = 0;
  for (Var p : parts) {
    if (t.value(p).rows() != rows) throw ShapeMismatch("concat row counts differ");
    cols += t.value(p).cols();
  }
  Matrix out(rows, cols);
  Eigen::Index off = 0;
  for (Var p : parts) {
    out.middleCols(off, t.value(p).cols()) = t.value(p);
    off += t.value(p).cols();
  }
  return t.record(std::move(out), [parts](Tape& tp, const Matrix& g) {
    Eigen::Index o = 0;
    for (Var p : parts) {
      const Eigen::Index w = tp.value(p).cols();
      tp.accumulate(p, g.middleCols(o, w));
      o += w;
    }
  });
}

Var slice_cols(Tape& t, Var x, Eigen::Index offset, Eigen::Index width) {
  const Matrix& X = t.value(x);
  if (offset < 0 || width < 0 || offset + width > X.cols())
    throw ShapeMismatch("slice_cols out of range");
  return t.record(X.middleCols(offset, width), [x, offset, width](Tape& tp, const Matrix& g) {
    Matrix full = Matrix::Zero(tp.value(x).rows(), tp.value(x).cols());
    full.middleCols(offset, width) = g;
    tp.accumulate(x, full);
  });
}

Var mean_pool(Tape& t, const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeMismatch("mean_pool of nothing");
  Matrix out = t.value(parts[0]);
  for (std::size_t i = 1; i < parts.size(); ++i) {
    require_same_shape(out, t.value(parts[i]), "mean_pool");
    out += t.value(parts[i]);
  }
  const double inv = 1.0 / static_cast<double>(parts.size());
  out *= inv;
  return t.record(std::move(out), [parts, inv](Tape& tp, const Matrix& g) {
    for (Var p : parts) tp.accumulate(p, g * inv);
  });
}

Var batch_norm(Tape& t, Var x, Var gamma, Var beta, Parameter& running_mean,
               Parameter& running_var, Mode mode) {
  const Matrix& X = t.value(x);
  const Eigen::Index n = X.rows();
  const Eigen::Index f = X.cols();
  const Matrix& G = t.value(gamma);
  const Matrix& B = t.value(beta);
  if (G.rows() != 1 || G.cols() != f || B.rows() != 1 || B.cols() != f ||
      running_mean.value.cols() != f || running_var.value.cols() != f)
    throw ShapeMismatch("batch_norm parameter width differs from input");

  if (mode == Mode::Eval) {
    const Eigen::RowVectorXd inv_std =
        (running_var.value.row(0).array() + kBatchNormEps).rsqrt().matrix();
    Matrix xhat =
        ((X.rowwise() - running_mean.value.row(0)).array().rowwise() * inv_std.array()).matrix();
    Matrix out = (xhat.array().rowwise() * G.row(0).array()).matrix().rowwise() + B.row(0);
    return t.record(std::move(out), [x, gamma, beta, inv_std, xhat = std::move(xhat)](
                                        Tape& tp, const Matrix& g) {
      const Eigen::RowVectorXd mult = tp.value(gamma).row(0).cwiseProduct(inv_std);
      tp.accumulate(x, (g.array().rowwise() * mult.array()).matrix());
      tp.accumulate(gamma, (g.array() * xhat.array()).colwise().sum().matrix());
      tp.accumulate(beta, g.colwise().sum());
    });
  }

  if (n < 2) throw BatchTooSmall("train-mode batch norm needs at least 2 rows, got " +
                                 std::to_string(n));
  const Eigen::RowVectorXd mean = X.colwise().mean();
  const Matrix centered = X.rowwise() - mean;
  const Eigen::RowVectorXd var = centered.array().square().colwise().mean().matrix();
  const Eigen::RowVectorXd inv_std = (var.array() + kBatchNormEps).rsqrt().matrix();
  Matrix xhat = (centered.array().rowwise() * inv_std.array()).matrix();
  Matrix out = (xhat.array().rowwise() * G.row(0).array()).matrix().rowwise() + B.row(0);

  const double unbias = static_cast<double>(n) / static_cast<double>(n - 1);
  running_mean.value = (1.0 - kBatchNormMomentum) * running_mean.value + kBatchNormMomentum * mean;
  running_var.value =
      (1.0 - kBatchNormMomentum) * running_var.value + kBatchNormMomentum * unbias * var;

  return t.record(std::move(out), [x, gamma, beta, xhat = std::move(xhat), inv_std](
                                      Tape& tp, const Matrix& g) {
    const double N = static_cast<double>(g.rows());
    const Eigen::RowVectorXd gam = tp.value(gamma).row(0);
    const Matrix dxhat = (g.array().rowwise() * gam.array()).matrix();
    const Eigen::RowVectorXd sum_dxhat = dxhat.colwise().sum();
    const Eigen::RowVectorXd sum_dxhat_xhat = (dxhat.array() * xhat.array()).colwise().sum().matrix();
    Matrix dx = ((N * dxhat.array()).matrix().rowwise() - sum_dxhat).array() -
                (xhat.array().rowwise() * sum_dxhat_xhat.array());
    dx = (dx.array().rowwise() * (inv_std.array() / N)).matrix();
    tp.accumulate(x, dx);
    tp.accumulate(gamma, (g.array() * xhat.array()).colwise().sum().matrix());
    tp.accumulate(beta, g.colwise().sum());
  });
}

Var dropout(Tape& t, Var x, double rate, Mode mode, std::uint64_t seed) {
  if (!(rate >= 0.0 && rate < 1.0)) throw InvalidArgument("dropout rate must be in [0, 1)");
  if (mode == Mode::Eval || rate == 0.0) return x;
  const Matrix& X = t.value(x);
  Rng rng(seed);
  std::bernoulli_distribution keep(1.0 - rate);
  const double s = 1.0 / (1.0 - rate);
  Matrix mask(X.rows(), X.cols());
  for (Eigen::Index c = 0; c < X.cols(); ++c)
    for (Eigen::Index r = 0; r < X.rows(); ++r) mask(r, c) = keep(rng) ? s : 0.0;
  Matrix out = X.cwiseProduct(mask);
  return t.record(std::move(out), [x, mask = std::move(mask)](Tape& tp, const Matrix& g) {
    tp.accumulate(x, g.cwiseProduct(mask));
  });
}

Var euclidean_loss(Tape& t, Var pred, const Matrix& target, bool squared) {
  const Matrix& P = t.value(pred);
  require_same_shape(P, target, "euclidean_loss");
  if (!target.allFinite()) throw NonFinite("loss target has NaN/Inf");
  const double inv_n = 1.0 / static_cast<double>(P.rows());
  Matrix diff = P - target;
  Eigen::VectorXd norms = diff.rowwise().norm();
  Matrix loss(1, 1);
  loss(0, 0) = (squared ? norms.squaredNorm() : norms.sum()) * inv_n;
  return t.record(std::move(loss), [pred, inv_n, squared, diff = std::move(diff),
                                    norms = std::move(norms)](Tape& tp, const Matrix& g) {
    Matrix d = diff;
    if (squared) {
      d *= 2.0;
    } else {
      for (Eigen::Index r = 0; r < d.rows(); ++r) {
        if (norms(r) > 0.0)
          d.row(r) /= norms(r);
        else
          d.row(r).setZero();  // subgradient at a perfect prediction
      }
    }
    tp.accumulate(pred, d * (g(0, 0) * inv_n));
  });
}

// ---------------------------------------------------------------------------
// Adam

void Adam::step(ParameterStore& params, double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (auto& [name, p] : params) {
    if (!p.trainable) continue;
    auto [it, inserted] = moments_.try_emplace(name);
    Moments& mo = it->second;
    if (inserted) {
      mo.m = Matrix::Zero(p.value.rows(), p.value.cols());
      mo.v = Matrix::Zero(p.value.rows(), p.value.cols());
    }
    mo.m = cfg_.beta1 * mo.m + (1.0 - cfg_.beta1) * p.grad;
    mo.v = cfg_.beta2 * mo.v + (1.0 - cfg_.beta2) * p.grad.cwiseAbs2();
    const Matrix update =
        ((mo.m.array() / bc1) / ((mo.v.array() / bc2).sqrt() + cfg_.epsilon)).matrix();
    p.value -= lr * update;
  }
}

// ---------------------------------------------------------------------------
// Gradient check

GradCheckReport grad_check(const std::function<Var(Tape&)>& fn, ParameterStore& params,
                           const GradCheckOptions& opts) {
  params.zero_grad();
  {
    Tape tape;
    const Var loss = fn(tape);
    tape.backward(loss);
  }
  auto eval = [&fn]() {
    Tape tape;
    return tape.value(fn(tape))(0, 0);
  };

  GradCheckReport report;
  for (auto& [name, p] : params) {
    if (!p.trainable) continue;
    const Matrix analytic = p.grad;
    const Eigen::Index n = p.value.size();
    Eigen::Index stride = 1;
    if (opts.max_entries_per_param > 0 && static_cast<std::size_t>(n) > opts.max_entries_per_param)
      stride = n / static_cast<Eigen::Index>(opts.max_entries_per_param);
    for (Eigen::Index i = 0; i < n; i += stride) {
      double& slot = p.value.data()[i];
      const double saved = slot;
      slot = saved + opts.step;
      const double up = eval();
      slot = saved - opts.step;
      const double down = eval();
      slot = saved;
      const double numeric = (up - down) / (2.0 * opts.step);
      const double a = analytic.data()[i];
      const double denom =
          std::max({std::abs(a), std::abs(numeric), opts.magnitude_floor});
      const double rel = std::abs(a - numeric) / denom;
      ++report.checked;
      if (rel > report.max_rel_error || !std::isfinite(rel)) {
        report.max_rel_error = rel;
        report.worst_param = name;
        report.worst_index = i;
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
    }
  }
  report.passed = report.max_rel_error < opts.tolerance;
  return report;
}

}  // namespace poselift::tensor
