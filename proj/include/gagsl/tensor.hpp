#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "gagsl/error.hpp"
#include "gagsl/matrix.hpp"
#include "gagsl/rng.hpp"

namespace gagsl {

// Trainable parameter. Gradients accumulate across backward() calls until
// zero_grad(); requires_grad gates whether tapes propagate into it, which is
// how the alternating phases isolate their parameter groups.
struct Param {
  std::string name;
  Matrix value;
  Matrix grad;
  bool requires_grad = false;

  Param() = default;
  Param(std::string n, Matrix v)
      : name(std::move(n)), value(std::move(v)), grad(value.rows(), value.cols()) {}

  void zero_grad() { grad = Matrix(value.rows(), value.cols()); }
};

// Glorot-style uniform fill: limit = sqrt(6 / (fan_in + fan_out)).
inline Matrix glorot_uniform(std::size_t rows, std::size_t cols, RngStream rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) m(i, j) = rng.uniform(-limit, limit);
  return m;
}

// Addresses one dropout application; the mask at (key, cell) is a pure
// function of these fields, so replays are exact.
struct DropoutKey {
  std::uint64_t seed = 0;
  std::uint64_t layer = 0;
  std::uint64_t step = 0;
};

struct Tensor {
  std::int32_t id = -1;
};

// Reverse-mode tape over dense matrices. Nodes are recorded in topological
// order by construction; backward walks them once in reverse.
class Tape {
  enum class Op {
    leaf,
    matmul,
    add,
    scale,
    relu,
    row_softmax,
    log,
    dropout,
    concat_cols,
    gather_rows,
    l2_normalize_rows,
    transpose,
    elementwise_mul,
    reduce_mean,
    rsqrt,
    scatter_pairs,
    row_log_softmax,
  };

  struct Node {
    Op op = Op::leaf;
    std::int32_t a = -1, b = -1;
    Matrix value;
    Matrix grad;          // allocated lazily during backward
    bool needs_grad = false;
    Param* param = nullptr;          // leaf only
    double scalar = 0.0;             // scale
    Matrix aux;                      // dropout mask / l2 row norms
    std::vector<std::size_t> index;  // gather_rows
    std::vector<std::pair<std::size_t, std::size_t>> pairs;  // scatter_pairs
    std::size_t dim = 0;             // scatter_pairs output size / concat split
  };

 public:
  const Matrix& value(Tensor t) const { return nodes_[check(t)].value; }

  // Constant leaf; gradients never flow into it.
  Tensor constant(Matrix v) {
    Node n;
    n.value = std::move(v);
    return push(std::move(n));
  }

  // Differentiable leaf bound to a parameter. backward() adds into p.grad
  // when p.requires_grad is set.
  Tensor leaf(Param& p) {
    Node n;
    n.value = p.value;
    n.param = &p;
    n.needs_grad = p.requires_grad;
    return push(std::move(n));
  }

  Tensor matmul(Tensor a, Tensor b) {
    Node n = binary(Op::matmul, a, b);
    n.value = gagsl::matmul(val(a), val(b));
    return push(std::move(n));
  }

  Tensor add(Tensor a, Tensor b) {
    Node n = binary(Op::add, a, b);
    if (!val(a).same_shape(val(b))) throw ContractViolation("add: shape mismatch");
    n.value = val(a) + val(b);
    return push(std::move(n));
  }

  Tensor scale(Tensor a, double s) {
    Node n = unary(Op::scale, a);
    n.scalar = s;
    n.value = val(a) * s;
    return push(std::move(n));
  }

  Tensor relu(Tensor a) {
    Node n = unary(Op::relu, a);
    n.value = val(a);
    for (std::size_t i = 0; i < n.value.size(); ++i)
      if (n.value.data()[i] < 0.0) n.value.data()[i] = 0.0;
    return push(std::move(n));
  }

  // Stable row softmax: subtract the row max before exponentiating.
  Tensor row_softmax(Tensor a) {
    Node n = unary(Op::row_softmax, a);
    n.value = softmax_rows(val(a), false);
    return push(std::move(n));
  }

  // Stable row log-softmax via log-sum-exp.
  Tensor row_log_softmax(Tensor a) {
    Node n = unary(Op::row_log_softmax, a);
    n.value = softmax_rows(val(a), true);
    return push(std::move(n));
  }

  Tensor log(Tensor a) {
    Node n = unary(Op::log, a);
    n.value = val(a);
    for (std::size_t i = 0; i < n.value.size(); ++i) {
      if (n.value.data()[i] <= 0.0)
        throw ContractViolation("log: non-positive entry");
      n.value.data()[i] = std::log(n.value.data()[i]);
    }
    return push(std::move(n));
  }

  // Inverted-scaling dropout: kept entries are divided by 1-p so the
  // expectation matches the input. Identity in eval mode (train=false).
  Tensor dropout(Tensor a, double p, const DropoutKey& key, bool train) {
    if (p < 0.0 || p >= 1.0) throw ContractViolation("dropout: p must be in [0, 1)");
    if (!train || p == 0.0) return a;
    Node n = unary(Op::dropout, a);
    const Matrix& x = val(a);
    n.aux = Matrix(x.rows(), x.cols());
    const double keep_scale = 1.0 / (1.0 - p);
    for (std::size_t i = 0; i < x.rows(); ++i)
      for (std::size_t j = 0; j < x.cols(); ++j) {
        const std::uint64_t cell = i * x.cols() + j;
        n.aux(i, j) = unit_at(key.seed, key.layer, key.step, cell) >= p ? keep_scale : 0.0;
      }
    n.value = x.hadamard(n.aux);
    return push(std::move(n));
  }

  Tensor concat_cols(Tensor a, Tensor b) {
    Node n = binary(Op::concat_cols, a, b);
    const Matrix& x = val(a);
    const Matrix& y = val(b);
    if (x.rows() != y.rows()) throw ContractViolation("concat_cols: row mismatch");
    n.dim = x.cols();
    n.value = Matrix(x.rows(), x.cols() + y.cols());
    for (std::size_t i = 0; i < x.rows(); ++i) {
      for (std::size_t j = 0; j < x.cols(); ++j) n.value(i, j) = x(i, j);
      for (std::size_t j = 0; j < y.cols(); ++j) n.value(i, x.cols() + j) = y(i, j);
    }
    return push(std::move(n));
  }

  Tensor gather_rows(Tensor a, std::vector<std::size_t> index) {
    Node n = unary(Op::gather_rows, a);
    const Matrix& x = val(a);
    for (std::size_t r : index)
      if (r >= x.rows()) throw ContractViolation("gather_rows: index out of range");
    n.value = Matrix(index.size(), x.cols());
    for (std::size_t i = 0; i < index.size(); ++i)
      for (std::size_t j = 0; j < x.cols(); ++j) n.value(i, j) = x(index[i], j);
    n.index = std::move(index);
    return push(std::move(n));
  }

  // Rows scaled to unit L2 norm; rows with norm <= eps are scaled by 1/eps
  // instead (a fixed linear map, so the gradient stays bounded).
  Tensor l2_normalize_rows(Tensor a) {
    Node n = unary(Op::l2_normalize_rows, a);
    const Matrix& x = val(a);
    n.value = Matrix(x.rows(), x.cols());
    n.aux = Matrix(x.rows(), 1);
    for (std::size_t i = 0; i < x.rows(); ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < x.cols(); ++j) s += x(i, j) * x(i, j);
      const double norm = std::sqrt(s);
      n.aux(i, 0) = norm;
      const double inv = 1.0 / std::max(norm, kL2Eps);
      for (std::size_t j = 0; j < x.cols(); ++j) n.value(i, j) = x(i, j) * inv;
    }
    return push(std::move(n));
  }

  Tensor transpose(Tensor a) {
    Node n = unary(Op::transpose, a);
    n.value = val(a).transpose();
    return push(std::move(n));
  }

  Tensor elementwise_mul(Tensor a, Tensor b) {
    Node n = binary(Op::elementwise_mul, a, b);
    if (!val(a).same_shape(val(b))) throw ContractViolation("elementwise_mul: shape mismatch");
    n.value = val(a).hadamard(val(b));
    return push(std::move(n));
  }

  // Mean over all entries; output is 1x1.
  Tensor reduce_mean(Tensor a) {
    Node n = unary(Op::reduce_mean, a);
    const Matrix& x = val(a);
    if (x.size() == 0) throw ContractViolation("reduce_mean: empty input");
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += x.data()[i];
    n.value = Matrix(1, 1);
    n.value(0, 0) = s / static_cast<double>(x.size());
    return push(std::move(n));
  }

  // Elementwise 1/sqrt(max(x, eps)); zero gradient on the floored branch.
  Tensor rsqrt(Tensor a) {
    Node n = unary(Op::rsqrt, a);
    n.value = val(a);
    for (std::size_t i = 0; i < n.value.size(); ++i)
      n.value.data()[i] = 1.0 / std::sqrt(std::max(n.value.data()[i], kRsqrtEps));
    return push(std::move(n));
  }

  // Scatter a K x 1 column into a dim x dim matrix at the given (row, col)
  // positions; everything else is exactly zero. Positions must be distinct.
  Tensor scatter_pairs(Tensor values, std::vector<std::pair<std::size_t, std::size_t>> pairs,
                       std::size_t dim) {
    Node n = unary(Op::scatter_pairs, values);
    const Matrix& v = val(values);
    if (v.cols() != 1) throw ContractViolation("scatter_pairs: values must be a column");
    if (v.rows() != pairs.size()) throw ContractViolation("scatter_pairs: pair count mismatch");
    n.value = Matrix(dim, dim);
    for (std::size_t k = 0; k < pairs.size(); ++k) {
      const auto [i, j] = pairs[k];
      if (i >= dim || j >= dim) throw ContractViolation("scatter_pairs: position out of range");
      n.value(i, j) = v(k, 0);
    }
    n.pairs = std::move(pairs);
    n.dim = dim;
    return push(std::move(n));
  }

  // Seeds d(loss)/d(loss) = 1 and accumulates into every reachable
  // requires_grad leaf's Param::grad.
  void backward(Tensor loss) {
    Node& top = nodes_[check(loss)];
    if (top.value.rows() != 1 || top.value.cols() != 1)
      throw ContractViolation("backward: loss must be 1x1");
    if (!top.needs_grad) return;
    top.grad = Matrix(1, 1);
    top.grad(0, 0) = 1.0;

    for (std::size_t idx = nodes_.size(); idx-- > 0;) {
      Node& n = nodes_[idx];
      if (!n.needs_grad || n.grad.empty()) continue;
      switch (n.op) {
        case Op::leaf:
          if (n.param && n.param->requires_grad) n.param->grad += n.grad;
          break;
        case Op::matmul: {
          if (wants(n.a)) into(n.a) += gagsl::matmul(n.grad, nodes_[n.b].value.transpose());
          if (wants(n.b)) into(n.b) += gagsl::matmul(nodes_[n.a].value.transpose(), n.grad);
          break;
        }
        case Op::add: {
          if (wants(n.a)) into(n.a) += n.grad;
          if (wants(n.b)) into(n.b) += n.grad;
          break;
        }
        case Op::scale:
          if (wants(n.a)) into(n.a) += n.grad * n.scalar;
          break;
        case Op::relu: {
          if (wants(n.a)) {
            const Matrix& x = nodes_[n.a].value;
            Matrix g = n.grad;
            for (std::size_t i = 0; i < g.size(); ++i)
              if (x.data()[i] <= 0.0) g.data()[i] = 0.0;
            into(n.a) += g;
          }
          break;
        }
        case Op::row_softmax: {
          if (wants(n.a)) {
            const Matrix& s = n.value;
            Matrix g(s.rows(), s.cols());
            for (std::size_t i = 0; i < s.rows(); ++i) {
              double dot = 0.0;
              for (std::size_t j = 0; j < s.cols(); ++j) dot += s(i, j) * n.grad(i, j);
              for (std::size_t j = 0; j < s.cols(); ++j)
                g(i, j) = s(i, j) * (n.grad(i, j) - dot);
            }
            into(n.a) += g;
          }
          break;
        }
        case Op::row_log_softmax: {
          if (wants(n.a)) {
            const Matrix& ls = n.value;
            Matrix g(ls.rows(), ls.cols());
            for (std::size_t i = 0; i < ls.rows(); ++i) {
              double rowsum = 0.0;
              for (std::size_t j = 0; j < ls.cols(); ++j) rowsum += n.grad(i, j);
              for (std::size_t j = 0; j < ls.cols(); ++j)
                g(i, j) = n.grad(i, j) - std::exp(ls(i, j)) * rowsum;
            }
            into(n.a) += g;
          }
          break;
        }
        case Op::log: {
          if (wants(n.a)) {
            const Matrix& x = nodes_[n.a].value;
            Matrix g = n.grad;
            for (std::size_t i = 0; i < g.size(); ++i) g.data()[i] /= x.data()[i];
            into(n.a) += g;
          }
          break;
        }
        case Op::dropout:
          if (wants(n.a)) into(n.a) += n.grad.hadamard(n.aux);
          break;
        case Op::concat_cols: {
          const std::size_t split = n.dim;
          if (wants(n.a)) {
            Matrix& ga = into(n.a);
            for (std::size_t i = 0; i < ga.rows(); ++i)
              for (std::size_t j = 0; j < split; ++j) ga(i, j) += n.grad(i, j);
          }
          if (wants(n.b)) {
            Matrix& gb = into(n.b);
            for (std::size_t i = 0; i < gb.rows(); ++i)
              for (std::size_t j = 0; j < gb.cols(); ++j) gb(i, j) += n.grad(i, split + j);
          }
          break;
        }
        case Op::gather_rows: {
          if (wants(n.a)) {
            Matrix& g = into(n.a);
            for (std::size_t i = 0; i < n.index.size(); ++i)
              for (std::size_t j = 0; j < g.cols(); ++j) g(n.index[i], j) += n.grad(i, j);
          }
          break;
        }
        case Op::l2_normalize_rows: {
          if (wants(n.a)) {
            const Matrix& y = n.value;
            Matrix g(y.rows(), y.cols());
            for (std::size_t i = 0; i < y.rows(); ++i) {
              const double norm = n.aux(i, 0);
              if (norm > kL2Eps) {
                double dot = 0.0;
                for (std::size_t j = 0; j < y.cols(); ++j) dot += y(i, j) * n.grad(i, j);
                for (std::size_t j = 0; j < y.cols(); ++j)
                  g(i, j) = (n.grad(i, j) - y(i, j) * dot) / norm;
              } else {
                for (std::size_t j = 0; j < y.cols(); ++j) g(i, j) = n.grad(i, j) / kL2Eps;
              }
            }
            into(n.a) += g;
          }
          break;
        }
        case Op::transpose:
          if (wants(n.a)) into(n.a) += n.grad.transpose();
          break;
        case Op::elementwise_mul: {
          if (wants(n.a)) into(n.a) += n.grad.hadamard(nodes_[n.b].value);
          if (wants(n.b)) into(n.b) += n.grad.hadamard(nodes_[n.a].value);
          break;
        }
        case Op::reduce_mean: {
          if (wants(n.a)) {
            Matrix& g = into(n.a);
            const double d = n.grad(0, 0) / static_cast<double>(g.size());
            for (std::size_t i = 0; i < g.size(); ++i) g.data()[i] += d;
          }
          break;
        }
        case Op::rsqrt: {
          if (wants(n.a)) {
            const Matrix& x = nodes_[n.a].value;
            Matrix g = n.grad;
            for (std::size_t i = 0; i < g.size(); ++i) {
              const double xv = x.data()[i];
              if (xv > kRsqrtEps) {
                const double y = n.value.data()[i];  // x^{-1/2}
                g.data()[i] *= -0.5 * y * y * y;
              } else {
                g.data()[i] = 0.0;
              }
            }
            into(n.a) += g;
          }
          break;
        }
        case Op::scatter_pairs: {
          if (wants(n.a)) {
            Matrix& g = into(n.a);
            for (std::size_t k = 0; k < n.pairs.size(); ++k)
              g(k, 0) += n.grad(n.pairs[k].first, n.pairs[k].second);
          }
          break;
        }
      }
      if (n.op != Op::leaf) n.grad = Matrix();  // free as we go
    }
  }

  std::size_t node_count() const { return nodes_.size(); }

 private:
  static constexpr double kL2Eps = 1e-12;
  static constexpr double kRsqrtEps = 1e-12;

  std::int32_t check(Tensor t) const {
    if (t.id < 0 || static_cast<std::size_t>(t.id) >= nodes_.size())
      throw ContractViolation("tensor handle does not belong to this tape");
    return t.id;
  }
  const Matrix& val(Tensor t) const { return nodes_[check(t)].value; }

  Node unary(Op op, Tensor a) {
    Node n;
    n.op = op;
    n.a = check(a);
    n.needs_grad = nodes_[n.a].needs_grad;
    return n;
  }
  Node binary(Op op, Tensor a, Tensor b) {
    Node n;
    n.op = op;
    n.a = check(a);
    n.b = check(b);
    n.needs_grad = nodes_[n.a].needs_grad || nodes_[n.b].needs_grad;
    return n;
  }

  bool wants(std::int32_t id) const { return nodes_[id].needs_grad; }

  Matrix& into(std::int32_t id) {
    Node& n = nodes_[id];
    if (n.grad.empty()) n.grad = Matrix(n.value.rows(), n.value.cols());
    return n.grad;
  }

  static Matrix softmax_rows(const Matrix& x, bool log_form) {
    if (x.cols() == 0) throw ContractViolation("softmax: zero columns");
    Matrix out(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i) {
      double mx = x(i, 0);
      for (std::size_t j = 1; j < x.cols(); ++j) mx = std::max(mx, x(i, j));
      double sum = 0.0;
      for (std::size_t j = 0; j < x.cols(); ++j) sum += std::exp(x(i, j) - mx);
      if (log_form) {
        const double lse = mx + std::log(sum);
        for (std::size_t j = 0; j < x.cols(); ++j) out(i, j) = x(i, j) - lse;
      } else {
        const double inv = 1.0 / sum;
        for (std::size_t j = 0; j < x.cols(); ++j) out(i, j) = std::exp(x(i, j) - mx) * inv;
      }
    }
    return out;
  }

  Tensor push(Node n) {
    if (!n.value.all_finite()) throw NumericError("non-finite tensor value on tape");
    nodes_.push_back(std::move(n));
    return Tensor{static_cast<std::int32_t>(nodes_.size() - 1)};
  }

  std::vector<Node> nodes_;
};

struct AdamConfig {
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

// Bias-corrected Adam with decoupled weight decay over one parameter group.
class Adam {
 public:
  Adam(std::vector<Param*> params, AdamConfig cfg)
      : params_(std::move(params)), cfg_(cfg) {
    for (Param* p : params_) {
      m_.emplace_back(p->value.rows(), p->value.cols());
      v_.emplace_back(p->value.rows(), p->value.cols());
    }
  }

  void step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
      Param& p = *params_[k];
      for (std::size_t i = 0; i < p.value.size(); ++i) {
        const double g = p.grad.data()[i];
        double& m = m_[k].data()[i];
        double& v = v_[k].data()[i];
        m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * g;
        v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * g * g;
        const double mhat = m / bc1;
        const double vhat = v / bc2;
        double upd = cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        if (cfg_.weight_decay != 0.0) upd += cfg_.lr * cfg_.weight_decay * p.value.data()[i];
        p.value.data()[i] -= upd;
      }
    }
  }

  void zero_grad() {
    for (Param* p : params_) p->zero_grad();
  }

  std::uint64_t step_count() const { return t_; }
  const AdamConfig& config() const { return cfg_; }
  const std::vector<Param*>& params() const { return params_; }
  const Matrix& first_moment(std::size_t k) const { return m_[k]; }
  const Matrix& second_moment(std::size_t k) const { return v_[k]; }
  void restore_state(std::uint64_t t, std::vector<Matrix> m, std::vector<Matrix> v) {
    if (m.size() != params_.size() || v.size() != params_.size())
      throw ContractViolation("restore_state: moment count mismatch");
    t_ = t;
    m_ = std::move(m);
    v_ = std::move(v);
  }

 private:
  std::vector<Param*> params_;
  AdamConfig cfg_;
  std::vector<Matrix> m_, v_;
  std::uint64_t t_ = 0;
};

// Max over sampled parameter coordinates of
// |analytic - central_fd| / max(1, |central_fd|), where the analytic side
// comes from one backward() pass and the finite-difference side re-runs the
// builder at p ± h. The builder must be deterministic (dropout off).
inline double gradient_check(const std::function<Tensor(Tape&)>& build_loss,
                             const std::vector<Param*>& params, double h = 1e-5,
                             std::size_t max_coords_per_param = 0) {
  for (Param* p : params) p->zero_grad();
  std::vector<Matrix> analytic;
  {
    Tape tape;
    Tensor loss = build_loss(tape);
    tape.backward(loss);
  }
  analytic.reserve(params.size());
  for (Param* p : params) analytic.push_back(p->grad);

  const auto eval_loss = [&]() {
    Tape tape;
    Tensor loss = build_loss(tape);
    return tape.value(loss)(0, 0);
  };

  double max_rel = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Param& p = *params[k];
    if (!p.requires_grad) continue;
    const std::size_t total = p.value.size();
    std::size_t count = total;
    std::size_t stride = 1;
    if (max_coords_per_param > 0 && total > max_coords_per_param) {
      count = max_coords_per_param;
      stride = total / max_coords_per_param;
    }
    for (std::size_t c = 0; c < count; ++c) {
      const std::size_t i = c * stride;
      const double orig = p.value.data()[i];
      p.value.data()[i] = orig + h;
      const double lp = eval_loss();
      p.value.data()[i] = orig - h;
      const double lm = eval_loss();
      p.value.data()[i] = orig;
      const double fd = (lp - lm) / (2.0 * h);
      const double rel = std::fabs(analytic[k].data()[i] - fd) / std::max(1.0, std::fabs(fd));
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

}  // namespace gagsl
