#ifndef TAHDG_AUTODIFF_HPP
#define TAHDG_AUTODIFF_HPP

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace tahdg::ad {

// Extended-precision accumulator for sums whose term order depends on graph
// labels (neighbor aggregations, softmax denominators). Keeps relabeled runs
// bit-identical after the final round to double.
#if defined(__SIZEOF_FLOAT128__)
using accum_t = __float128;
#else
using accum_t = long double;
#endif

/// Named learnable tensor with a gradient slot. Attention vectors are stored
/// as single-column matrices.
struct Param {
  std::string name;
  Eigen::MatrixXd value;
  Eigen::MatrixXd grad;

  Param() = default;
  Param(std::string n, int rows, int cols)
      : name(std::move(n)), value(Eigen::MatrixXd::Zero(rows, cols)),
        grad(Eigen::MatrixXd::Zero(rows, cols)) {}

  void zero_grad() { grad.setZero(); }
};

struct Var {
  int id = -1;
  bool ok() const { return id >= 0; }
};

/// Reverse-mode tape over vector-valued nodes. A forward pass appends nodes;
/// backward() replays them in reverse, accumulating into node grads and
/// Param::grad. One tape per forward pass; parameters outlive the tape.
class Tape {
 public:
  Var input(Eigen::VectorXd v);
  Var scalar_input(double v);

  Var matvec(Param& w, Var x);
  Var embed_row(Param& table, int row);
  Var concat(const std::vector<Var>& parts);
  Var add(Var a, Var b);
  Var scale(Var a, double c);
  Var relu(Var a);
  Var softmax_vec(Var logits);

  // scalar ops (dimension-1 vars)
  Var dot_param(Param& w, Var x);  // w is a column vector (n x 1)
  Var sub_const(Var a, double c);
  Var exp_s(Var a);
  Var div_s(Var num, Var den);
  Var sum_scalars(const std::vector<Var>& xs);

  /// y = sum_k coeff_k * vec_k with extended-precision accumulation.
  Var weighted_sum(const std::vector<std::pair<Var, Var>>& terms, int dim);

  /// Residual combine: base + (1/denom) * sum(terms). Fixed term order.
  Var residual_combine(Var base, const std::vector<Var>& terms, double denom);

  /// Mean-over-classes binary cross entropy against a one-hot target, taking
  /// probabilities (not logits) as input.
  Var bce_one_hot(Var probs, int target);
  /// Plain cross entropy -log p[target] on probabilities.
  Var ce_one_hot(Var probs, int target);

  const Eigen::VectorXd& value(Var v) const { return nodes_[v.id].value; }
  double scalar(Var v) const { return nodes_[v.id].value[0]; }
  int size() const { return static_cast<int>(nodes_.size()); }

  /// Backpropagate from a scalar loss node. Node grads are reset first;
  /// Param grads are accumulated (caller zeroes them between steps).
  void backward(Var loss);

  const Eigen::VectorXd& grad(Var v) const { return nodes_[v.id].grad; }

 private:
  struct Node {
    Eigen::VectorXd value;
    Eigen::VectorXd grad;
    std::function<void(Tape&, const Eigen::VectorXd&)> back;  // null for leaves
  };

  Var push(Eigen::VectorXd value, std::function<void(Tape&, const Eigen::VectorXd&)> back);
  void add_grad(int id, const Eigen::VectorXd& g) { nodes_[id].grad += g; }

  std::vector<Node> nodes_;
};

}  // namespace tahdg::ad

#endif
