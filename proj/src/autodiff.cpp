#include "tahdg/autodiff.hpp"

#include <cmath>
#include <stdexcept>

namespace tahdg::ad {

namespace {
constexpr double kProbClamp = 1e-12;
}

Var Tape::push(Eigen::VectorXd value, std::function<void(Tape&, const Eigen::VectorXd&)> back) {
  Node n;
  n.value = std::move(value);
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::input(Eigen::VectorXd v) { return push(std::move(v), nullptr); }

Var Tape::scalar_input(double v) {
  Eigen::VectorXd x(1);
  x[0] = v;
  return push(std::move(x), nullptr);
}

Var Tape::matvec(Param& w, Var x) {
  const Eigen::VectorXd& xv = nodes_[x.id].value;
  if (w.value.cols() != xv.size()) {
    throw std::invalid_argument("matvec: " + w.name + " cols " +
                                std::to_string(w.value.cols()) + " vs input " +
                                std::to_string(xv.size()));
  }
  Eigen::VectorXd y = w.value * xv;
  Param* wp = &w;
  const int xid = x.id;
  return push(std::move(y), [wp, xid](Tape& t, const Eigen::VectorXd& g) {
    wp->grad.noalias() += g * t.nodes_[xid].value.transpose();
    t.nodes_[xid].grad.noalias() += wp->value.transpose() * g;
  });
}

Var Tape::embed_row(Param& table, int row) {
  Eigen::VectorXd y = table.value.row(row).transpose();
  Param* tp = &table;
  return push(std::move(y), [tp, row](Tape&, const Eigen::VectorXd& g) {
    tp->grad.row(row) += g.transpose();
  });
}

Var Tape::concat(const std::vector<Var>& parts) {
  int dim = 0;
  for (Var p : parts) dim += static_cast<int>(nodes_[p.id].value.size());
  Eigen::VectorXd y(dim);
  int off = 0;
  for (Var p : parts) {
    const auto& v = nodes_[p.id].value;
    y.segment(off, v.size()) = v;
    off += static_cast<int>(v.size());
  }
  std::vector<int> ids;
  ids.reserve(parts.size());
  for (Var p : parts) ids.push_back(p.id);
  return push(std::move(y), [ids](Tape& t, const Eigen::VectorXd& g) {
    int off = 0;
    for (int id : ids) {
      const int n = static_cast<int>(t.nodes_[id].value.size());
      t.nodes_[id].grad += g.segment(off, n);
      off += n;
    }
  });
}

Var Tape::add(Var a, Var b) {
  Eigen::VectorXd y = nodes_[a.id].value + nodes_[b.id].value;
  const int ia = a.id, ib = b.id;
  return push(std::move(y), [ia, ib](Tape& t, const Eigen::VectorXd& g) {
    t.nodes_[ia].grad += g;
    t.nodes_[ib].grad += g;
  });
}

Var Tape::scale(Var a, double c) {
  Eigen::VectorXd y = c * nodes_[a.id].value;
  const int ia = a.id;
  return push(std::move(y), [ia, c](Tape& t, const Eigen::VectorXd& g) {
    t.nodes_[ia].grad += c * g;
  });
}

Var Tape::relu(Var a) {
  Eigen::VectorXd y = nodes_[a.id].value.cwiseMax(0.0);
  const int ia = a.id;
  return push(std::move(y), [ia](Tape& t, const Eigen::VectorXd& g) {
    const auto& x = t.nodes_[ia].value;
    Eigen::VectorXd gx = g;
    for (int k = 0; k < gx.size(); ++k) {
      if (x[k] <= 0) gx[k] = 0;
    }
    t.nodes_[ia].grad += gx;
  });
}

Var Tape::softmax_vec(Var logits) {
  const auto& z = nodes_[logits.id].value;
  const double m = z.maxCoeff();
  Eigen::VectorXd e = (z.array() - m).exp();
  Eigen::VectorXd p = e / e.sum();
  const int iz = logits.id;
  Eigen::VectorXd pc = p;
  return push(std::move(p), [iz, pc](Tape& t, const Eigen::VectorXd& g) {
    const double gdotp = g.dot(pc);
    t.nodes_[iz].grad += (pc.array() * (g.array() - gdotp)).matrix();
  });
}

Var Tape::dot_param(Param& w, Var x) {
  const auto& xv = nodes_[x.id].value;
  if (w.value.rows() != xv.size() || w.value.cols() != 1) {
    throw std::invalid_argument("dot_param: " + w.name + " shape mismatch");
  }
  Eigen::VectorXd y(1);
  y[0] = w.value.col(0).dot(xv);
  Param* wp = &w;
  const int xid = x.id;
  return push(std::move(y), [wp, xid](Tape& t, const Eigen::VectorXd& g) {
    wp->grad.col(0) += g[0] * t.nodes_[xid].value;
    t.nodes_[xid].grad += g[0] * wp->value.col(0);
  });
}

Var Tape::sub_const(Var a, double c) {
  Eigen::VectorXd y = nodes_[a.id].value.array() - c;
  const int ia = a.id;
  return push(std::move(y), [ia](Tape& t, const Eigen::VectorXd& g) {
    t.nodes_[ia].grad += g;
  });
}

Var Tape::exp_s(Var a) {
  Eigen::VectorXd y(1);
  y[0] = std::exp(nodes_[a.id].value[0]);
  const int ia = a.id;
  const double yv = y[0];
  return push(std::move(y), [ia, yv](Tape& t, const Eigen::VectorXd& g) {
    t.nodes_[ia].grad[0] += g[0] * yv;
  });
}

Var Tape::div_s(Var num, Var den) {
  const double n = nodes_[num.id].value[0];
  const double d = nodes_[den.id].value[0];
  Eigen::VectorXd y(1);
  y[0] = n / d;
  const int in = num.id, id_ = den.id;
  return push(std::move(y), [in, id_, n, d](Tape& t, const Eigen::VectorXd& g) {
    t.nodes_[in].grad[0] += g[0] / d;
    t.nodes_[id_].grad[0] -= g[0] * n / (d * d);
  });
}

Var Tape::sum_scalars(const std::vector<Var>& xs) {
  accum_t acc = 0;
  std::vector<int> ids;
  ids.reserve(xs.size());
  for (Var x : xs) {
    acc += static_cast<accum_t>(nodes_[x.id].value[0]);
    ids.push_back(x.id);
  }
  Eigen::VectorXd y(1);
  y[0] = static_cast<double>(acc);
  return push(std::move(y), [ids](Tape& t, const Eigen::VectorXd& g) {
    for (int id : ids) t.nodes_[id].grad[0] += g[0];
  });
}

Var Tape::weighted_sum(const std::vector<std::pair<Var, Var>>& terms, int dim) {
  std::vector<accum_t> acc(dim, accum_t(0));
  for (const auto& [s, v] : terms) {
    const double sv = nodes_[s.id].value[0];
    const auto& vec = nodes_[v.id].value;
    for (int k = 0; k < dim; ++k) acc[k] += static_cast<accum_t>(sv * vec[k]);
  }
  Eigen::VectorXd y(dim);
  for (int k = 0; k < dim; ++k) y[k] = static_cast<double>(acc[k]);
  std::vector<std::pair<int, int>> ids;
  ids.reserve(terms.size());
  for (const auto& [s, v] : terms) ids.emplace_back(s.id, v.id);
  return push(std::move(y), [ids](Tape& t, const Eigen::VectorXd& g) {
    for (const auto& [sid, vid] : ids) {
      const double sv = t.nodes_[sid].value[0];
      t.nodes_[vid].grad += sv * g;
      t.nodes_[sid].grad[0] += g.dot(t.nodes_[vid].value);
    }
  });
}

Var Tape::residual_combine(Var base, const std::vector<Var>& terms, double denom) {
  const auto& b = nodes_[base.id].value;
  Eigen::VectorXd y = b;
  for (Var term : terms) y += nodes_[term.id].value / denom;
  std::vector<int> ids;
  for (Var term : terms) ids.push_back(term.id);
  const int ib = base.id;
  return push(std::move(y), [ib, ids, denom](Tape& t, const Eigen::VectorXd& g) {
    t.nodes_[ib].grad += g;
    for (int id : ids) t.nodes_[id].grad += g / denom;
  });
}

Var Tape::bce_one_hot(Var probs, int target) {
  const auto& p = nodes_[probs.id].value;
  const int n = static_cast<int>(p.size());
  double loss = 0;
  for (int k = 0; k < n; ++k) {
    const double pk = std::min(std::max(p[k], kProbClamp), 1.0 - kProbClamp);
    loss += (k == target) ? -std::log(pk) : -std::log(1.0 - pk);
  }
  loss /= n;
  Eigen::VectorXd y(1);
  y[0] = loss;
  const int ip = probs.id;
  return push(std::move(y), [ip, target, n](Tape& t, const Eigen::VectorXd& g) {
    const auto& p = t.nodes_[ip].value;
    Eigen::VectorXd gp(n);
    for (int k = 0; k < n; ++k) {
      const double pk = std::min(std::max(p[k], kProbClamp), 1.0 - kProbClamp);
      gp[k] = (k == target) ? -1.0 / pk : 1.0 / (1.0 - pk);
      gp[k] *= g[0] / n;
    }
    t.nodes_[ip].grad += gp;
  });
}

Var Tape::ce_one_hot(Var probs, int target) {
  const auto& p = nodes_[probs.id].value;
  const double pt = std::max(p[target], kProbClamp);
  Eigen::VectorXd y(1);
  y[0] = -std::log(pt);
  const int ip = probs.id;
  return push(std::move(y), [ip, target](Tape& t, const Eigen::VectorXd& g) {
    const double pt = std::max(t.nodes_[ip].value[target], kProbClamp);
    t.nodes_[ip].grad[target] += -g[0] / pt;
  });
}

void Tape::backward(Var loss) {
  if (nodes_[loss.id].value.size() != 1) {
    throw std::invalid_argument("backward: loss must be scalar");
  }
  for (auto& n : nodes_) {
    n.grad = Eigen::VectorXd::Zero(n.value.size());
  }
  nodes_[loss.id].grad[0] = 1.0;
  for (int i = loss.id; i >= 0; --i) {
    if (nodes_[i].back && !nodes_[i].grad.isZero(0.0)) {
      nodes_[i].back(*this, nodes_[i].grad);
    }
  }
}

}  // namespace tahdg::ad
