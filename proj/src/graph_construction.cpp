#include "tahdg/graph_construction.hpp"

#include <algorithm>
#include <cmath>

namespace tahdg {

PairScores compute_pair_matrices(const Scene& scene, const CooccurrenceStats& stats) {
  const int n = static_cast<int>(scene.objects.size());
  if (n < 1) throw ConfigError("compute_pair_matrices: scene has no objects");
  if (!scene.objects.empty() &&
      stats.num_classes() != static_cast<int>(scene.objects[0].distribution.size())) {
    throw ConfigError("compute_pair_matrices: stats dimensioned for " +
                      std::to_string(stats.num_classes()) + " classes, scene has " +
                      std::to_string(scene.objects[0].distribution.size()));
  }
  PairScores s;
  s.m_b = Eigen::MatrixXd::Zero(n, n);
  s.m_p = Eigen::MatrixXd::Zero(n, n);
  s.m_l = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      const auto& oi = scene.objects[i];
      const auto& oj = scene.objects[j];
      const double dx = oi.box.cx() - oj.box.cx();
      const double dy = oi.box.cy() - oj.box.cy();
      s.m_b(i, j) = std::sqrt(dx * dx + dy * dy);
      s.m_p(i, j) = oi.max_confidence() * oj.max_confidence();
      s.m_l(i, j) = stats.pair_prob(oi.label, oj.label);
    }
  }
  return s;
}

namespace {

// Ordered candidate pairs admitted by the confidence clause: the top-K of M_p
// with ties at the cut broken by ascending (i,j).
std::vector<std::pair<int, int>> confidence_top_k(const Eigen::MatrixXd& m_p, int top_k) {
  const int n = static_cast<int>(m_p.rows());
  std::vector<std::pair<int, int>> cands;
  cands.reserve(static_cast<size_t>(n) * (n - 1));
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i != j) cands.emplace_back(i, j);
    }
  }
  const int k = std::min<int>(top_k, static_cast<int>(cands.size()));
  if (k <= 0) return {};
  if (k == static_cast<int>(cands.size())) return cands;

  std::vector<double> values;
  values.reserve(cands.size());
  for (const auto& [i, j] : cands) values.push_back(m_p(i, j));
  std::nth_element(values.begin(), values.begin() + (k - 1), values.end(),
                   std::greater<double>());
  const double s_p = values[k - 1];  // K-th largest confidence

  std::vector<std::pair<int, int>> admitted;
  int above = 0;
  for (const auto& c : cands) {
    if (m_p(c.first, c.second) > s_p) ++above;
  }
  admitted.reserve(k);
  int tie_budget = k - above;
  for (const auto& c : cands) {  // cands are already in (i,j) lexicographic order
    const double v = m_p(c.first, c.second);
    if (v > s_p) {
      admitted.push_back(c);
    } else if (v == s_p && tie_budget > 0) {
      admitted.push_back(c);
      --tie_budget;
    }
  }
  return admitted;
}

}  // namespace

EdgeList select_pairs(const PairScores& scores, double s_b, double s_l, int top_k) {
  if (scores.size() < 2) return {};
  EdgeList edges;
  for (const auto& [i, j] : confidence_top_k(scores.m_p, top_k)) {
    if (scores.m_b(i, j) < s_b && scores.m_l(i, j) > s_l) {
      edges.emplace_back(i, j);
    }
  }
  std::sort(edges.begin(), edges.end());
  return edges;
}

PairStrategy parse_pair_strategy(const std::string& name) {
  for (PairStrategy s : all_pair_strategies()) {
    if (name == to_string(s)) return s;
  }
  throw UsageError("unknown pair-selection strategy: " + name);
}

const char* to_string(PairStrategy s) {
  switch (s) {
    case PairStrategy::con: return "con";
    case PairStrategy::iou: return "iou";
    case PairStrategy::iou_plus: return "iou_plus";
    case PairStrategy::sim: return "sim";
    case PairStrategy::dis: return "dis";
    case PairStrategy::lin: return "lin";
    case PairStrategy::dis_sim: return "dis_sim";
    case PairStrategy::con_lin: return "con_lin";
    case PairStrategy::dis_lin: return "dis_lin";
    case PairStrategy::full: return "full";
  }
  return "?";
}

const std::vector<PairStrategy>& all_pair_strategies() {
  static const std::vector<PairStrategy> all = {
      PairStrategy::con,     PairStrategy::iou,     PairStrategy::iou_plus,
      PairStrategy::sim,     PairStrategy::dis,     PairStrategy::lin,
      PairStrategy::dis_sim, PairStrategy::con_lin, PairStrategy::dis_lin,
      PairStrategy::full};
  return all;
}

namespace {

double iou_plus_score(const Box& a, const Box& b) {
  const double inter = intersection_area(a, b);
  const double min_area = std::min(a.area(), b.area());
  if (min_area <= 0) return 0.0;
  return inter / min_area;
}

double cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double na = a.norm(), nb = b.norm();
  if (na == 0 || nb == 0) return 0.0;
  return a.dot(b) / (na * nb);
}

double embedding_cosine(const Eigen::MatrixXd* emb, const Scene& scene, int i, int j) {
  if (emb == nullptr) {
    throw ConfigError("sim strategy requires class embeddings");
  }
  const Eigen::VectorXd a = emb->row(scene.objects[i].label).transpose();
  const Eigen::VectorXd b = emb->row(scene.objects[j].label).transpose();
  return cosine(a, b);
}

}  // namespace

EdgeList select_pairs_variant(PairStrategy strategy, const Scene& scene,
                              const CooccurrenceStats& stats, const PairSelectParams& params,
                              const Eigen::MatrixXd* class_embedding) {
  if (strategy == PairStrategy::full) {
    return select_pairs(compute_pair_matrices(scene, stats), params.s_b, params.s_l,
                        params.top_k);
  }
  const int n = static_cast<int>(scene.objects.size());
  if (n < 2) return {};
  const PairScores scores = compute_pair_matrices(scene, stats);

  const auto uses_con = [&] {
    return strategy == PairStrategy::con || strategy == PairStrategy::con_lin;
  };
  std::vector<std::pair<int, int>> base;
  if (uses_con()) {
    base = confidence_top_k(scores.m_p, params.top_k);
  } else {
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        if (i != j) base.emplace_back(i, j);
      }
    }
  }

  EdgeList edges;
  for (const auto& [i, j] : base) {
    bool keep = true;
    switch (strategy) {
      case PairStrategy::con:
        break;
      case PairStrategy::iou:
        keep = iou(scene.objects[i].box, scene.objects[j].box) > params.iou_thr;
        break;
      case PairStrategy::iou_plus:
        keep = iou_plus_score(scene.objects[i].box, scene.objects[j].box) > params.iou_thr;
        break;
      case PairStrategy::sim:
        keep = embedding_cosine(class_embedding, scene, i, j) > params.sim_thr;
        break;
      case PairStrategy::dis:
        keep = scores.m_b(i, j) < params.s_b;
        break;
      case PairStrategy::lin:
        keep = scores.m_l(i, j) > params.s_l;
        break;
      case PairStrategy::dis_sim:
        keep = scores.m_b(i, j) < params.s_b &&
               embedding_cosine(class_embedding, scene, i, j) > params.sim_thr;
        break;
      case PairStrategy::con_lin:
        keep = scores.m_l(i, j) > params.s_l;
        break;
      case PairStrategy::dis_lin:
        keep = scores.m_b(i, j) < params.s_b && scores.m_l(i, j) > params.s_l;
        break;
      case PairStrategy::full:
        break;
    }
    if (keep) edges.emplace_back(i, j);
  }
  std::sort(edges.begin(), edges.end());
  return edges;
}

double strategy_rank_score(PairStrategy strategy, const PairScores& scores,
                           const Eigen::MatrixXd* class_embedding, const Scene& scene, int i,
                           int j) {
  switch (strategy) {
    case PairStrategy::iou:
      return iou(scene.objects[i].box, scene.objects[j].box);
    case PairStrategy::iou_plus:
      return iou_plus_score(scene.objects[i].box, scene.objects[j].box);
    case PairStrategy::sim:
      return embedding_cosine(class_embedding, scene, i, j);
    case PairStrategy::dis:
      return -scores.m_b(i, j);
    case PairStrategy::lin:
    case PairStrategy::dis_lin:
      return scores.m_l(i, j);
    case PairStrategy::dis_sim:
      return embedding_cosine(class_embedding, scene, i, j);
    case PairStrategy::con:
    case PairStrategy::con_lin:
    case PairStrategy::full:
    default:
      return scores.m_p(i, j);
  }
}

HeterogeneousGraph assign_relation_types(const InitialGraph& graph, ad::Param& pre_classifier,
                                         const Ontology& ontology) {
  const int n_phi = ontology.count_of_type(RelationType::interactive);
  const int n_delta = ontology.count_of_type(RelationType::non_interactive);
  if (n_phi == 0 || n_delta == 0) {
    throw ConfigError("assign_relation_types: ontology must contain both relation types");
  }
  HeterogeneousGraph het;
  het.num_objects = graph.num_objects;
  het.edges = graph.edges;
  const int n_rel = ontology.num_relation_classes();
  het.pre_distribution.resize(static_cast<Eigen::Index>(graph.edges.size()), n_rel);
  het.edge_type.resize(graph.edges.size(), RelationType::interactive);
  for (size_t e = 0; e < graph.edges.size(); ++e) {
    const Eigen::VectorXd logits =
        pre_classifier.value * graph.relation_features.row(static_cast<Eigen::Index>(e))
                                   .transpose();
    const double m = logits.maxCoeff();
    Eigen::VectorXd p = (logits.array() - m).exp();
    p /= p.sum();
    het.pre_distribution.row(static_cast<Eigen::Index>(e)) = p.transpose();

    double mean_phi = 0, mean_delta = 0;
    for (int r = 1; r < n_rel; ++r) {
      if (ontology.relation_type(r) == RelationType::interactive) {
        mean_phi += p[r];
      } else {
        mean_delta += p[r];
      }
    }
    mean_phi /= n_phi;
    mean_delta /= n_delta;
    het.edge_type[e] =
        mean_phi >= mean_delta ? RelationType::interactive : RelationType::non_interactive;
  }
  return het;
}

DualGraph build_dual_graph(const HeterogeneousGraph& het) {
  DualGraph dual;
  dual.num_relations = static_cast<int>(het.edges.size());
  dual.num_objects = het.num_objects;
  dual.rel_neighbors.resize(het.edges.size());

  for (int a = 0; a < dual.num_relations; ++a) {
    for (int b = a + 1; b < dual.num_relations; ++b) {
      const auto& ea = het.edges[a];
      const auto& eb = het.edges[b];
      int shared = -1;
      // Smallest shared endpoint when the two relations share both.
      for (int v : {std::min(ea.first, ea.second), std::max(ea.first, ea.second)}) {
        if (v == eb.first || v == eb.second) {
          shared = v;
          break;
        }
      }
      if (shared < 0) continue;
      dual.edges.push_back({a, b, shared});
      dual.rel_neighbors[a].push_back(b);
      dual.rel_neighbors[b].push_back(a);
    }
  }
  for (auto& nbrs : dual.rel_neighbors) std::sort(nbrs.begin(), nbrs.end());

  // The dual graph's "edges are objects": objects are adjacent wherever some
  // relation links them in the heterogeneous graph.
  std::vector<std::vector<bool>> adj(het.num_objects,
                                     std::vector<bool>(het.num_objects, false));
  for (const auto& [i, j] : het.edges) {
    adj[i][j] = true;
    adj[j][i] = true;
  }
  dual.obj_neighbors.resize(het.num_objects);
  for (int i = 0; i < het.num_objects; ++i) {
    for (int j = 0; j < het.num_objects; ++j) {
      if (i != j && adj[i][j]) dual.obj_neighbors[i].push_back(j);
    }
  }
  return dual;
}

}  // namespace tahdg
