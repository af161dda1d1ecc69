#ifndef TAHDG_GRAPH_CONSTRUCTION_HPP
#define TAHDG_GRAPH_CONSTRUCTION_HPP

#include <Eigen/Dense>
#include <string>
#include <utility>
#include <vector>

#include "tahdg/data_io.hpp"
#include "tahdg/feature_encoding.hpp"
#include "tahdg/scene_model.hpp"

namespace tahdg {

/// The three N x N pair-selection matrices. Diagonal entries are zeroed and
/// carry no meaning; i == j is never a candidate pair.
struct PairScores {
  Eigen::MatrixXd m_b;  // center distance, pixels
  Eigen::MatrixXd m_p;  // detector confidence product, [0,1]
  Eigen::MatrixXd m_l;  // smoothed existence probability, (0,1]

  int size() const { return static_cast<int>(m_b.rows()); }
};

using EdgeList = std::vector<std::pair<int, int>>;

struct InitialGraph {
  int num_objects = 0;
  EdgeList edges;                      // ordered pairs (i,j), lexicographic
  Eigen::MatrixXd object_features;    // N x D_h
  Eigen::MatrixXd relation_features;  // |edges| x D_h
};

struct HeterogeneousGraph {
  int num_objects = 0;
  EdgeList edges;
  std::vector<RelationType> edge_type;
  Eigen::MatrixXd pre_distribution;  // |edges| x |R|, rows sum to 1
};

/// Line graph of the heterogeneous graph: one dual node per relation; an
/// unordered dual edge wherever two relations share an endpoint object.
struct DualGraph {
  struct Edge {
    int rel_a = 0, rel_b = 0;  // dual node ids = het edge indices, rel_a < rel_b
    int shared_object = 0;
  };
  int num_relations = 0;
  int num_objects = 0;
  std::vector<Edge> edges;
  std::vector<std::vector<int>> rel_neighbors;  // per dual node, ascending
  std::vector<std::vector<int>> obj_neighbors;  // objects linked by some relation
};

PairScores compute_pair_matrices(const Scene& scene, const CooccurrenceStats& stats);

/// Pair filter (M_b < s_b) and (M_l > s_l) and (M_p in confidence top-K).
/// The confidence clause admits exactly min(K, N(N-1)) pairs; ties at the
/// K-th score break by ascending (i,j). Output is lexicographically sorted.
EdgeList select_pairs(const PairScores& scores, double s_b, double s_l, int top_k);

enum class PairStrategy {
  con,       // confidence top-K only
  iou,       // box IoU > threshold
  iou_plus,  // overlap / min-area > threshold
  sim,       // class-embedding cosine > threshold
  dis,       // center distance < s_b
  lin,       // existence probability > s_l
  dis_sim,
  con_lin,
  dis_lin,
  full,  // identical to select_pairs
};

PairStrategy parse_pair_strategy(const std::string& name);
const char* to_string(PairStrategy s);
const std::vector<PairStrategy>& all_pair_strategies();

struct PairSelectParams {
  double s_b = 600.0;
  double s_l = 1e-5;
  int top_k = 4096;
  double iou_thr = 0.0;
  double sim_thr = 0.0;
};

/// The Table-3 strategy family. `class_embedding` backs the sim strategy
/// (rows indexed by object class); it may be null for strategies not using it.
EdgeList select_pairs_variant(PairStrategy strategy, const Scene& scene,
                              const CooccurrenceStats& stats, const PairSelectParams& params,
                              const Eigen::MatrixXd* class_embedding);

/// Ranking score used when proposals from a strategy are ordered (benchmarks).
double strategy_rank_score(PairStrategy strategy, const PairScores& scores,
                           const Eigen::MatrixXd* class_embedding, const Scene& scene, int i,
                           int j);

/// Per-edge pre-classification p = softmax(W f_ij); the edge type is whichever
/// relation-type group has the larger mean probability, ties -> interactive.
HeterogeneousGraph assign_relation_types(const InitialGraph& graph, ad::Param& pre_classifier,
                                         const Ontology& ontology);

DualGraph build_dual_graph(const HeterogeneousGraph& het);

}  // namespace tahdg

#endif
