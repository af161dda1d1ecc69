#ifndef TAHDG_MESSAGE_PASSING_HPP
#define TAHDG_MESSAGE_PASSING_HPP

#include <array>
#include <vector>

#include "tahdg/autodiff.hpp"
#include "tahdg/feature_encoding.hpp"
#include "tahdg/graph_construction.hpp"

namespace tahdg {

/// Intra-type stage weights (dual graph): relation-relation and object-object
/// message maps plus their attention vectors over concatenated feature pairs.
struct IntraParams {
  ad::Param w_rel;      // D_h x D_h
  ad::Param w_obj;      // D_h x D_h
  ad::Param att_rel;    // 2 D_h x 1
  ad::Param att_obj;    // 2 D_h x 1

  IntraParams() = default;
  explicit IntraParams(int d_h);
  std::vector<ad::Param*> params();
};

/// Inter-type stage weights (heterogeneous graph). Each relation type owns a
/// complete set: subject/object -> relation maps and relation -> subject /
/// relation -> object maps.
struct InterParams {
  struct TypeWeights {
    ad::Param w_subj;    // W^i: subject -> relation
    ad::Param w_obj;     // W^j: object -> relation
    ad::Param w_to_sub;  // W^{i->j}: relation -> its subject
    ad::Param w_to_obj;  // W^{j->i}: relation -> its object
  };
  std::array<TypeWeights, kNumRelationTypes> by_type;
  ad::Param att_h;  // D_h x 1, subject-vs-object attention
  ad::Param att_t;  // D_h x 1, per-type relation attention
  int type_count = kNumRelationTypes;  // 1 collapses the type distinction

  InterParams() = default;
  explicit InterParams(int d_h);
  std::vector<ad::Param*> params();
};

struct LayerState {
  Eigen::MatrixXd object_features;    // N x D_h
  Eigen::MatrixXd relation_features;  // E x D_h
};

/// Records every softmax neighborhood encountered in a pass; used to audit
/// normalization.
struct AttentionAudit {
  std::vector<double> group_sums;
  std::vector<std::vector<double>> groups;
};

struct TapeState {
  std::vector<ad::Var> objects;
  std::vector<ad::Var> relations;
};

// Tape-level builders; each returns the updated feature bank and leaves the
// other untouched.
std::vector<ad::Var> intra_relation_step_t(ad::Tape& tape, const TapeState& state,
                                           const DualGraph& dual, IntraParams& params,
                                           AttentionAudit* audit);
std::vector<ad::Var> intra_object_step_t(ad::Tape& tape, const TapeState& state,
                                         const DualGraph& dual, IntraParams& params,
                                         AttentionAudit* audit);
std::vector<ad::Var> inter_relation_step_t(ad::Tape& tape, const TapeState& state,
                                           const HeterogeneousGraph& het, InterParams& params,
                                           AttentionAudit* audit);
std::vector<ad::Var> inter_object_step_t(ad::Tape& tape, const TapeState& state,
                                         const HeterogeneousGraph& het, InterParams& params,
                                         AttentionAudit* audit);

TapeState run_tamp_t(ad::Tape& tape, TapeState state, const HeterogeneousGraph& het,
                     const DualGraph& dual, IntraParams& intra, InterParams& inter,
                     int layers_intra, int layers_inter, AttentionAudit* audit = nullptr);

// Value-level wrappers matching the per-step contracts; they run a throwaway
// tape internally.
LayerState intra_relation_step(const LayerState& state, const DualGraph& dual,
                               IntraParams& params, AttentionAudit* audit = nullptr);
LayerState intra_object_step(const LayerState& state, const DualGraph& dual,
                             IntraParams& params, AttentionAudit* audit = nullptr);
LayerState inter_relation_step(const LayerState& state, const HeterogeneousGraph& het,
                               InterParams& params, AttentionAudit* audit = nullptr);
LayerState inter_object_step(const LayerState& state, const HeterogeneousGraph& het,
                             InterParams& params, AttentionAudit* audit = nullptr);

/// Per-neighborhood attention of the relation-relation update, keyed by dual
/// node; rows follow the node's ascending neighbor list.
std::vector<std::vector<double>> intra_relation_attention(const LayerState& state,
                                                          const DualGraph& dual,
                                                          IntraParams& params);

LayerState run_tamp(const LayerState& initial, const HeterogeneousGraph& het,
                    const DualGraph& dual, IntraParams& intra, InterParams& inter,
                    int layers_intra, int layers_inter, AttentionAudit* audit = nullptr);

}  // namespace tahdg

#endif
