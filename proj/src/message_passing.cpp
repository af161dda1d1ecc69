#include "tahdg/message_passing.hpp"

#include <cmath>

namespace tahdg {

IntraParams::IntraParams(int d_h)
    : w_rel("intra.w_rel", d_h, d_h),
      w_obj("intra.w_obj", d_h, d_h),
      att_rel("intra.att_rel", 2 * d_h, 1),
      att_obj("intra.att_obj", 2 * d_h, 1) {}

std::vector<ad::Param*> IntraParams::params() {
  return {&w_rel, &w_obj, &att_rel, &att_obj};
}

InterParams::InterParams(int d_h) : att_h("inter.att_h", d_h, 1), att_t("inter.att_t", d_h, 1) {
  const char* type_name[kNumRelationTypes] = {"phi", "delta"};
  for (int t = 0; t < kNumRelationTypes; ++t) {
    const std::string prefix = std::string("inter.") + type_name[t] + ".";
    by_type[t].w_subj = ad::Param(prefix + "w_subj", d_h, d_h);
    by_type[t].w_obj = ad::Param(prefix + "w_obj", d_h, d_h);
    by_type[t].w_to_sub = ad::Param(prefix + "w_to_sub", d_h, d_h);
    by_type[t].w_to_obj = ad::Param(prefix + "w_to_obj", d_h, d_h);
  }
}

std::vector<ad::Param*> InterParams::params() {
  std::vector<ad::Param*> out;
  for (auto& tw : by_type) {
    out.push_back(&tw.w_subj);
    out.push_back(&tw.w_obj);
    out.push_back(&tw.w_to_sub);
    out.push_back(&tw.w_to_obj);
  }
  out.push_back(&att_h);
  out.push_back(&att_t);
  return out;
}

namespace {

/// Stabilized softmax over scalar logit vars; returns one weight var per
/// input. The shift by the max logit is treated as a constant, which leaves
/// gradients untouched (softmax is shift invariant).
std::vector<ad::Var> softmax_group(ad::Tape& tape, const std::vector<ad::Var>& logits,
                                   AttentionAudit* audit) {
  double m = -std::numeric_limits<double>::infinity();
  for (ad::Var l : logits) m = std::max(m, tape.scalar(l));
  std::vector<ad::Var> exps;
  exps.reserve(logits.size());
  for (ad::Var l : logits) exps.push_back(tape.exp_s(tape.sub_const(l, m)));
  ad::Var denom = tape.sum_scalars(exps);
  std::vector<ad::Var> weights;
  weights.reserve(logits.size());
  for (ad::Var e : exps) weights.push_back(tape.div_s(e, denom));
  if (audit != nullptr) {
    ad::accum_t sum = 0;
    std::vector<double> g;
    for (ad::Var w : weights) {
      sum += static_cast<ad::accum_t>(tape.scalar(w));
      g.push_back(tape.scalar(w));
    }
    audit->group_sums.push_back(static_cast<double>(sum));
    audit->groups.push_back(std::move(g));
  }
  return weights;
}

int dim_of(ad::Tape& tape, const TapeState& state) {
  if (!state.objects.empty()) return static_cast<int>(tape.value(state.objects[0]).size());
  if (!state.relations.empty()) return static_cast<int>(tape.value(state.relations[0]).size());
  return 0;
}

}  // namespace

std::vector<ad::Var> intra_relation_step_t(ad::Tape& tape, const TapeState& state,
                                           const DualGraph& dual, IntraParams& params,
                                           AttentionAudit* audit) {
  const int d_h = dim_of(tape, state);
  std::vector<ad::Var> next(state.relations.size());
  for (int e = 0; e < dual.num_relations; ++e) {
    const auto& nbrs = dual.rel_neighbors[e];
    if (nbrs.empty()) {
      next[e] = state.relations[e];  // isolated relation keeps its feature
      continue;
    }
    std::vector<ad::Var> logits;
    logits.reserve(nbrs.size());
    for (int k : nbrs) {
      ad::Var cat = tape.concat({state.relations[e], state.relations[k]});
      logits.push_back(tape.dot_param(params.att_rel, cat));
    }
    const auto alpha = softmax_group(tape, logits, audit);
    std::vector<std::pair<ad::Var, ad::Var>> terms;
    terms.reserve(nbrs.size());
    for (size_t t = 0; t < nbrs.size(); ++t) {
      terms.emplace_back(alpha[t], tape.matvec(params.w_rel, state.relations[nbrs[t]]));
    }
    ad::Var agg = tape.weighted_sum(terms, d_h);
    next[e] = tape.add(state.relations[e], tape.relu(agg));
  }
  return next;
}

std::vector<ad::Var> intra_object_step_t(ad::Tape& tape, const TapeState& state,
                                         const DualGraph& dual, IntraParams& params,
                                         AttentionAudit* audit) {
  const int d_h = dim_of(tape, state);
  std::vector<ad::Var> next(state.objects.size());
  for (int i = 0; i < dual.num_objects; ++i) {
    const auto& nbrs = dual.obj_neighbors[i];
    if (nbrs.empty()) {
      next[i] = state.objects[i];
      continue;
    }
    std::vector<ad::Var> logits;
    logits.reserve(nbrs.size());
    for (int j : nbrs) {
      ad::Var cat = tape.concat({state.objects[i], state.objects[j]});
      logits.push_back(tape.dot_param(params.att_obj, cat));
    }
    const auto alpha = softmax_group(tape, logits, audit);
    std::vector<std::pair<ad::Var, ad::Var>> terms;
    terms.reserve(nbrs.size());
    for (size_t t = 0; t < nbrs.size(); ++t) {
      terms.emplace_back(alpha[t], tape.matvec(params.w_obj, state.objects[nbrs[t]]));
    }
    ad::Var agg = tape.weighted_sum(terms, d_h);
    next[i] = tape.add(state.objects[i], tape.relu(agg));
  }
  return next;
}

std::vector<ad::Var> inter_relation_step_t(ad::Tape& tape, const TapeState& state,
                                           const HeterogeneousGraph& het, InterParams& params,
                                           AttentionAudit* audit) {
  std::vector<ad::Var> next(state.relations.size());
  for (size_t e = 0; e < het.edges.size(); ++e) {
    const auto [i, j] = het.edges[e];
    const int t = static_cast<int>(het.edge_type[e]) % params.type_count;
    auto& tw = params.by_type[t];
    // Two-way attention between the subject and object endpoints.
    std::vector<ad::Var> logits{tape.dot_param(params.att_h, state.objects[i]),
                                tape.dot_param(params.att_h, state.objects[j])};
    const auto alpha = softmax_group(tape, logits, audit);
    std::vector<std::pair<ad::Var, ad::Var>> terms{
        {alpha[0], tape.matvec(tw.w_subj, state.objects[i])},
        {alpha[1], tape.matvec(tw.w_obj, state.objects[j])}};
    ad::Var mixed = tape.weighted_sum(terms, static_cast<int>(tape.value(state.objects[i]).size()));
    next[e] = tape.add(state.relations[e], tape.relu(mixed));
  }
  return next;
}

std::vector<ad::Var> inter_object_step_t(ad::Tape& tape, const TapeState& state,
                                         const HeterogeneousGraph& het, InterParams& params,
                                         AttentionAudit* audit) {
  const int n = het.num_objects;
  const int d_h = dim_of(tape, state);

  // Incident relations per object and type, ascending edge index; outgoing
  // relations message through w_to_sub, incoming through w_to_obj.
  struct Incident {
    int edge;
    bool outgoing;
  };
  std::vector<std::vector<std::vector<Incident>>> incident(
      n, std::vector<std::vector<Incident>>(params.type_count));
  for (size_t e = 0; e < het.edges.size(); ++e) {
    const auto [i, j] = het.edges[e];
    const int t = static_cast<int>(het.edge_type[e]) % params.type_count;
    incident[i][t].push_back({static_cast<int>(e), true});
    incident[j][t].push_back({static_cast<int>(e), false});
  }

  std::vector<ad::Var> next(state.objects.size());
  for (int i = 0; i < n; ++i) {
    std::vector<ad::Var> per_type;
    for (int t = 0; t < params.type_count; ++t) {
      const auto& inc = incident[i][t];
      if (inc.empty()) continue;  // empty neighborhood contributes zero
      std::vector<ad::Var> logits;
      logits.reserve(inc.size());
      for (const auto& rec : inc) {
        logits.push_back(tape.dot_param(params.att_t, state.relations[rec.edge]));
      }
      const auto alpha = softmax_group(tape, logits, audit);
      std::vector<std::pair<ad::Var, ad::Var>> terms;
      terms.reserve(inc.size());
      for (size_t k = 0; k < inc.size(); ++k) {
        ad::Param& w = inc[k].outgoing ? params.by_type[t].w_to_sub : params.by_type[t].w_to_obj;
        terms.emplace_back(alpha[k], tape.matvec(w, state.relations[inc[k].edge]));
      }
      per_type.push_back(tape.relu(tape.weighted_sum(terms, d_h)));
    }
    next[i] = per_type.empty()
                  ? state.objects[i]
                  : tape.residual_combine(state.objects[i], per_type,
                                          static_cast<double>(params.type_count));
  }
  return next;
}

TapeState run_tamp_t(ad::Tape& tape, TapeState state, const HeterogeneousGraph& het,
                     const DualGraph& dual, IntraParams& intra, InterParams& inter,
                     int layers_intra, int layers_inter, AttentionAudit* audit) {
  for (int l = 0; l < layers_intra; ++l) {
    TapeState next;
    next.relations = intra_relation_step_t(tape, state, dual, intra, audit);
    next.objects = intra_object_step_t(tape, state, dual, intra, audit);
    state = std::move(next);
  }
  for (int l = 0; l < layers_inter; ++l) {
    state.relations = inter_relation_step_t(tape, state, het, inter, audit);
    state.objects = inter_object_step_t(tape, state, het, inter, audit);
  }
  return state;
}

namespace {

TapeState load_state(ad::Tape& tape, const LayerState& state) {
  TapeState ts;
  for (Eigen::Index i = 0; i < state.object_features.rows(); ++i) {
    ts.objects.push_back(tape.input(state.object_features.row(i).transpose()));
  }
  for (Eigen::Index e = 0; e < state.relation_features.rows(); ++e) {
    ts.relations.push_back(tape.input(state.relation_features.row(e).transpose()));
  }
  return ts;
}

LayerState store_state(ad::Tape& tape, const TapeState& ts, const LayerState& like) {
  LayerState out;
  out.object_features.resize(like.object_features.rows(), like.object_features.cols());
  out.relation_features.resize(like.relation_features.rows(), like.relation_features.cols());
  for (size_t i = 0; i < ts.objects.size(); ++i) {
    out.object_features.row(static_cast<Eigen::Index>(i)) = tape.value(ts.objects[i]).transpose();
  }
  for (size_t e = 0; e < ts.relations.size(); ++e) {
    out.relation_features.row(static_cast<Eigen::Index>(e)) =
        tape.value(ts.relations[e]).transpose();
  }
  return out;
}

}  // namespace

LayerState intra_relation_step(const LayerState& state, const DualGraph& dual,
                               IntraParams& params, AttentionAudit* audit) {
  ad::Tape tape;
  TapeState ts = load_state(tape, state);
  ts.relations = intra_relation_step_t(tape, ts, dual, params, audit);
  return store_state(tape, ts, state);
}

LayerState intra_object_step(const LayerState& state, const DualGraph& dual,
                             IntraParams& params, AttentionAudit* audit) {
  ad::Tape tape;
  TapeState ts = load_state(tape, state);
  ts.objects = intra_object_step_t(tape, ts, dual, params, audit);
  return store_state(tape, ts, state);
}

LayerState inter_relation_step(const LayerState& state, const HeterogeneousGraph& het,
                               InterParams& params, AttentionAudit* audit) {
  ad::Tape tape;
  TapeState ts = load_state(tape, state);
  ts.relations = inter_relation_step_t(tape, ts, het, params, audit);
  return store_state(tape, ts, state);
}

LayerState inter_object_step(const LayerState& state, const HeterogeneousGraph& het,
                             InterParams& params, AttentionAudit* audit) {
  ad::Tape tape;
  TapeState ts = load_state(tape, state);
  ts.objects = inter_object_step_t(tape, ts, het, params, audit);
  return store_state(tape, ts, state);
}

std::vector<std::vector<double>> intra_relation_attention(const LayerState& state,
                                                          const DualGraph& dual,
                                                          IntraParams& params) {
  ad::Tape tape;
  TapeState ts = load_state(tape, state);
  AttentionAudit audit;
  std::vector<std::vector<double>> out(dual.num_relations);
  size_t group = 0;
  intra_relation_step_t(tape, ts, dual, params, &audit);
  for (int e = 0; e < dual.num_relations; ++e) {
    if (dual.rel_neighbors[e].empty()) continue;
    out[e] = audit.groups[group++];
  }
  return out;
}

LayerState run_tamp(const LayerState& initial, const HeterogeneousGraph& het,
                    const DualGraph& dual, IntraParams& intra, InterParams& inter,
                    int layers_intra, int layers_inter, AttentionAudit* audit) {
  ad::Tape tape;
  TapeState ts = load_state(tape, initial);
  ts = run_tamp_t(tape, std::move(ts), het, dual, intra, inter, layers_intra, layers_inter,
                  audit);
  return store_state(tape, ts, initial);
}

}  // namespace tahdg
