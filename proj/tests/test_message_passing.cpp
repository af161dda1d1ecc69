#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "oracles.hpp"
#include "tahdg/message_passing.hpp"

using namespace tahdg;

namespace {

constexpr int kDh = 6;

HeterogeneousGraph het_from_edges(int n_objects, const EdgeList& edges,
                                  const std::vector<RelationType>& types = {}) {
  HeterogeneousGraph het;
  het.num_objects = n_objects;
  het.edges = edges;
  het.edge_type = types.empty()
                      ? std::vector<RelationType>(edges.size(), RelationType::interactive)
                      : types;
  het.pre_distribution =
      Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(edges.size()), 3, 1.0 / 3);
  return het;
}

struct Setup {
  HeterogeneousGraph het;
  DualGraph dual;
  LayerState state;
  IntraParams intra{kDh};
  InterParams inter{kDh};
};

Setup random_setup(std::mt19937_64& rng, int n_objects, double density = 0.5) {
  Setup s;
  s.het = oracle::random_het_graph(rng, n_objects, 3, density);
  s.dual = build_dual_graph(s.het);
  s.state = oracle::random_state(rng, n_objects, static_cast<int>(s.het.edges.size()), kDh);
  oracle::randomize(s.intra, rng);
  oracle::randomize(s.inter, rng);
  return s;
}

double max_abs_diff(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.size() == 0 && b.size() == 0) return 0.0;
  return (a - b).cwiseAbs().maxCoeff();
}

bool rows_equal(const Eigen::MatrixXd& a, Eigen::Index ra, const Eigen::MatrixXd& b,
                Eigen::Index rb) {
  return (a.row(ra) - b.row(rb)).cwiseAbs().maxCoeff() == 0.0;
}

}  // namespace

TEST_CASE("singleton neighborhood attention is exactly one") {
  std::mt19937_64 rng(41);
  Setup s;
  s.het = het_from_edges(3, {{0, 1}, {1, 2}});
  s.dual = build_dual_graph(s.het);
  s.state = oracle::random_state(rng, 3, 2, kDh);
  oracle::randomize(s.intra, rng);
  const auto att = intra_relation_attention(s.state, s.dual, s.intra);
  REQUIRE(att[0].size() == 1);
  REQUIRE(att[1].size() == 1);
  CHECK(att[0][0] == 1.0);
  CHECK(att[1][0] == 1.0);
}

TEST_CASE("two identical neighbors split attention exactly in half") {
  std::mt19937_64 rng(42);
  Setup s;
  s.het = het_from_edges(4, {{0, 1}, {0, 2}, {0, 3}});
  s.dual = build_dual_graph(s.het);
  s.state = oracle::random_state(rng, 4, 3, kDh);
  s.state.relation_features.row(1) = s.state.relation_features.row(2);
  oracle::randomize(s.intra, rng);
  const auto att = intra_relation_attention(s.state, s.dual, s.intra);
  REQUIRE(att[0].size() == 2);  // neighbors of relation 0 are relations 1 and 2
  CHECK(att[0][0] == 0.5);
  CHECK(att[0][1] == 0.5);
}

TEST_CASE("attention weights match a direct softmax oracle and sum to one") {
  std::mt19937_64 rng(43);
  for (int trial = 0; trial < 50; ++trial) {
    Setup s = random_setup(rng, 5);
    const auto att = intra_relation_attention(s.state, s.dual, s.intra);
    for (int e = 0; e < s.dual.num_relations; ++e) {
      const auto& nbrs = s.dual.rel_neighbors[e];
      if (nbrs.empty()) continue;
      std::vector<double> logits;
      for (int k : nbrs) {
        logits.push_back(oracle::att_logit_pair(s.intra.att_rel.value,
                                                s.state.relation_features.row(e).transpose(),
                                                s.state.relation_features.row(k).transpose()));
      }
      const auto expect = oracle::softmax(logits);
      double sum = 0;
      for (size_t k = 0; k < nbrs.size(); ++k) {
        CHECK(std::abs(att[e][k] - expect[k]) < 1e-6);
        sum += att[e][k];
      }
      CHECK(std::abs(sum - 1.0) < 1e-6);
    }
  }
}

TEST_CASE("zero message weights leave features unchanged") {
  std::mt19937_64 rng(44);
  Setup s = random_setup(rng, 5);
  s.intra.w_rel.value.setZero();
  s.intra.w_obj.value.setZero();
  const auto next_rel = intra_relation_step(s.state, s.dual, s.intra);
  const auto next_obj = intra_object_step(s.state, s.dual, s.intra);
  CHECK(max_abs_diff(next_rel.relation_features, s.state.relation_features) == 0.0);
  CHECK(max_abs_diff(next_obj.object_features, s.state.object_features) == 0.0);
}

TEST_CASE("isolated relations and objects keep their features") {
  std::mt19937_64 rng(45);
  Setup s;
  s.het = het_from_edges(4, {{0, 1}});  // objects 2,3 isolated; relation 0 isolated
  s.dual = build_dual_graph(s.het);
  s.state = oracle::random_state(rng, 4, 1, kDh);
  oracle::randomize(s.intra, rng);
  const auto rel = intra_relation_step(s.state, s.dual, s.intra);
  CHECK(max_abs_diff(rel.relation_features, s.state.relation_features) == 0.0);
  const auto obj = intra_object_step(s.state, s.dual, s.intra);
  CHECK(rows_equal(obj.object_features, 2, s.state.object_features, 2));
  CHECK(rows_equal(obj.object_features, 3, s.state.object_features, 3));
  CHECK(!rows_equal(obj.object_features, 0, s.state.object_features, 0));
}

TEST_CASE("all four steps match the dense-loop oracle on random graphs") {
  std::mt19937_64 rng(46);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 5);
    Setup s = random_setup(rng, n);
    CHECK(max_abs_diff(intra_relation_step(s.state, s.dual, s.intra).relation_features,
                       oracle::intra_relation_step(s.state.relation_features, s.dual,
                                                   s.intra)) < 1e-6);
    CHECK(max_abs_diff(intra_object_step(s.state, s.dual, s.intra).object_features,
                       oracle::intra_object_step(s.state.object_features, s.dual, s.intra)) <
          1e-6);
    CHECK(max_abs_diff(inter_relation_step(s.state, s.het, s.inter).relation_features,
                       oracle::inter_relation_step(s.state.relation_features,
                                                   s.state.object_features, s.het, s.inter)) <
          1e-6);
    CHECK(max_abs_diff(inter_object_step(s.state, s.het, s.inter).object_features,
                       oracle::inter_object_step(s.state.relation_features,
                                                 s.state.object_features, s.het, s.inter)) <
          1e-6);
  }
}

TEST_CASE("inter-relation attention is half-half for equal endpoints or zero logits") {
  std::mt19937_64 rng(47);
  Setup s;
  s.het = het_from_edges(2, {{0, 1}});
  s.dual = build_dual_graph(s.het);
  s.state = oracle::random_state(rng, 2, 1, kDh);
  oracle::randomize(s.inter, rng);

  SUBCASE("equal endpoint features") {
    s.state.object_features.row(1) = s.state.object_features.row(0);
    const auto got = inter_relation_step(s.state, s.het, s.inter);
    // alpha = 0.5 exactly: mixed message is the plain average of the two maps
    const Eigen::VectorXd mixed =
        0.5 * (s.inter.by_type[0].w_subj.value *
               s.state.object_features.row(0).transpose()) +
        0.5 * (s.inter.by_type[0].w_obj.value * s.state.object_features.row(1).transpose());
    const Eigen::VectorXd expect =
        s.state.relation_features.row(0).transpose() + oracle::relu(mixed);
    CHECK((got.relation_features.row(0).transpose() - expect).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("zero attention vector") {
    s.inter.att_h.value.setZero();
    const auto got = inter_relation_step(s.state, s.het, s.inter);
    const Eigen::VectorXd mixed =
        0.5 * (s.inter.by_type[0].w_subj.value *
               s.state.object_features.row(0).transpose()) +
        0.5 * (s.inter.by_type[0].w_obj.value * s.state.object_features.row(1).transpose());
    const Eigen::VectorXd expect =
        s.state.relation_features.row(0).transpose() + oracle::relu(mixed);
    CHECK((got.relation_features.row(0).transpose() - expect).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("type-specific weights are observable in the output") {
  std::mt19937_64 rng(48);
  Setup a;
  a.het = het_from_edges(2, {{0, 1}}, {RelationType::interactive});
  a.dual = build_dual_graph(a.het);
  a.state = oracle::random_state(rng, 2, 1, kDh);
  oracle::randomize(a.inter, rng);
  Setup b = a;
  b.het.edge_type[0] = RelationType::non_interactive;
  const auto out_phi = inter_relation_step(a.state, a.het, a.inter);
  const auto out_delta = inter_relation_step(a.state, b.het, a.inter);
  CHECK(max_abs_diff(out_phi.relation_features, out_delta.relation_features) > 1e-8);
}

TEST_CASE("object with one incident relation gets attention one and the 1/|T| average") {
  std::mt19937_64 rng(49);
  Setup s;
  s.het = het_from_edges(2, {{0, 1}}, {RelationType::interactive});
  s.dual = build_dual_graph(s.het);
  s.state = oracle::random_state(rng, 2, 1, kDh);
  oracle::randomize(s.inter, rng);
  const auto got = inter_object_step(s.state, s.het, s.inter);
  // Object 0 is the subject of the only relation: message through w_to_sub,
  // attention 1, divided by |T| = 2; the delta-type slot is empty.
  const Eigen::VectorXd msg =
      s.inter.by_type[0].w_to_sub.value * s.state.relation_features.row(0).transpose();
  const Eigen::VectorXd expect =
      s.state.object_features.row(0).transpose() + oracle::relu(msg) / 2.0;
  CHECK((got.object_features.row(0).transpose() - expect).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("run_tamp with zero layers is the identity") {
  std::mt19937_64 rng(50);
  Setup s = random_setup(rng, 4);
  const auto out = run_tamp(s.state, s.het, s.dual, s.intra, s.inter, 0, 0);
  CHECK(max_abs_diff(out.object_features, s.state.object_features) == 0.0);
  CHECK(max_abs_diff(out.relation_features, s.state.relation_features) == 0.0);
}

TEST_CASE("run_tamp with zero weights is the identity at any depth") {
  std::mt19937_64 rng(51);
  Setup s = random_setup(rng, 5);
  for (auto* p : s.intra.params()) p->value.setZero();
  for (auto* p : s.inter.params()) p->value.setZero();
  const auto out = run_tamp(s.state, s.het, s.dual, s.intra, s.inter, 3, 3);
  CHECK(max_abs_diff(out.object_features, s.state.object_features) == 0.0);
  CHECK(max_abs_diff(out.relation_features, s.state.relation_features) == 0.0);
}

TEST_CASE("run_tamp composes the four step operations in order") {
  std::mt19937_64 rng(52);
  Setup s = random_setup(rng, 3, 0.8);
  const auto got = run_tamp(s.state, s.het, s.dual, s.intra, s.inter, 1, 1);

  LayerState step = s.state;
  LayerState intra_out = step;
  intra_out.relation_features =
      intra_relation_step(step, s.dual, s.intra).relation_features;
  intra_out.object_features = intra_object_step(step, s.dual, s.intra).object_features;
  LayerState inter_rel = intra_out;
  inter_rel.relation_features =
      inter_relation_step(intra_out, s.het, s.inter).relation_features;
  LayerState final_state = inter_rel;
  final_state.object_features = inter_object_step(inter_rel, s.het, s.inter).object_features;

  CHECK(max_abs_diff(got.object_features, final_state.object_features) < 1e-12);
  CHECK(max_abs_diff(got.relation_features, final_state.relation_features) < 1e-12);
}

TEST_CASE("run_tamp matches the dense oracle at depth 2+2") {
  std::mt19937_64 rng(53);
  for (int trial = 0; trial < 30; ++trial) {
    Setup s = random_setup(rng, 5);
    const auto got = run_tamp(s.state, s.het, s.dual, s.intra, s.inter, 2, 2);
    const auto expect = oracle::run_tamp(s.state, s.het, s.dual, s.intra, s.inter, 2, 2);
    CHECK(max_abs_diff(got.object_features, expect.object_features) < 1e-6);
    CHECK(max_abs_diff(got.relation_features, expect.relation_features) < 1e-6);
  }
}

TEST_CASE("attention normalization holds across a full pass") {
  std::mt19937_64 rng(54);
  for (int trial = 0; trial < 20; ++trial) {
    Setup s = random_setup(rng, 6);
    AttentionAudit audit;
    run_tamp(s.state, s.het, s.dual, s.intra, s.inter, 2, 2, &audit);
    for (double sum : audit.group_sums) CHECK(std::abs(sum - 1.0) < 1e-6);
  }
}

TEST_CASE("permutation equivariance holds bit-for-bit") {
  std::mt19937_64 rng(55);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 4 + static_cast<int>(rng() % 3);
    Setup s = random_setup(rng, n, 0.6);

    // random permutation of object labels
    std::vector<int> perm(n);
    for (int i = 0; i < n; ++i) perm[i] = i;
    std::shuffle(perm.begin(), perm.end(), rng);

    Setup t;
    t.intra = s.intra;
    t.inter = s.inter;
    t.het.num_objects = n;
    // permuted edges, re-sorted lexicographically as construction would emit
    std::vector<std::pair<std::pair<int, int>, int>> tagged;
    for (size_t e = 0; e < s.het.edges.size(); ++e) {
      tagged.push_back({{perm[s.het.edges[e].first], perm[s.het.edges[e].second]},
                        static_cast<int>(e)});
    }
    std::sort(tagged.begin(), tagged.end());
    std::vector<int> edge_map(tagged.size());  // new index -> old index
    for (size_t e = 0; e < tagged.size(); ++e) {
      t.het.edges.push_back(tagged[e].first);
      edge_map[e] = tagged[e].second;
      t.het.edge_type.push_back(s.het.edge_type[tagged[e].second]);
    }
    t.het.pre_distribution = s.het.pre_distribution;
    t.dual = build_dual_graph(t.het);
    t.state.object_features.resize(n, kDh);
    for (int i = 0; i < n; ++i) {
      t.state.object_features.row(perm[i]) = s.state.object_features.row(i);
    }
    t.state.relation_features.resize(static_cast<Eigen::Index>(t.het.edges.size()), kDh);
    for (size_t e = 0; e < t.het.edges.size(); ++e) {
      t.state.relation_features.row(static_cast<Eigen::Index>(e)) =
          s.state.relation_features.row(edge_map[e]);
    }

    const auto out_s = run_tamp(s.state, s.het, s.dual, s.intra, s.inter, 2, 2);
    const auto out_t = run_tamp(t.state, t.het, t.dual, t.intra, t.inter, 2, 2);
    for (int i = 0; i < n; ++i) {
      CHECK(rows_equal(out_t.object_features, perm[i], out_s.object_features, i));
    }
    for (size_t e = 0; e < t.het.edges.size(); ++e) {
      CHECK(rows_equal(out_t.relation_features, static_cast<Eigen::Index>(e),
                       out_s.relation_features, edge_map[e]));
    }
  }
}

TEST_CASE("locality: far-away features cannot influence an edge") {
  std::mt19937_64 rng(56);
  // Path graph 0-1-2-...-9; total depth 2+2 = 4 hops; node 9 is 8 hops from
  // edge (0,1).
  const int n = 10;
  EdgeList edges;
  for (int i = 0; i + 1 < n; ++i) edges.emplace_back(i, i + 1);
  Setup s;
  s.het = het_from_edges(n, edges);
  s.dual = build_dual_graph(s.het);
  s.state = oracle::random_state(rng, n, static_cast<int>(edges.size()), kDh);
  oracle::randomize(s.intra, rng);
  oracle::randomize(s.inter, rng);

  const auto base = run_tamp(s.state, s.het, s.dual, s.intra, s.inter, 2, 2);
  LayerState poked = s.state;
  poked.object_features.row(n - 1).setConstant(123.0);
  const auto out = run_tamp(poked, s.het, s.dual, s.intra, s.inter, 2, 2);
  CHECK(rows_equal(out.relation_features, 0, base.relation_features, 0));
  CHECK(rows_equal(out.object_features, 0, base.object_features, 0));
  CHECK(!rows_equal(out.object_features, n - 1, base.object_features, n - 1));
}

TEST_CASE("message passing gradients match finite differences") {
  std::mt19937_64 rng(57);
  Setup s = random_setup(rng, 4, 0.7);
  std::vector<ad::Param*> params;
  for (auto* p : s.intra.params()) params.push_back(p);
  for (auto* p : s.inter.params()) params.push_back(p);

  ad::Param probe("probe", kDh, 1);
  probe.value = oracle::random_matrix(rng, kDh, 1, 1.0);

  const auto objective = [&]() {
    ad::Tape tape;
    TapeState ts;
    for (Eigen::Index i = 0; i < s.state.object_features.rows(); ++i) {
      ts.objects.push_back(tape.input(s.state.object_features.row(i).transpose()));
    }
    for (Eigen::Index e = 0; e < s.state.relation_features.rows(); ++e) {
      ts.relations.push_back(tape.input(s.state.relation_features.row(e).transpose()));
    }
    ts = run_tamp_t(tape, std::move(ts), s.het, s.dual, s.intra, s.inter, 2, 2, nullptr);
    double total = 0;
    for (ad::Var v : ts.objects) total += probe.value.col(0).dot(tape.value(v));
    for (ad::Var v : ts.relations) total += probe.value.col(0).dot(tape.value(v));
    return total / static_cast<double>(ts.objects.size() + ts.relations.size());
  };

  {
    ad::Tape tape;
    TapeState ts;
    for (Eigen::Index i = 0; i < s.state.object_features.rows(); ++i) {
      ts.objects.push_back(tape.input(s.state.object_features.row(i).transpose()));
    }
    for (Eigen::Index e = 0; e < s.state.relation_features.rows(); ++e) {
      ts.relations.push_back(tape.input(s.state.relation_features.row(e).transpose()));
    }
    ts = run_tamp_t(tape, std::move(ts), s.het, s.dual, s.intra, s.inter, 2, 2, nullptr);
    std::vector<ad::Var> terms;
    for (ad::Var v : ts.objects) terms.push_back(tape.dot_param(probe, v));
    for (ad::Var v : ts.relations) terms.push_back(tape.dot_param(probe, v));
    ad::Var loss = tape.scale(tape.sum_scalars(terms), 1.0 / terms.size());
    for (auto* p : params) p->zero_grad();
    tape.backward(loss);
  }
  const auto check = oracle::finite_difference_check(params, objective);
  CHECK(check.max_rel_err < 1e-4);
}
