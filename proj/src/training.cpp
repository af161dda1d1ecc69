#include "tahdg/training.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <random>

#include <json.hpp>

namespace tahdg {

using nlohmann::json;

const char* to_string(LossMode m) {
  return m == LossMode::bce_on_softmax ? "bce_on_softmax" : "cross_entropy";
}

LossMode parse_loss_mode(const std::string& name) {
  if (name == "bce_on_softmax") return LossMode::bce_on_softmax;
  if (name == "cross_entropy") return LossMode::cross_entropy;
  throw UsageError("unknown loss mode: " + name);
}

HeadParams::HeadParams(const ModelDims& dims, int num_object_classes, int num_relation_classes)
    : w_obj("head.w_obj", num_object_classes, dims.d_h),
      w_rel("head.w_rel", num_relation_classes, dims.d_h),
      w_rel_pre("head.w_rel_pre", num_relation_classes, dims.d_h) {}

std::vector<ad::Param*> HeadParams::params() { return {&w_obj, &w_rel, &w_rel_pre}; }

std::string ModelConfig::to_json() const {
  json j;
  j["d_v"] = dims.d_v;
  j["d_v_proj"] = dims.d_v_proj;
  j["d_b"] = dims.d_b;
  j["d_c"] = dims.d_c;
  j["d_h"] = dims.d_h;
  j["layers_intra"] = layers_intra;
  j["layers_inter"] = layers_inter;
  j["s_b"] = s_b;
  j["s_l"] = s_l;
  j["top_k"] = top_k;
  j["use_pair_selection"] = use_pair_selection;
  j["typed_message_passing"] = typed_message_passing;
  j["use_intra_stage"] = use_intra_stage;
  return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
  json j = json::parse(text);
  if (j.contains("model")) j = j.at("model");
  ModelConfig c;
  c.dims.d_v = j.at("d_v").get<int>();
  c.dims.d_v_proj = j.at("d_v_proj").get<int>();
  c.dims.d_b = j.at("d_b").get<int>();
  c.dims.d_c = j.at("d_c").get<int>();
  c.dims.d_h = j.at("d_h").get<int>();
  c.layers_intra = j.at("layers_intra").get<int>();
  c.layers_inter = j.at("layers_inter").get<int>();
  c.s_b = j.at("s_b").get<double>();
  c.s_l = j.at("s_l").get<double>();
  c.top_k = j.at("top_k").get<int>();
  c.use_pair_selection = j.at("use_pair_selection").get<bool>();
  c.typed_message_passing = j.at("typed_message_passing").get<bool>();
  c.use_intra_stage = j.at("use_intra_stage").get<bool>();
  return c;
}

Model::Model(const ModelConfig& cfg, const Ontology& ontology)
    : config(cfg),
      enc(cfg.dims, ontology.num_object_classes()),
      intra(cfg.dims.d_h),
      inter(cfg.dims.d_h),
      heads(cfg.dims, ontology.num_object_classes(), ontology.num_relation_classes()) {
  inter.type_count = cfg.typed_message_passing ? kNumRelationTypes : 1;
}

std::vector<ad::Param*> Model::params() {
  std::vector<ad::Param*> out;
  for (auto* p : enc.params()) out.push_back(p);
  for (auto* p : intra.params()) out.push_back(p);
  for (auto* p : inter.params()) out.push_back(p);
  for (auto* p : heads.params()) out.push_back(p);
  return out;
}

void Model::init_params(uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (auto* p : params()) xavier_init(*p, rng);
}

void Model::zero_grads() {
  for (auto* p : params()) p->zero_grad();
}

Checkpoint Model::to_checkpoint(const Ontology& ontology, int epochs_completed) const {
  Checkpoint ckpt;
  ckpt.ontology_hash = ontology.hash();
  ckpt.config_json = config.to_json();
  ckpt.epochs_completed = epochs_completed;
  Model& self = const_cast<Model&>(*this);
  for (auto* p : self.params()) ckpt.tensors.push_back({p->name, p->value});
  return ckpt;
}

Model Model::from_checkpoint(const Checkpoint& ckpt, const Ontology& ontology) {
  Model model(ModelConfig::from_json(ckpt.config_json), ontology);
  std::map<std::string, const Eigen::MatrixXd*> by_name;
  for (const auto& t : ckpt.tensors) by_name[t.name] = &t.value;
  for (auto* p : model.params()) {
    auto it = by_name.find(p->name);
    if (it == by_name.end()) throw SchemaError("checkpoint: missing tensor: " + p->name);
    if (it->second->rows() != p->value.rows() || it->second->cols() != p->value.cols()) {
      throw SchemaError("checkpoint: shape mismatch for tensor: " + p->name);
    }
    p->value = *it->second;
  }
  return model;
}

// --- mode substitution and targets -------------------------------------------

namespace {

struct GtObject {
  Box box;
  int label;
};

std::vector<GtObject> unique_gt_objects(const Scene& scene) {
  std::vector<GtObject> out;
  const auto add = [&](const Box& b, int label) {
    for (const auto& g : out) {
      if (g.box == b && g.label == label) return;
    }
    out.push_back({b, label});
  };
  for (const auto& t : scene.gt_triplets) {
    add(t.s_box, t.s_label);
    add(t.o_box, t.o_label);
  }
  return out;
}

/// Best-IoU GT object with IoU >= 0.5, or -1.
int match_gt_object(const Box& box, const std::vector<GtObject>& gts) {
  int best = -1;
  double best_iou = 0.5;
  for (size_t g = 0; g < gts.size(); ++g) {
    const double v = iou(box, gts[g].box);
    if (v > best_iou || (v == best_iou && best < 0 && v >= 0.5)) {
      best = static_cast<int>(g);
      best_iou = v;
    }
  }
  return best;
}

}  // namespace

Scene substitute_mode(const Scene& scene, EvalMode mode) {
  if (mode == EvalMode::sgdet) return scene;
  if (!scene.has_gt()) {
    throw UsageError("mode " + std::string(to_string(mode)) +
                     " requires ground truth, scene " + scene.scene_id + " has none");
  }
  Scene out = scene;
  const auto gts = unique_gt_objects(scene);
  const int n_classes = static_cast<int>(scene.objects.empty()
                                             ? 0
                                             : scene.objects[0].distribution.size());
  for (auto& obj : out.objects) {
    const int g = match_gt_object(obj.box, gts);
    if (g < 0) continue;
    obj.box = gts[g].box;
    if (mode == EvalMode::predcls) {
      obj.label = gts[g].label;
      obj.distribution.assign(n_classes, 0.0);
      obj.distribution[obj.label] = 1.0;
    }
  }
  return out;
}

SceneTargets assign_targets(const Scene& substituted, const EdgeList& edges, EvalMode mode) {
  const auto gts = unique_gt_objects(substituted);
  const int n = static_cast<int>(substituted.objects.size());

  // Node -> GT object identity. predcls works on exact identity after
  // substitution; the other modes use IoU + label agreement.
  std::vector<int> node_gt(n, -1);
  for (int i = 0; i < n; ++i) {
    const auto& obj = substituted.objects[i];
    if (mode == EvalMode::predcls) {
      for (size_t g = 0; g < gts.size(); ++g) {
        if (gts[g].box == obj.box && gts[g].label == obj.label) {
          node_gt[i] = static_cast<int>(g);
          break;
        }
      }
    } else {
      const int g = match_gt_object(obj.box, gts);
      if (g >= 0 && gts[g].label == obj.label) node_gt[i] = g;
    }
  }

  std::map<std::pair<int, int>, int> gt_pair_rel;
  const auto gt_id = [&](const Box& b, int label) {
    for (size_t g = 0; g < gts.size(); ++g) {
      if (gts[g].box == b && gts[g].label == label) return static_cast<int>(g);
    }
    return -1;
  };
  for (const auto& t : substituted.gt_triplets) {
    gt_pair_rel.emplace(std::make_pair(gt_id(t.s_box, t.s_label), gt_id(t.o_box, t.o_label)),
                        t.relation);
  }

  SceneTargets targets;
  targets.object_class.resize(n);
  for (int i = 0; i < n; ++i) {
    targets.object_class[i] = node_gt[i] >= 0 ? gts[node_gt[i]].label
                                              : substituted.objects[i].label;
  }
  targets.relation_class.assign(edges.size(), kBackgroundRelation);
  for (size_t e = 0; e < edges.size(); ++e) {
    const auto [i, j] = edges[e];
    if (node_gt[i] < 0 || node_gt[j] < 0) {
      ++targets.edges_without_gt;
      continue;
    }
    auto it = gt_pair_rel.find({node_gt[i], node_gt[j]});
    if (it != gt_pair_rel.end()) {
      targets.relation_class[e] = it->second;
    } else {
      ++targets.edges_without_gt;
    }
  }
  return targets;
}

// --- forward pass --------------------------------------------------------------

namespace {

HeterogeneousGraph untyped_het(const InitialGraph& graph, ad::Param& pre_classifier,
                               int num_relation_classes) {
  HeterogeneousGraph het;
  het.num_objects = graph.num_objects;
  het.edges = graph.edges;
  het.edge_type.assign(graph.edges.size(), RelationType::interactive);
  het.pre_distribution.resize(static_cast<Eigen::Index>(graph.edges.size()),
                              num_relation_classes);
  for (size_t e = 0; e < graph.edges.size(); ++e) {
    const Eigen::VectorXd logits =
        pre_classifier.value *
        graph.relation_features.row(static_cast<Eigen::Index>(e)).transpose();
    const double m = logits.maxCoeff();
    Eigen::VectorXd p = (logits.array() - m).exp();
    p /= p.sum();
    het.pre_distribution.row(static_cast<Eigen::Index>(e)) = p.transpose();
  }
  return het;
}

}  // namespace

SceneForward forward_scene(ad::Tape& tape, Model& model, const Scene& scene,
                           const Ontology& ontology, const CooccurrenceStats& stats,
                           AttentionAudit* audit) {
  SceneForward fwd;
  const int n = static_cast<int>(scene.objects.size());
  const int d_h = model.config.dims.d_h;

  TapeState init;
  fwd.graph.num_objects = n;
  fwd.graph.object_features.resize(n, d_h);
  for (int i = 0; i < n; ++i) {
    ad::Var f = encode_object_node(tape, model.enc, scene.objects[i], scene.width, scene.height);
    init.objects.push_back(f);
    fwd.graph.object_features.row(i) = tape.value(f).transpose();
  }

  if (n >= 2) {
    const PairScores scores = compute_pair_matrices(scene, stats);
    if (model.config.use_pair_selection) {
      fwd.graph.edges = select_pairs(scores, model.config.s_b, model.config.s_l,
                                     model.config.top_k);
    } else {
      // Ablation A off: confidence top-K alone, the traditional baseline.
      PairSelectParams p;
      p.top_k = model.config.top_k;
      fwd.graph.edges = select_pairs_variant(PairStrategy::con, scene, stats, p, nullptr);
    }
  }

  fwd.graph.relation_features.resize(static_cast<Eigen::Index>(fwd.graph.edges.size()), d_h);
  for (size_t e = 0; e < fwd.graph.edges.size(); ++e) {
    const auto [i, j] = fwd.graph.edges[e];
    const Box b_union = union_box(scene.objects[i].box, scene.objects[j].box);
    ad::Var f = encode_relation_node(tape, model.enc, init.objects[i], init.objects[j], b_union,
                                     scene.width, scene.height);
    init.relations.push_back(f);
    fwd.graph.relation_features.row(static_cast<Eigen::Index>(e)) = tape.value(f).transpose();
  }

  fwd.het = model.config.typed_message_passing
                ? assign_relation_types(fwd.graph, model.heads.w_rel_pre, ontology)
                : untyped_het(fwd.graph, model.heads.w_rel_pre,
                              ontology.num_relation_classes());
  fwd.dual = build_dual_graph(fwd.het);

  for (size_t e = 0; e < fwd.graph.edges.size(); ++e) {
    fwd.pre_probs.push_back(
        tape.softmax_vec(tape.matvec(model.heads.w_rel_pre, init.relations[e])));
  }

  const int layers_intra = model.config.use_intra_stage ? model.config.layers_intra : 0;
  fwd.state = run_tamp_t(tape, std::move(init), fwd.het, fwd.dual, model.intra, model.inter,
                         layers_intra, model.config.layers_inter, audit);

  for (int i = 0; i < n; ++i) {
    fwd.object_probs.push_back(
        tape.softmax_vec(tape.matvec(model.heads.w_obj, fwd.state.objects[i])));
  }
  for (size_t e = 0; e < fwd.graph.edges.size(); ++e) {
    fwd.relation_probs.push_back(
        tape.softmax_vec(tape.matvec(model.heads.w_rel, fwd.state.relations[e])));
  }
  return fwd;
}

Prediction classify(const SceneForward& fwd, ad::Tape& tape, const Scene& substituted,
                    EvalMode mode) {
  Prediction pred;
  const int n = static_cast<int>(fwd.object_probs.size());
  const int e_count = static_cast<int>(fwd.relation_probs.size());
  pred.edges = fwd.graph.edges;
  if (n > 0) {
    const int n_cls = static_cast<int>(tape.value(fwd.object_probs[0]).size());
    pred.object_probs.resize(n, n_cls);
    for (int i = 0; i < n; ++i) {
      pred.object_probs.row(i) = tape.value(fwd.object_probs[i]).transpose();
    }
  }
  if (e_count > 0) {
    const int n_rel = static_cast<int>(tape.value(fwd.relation_probs[0]).size());
    pred.relation_probs.resize(e_count, n_rel);
    for (int e = 0; e < e_count; ++e) {
      pred.relation_probs.row(e) = tape.value(fwd.relation_probs[e]).transpose();
    }
  }

  for (int e = 0; e < e_count; ++e) {
    const auto [i, j] = pred.edges[e];
    int best_rel = -1;
    double best_rel_score = -1;
    for (int r = 1; r < pred.relation_probs.cols(); ++r) {
      if (pred.relation_probs(e, r) > best_rel_score) {
        best_rel_score = pred.relation_probs(e, r);
        best_rel = r;
      }
    }
    if (best_rel < 0) continue;

    Triplet t;
    t.subject_idx = i;
    t.object_idx = j;
    t.relation = best_rel;
    t.s_box = substituted.objects[i].box;
    t.o_box = substituted.objects[j].box;
    double s_score = 1.0, o_score = 1.0;
    if (mode == EvalMode::predcls) {
      t.s_label = substituted.objects[i].label;
      t.o_label = substituted.objects[j].label;
    } else {
      Eigen::Index si, oi;
      s_score = pred.object_probs.row(i).maxCoeff(&si);
      o_score = pred.object_probs.row(j).maxCoeff(&oi);
      t.s_label = static_cast<int>(si);
      t.o_label = static_cast<int>(oi);
    }
    t.score = s_score * best_rel_score * o_score;
    pred.triplets.push_back(t);
  }
  std::vector<int> order(pred.triplets.size());
  for (size_t k = 0; k < order.size(); ++k) order[k] = static_cast<int>(k);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (pred.triplets[a].score != pred.triplets[b].score) {
      return pred.triplets[a].score > pred.triplets[b].score;
    }
    return a < b;  // edge-index tie break
  });
  std::vector<Triplet> ranked;
  ranked.reserve(order.size());
  for (int k : order) ranked.push_back(pred.triplets[k]);
  pred.triplets = std::move(ranked);
  return pred;
}

// --- loss ------------------------------------------------------------------------

ad::Var scene_loss_t(ad::Tape& tape, const SceneForward& fwd, const SceneTargets& targets,
                     LossMode mode, bool include_pre_classifier) {
  const auto term = [&](ad::Var probs, int target) {
    return mode == LossMode::bce_on_softmax ? tape.bce_one_hot(probs, target)
                                            : tape.ce_one_hot(probs, target);
  };
  std::vector<ad::Var> obj_terms;
  for (size_t i = 0; i < fwd.object_probs.size(); ++i) {
    obj_terms.push_back(term(fwd.object_probs[i], targets.object_class[i]));
  }
  ad::Var loss = tape.scale(tape.sum_scalars(obj_terms),
                            obj_terms.empty() ? 0.0 : 1.0 / obj_terms.size());
  if (!fwd.relation_probs.empty()) {
    std::vector<ad::Var> rel_terms;
    for (size_t e = 0; e < fwd.relation_probs.size(); ++e) {
      rel_terms.push_back(term(fwd.relation_probs[e], targets.relation_class[e]));
    }
    loss = tape.add(loss, tape.scale(tape.sum_scalars(rel_terms), 1.0 / rel_terms.size()));
    if (include_pre_classifier) {
      std::vector<ad::Var> pre_terms;
      for (size_t e = 0; e < fwd.pre_probs.size(); ++e) {
        pre_terms.push_back(term(fwd.pre_probs[e], targets.relation_class[e]));
      }
      loss = tape.add(loss, tape.scale(tape.sum_scalars(pre_terms), 1.0 / pre_terms.size()));
    }
  }
  return loss;
}

double total_loss(const Prediction& pred, const SceneTargets& targets, LossMode mode) {
  constexpr double clamp = 1e-12;
  const auto bce_row = [&](const Eigen::MatrixXd& probs, Eigen::Index row, int target) {
    double loss = 0;
    for (Eigen::Index k = 0; k < probs.cols(); ++k) {
      const double p = std::min(std::max(probs(row, k), clamp), 1.0 - clamp);
      loss += (static_cast<int>(k) == target) ? -std::log(p) : -std::log(1.0 - p);
    }
    return loss / static_cast<double>(probs.cols());
  };
  const auto ce_row = [&](const Eigen::MatrixXd& probs, Eigen::Index row, int target) {
    return -std::log(std::max(probs(row, target), clamp));
  };
  const auto row_loss = [&](const Eigen::MatrixXd& probs, Eigen::Index row, int target) {
    return mode == LossMode::bce_on_softmax ? bce_row(probs, row, target)
                                            : ce_row(probs, row, target);
  };
  double l_obj = 0;
  for (Eigen::Index i = 0; i < pred.object_probs.rows(); ++i) {
    l_obj += row_loss(pred.object_probs, i, targets.object_class[i]);
  }
  if (pred.object_probs.rows() > 0) l_obj /= static_cast<double>(pred.object_probs.rows());
  double l_rel = 0;
  for (Eigen::Index e = 0; e < pred.relation_probs.rows(); ++e) {
    l_rel += row_loss(pred.relation_probs, e, targets.relation_class[e]);
  }
  if (pred.relation_probs.rows() > 0) l_rel /= static_cast<double>(pred.relation_probs.rows());
  return l_obj + l_rel;
}

// --- training loop ------------------------------------------------------------------

namespace {

bool finite_params(Model& model) {
  for (auto* p : model.params()) {
    if (!p->value.allFinite() || !p->grad.allFinite()) return false;
  }
  return true;
}

}  // namespace

TrainResult train(const std::vector<Scene>& train_scenes, const std::vector<Scene>& val_scenes,
                  const Ontology& ontology, const CooccurrenceStats& stats,
                  const ModelConfig& model_cfg, const TrainConfig& train_cfg) {
  Model model(model_cfg, ontology);
  model.init_params(train_cfg.seed);

  TrainResult result;
  Checkpoint last_good = model.to_checkpoint(ontology, 0);
  std::mt19937_64 rng(train_cfg.seed ^ 0xabcdef1234567890ull);
  int skipped_edges_logged = 0;

  const auto& eval_scenes = val_scenes.empty() ? train_scenes : val_scenes;

  for (int epoch = 1; epoch <= train_cfg.epochs; ++epoch) {
    std::vector<int> order(train_scenes.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::shuffle(order.begin(), order.end(), rng);

    double epoch_loss = 0;
    int scene_count = 0;
    bool aborted = false;
    for (size_t start = 0; start < order.size(); start += train_cfg.batch_size) {
      const size_t end = std::min(order.size(), start + train_cfg.batch_size);
      model.zero_grads();
      double batch_loss = 0;
      int batch_n = 0;
      for (size_t k = start; k < end; ++k) {
        const Scene scene = substitute_mode(train_scenes[order[k]], train_cfg.mode);
        ad::Tape tape;
        SceneForward fwd = forward_scene(tape, model, scene, ontology, stats);
        const SceneTargets targets = assign_targets(scene, fwd.graph.edges, train_cfg.mode);
        skipped_edges_logged += targets.edges_without_gt;
        ad::Var loss = scene_loss_t(tape, fwd, targets, train_cfg.loss_mode, true);
        batch_loss += tape.scalar(loss);
        tape.backward(loss);
        ++batch_n;
      }
      if (!std::isfinite(batch_loss) || !finite_params(model)) {
        std::cerr << "training diverged at epoch " << epoch
                  << "; restoring last good checkpoint\n";
        result.diverged = true;
        aborted = true;
        break;
      }
      const double lr = train_cfg.learning_rate;
      for (auto* p : model.params()) {
        p->value -= lr * (p->grad / batch_n + train_cfg.weight_decay * p->value);
      }
      epoch_loss += batch_loss;
      scene_count += batch_n;
    }
    if (aborted) break;

    EpochLog log;
    log.epoch = epoch;
    log.train_loss = scene_count > 0 ? epoch_loss / scene_count : 0.0;

    double val_loss = 0;
    int val_count = 0;
    std::vector<ScenePredictions> preds;
    for (const auto& raw : eval_scenes) {
      const Scene scene = substitute_mode(raw, train_cfg.mode);
      ad::Tape tape;
      SceneForward fwd = forward_scene(tape, model, scene, ontology, stats);
      const SceneTargets targets = assign_targets(scene, fwd.graph.edges, train_cfg.mode);
      val_loss += tape.scalar(scene_loss_t(tape, fwd, targets, train_cfg.loss_mode, true));
      ++val_count;
      Prediction pred = classify(fwd, tape, scene, train_cfg.mode);
      preds.push_back({raw.scene_id, std::move(pred.triplets)});
    }
    log.val_loss = val_count > 0 ? val_loss / val_count : 0.0;

    MatchCriterion criterion;
    criterion.mode = train_cfg.mode;
    const MetricReport report = evaluate(preds, eval_scenes, ontology, criterion);
    log.r50 = report.r_at.count(50) ? report.r_at.at(50) : 0.0;
    log.r100 = report.r_at.count(100) ? report.r_at.at(100) : 0.0;
    log.mr50 = report.mr_at.count(50) ? report.mr_at.at(50) : 0.0;
    log.mr100 = report.mr_at.count(100) ? report.mr_at.at(100) : 0.0;
    result.log.push_back(log);

    last_good = model.to_checkpoint(ontology, epoch);
  }

  if (skipped_edges_logged > 0) {
    std::cerr << "note: " << skipped_edges_logged
              << " selected edges had no GT match and trained toward background\n";
  }
  result.checkpoint = std::move(last_good);
  return result;
}

Prediction infer(const Scene& scene, Model& model, const Ontology& ontology,
                 const CooccurrenceStats& stats, EvalMode mode, AttentionAudit* audit) {
  const Scene substituted = substitute_mode(scene, mode);
  ad::Tape tape;
  SceneForward fwd = forward_scene(tape, model, substituted, ontology, stats, audit);
  return classify(fwd, tape, substituted, mode);
}

std::vector<ScenePredictions> infer_corpus(const std::vector<Scene>& scenes, Model& model,
                                           const Ontology& ontology,
                                           const CooccurrenceStats& stats, EvalMode mode) {
  std::vector<ScenePredictions> out;
  out.reserve(scenes.size());
  for (const auto& scene : scenes) {
    Prediction pred = infer(scene, model, ontology, stats, mode);
    out.push_back({scene.scene_id, std::move(pred.triplets)});
  }
  return out;
}

}  // namespace tahdg
