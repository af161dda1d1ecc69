#ifndef TAHDG_TRAINING_HPP
#define TAHDG_TRAINING_HPP

#include <vector>

#include "tahdg/data_io.hpp"
#include "tahdg/evaluation.hpp"
#include "tahdg/graph_construction.hpp"
#include "tahdg/message_passing.hpp"

namespace tahdg {

enum class LossMode { bce_on_softmax, cross_entropy };
const char* to_string(LossMode m);
LossMode parse_loss_mode(const std::string& name);

/// Classifier heads plus the pre-classifier that drives relation typing.
struct HeadParams {
  ad::Param w_obj;      // |C| x D_h
  ad::Param w_rel;      // |R| x D_h
  ad::Param w_rel_pre;  // |R| x D_h

  HeadParams() = default;
  HeadParams(const ModelDims& dims, int num_object_classes, int num_relation_classes);
  std::vector<ad::Param*> params();
};

struct ModelConfig {
  ModelDims dims;
  int layers_intra = 2;
  int layers_inter = 2;
  double s_b = 600.0;
  double s_l = 1e-5;
  int top_k = 4096;
  // Ablation toggles: A = pair selection, B = typed inter passing, C = intra stage.
  bool use_pair_selection = true;
  bool typed_message_passing = true;
  bool use_intra_stage = true;

  std::string to_json() const;
  static ModelConfig from_json(const std::string& text);
};

struct TrainConfig {
  double learning_rate = 0.008;
  int batch_size = 5;
  double weight_decay = 1e-5;
  int epochs = 30;
  uint64_t seed = 1;
  LossMode loss_mode = LossMode::bce_on_softmax;
  EvalMode mode = EvalMode::predcls;
};

struct Model {
  ModelConfig config;
  EncoderParams enc;
  IntraParams intra;
  InterParams inter;
  HeadParams heads;

  Model(const ModelConfig& cfg, const Ontology& ontology);
  std::vector<ad::Param*> params();
  void init_params(uint64_t seed);
  void zero_grads();

  Checkpoint to_checkpoint(const Ontology& ontology, int epochs_completed) const;
  static Model from_checkpoint(const Checkpoint& ckpt, const Ontology& ontology);
};

struct Prediction {
  Eigen::MatrixXd object_probs;    // N x |C|
  Eigen::MatrixXd relation_probs;  // E x |R|
  EdgeList edges;
  std::vector<Triplet> triplets;  // descending score, ties by edge index
};

/// Ground-truth substitution per evaluation mode. predcls replaces boxes,
/// labels, and distributions (one-hot); sgcls replaces boxes only; sgdet is a
/// passthrough. Detections match GT objects by best IoU >= 0.5.
Scene substitute_mode(const Scene& scene, EvalMode mode);

struct SceneTargets {
  std::vector<int> object_class;
  std::vector<int> relation_class;  // background for unannotated edges
  int edges_without_gt = 0;
};

SceneTargets assign_targets(const Scene& substituted, const EdgeList& edges, EvalMode mode);

struct SceneForward {
  InitialGraph graph;
  HeterogeneousGraph het;
  DualGraph dual;
  TapeState state;                      // final TAMP features
  std::vector<ad::Var> object_probs;    // softmax head outputs
  std::vector<ad::Var> relation_probs;
  std::vector<ad::Var> pre_probs;       // pre-classifier softmax per edge
};

SceneForward forward_scene(ad::Tape& tape, Model& model, const Scene& substituted,
                           const Ontology& ontology, const CooccurrenceStats& stats,
                           AttentionAudit* audit = nullptr);

Prediction classify(const SceneForward& fwd, ad::Tape& tape, const Scene& substituted,
                    EvalMode mode);

/// L_obj + L_rel on the tape; optionally adds the pre-classifier term that
/// gives the typing classifier supervision.
ad::Var scene_loss_t(ad::Tape& tape, const SceneForward& fwd, const SceneTargets& targets,
                     LossMode mode, bool include_pre_classifier);

/// Value-level loss over a finished Prediction; mirrors the tape computation.
double total_loss(const Prediction& pred, const SceneTargets& targets, LossMode mode);

struct EpochLog {
  int epoch = 0;
  double train_loss = 0;
  double val_loss = 0;
  double r50 = 0, r100 = 0, mr50 = 0, mr100 = 0;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<EpochLog> log;
  bool diverged = false;
};

TrainResult train(const std::vector<Scene>& train_scenes, const std::vector<Scene>& val_scenes,
                  const Ontology& ontology, const CooccurrenceStats& stats,
                  const ModelConfig& model_cfg, const TrainConfig& train_cfg);

Prediction infer(const Scene& scene, Model& model, const Ontology& ontology,
                 const CooccurrenceStats& stats, EvalMode mode,
                 AttentionAudit* audit = nullptr);

std::vector<ScenePredictions> infer_corpus(const std::vector<Scene>& scenes, Model& model,
                                           const Ontology& ontology,
                                           const CooccurrenceStats& stats, EvalMode mode);

}  // namespace tahdg

#endif
