#ifndef TAHDG_DATA_IO_HPP
#define TAHDG_DATA_IO_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "tahdg/scene_model.hpp"

namespace tahdg {

/// GT subject-object class co-occurrence counts and the add-1 smoothed
/// row-conditional existence probabilities behind the M_l filter.
struct CooccurrenceStats {
  Eigen::MatrixXd counts;     // |C| x |C|
  Eigen::MatrixXd pair_prob;  // strictly positive everywhere

  int num_classes() const { return static_cast<int>(counts.rows()); }
};

CooccurrenceStats build_cooccurrence_stats(const std::vector<Scene>& scenes,
                                           const Ontology& ontology);
CooccurrenceStats stats_from_counts(Eigen::MatrixXd counts);
void save_stats(const CooccurrenceStats& stats, const std::string& path);
CooccurrenceStats load_stats(const std::string& path);

std::vector<Scene> load_scenes(const std::string& path, const Ontology& ontology,
                               int max_objects = 0);
void save_scenes(const std::vector<Scene>& scenes, const std::string& path);
Scene parse_scene_json(const std::string& line, const Ontology& ontology);
std::string scene_to_json(const Scene& scene);

// --- synthetic data ------------------------------------------------------

/// Rule table of the synthetic generator. Adjacent-rank relations pair up on
/// one (subject class, object class) cell with opposite horizontal sides, so
/// the class pair narrows a triplet to two candidate relations and the
/// geometry resolves which one holds. Rules are deterministic given
/// (class pair, side), so the achievable prediction ceiling is exact.
struct SyntheticRules {
  std::vector<int> host_subject;  // per relation index, -1 for background
  std::vector<int> object_class;  // dedicated object-side class per relation
  std::vector<int> side;          // 0: object right of subject, 1: left
  std::vector<double> zipf_prob;  // marginal relation frequencies

  int relation_for(int subject_class, int object_cls, int side_flag) const;
  /// Probability of each relation for a subject-object class pair,
  /// marginalizing the generator's side draw.
  std::vector<std::pair<int, double>> rule_row(int subject_class, int object_cls) const;
  /// Expected top-1 accuracy of a predictor that sees class pair and geometry.
  double achievable_ceiling() const;
};

struct SyntheticConfig {
  int n_scenes = 100;
  int objects_min = 4;
  int objects_max = 7;
  double longtail_exponent = 2.0;
  double noise = 0.25;  // feature noise sigma; also scales distribution softening
  double box_jitter = 0.0;
  uint64_t seed = 1;
  uint64_t class_mean_seed = 9001;  // shared across train/test splits
  double image_width = 640;
  double image_height = 480;
  int visual_dim = 32;
};

Ontology make_synthetic_ontology(int num_object_classes, int num_relation_classes,
                                 double longtail_exponent);
SyntheticRules derive_rules(const SyntheticConfig& cfg, const Ontology& ontology);
std::vector<Scene> generate_synthetic_dataset(const SyntheticConfig& cfg,
                                              const Ontology& ontology);

// --- predictions ----------------------------------------------------------

struct ScenePredictions {
  std::string scene_id;
  std::vector<Triplet> triplets;  // descending score
};

void save_predictions(const std::vector<ScenePredictions>& preds, const std::string& path);
std::vector<ScenePredictions> load_predictions(const std::string& path);

// --- checkpoints -----------------------------------------------------------

struct NamedTensor {
  std::string name;
  Eigen::MatrixXd value;
};

struct Checkpoint {
  uint64_t ontology_hash = 0;
  std::string config_json;
  std::vector<NamedTensor> tensors;
  int epochs_completed = 0;
};

/// Single binary file, versioned header, whole-file checksum; written
/// atomically via a temp file and rename. Loading verifies the ontology hash.
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path, uint64_t expected_ontology_hash);

}  // namespace tahdg

#endif
