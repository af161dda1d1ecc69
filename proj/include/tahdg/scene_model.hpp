#ifndef TAHDG_SCENE_MODEL_HPP
#define TAHDG_SCENE_MODEL_HPP

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace tahdg {

struct SchemaError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Relation types: interactive (phi) vs non-interactive (delta).
enum class RelationType : int { interactive = 0, non_interactive = 1 };

constexpr int kNumRelationTypes = 2;
constexpr int kBackgroundRelation = 0;

const char* to_string(RelationType t);

enum class LongtailSplit : int { head = 0, body = 1, tail = 2 };

const char* to_string(LongtailSplit s);

/// Evaluation subtasks, ordered by how much ground truth the model receives.
enum class EvalMode { predcls, sgcls, sgdet };

const char* to_string(EvalMode m);
EvalMode parse_eval_mode(const std::string& name);

/// Class vocabularies plus the relation-class -> relation-type map and the
/// head/body/tail partition. Immutable after load; shared read-only.
class Ontology {
 public:
  Ontology() = default;
  Ontology(std::vector<std::string> object_classes,
           std::vector<std::string> relation_classes,
           std::map<std::string, RelationType> type_map,
           std::map<std::string, LongtailSplit> longtail_partition);

  int num_object_classes() const { return static_cast<int>(object_classes_.size()); }
  int num_relation_classes() const { return static_cast<int>(relation_classes_.size()); }

  const std::vector<std::string>& object_classes() const { return object_classes_; }
  const std::vector<std::string>& relation_classes() const { return relation_classes_; }

  const std::string& object_name(int idx) const;
  const std::string& relation_name(int idx) const;

  /// Type of a non-background relation. Background index throws std::domain_error.
  RelationType relation_type(int rel_idx) const;
  LongtailSplit longtail_split(int rel_idx) const;

  int count_of_type(RelationType t) const;

  uint64_t hash() const;
  std::string to_json() const;

 private:
  void validate() const;

  std::vector<std::string> object_classes_;
  std::vector<std::string> relation_classes_;
  std::map<std::string, RelationType> type_map_;
  std::map<std::string, LongtailSplit> longtail_partition_;
  std::vector<RelationType> type_by_index_;    // index 1..|R|-1
  std::vector<LongtailSplit> split_by_index_;  // index 1..|R|-1
};

Ontology load_ontology(const std::string& path);
void save_ontology(const Ontology& o, const std::string& path);
Ontology parse_ontology_json(const std::string& text);

inline RelationType relation_type_of(const Ontology& o, int rel_idx) {
  return o.relation_type(rel_idx);
}

struct Box {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  double cx() const { return 0.5 * (x1 + x2); }
  double cy() const { return 0.5 * (y1 + y2); }
  double area() const { return (x2 - x1) * (y2 - y1); }
  bool valid() const { return x1 < x2 && y1 < y2; }
  bool operator==(const Box&) const = default;
};

double iou(const Box& a, const Box& b);
double intersection_area(const Box& a, const Box& b);
Box union_box(const Box& a, const Box& b);

struct DetectedObject {
  Box box;
  std::vector<double> visual_feature;  // dimension D_v
  int label = 0;                       // object-class index
  std::vector<double> distribution;    // over object classes, sums to 1

  double max_confidence() const;
};

struct GtTriplet {
  Box s_box;
  int s_label = 0;
  int relation = 0;
  Box o_box;
  int o_label = 0;
};

struct Scene {
  std::string scene_id;
  double width = 0, height = 0;
  std::vector<DetectedObject> objects;
  std::vector<GtTriplet> gt_triplets;

  bool has_gt() const { return !gt_triplets.empty(); }
};

/// One emitted prediction. subject_idx/object_idx index into the source
/// scene's objects; boxes/labels are resolved per evaluation mode.
struct Triplet {
  int subject_idx = 0;
  int object_idx = 0;
  int relation = 0;
  double score = 0;
  Box s_box, o_box;
  int s_label = 0, o_label = 0;
};

void validate_scene(const Scene& scene, int num_object_classes, int num_relation_classes);

}  // namespace tahdg

#endif
