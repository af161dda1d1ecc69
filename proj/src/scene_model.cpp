#include "tahdg/scene_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace tahdg {

using nlohmann::json;

const char* to_string(RelationType t) {
  return t == RelationType::interactive ? "interactive" : "non_interactive";
}

const char* to_string(LongtailSplit s) {
  switch (s) {
    case LongtailSplit::head: return "head";
    case LongtailSplit::body: return "body";
    default: return "tail";
  }
}

const char* to_string(EvalMode m) {
  switch (m) {
    case EvalMode::predcls: return "predcls";
    case EvalMode::sgcls: return "sgcls";
    default: return "sgdet";
  }
}

EvalMode parse_eval_mode(const std::string& name) {
  if (name == "predcls") return EvalMode::predcls;
  if (name == "sgcls") return EvalMode::sgcls;
  if (name == "sgdet") return EvalMode::sgdet;
  throw UsageError("unknown evaluation mode: " + name);
}

Ontology::Ontology(std::vector<std::string> object_classes,
                   std::vector<std::string> relation_classes,
                   std::map<std::string, RelationType> type_map,
                   std::map<std::string, LongtailSplit> longtail_partition)
    : object_classes_(std::move(object_classes)),
      relation_classes_(std::move(relation_classes)),
      type_map_(std::move(type_map)),
      longtail_partition_(std::move(longtail_partition)) {
  validate();
  type_by_index_.resize(relation_classes_.size(), RelationType::interactive);
  split_by_index_.resize(relation_classes_.size(), LongtailSplit::body);
  for (size_t i = 1; i < relation_classes_.size(); ++i) {
    type_by_index_[i] = type_map_.at(relation_classes_[i]);
    auto it = longtail_partition_.find(relation_classes_[i]);
    split_by_index_[i] = it == longtail_partition_.end() ? LongtailSplit::body : it->second;
  }
}

void Ontology::validate() const {
  if (object_classes_.empty()) throw SchemaError("ontology: object_classes is empty");
  if (relation_classes_.empty()) throw SchemaError("ontology: relation_classes is empty");

  std::set<std::string> seen;
  for (const auto& c : object_classes_) {
    if (!seen.insert(c).second) throw SchemaError("ontology: duplicate object class: " + c);
  }
  seen.clear();
  for (const auto& r : relation_classes_) {
    if (!seen.insert(r).second) throw SchemaError("ontology: duplicate relation class: " + r);
  }
  // type_map must be total over non-background relation classes.
  for (size_t i = 1; i < relation_classes_.size(); ++i) {
    if (type_map_.find(relation_classes_[i]) == type_map_.end()) {
      throw SchemaError("ontology: untyped relation: " + relation_classes_[i]);
    }
  }
  for (const auto& [name, t] : type_map_) {
    (void)t;
    auto it = std::find(relation_classes_.begin(), relation_classes_.end(), name);
    if (it == relation_classes_.end()) {
      throw SchemaError("ontology: type_map references unknown relation: " + name);
    }
    if (it == relation_classes_.begin()) {
      throw SchemaError("ontology: background relation must not be typed: " + name);
    }
  }
  for (const auto& [name, s] : longtail_partition_) {
    (void)s;
    if (std::find(relation_classes_.begin(), relation_classes_.end(), name) ==
        relation_classes_.end()) {
      throw SchemaError("ontology: longtail_partition references unknown relation: " + name);
    }
  }
}

const std::string& Ontology::object_name(int idx) const {
  if (idx < 0 || idx >= num_object_classes()) throw std::out_of_range("object class index");
  return object_classes_[idx];
}

const std::string& Ontology::relation_name(int idx) const {
  if (idx < 0 || idx >= num_relation_classes()) throw std::out_of_range("relation class index");
  return relation_classes_[idx];
}

RelationType Ontology::relation_type(int rel_idx) const {
  if (rel_idx == kBackgroundRelation) {
    throw std::domain_error("background relation has no type");
  }
  if (rel_idx < 0 || rel_idx >= num_relation_classes()) {
    throw std::domain_error("relation index out of range");
  }
  return type_by_index_[rel_idx];
}

LongtailSplit Ontology::longtail_split(int rel_idx) const {
  if (rel_idx <= 0 || rel_idx >= num_relation_classes()) {
    throw std::domain_error("relation index out of range for longtail split");
  }
  return split_by_index_[rel_idx];
}

int Ontology::count_of_type(RelationType t) const {
  int n = 0;
  for (size_t i = 1; i < relation_classes_.size(); ++i) {
    if (type_by_index_[i] == t) ++n;
  }
  return n;
}

std::string Ontology::to_json() const {
  json j;
  j["object_classes"] = object_classes_;
  j["relation_classes"] = relation_classes_;
  json tm = json::object();
  for (const auto& [name, t] : type_map_) tm[name] = to_string(t);
  j["type_map"] = tm;
  json lp = json::object();
  for (const auto& [name, s] : longtail_partition_) lp[name] = to_string(s);
  j["longtail_partition"] = lp;
  return j.dump(2);
}

// FNV-1a over the canonical JSON dump; key order is stable (std::map).
uint64_t Ontology::hash() const {
  const std::string s = to_json();
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

static RelationType parse_relation_type(const std::string& s, const std::string& rel) {
  if (s == "interactive" || s == "phi") return RelationType::interactive;
  if (s == "non_interactive" || s == "delta") return RelationType::non_interactive;
  throw SchemaError("ontology: unknown relation type '" + s + "' for relation: " + rel);
}

static LongtailSplit parse_split(const std::string& s, const std::string& rel) {
  if (s == "head") return LongtailSplit::head;
  if (s == "body") return LongtailSplit::body;
  if (s == "tail") return LongtailSplit::tail;
  throw SchemaError("ontology: unknown longtail split '" + s + "' for relation: " + rel);
}

Ontology parse_ontology_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw SchemaError(std::string("ontology: invalid JSON: ") + e.what());
  }
  if (!j.contains("object_classes") || !j.contains("relation_classes") ||
      !j.contains("type_map")) {
    throw SchemaError("ontology: required keys: object_classes, relation_classes, type_map");
  }
  std::vector<std::string> obj = j.at("object_classes").get<std::vector<std::string>>();
  std::vector<std::string> rel = j.at("relation_classes").get<std::vector<std::string>>();
  std::map<std::string, RelationType> tm;
  for (auto& [k, v] : j.at("type_map").items()) {
    tm.emplace(k, parse_relation_type(v.get<std::string>(), k));
  }
  std::map<std::string, LongtailSplit> lp;
  if (j.contains("longtail_partition")) {
    for (auto& [k, v] : j.at("longtail_partition").items()) {
      lp.emplace(k, parse_split(v.get<std::string>(), k));
    }
  }
  return Ontology(std::move(obj), std::move(rel), std::move(tm), std::move(lp));
}

Ontology load_ontology(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("ontology: cannot open file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_ontology_json(ss.str());
}

void save_ontology(const Ontology& o, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("ontology: cannot write file: " + path);
  out << o.to_json() << "\n";
}

double intersection_area(const Box& a, const Box& b) {
  const double w = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double h = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (w <= 0 || h <= 0) return 0.0;
  return w * h;
}

double iou(const Box& a, const Box& b) {
  const double inter = intersection_area(a, b);
  const double uni = a.area() + b.area() - inter;
  if (uni <= 0) return 0.0;
  return inter / uni;
}

Box union_box(const Box& a, const Box& b) {
  return Box{std::min(a.x1, b.x1), std::min(a.y1, b.y1), std::max(a.x2, b.x2),
             std::max(a.y2, b.y2)};
}

double DetectedObject::max_confidence() const {
  double m = 0;
  for (double p : distribution) m = std::max(m, p);
  return m;
}

void validate_scene(const Scene& scene, int num_object_classes, int num_relation_classes) {
  if (scene.width <= 0 || scene.height <= 0) {
    throw SchemaError("scene " + scene.scene_id + ": non-positive image size");
  }
  for (size_t i = 0; i < scene.objects.size(); ++i) {
    const auto& o = scene.objects[i];
    const std::string where = "scene " + scene.scene_id + " object " + std::to_string(i);
    if (!o.box.valid()) throw SchemaError(where + ": degenerate box");
    if (o.box.x1 < 0 || o.box.y1 < 0 || o.box.x2 > scene.width || o.box.y2 > scene.height) {
      throw SchemaError(where + ": box outside image bounds");
    }
    if (o.label < 0 || o.label >= num_object_classes) {
      throw SchemaError(where + ": class index out of range");
    }
    if (static_cast<int>(o.distribution.size()) != num_object_classes) {
      throw SchemaError(where + ": distribution length != number of object classes");
    }
    double sum = 0;
    for (double p : o.distribution) {
      if (p < 0) throw SchemaError(where + ": negative distribution entry");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-6) {
      throw SchemaError(where + ": distribution does not sum to 1");
    }
  }
  for (size_t i = 0; i < scene.gt_triplets.size(); ++i) {
    const auto& t = scene.gt_triplets[i];
    const std::string where = "scene " + scene.scene_id + " gt_triplet " + std::to_string(i);
    if (!t.s_box.valid() || !t.o_box.valid()) throw SchemaError(where + ": degenerate box");
    if (t.s_label < 0 || t.s_label >= num_object_classes || t.o_label < 0 ||
        t.o_label >= num_object_classes) {
      throw SchemaError(where + ": class index out of range");
    }
    if (t.relation < 0 || t.relation >= num_relation_classes) {
      throw SchemaError(where + ": relation index out of range");
    }
  }
}

}  // namespace tahdg
