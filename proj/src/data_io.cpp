#include "tahdg/data_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include <json.hpp>

namespace tahdg {

using nlohmann::json;

// --- co-occurrence stats ----------------------------------------------------

CooccurrenceStats stats_from_counts(Eigen::MatrixXd counts) {
  const int n = static_cast<int>(counts.rows());
  CooccurrenceStats stats;
  stats.pair_prob.resize(n, n);
  for (int a = 0; a < n; ++a) {
    const double row_total = counts.row(a).sum();
    for (int b = 0; b < n; ++b) {
      stats.pair_prob(a, b) = (counts(a, b) + 1.0) / (row_total + n);
    }
  }
  stats.counts = std::move(counts);
  return stats;
}

CooccurrenceStats build_cooccurrence_stats(const std::vector<Scene>& scenes,
                                           const Ontology& ontology) {
  const int n = ontology.num_object_classes();
  Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(n, n);
  long total = 0;
  for (const auto& scene : scenes) {
    for (const auto& t : scene.gt_triplets) {
      counts(t.s_label, t.o_label) += 1.0;
      ++total;
    }
  }
  if (total == 0) {
    std::cerr << "warning: no ground-truth triplets; existence matrix falls back to uniform\n";
  }
  return stats_from_counts(std::move(counts));
}

void save_stats(const CooccurrenceStats& stats, const std::string& path) {
  json j;
  j["num_object_classes"] = stats.num_classes();
  json rows = json::array();
  for (int a = 0; a < stats.num_classes(); ++a) {
    json row = json::array();
    for (int b = 0; b < stats.num_classes(); ++b) {
      row.push_back(static_cast<long>(stats.counts(a, b)));
    }
    rows.push_back(std::move(row));
  }
  j["counts"] = std::move(rows);
  std::ofstream out(path);
  if (!out) throw ConfigError("stats: cannot write file: " + path);
  out << j.dump() << "\n";
}

CooccurrenceStats load_stats(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("stats: cannot open file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw SchemaError(std::string("stats: invalid JSON: ") + e.what());
  }
  const int n = j.at("num_object_classes").get<int>();
  Eigen::MatrixXd counts(n, n);
  const auto& rows = j.at("counts");
  if (static_cast<int>(rows.size()) != n) throw SchemaError("stats: counts shape mismatch");
  for (int a = 0; a < n; ++a) {
    if (static_cast<int>(rows[a].size()) != n) throw SchemaError("stats: counts shape mismatch");
    for (int b = 0; b < n; ++b) counts(a, b) = rows[a][b].get<double>();
  }
  return stats_from_counts(std::move(counts));
}

// --- scene files ------------------------------------------------------------

static json box_to_json(const Box& b) { return json::array({b.x1, b.y1, b.x2, b.y2}); }

static Box box_from_json(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 4) throw SchemaError(where + ": box must be [x1,y1,x2,y2]");
  return Box{j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

std::string scene_to_json(const Scene& scene) {
  json j;
  j["scene_id"] = scene.scene_id;
  j["width"] = scene.width;
  j["height"] = scene.height;
  json objs = json::array();
  for (const auto& o : scene.objects) {
    json jo;
    jo["box"] = box_to_json(o.box);
    jo["feature"] = o.visual_feature;
    jo["label"] = o.label;
    jo["distribution"] = o.distribution;
    objs.push_back(std::move(jo));
  }
  j["objects"] = std::move(objs);
  if (!scene.gt_triplets.empty()) {
    json gts = json::array();
    for (const auto& t : scene.gt_triplets) {
      json jt;
      jt["s_box"] = box_to_json(t.s_box);
      jt["s_label"] = t.s_label;
      jt["rel"] = t.relation;
      jt["o_box"] = box_to_json(t.o_box);
      jt["o_label"] = t.o_label;
      gts.push_back(std::move(jt));
    }
    j["gt_triplets"] = std::move(gts);
  }
  return j.dump();
}

Scene parse_scene_json(const std::string& line, const Ontology& ontology) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    throw SchemaError(std::string("scene: invalid JSON: ") + e.what());
  }
  Scene s;
  s.scene_id = j.at("scene_id").get<std::string>();
  s.width = j.at("width").get<double>();
  s.height = j.at("height").get<double>();
  for (const auto& jo : j.at("objects")) {
    DetectedObject o;
    o.box = box_from_json(jo.at("box"), "scene " + s.scene_id);
    o.visual_feature = jo.at("feature").get<std::vector<double>>();
    o.label = jo.at("label").get<int>();
    o.distribution = jo.at("distribution").get<std::vector<double>>();
    s.objects.push_back(std::move(o));
  }
  if (j.contains("gt_triplets")) {
    for (const auto& jt : j.at("gt_triplets")) {
      GtTriplet t;
      t.s_box = box_from_json(jt.at("s_box"), "scene " + s.scene_id);
      t.s_label = jt.at("s_label").get<int>();
      t.relation = jt.at("rel").get<int>();
      t.o_box = box_from_json(jt.at("o_box"), "scene " + s.scene_id);
      t.o_label = jt.at("o_label").get<int>();
      s.gt_triplets.push_back(t);
    }
  }
  validate_scene(s, ontology.num_object_classes(), ontology.num_relation_classes());
  return s;
}

std::vector<Scene> load_scenes(const std::string& path, const Ontology& ontology,
                               int max_objects) {
  std::ifstream in(path);
  if (!in) throw SchemaError("scenes: cannot open file: " + path);
  std::vector<Scene> scenes;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    Scene s = parse_scene_json(line, ontology);
    if (max_objects > 0 && static_cast<int>(s.objects.size()) > max_objects) {
      // Mirror the detector's proposal cap: keep the top objects by detector
      // confidence, stable on index.
      std::vector<int> order(s.objects.size());
      for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
      std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return s.objects[a].max_confidence() > s.objects[b].max_confidence();
      });
      order.resize(max_objects);
      std::sort(order.begin(), order.end());
      std::vector<DetectedObject> kept;
      kept.reserve(order.size());
      for (int idx : order) kept.push_back(std::move(s.objects[idx]));
      s.objects = std::move(kept);
    }
    scenes.push_back(std::move(s));
  }
  return scenes;
}

void save_scenes(const std::vector<Scene>& scenes, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("scenes: cannot write file: " + path);
  for (const auto& s : scenes) out << scene_to_json(s) << "\n";
}

// --- synthetic generator ----------------------------------------------------

int SyntheticRules::relation_for(int subject_class, int object_cls, int side_flag) const {
  for (size_t r = 1; r < host_subject.size(); ++r) {
    if (host_subject[r] == subject_class && object_class[r] == object_cls &&
        side[r] == side_flag) {
      return static_cast<int>(r);
    }
  }
  return kBackgroundRelation;
}

std::vector<std::pair<int, double>> SyntheticRules::rule_row(int subject_class,
                                                             int object_cls) const {
  std::vector<std::pair<int, double>> row;
  double total = 0;
  for (size_t r = 1; r < host_subject.size(); ++r) {
    if (host_subject[r] == subject_class && object_class[r] == object_cls) {
      row.emplace_back(static_cast<int>(r), zipf_prob[r]);
      total += zipf_prob[r];
    }
  }
  for (auto& [rel, p] : row) p /= total;
  return row;
}

double SyntheticRules::achievable_ceiling() const {
  // Geometry resolves the side, so the best predictor recovers the hosted
  // relation exactly; the ceiling is the frequency-weighted hit rate.
  double ceiling = 0;
  for (size_t r = 1; r < host_subject.size(); ++r) {
    const int back = relation_for(host_subject[r], object_class[r], side[r]);
    if (back == static_cast<int>(r)) ceiling += zipf_prob[r];
  }
  return ceiling;
}

static std::vector<double> zipf_weights(int n, double exponent) {
  std::vector<double> w(n);
  double total = 0;
  for (int k = 0; k < n; ++k) {
    w[k] = std::pow(static_cast<double>(k + 1), -exponent);
    total += w[k];
  }
  for (double& x : w) x /= total;
  return w;
}

Ontology make_synthetic_ontology(int num_object_classes, int num_relation_classes,
                                 double longtail_exponent) {
  std::vector<std::string> obj;
  for (int i = 0; i < num_object_classes; ++i) obj.push_back("obj" + std::to_string(i));
  std::vector<std::string> rel{"__background__"};
  std::map<std::string, RelationType> tm;
  for (int r = 1; r <= num_relation_classes; ++r) {
    rel.push_back("rel" + std::to_string(r));
    tm.emplace(rel.back(), r % 2 == 1 ? RelationType::interactive
                                      : RelationType::non_interactive);
  }
  // head: most frequent classes covering 50% of expected instances;
  // tail: classes below 1% each; body: the rest.
  const auto w = zipf_weights(num_relation_classes, longtail_exponent);
  std::map<std::string, LongtailSplit> lp;
  double cum = 0;
  for (int r = 0; r < num_relation_classes; ++r) {
    LongtailSplit split;
    if (cum < 0.5) {
      split = LongtailSplit::head;
    } else if (w[r] < 0.01) {
      split = LongtailSplit::tail;
    } else {
      split = LongtailSplit::body;
    }
    cum += w[r];
    lp.emplace("rel" + std::to_string(r + 1), split);
  }
  return Ontology(std::move(obj), std::move(rel), std::move(tm), std::move(lp));
}

SyntheticRules derive_rules(const SyntheticConfig& cfg, const Ontology& ontology) {
  const int n_rel = ontology.num_relation_classes() - 1;
  const int n_obj = ontology.num_object_classes();
  const int per_side = (n_rel + 1) / 2;
  if (n_obj < per_side) {
    throw ConfigError("synthetic rules unsatisfiable: need at least " +
                      std::to_string(per_side) + " object classes for " +
                      std::to_string(n_rel) + " relations");
  }
  SyntheticRules rules;
  rules.host_subject.assign(n_rel + 1, -1);
  rules.object_class.assign(n_rel + 1, -1);
  rules.side.assign(n_rel + 1, 0);
  rules.zipf_prob.assign(n_rel + 1, 0.0);
  const auto w = zipf_weights(n_rel, cfg.longtail_exponent);
  for (int r = 1; r <= n_rel; ++r) rules.zipf_prob[r] = w[r - 1];

  // Adjacent-rank relations pair up on one (subject, object) class cell with
  // opposite sides, so each cell carries one relation and a similar-frequency
  // rival disambiguated only by geometry.
  std::mt19937_64 rng(cfg.class_mean_seed ^ 0x9e3779b97f4a7c15ull);
  std::vector<int> hosts(n_obj), objs(n_obj);
  for (int i = 0; i < n_obj; ++i) hosts[i] = objs[i] = i;
  std::shuffle(hosts.begin(), hosts.end(), rng);
  std::shuffle(objs.begin(), objs.end(), rng);
  for (int r = 1; r <= n_rel; ++r) {
    rules.side[r] = r % 2 == 1 ? 0 : 1;
    rules.host_subject[r] = hosts[(r - 1) / 2];
    rules.object_class[r] = objs[(r - 1) / 2];
  }
  return rules;
}

namespace {

struct SceneBuilder {
  const SyntheticConfig& cfg;
  const Ontology& ontology;
  const SyntheticRules& rules;
  const std::vector<Eigen::VectorXd>& class_means;
  std::mt19937_64& rng;

  Box random_box(double cx, double cy, double half_min, double half_max) {
    std::uniform_real_distribution<double> half_d(half_min, half_max);
    const double hw = half_d(rng), hh = half_d(rng);
    Box b{cx - hw, cy - hh, cx + hw, cy + hh};
    b.x1 = std::max(0.0, b.x1);
    b.y1 = std::max(0.0, b.y1);
    b.x2 = std::min(cfg.image_width, b.x2);
    b.y2 = std::min(cfg.image_height, b.y2);
    return b;
  }

  DetectedObject make_object(int cls, const Box& box) {
    DetectedObject o;
    o.box = box;
    if (cfg.box_jitter > 0) {
      std::normal_distribution<double> jit(0.0, cfg.box_jitter);
      o.box.x1 = std::clamp(o.box.x1 + jit(rng), 0.0, cfg.image_width - 2);
      o.box.y1 = std::clamp(o.box.y1 + jit(rng), 0.0, cfg.image_height - 2);
      o.box.x2 = std::clamp(o.box.x2 + jit(rng), o.box.x1 + 1, cfg.image_width);
      o.box.y2 = std::clamp(o.box.y2 + jit(rng), o.box.y1 + 1, cfg.image_height);
    }
    o.label = cls;
    const int d_v = static_cast<int>(class_means[cls].size());
    o.visual_feature.resize(d_v);
    std::normal_distribution<double> noise(0.0, cfg.noise);
    for (int k = 0; k < d_v; ++k) o.visual_feature[k] = class_means[cls][k] + noise(rng);
    const int n_cls = ontology.num_object_classes();
    const double eps = std::min(0.2 * cfg.noise, 0.5);
    o.distribution.assign(n_cls, eps / n_cls);
    o.distribution[cls] += 1.0 - eps;
    return o;
  }

  Scene build(int index) {
    Scene scene;
    char id[32];
    std::snprintf(id, sizeof(id), "synth-%06d", index);
    scene.scene_id = id;
    scene.width = cfg.image_width;
    scene.height = cfg.image_height;

    std::uniform_int_distribution<int> n_obj_d(cfg.objects_min, cfg.objects_max);
    const int n_target = n_obj_d(rng);
    const int n_rel = ontology.num_relation_classes() - 1;
    std::discrete_distribution<int> rel_d(rules.zipf_prob.begin() + 1, rules.zipf_prob.end());
    std::uniform_int_distribution<int> cls_d(0, ontology.num_object_classes() - 1);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    while (static_cast<int>(scene.objects.size()) + 2 <= n_target && n_rel > 0) {
      const int rel = rel_d(rng) + 1;
      const int subj_cls = rules.host_subject[rel];
      const int side = rules.side[rel];

      // Reuse an existing subject of the host class half the time.
      int subj_idx = -1;
      if (unit(rng) < 0.5) {
        for (size_t k = 0; k < scene.objects.size(); ++k) {
          if (scene.objects[k].label == subj_cls) {
            subj_idx = static_cast<int>(k);
            break;
          }
        }
      }
      if (subj_idx < 0) {
        std::uniform_real_distribution<double> sx(260.0, cfg.image_width - 260.0);
        std::uniform_real_distribution<double> sy(120.0, cfg.image_height - 120.0);
        scene.objects.push_back(make_object(subj_cls, random_box(sx(rng), sy(rng), 15, 45)));
        subj_idx = static_cast<int>(scene.objects.size()) - 1;
      }

      const Box sbox = scene.objects[subj_idx].box;  // copy: push_back below reallocates
      std::uniform_real_distribution<double> dx_d(130.0, 250.0);
      std::uniform_real_distribution<double> dy_d(-60.0, 60.0);
      const double dx = dx_d(rng) * (side == 0 ? 1.0 : -1.0);
      const double ox = std::clamp(sbox.cx() + dx, 50.0, cfg.image_width - 50.0);
      const double oy = std::clamp(sbox.cy() + dy_d(rng), 50.0, cfg.image_height - 50.0);
      const int obj_cls = rules.object_class[rel];
      scene.objects.push_back(make_object(obj_cls, random_box(ox, oy, 15, 45)));
      const int obj_idx = static_cast<int>(scene.objects.size()) - 1;

      // Geometry decides the observed relation; clamping may flip the side.
      const int realized_side = scene.objects[obj_idx].box.cx() >= sbox.cx() ? 0 : 1;
      const int realized_rel = rules.relation_for(subj_cls, obj_cls, realized_side);
      if (realized_rel == kBackgroundRelation) continue;
      GtTriplet t;
      t.s_box = scene.objects[subj_idx].box;
      t.s_label = scene.objects[subj_idx].label;
      t.relation = realized_rel;
      t.o_box = scene.objects[obj_idx].box;
      t.o_label = scene.objects[obj_idx].label;
      scene.gt_triplets.push_back(t);
    }

    while (static_cast<int>(scene.objects.size()) < n_target) {
      std::uniform_real_distribution<double> px(60.0, cfg.image_width - 60.0);
      std::uniform_real_distribution<double> py(60.0, cfg.image_height - 60.0);
      scene.objects.push_back(make_object(cls_d(rng), random_box(px(rng), py(rng), 15, 45)));
    }
    return scene;
  }
};

}  // namespace

std::vector<Scene> generate_synthetic_dataset(const SyntheticConfig& cfg,
                                              const Ontology& ontology) {
  if (cfg.objects_min < 1 || cfg.objects_max < cfg.objects_min) {
    throw ConfigError("synthetic config: invalid objects_per_scene range");
  }
  SyntheticRules rules = derive_rules(cfg, ontology);

  // Class means are seeded independently of cfg.seed so train/test splits
  // drawn with different seeds share the same feature geometry.
  const int d_v = cfg.visual_dim;
  std::mt19937_64 mean_rng(cfg.class_mean_seed);
  std::normal_distribution<double> mean_d(0.0, 1.0);
  std::vector<Eigen::VectorXd> class_means(ontology.num_object_classes());
  for (auto& m : class_means) {
    m.resize(d_v);
    for (int k = 0; k < d_v; ++k) m[k] = mean_d(mean_rng);
  }

  std::mt19937_64 rng(cfg.seed);
  std::vector<Scene> scenes;
  scenes.reserve(cfg.n_scenes);
  SceneBuilder builder{cfg, ontology, rules, class_means, rng};
  for (int i = 0; i < cfg.n_scenes; ++i) {
    scenes.push_back(builder.build(i));
  }
  return scenes;
}

// --- predictions ------------------------------------------------------------

void save_predictions(const std::vector<ScenePredictions>& preds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("predictions: cannot write file: " + path);
  for (const auto& sp : preds) {
    json j;
    j["scene_id"] = sp.scene_id;
    json ts = json::array();
    for (const auto& t : sp.triplets) {
      json jt;
      jt["s"] = t.subject_idx;
      jt["o"] = t.object_idx;
      jt["rel"] = t.relation;
      jt["score"] = t.score;
      jt["s_box"] = box_to_json(t.s_box);
      jt["o_box"] = box_to_json(t.o_box);
      jt["s_label"] = t.s_label;
      jt["o_label"] = t.o_label;
      ts.push_back(std::move(jt));
    }
    j["triplets"] = std::move(ts);
    out << j.dump() << "\n";
  }
}

std::vector<ScenePredictions> load_predictions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("predictions: cannot open file: " + path);
  std::vector<ScenePredictions> preds;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw SchemaError(std::string("predictions: invalid JSON: ") + e.what());
    }
    ScenePredictions sp;
    sp.scene_id = j.at("scene_id").get<std::string>();
    for (const auto& jt : j.at("triplets")) {
      Triplet t;
      t.subject_idx = jt.at("s").get<int>();
      t.object_idx = jt.at("o").get<int>();
      t.relation = jt.at("rel").get<int>();
      t.score = jt.at("score").get<double>();
      t.s_box = box_from_json(jt.at("s_box"), "prediction " + sp.scene_id);
      t.o_box = box_from_json(jt.at("o_box"), "prediction " + sp.scene_id);
      t.s_label = jt.at("s_label").get<int>();
      t.o_label = jt.at("o_label").get<int>();
      sp.triplets.push_back(t);
    }
    preds.push_back(std::move(sp));
  }
  return preds;
}

// --- checkpoints -------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'T', 'A', 'H', 'D', 'G', 'C', 'P', '1'};
constexpr uint32_t kVersion = 1;

uint64_t fnv1a(const std::string& data, uint64_t h = 1469598103934665603ull) {
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

template <typename T>
void put(std::string& buf, const T& v) {
  buf.append(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T take(const std::string& buf, size_t& off) {
  if (off + sizeof(T) > buf.size()) throw SchemaError("checkpoint: truncated file");
  T v;
  std::memcpy(&v, buf.data() + off, sizeof(T));
  off += sizeof(T);
  return v;
}

std::string take_str(const std::string& buf, size_t& off, uint32_t len) {
  if (off + len > buf.size()) throw SchemaError("checkpoint: truncated file");
  std::string s = buf.substr(off, len);
  off += len;
  return s;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::string buf;
  buf.append(kMagic, sizeof(kMagic));
  put(buf, kVersion);
  put(buf, ckpt.ontology_hash);
  put(buf, static_cast<uint32_t>(ckpt.config_json.size()));
  buf += ckpt.config_json;
  put(buf, static_cast<int32_t>(ckpt.epochs_completed));
  put(buf, static_cast<uint32_t>(ckpt.tensors.size()));
  for (const auto& t : ckpt.tensors) {
    put(buf, static_cast<uint32_t>(t.name.size()));
    buf += t.name;
    put(buf, static_cast<uint32_t>(t.value.rows()));
    put(buf, static_cast<uint32_t>(t.value.cols()));
    for (Eigen::Index i = 0; i < t.value.rows(); ++i) {
      for (Eigen::Index j = 0; j < t.value.cols(); ++j) {
        put(buf, t.value(i, j));
      }
    }
  }
  const uint64_t checksum = fnv1a(buf);
  put(buf, checksum);

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw ConfigError("checkpoint: cannot write file: " + tmp);
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw ConfigError("checkpoint: short write: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::string& path, uint64_t expected_ontology_hash) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SchemaError("checkpoint: cannot open file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  std::string buf = ss.str();
  if (buf.size() < sizeof(kMagic) + sizeof(uint64_t)) {
    throw SchemaError("checkpoint: truncated file");
  }
  const std::string payload = buf.substr(0, buf.size() - sizeof(uint64_t));
  size_t off = buf.size() - sizeof(uint64_t);
  const uint64_t stored = take<uint64_t>(buf, off);
  if (fnv1a(payload) != stored) throw SchemaError("checkpoint: checksum mismatch");

  off = 0;
  if (take_str(buf, off, sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic))) {
    throw SchemaError("checkpoint: bad magic");
  }
  if (take<uint32_t>(buf, off) != kVersion) throw SchemaError("checkpoint: unsupported version");
  Checkpoint ckpt;
  ckpt.ontology_hash = take<uint64_t>(buf, off);
  if (expected_ontology_hash != 0 && ckpt.ontology_hash != expected_ontology_hash) {
    throw SchemaError("checkpoint: ontology hash mismatch (checkpoint was trained against a "
                      "different ontology)");
  }
  const uint32_t cfg_len = take<uint32_t>(buf, off);
  ckpt.config_json = take_str(buf, off, cfg_len);
  ckpt.epochs_completed = take<int32_t>(buf, off);
  const uint32_t n_tensors = take<uint32_t>(buf, off);
  for (uint32_t i = 0; i < n_tensors; ++i) {
    NamedTensor t;
    const uint32_t name_len = take<uint32_t>(buf, off);
    t.name = take_str(buf, off, name_len);
    const uint32_t rows = take<uint32_t>(buf, off);
    const uint32_t cols = take<uint32_t>(buf, off);
    t.value.resize(rows, cols);
    for (uint32_t r = 0; r < rows; ++r) {
      for (uint32_t c = 0; c < cols; ++c) {
        t.value(r, c) = take<double>(buf, off);
      }
    }
    ckpt.tensors.push_back(std::move(t));
  }
  return ckpt;
}

}  // namespace tahdg
