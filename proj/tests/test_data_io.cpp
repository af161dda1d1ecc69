#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "oracles.hpp"
#include "tahdg/data_io.hpp"

using namespace tahdg;
namespace fs = std::filesystem;

namespace {

Ontology tiny_ontology(int n_obj = 3, int n_rel = 4) {
  return make_synthetic_ontology(n_obj, n_rel, 1.0);
}

Scene one_triplet_scene(int s_label, int rel, int o_label) {
  Scene s;
  s.scene_id = "s0";
  s.width = 640;
  s.height = 480;
  const auto add = [&](int label, double x) {
    DetectedObject o;
    o.box = {x, 100, x + 50, 150};
    o.label = label;
    o.visual_feature.assign(4, 0.0);
    o.distribution.assign(3, 0.0);
    o.distribution[label] = 1.0;
    s.objects.push_back(o);
  };
  add(s_label, 100);
  add(o_label, 200);
  GtTriplet t;
  t.s_box = s.objects[0].box;
  t.s_label = s_label;
  t.relation = rel;
  t.o_box = s.objects[1].box;
  t.o_label = o_label;
  s.gt_triplets.push_back(t);
  return s;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("single-triplet corpus gives the hand-evaluated smoothed probability") {
  // counts[man][horse] = 1 with |C| = 3: (1+1)/(1+3) = 0.5
  const Ontology onto = tiny_ontology(3, 4);
  const auto stats = build_cooccurrence_stats({one_triplet_scene(0, 1, 2)}, onto);
  CHECK(stats.counts(0, 2) == 1.0);
  CHECK(stats.pair_prob(0, 2) == doctest::Approx(0.5).epsilon(1e-12));
  // unseen pair in the same row: (0+1)/(1+3)
  CHECK(stats.pair_prob(0, 1) == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("empty corpus smooths to uniform and stays strictly positive") {
  const Ontology onto = tiny_ontology(2, 2);
  const auto stats = build_cooccurrence_stats({}, onto);
  for (int a = 0; a < 2; ++a) {
    for (int b = 0; b < 2; ++b) {
      CHECK(stats.pair_prob(a, b) == doctest::Approx(0.5).epsilon(1e-12));
    }
  }
}

TEST_CASE("repeated triplets count multiplicatively") {
  const Ontology onto = tiny_ontology(3, 4);
  Scene s = one_triplet_scene(1, 2, 0);
  s.gt_triplets.push_back(s.gt_triplets[0]);
  s.gt_triplets.push_back(s.gt_triplets[0]);
  const auto stats = build_cooccurrence_stats({s}, onto);
  CHECK(stats.counts(1, 0) == 3.0);
}

TEST_CASE("pair_prob is strictly positive for any corpus") {
  std::mt19937_64 rng(11);
  const Ontology onto = tiny_ontology(4, 6);
  std::vector<Scene> corpus;
  std::uniform_int_distribution<int> cls(0, 3), rel(1, 6);
  for (int i = 0; i < 20; ++i) corpus.push_back(one_triplet_scene(cls(rng) % 3, 1, cls(rng) % 3));
  const Ontology onto3 = tiny_ontology(3, 4);
  const auto stats = build_cooccurrence_stats(corpus, onto3);
  CHECK((stats.pair_prob.array() > 0.0).all());
  CHECK((stats.pair_prob.array() <= 1.0).all());
}

TEST_CASE("scene JSONL round-trip preserves content and validates") {
  const Ontology onto = tiny_ontology(3, 4);
  const auto path = (fs::temp_directory_path() / "scenes_rt.jsonl").string();
  const std::vector<Scene> scenes{one_triplet_scene(0, 1, 2), one_triplet_scene(2, 3, 1)};
  save_scenes(scenes, path);
  const auto back = load_scenes(path, onto);
  REQUIRE(back.size() == 2);
  CHECK(back[0].objects.size() == 2);
  CHECK(back[0].gt_triplets.size() == 1);
  CHECK(back[1].gt_triplets[0].relation == 3);
  CHECK(back[0].objects[0].box == scenes[0].objects[0].box);
  fs::remove(path);
}

TEST_CASE("scene with bad distribution or class index is rejected at load") {
  const Ontology onto = tiny_ontology(3, 4);
  const auto path = (fs::temp_directory_path() / "scenes_bad.jsonl").string();
  {
    std::ofstream out(path);
    out << R"({"scene_id":"x","width":100,"height":100,"objects":[{"box":[0,0,10,10],)"
        << R"("feature":[0],"label":0,"distribution":[0.5,0.3,0.0]}]})" << "\n";
  }
  CHECK_THROWS_AS(load_scenes(path, onto), SchemaError);
  {
    std::ofstream out(path);
    out << R"({"scene_id":"x","width":100,"height":100,"objects":[{"box":[0,0,10,10],)"
        << R"("feature":[0],"label":3,"distribution":[1.0,0.0,0.0]}]})" << "\n";
  }
  CHECK_THROWS_WITH_AS(load_scenes(path, onto), "scene x object 0: class index out of range",
                       SchemaError);
  fs::remove(path);
}

TEST_CASE("synthetic generation is a pure function of config and ontology") {
  const Ontology onto = make_synthetic_ontology(8, 14, 2.0);
  SyntheticConfig cfg;
  cfg.n_scenes = 25;
  cfg.seed = 42;
  const auto a = generate_synthetic_dataset(cfg, onto);
  const auto b = generate_synthetic_dataset(cfg, onto);
  const auto pa = (fs::temp_directory_path() / "synth_a.jsonl").string();
  const auto pb = (fs::temp_directory_path() / "synth_b.jsonl").string();
  save_scenes(a, pa);
  save_scenes(b, pb);
  CHECK(read_file(pa) == read_file(pb));
  CHECK(!read_file(pa).empty());
  fs::remove(pa);
  fs::remove(pb);
}

TEST_CASE("generated scenes validate against their ontology") {
  const Ontology onto = make_synthetic_ontology(8, 14, 2.0);
  SyntheticConfig cfg;
  cfg.n_scenes = 40;
  cfg.seed = 3;
  for (const auto& s : generate_synthetic_dataset(cfg, onto)) {
    CHECK_NOTHROW(validate_scene(s, onto.num_object_classes(), onto.num_relation_classes()));
  }
}

TEST_CASE("exponent 0 yields near-uniform relation frequencies") {
  const Ontology onto = make_synthetic_ontology(10, 12, 0.0);
  SyntheticConfig cfg;
  cfg.n_scenes = 2500;  // ~10k triplets
  cfg.objects_min = 6;
  cfg.objects_max = 9;
  cfg.longtail_exponent = 0.0;
  cfg.seed = 5;
  std::vector<long> counts(onto.num_relation_classes(), 0);
  long total = 0;
  for (const auto& s : generate_synthetic_dataset(cfg, onto)) {
    for (const auto& t : s.gt_triplets) {
      ++counts[t.relation];
      ++total;
    }
  }
  CHECK(total > 5000);
  long lo = total, hi = 0;
  for (int r = 1; r < onto.num_relation_classes(); ++r) {
    lo = std::min(lo, counts[r]);
    hi = std::max(hi, counts[r]);
  }
  CHECK(lo > 0);
  CHECK(static_cast<double>(hi) / lo < 2.0);
}

TEST_CASE("exponent 2 yields a log-log rank-frequency slope near -2") {
  const Ontology onto = make_synthetic_ontology(30, 50, 2.0);
  SyntheticConfig cfg;
  cfg.n_scenes = 2600;  // ~10k triplets
  cfg.objects_min = 6;
  cfg.objects_max = 9;
  cfg.longtail_exponent = 2.0;
  cfg.seed = 7;
  std::vector<long> counts(onto.num_relation_classes(), 0);
  long total = 0;
  for (const auto& s : generate_synthetic_dataset(cfg, onto)) {
    for (const auto& t : s.gt_triplets) {
      ++counts[t.relation];
      ++total;
    }
  }
  CHECK(total > 8000);
  std::vector<long> sorted(counts.begin() + 1, counts.end());
  std::sort(sorted.rbegin(), sorted.rend());
  // Least-squares fit of ln(count) vs ln(rank) over ranks with >= 5 samples.
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int n = 0;
  for (size_t k = 0; k < sorted.size(); ++k) {
    if (sorted[k] < 5) break;
    const double x = std::log(static_cast<double>(k + 1));
    const double y = std::log(static_cast<double>(sorted[k]));
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++n;
  }
  REQUIRE(n >= 8);
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  CHECK(slope == doctest::Approx(-2.0).epsilon(0.15));  // +-0.3 band
}

TEST_CASE("rule table is deterministic and consistent with generated GT") {
  const Ontology onto = make_synthetic_ontology(8, 14, 2.0);
  SyntheticConfig cfg;
  cfg.n_scenes = 60;
  cfg.seed = 9;
  const SyntheticRules rules = derive_rules(cfg, onto);
  CHECK(rules.achievable_ceiling() == doctest::Approx(1.0));
  for (const auto& s : generate_synthetic_dataset(cfg, onto)) {
    for (const auto& t : s.gt_triplets) {
      // Every GT triplet must be derivable from its rule row.
      const auto row = rules.rule_row(t.s_label, t.o_label);
      bool found = false;
      for (const auto& [rel, prob] : row) {
        if (rel == t.relation) {
          CHECK(prob > 0.0);
          found = true;
        }
      }
      CHECK(found);
      // And the geometry side must agree with the hosted relation.
      const int side = t.o_box.cx() >= t.s_box.cx() ? 0 : 1;
      CHECK(rules.relation_for(t.s_label, t.o_label, side) == t.relation);
    }
  }
}

TEST_CASE("unsatisfiable rule table is a config error") {
  const Ontology onto = make_synthetic_ontology(2, 14, 2.0);
  SyntheticConfig cfg;
  CHECK_THROWS_AS(derive_rules(cfg, onto), ConfigError);
}

TEST_CASE("checkpoint round-trip is bit exact") {
  std::mt19937_64 rng(21);
  Checkpoint ckpt;
  ckpt.ontology_hash = 0xdeadbeefcafe1234ull;
  ckpt.config_json = R"({"d_h":16})";
  ckpt.epochs_completed = 7;
  ckpt.tensors.push_back({"a", oracle::random_matrix(rng, 5, 7)});
  ckpt.tensors.push_back({"b.c", oracle::random_matrix(rng, 3, 1)});
  const auto path = (fs::temp_directory_path() / "ckpt_rt.bin").string();
  save_checkpoint(ckpt, path);
  const Checkpoint back = load_checkpoint(path, ckpt.ontology_hash);
  REQUIRE(back.tensors.size() == 2);
  CHECK(back.epochs_completed == 7);
  CHECK(back.config_json == ckpt.config_json);
  CHECK((back.tensors[0].value - ckpt.tensors[0].value).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.tensors[1].value - ckpt.tensors[1].value).cwiseAbs().maxCoeff() == 0.0);
  fs::remove(path);
}

TEST_CASE("checkpoint refuses a mismatched ontology hash") {
  Checkpoint ckpt;
  ckpt.ontology_hash = 1;
  const auto path = (fs::temp_directory_path() / "ckpt_hash.bin").string();
  save_checkpoint(ckpt, path);
  CHECK_THROWS_AS(load_checkpoint(path, 2), SchemaError);
  CHECK_NOTHROW(load_checkpoint(path, 1));
  fs::remove(path);
}

TEST_CASE("truncated checkpoint is rejected without partial state") {
  std::mt19937_64 rng(22);
  Checkpoint ckpt;
  ckpt.ontology_hash = 5;
  ckpt.tensors.push_back({"w", oracle::random_matrix(rng, 8, 8)});
  const auto path = (fs::temp_directory_path() / "ckpt_trunc.bin").string();
  save_checkpoint(ckpt, path);
  const std::string full = read_file(path);
  {
    std::ofstream out(path, std::ios::binary);
    out.write(full.data(), static_cast<std::streamsize>(full.size() / 2));
  }
  CHECK_THROWS_AS(load_checkpoint(path, 5), SchemaError);
  fs::remove(path);
}

TEST_CASE("prediction file round-trip") {
  ScenePredictions sp;
  sp.scene_id = "p0";
  Triplet t;
  t.subject_idx = 0;
  t.object_idx = 1;
  t.relation = 2;
  t.score = 0.75;
  t.s_box = {1, 2, 3, 4};
  t.o_box = {5, 6, 7, 8};
  t.s_label = 1;
  t.o_label = 2;
  sp.triplets.push_back(t);
  const auto path = (fs::temp_directory_path() / "preds_rt.jsonl").string();
  save_predictions({sp}, path);
  const auto back = load_predictions(path);
  REQUIRE(back.size() == 1);
  REQUIRE(back[0].triplets.size() == 1);
  CHECK(back[0].triplets[0].relation == 2);
  CHECK(back[0].triplets[0].score == 0.75);
  CHECK(back[0].triplets[0].o_box == Box{5, 6, 7, 8});
  fs::remove(path);
}

TEST_CASE("load_scenes can cap objects per scene by detector confidence") {
  const Ontology onto = make_synthetic_ontology(8, 14, 2.0);
  SyntheticConfig cfg;
  cfg.n_scenes = 5;
  cfg.objects_min = 6;
  cfg.objects_max = 8;
  cfg.seed = 13;
  const auto path = (fs::temp_directory_path() / "scenes_cap.jsonl").string();
  save_scenes(generate_synthetic_dataset(cfg, onto), path);
  for (const auto& s : load_scenes(path, onto, 4)) {
    CHECK(s.objects.size() <= 4);
  }
  fs::remove(path);
}
