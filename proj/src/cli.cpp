#include "tahdg/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "tahdg/data_io.hpp"
#include "tahdg/evaluation.hpp"
#include "tahdg/training.hpp"

namespace tahdg::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CommonOpts {
  std::string ontology, scenes, val_scenes, stats, checkpoint, out, predictions;
  std::string mode = "predcls";
  std::string strategy = "full";
  std::string loss_mode = "bce_on_softmax";
  double s_b = 600.0;
  double s_l = 1e-5;
  int top_k = 4096;
  double lr = 0.008;
  int batch = 5;
  double wd = 1e-5;
  int epochs = 30;
  int layers_intra = 2;
  int layers_inter = 2;
  uint64_t seed = 1;
  bool force = false;
  bool emit_csv = false;
  int max_objects = 0;
  // model dims
  int d_v = 128, d_v_proj = 128, d_b = 32, d_c = 64, d_h = 256;
  // synthetic generation
  int n_scenes = 100;
  int objects_min = 4, objects_max = 7;
  double exponent = 2.0;
  double noise = 0.25;
  int num_object_classes = 8;
  int num_relations = 14;
  std::string ontology_out;
  // ablation toggles
  bool no_pair_selection = false;
  bool untyped = false;
  bool no_intra = false;
};

ModelConfig model_config_from(const CommonOpts& o) {
  ModelConfig cfg;
  cfg.dims = ModelDims{o.d_v, o.d_v_proj, o.d_b, o.d_c, o.d_h};
  cfg.layers_intra = o.layers_intra;
  cfg.layers_inter = o.layers_inter;
  cfg.s_b = o.s_b;
  cfg.s_l = o.s_l;
  cfg.top_k = o.top_k;
  cfg.use_pair_selection = !o.no_pair_selection;
  cfg.typed_message_passing = !o.untyped;
  cfg.use_intra_stage = !o.no_intra;
  return cfg;
}

TrainConfig train_config_from(const CommonOpts& o) {
  TrainConfig cfg;
  cfg.learning_rate = o.lr;
  cfg.batch_size = o.batch;
  cfg.weight_decay = o.wd;
  cfg.epochs = o.epochs;
  cfg.seed = o.seed;
  cfg.loss_mode = parse_loss_mode(o.loss_mode);
  cfg.mode = parse_eval_mode(o.mode);
  return cfg;
}

json train_config_json(const TrainConfig& cfg) {
  json j;
  j["learning_rate"] = cfg.learning_rate;
  j["batch_size"] = cfg.batch_size;
  j["weight_decay"] = cfg.weight_decay;
  j["epochs"] = cfg.epochs;
  j["seed"] = cfg.seed;
  j["loss_mode"] = to_string(cfg.loss_mode);
  j["mode"] = to_string(cfg.mode);
  return j;
}

void require_exists(const std::string& path, const char* what) {
  if (path.empty()) throw UsageError(std::string("missing required path: ") + what);
  if (!fs::exists(path)) {
    throw UsageError(std::string(what) + " not found: " + path);
  }
}

void refuse_overwrite(const std::string& path, bool force) {
  if (!force && fs::exists(path)) {
    throw UsageError("output exists, pass --force to overwrite: " + path);
  }
}

/// Snapshot of the run parameters next to the primary output. Output paths
/// are excluded so repeated runs into different directories stay
/// byte-identical.
void write_snapshot(const std::string& primary_output, const json& snapshot) {
  std::ofstream out(primary_output + ".config.json");
  out << snapshot.dump(2) << "\n";
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write file: " + path);
  out << text;
}

int cmd_gen(const CommonOpts& o) {
  refuse_overwrite(o.out, o.force);
  const Ontology ontology = make_synthetic_ontology(o.num_object_classes, o.num_relations,
                                                    o.exponent);
  SyntheticConfig cfg;
  cfg.n_scenes = o.n_scenes;
  cfg.objects_min = o.objects_min;
  cfg.objects_max = o.objects_max;
  cfg.longtail_exponent = o.exponent;
  cfg.noise = o.noise;
  cfg.seed = o.seed;
  const auto scenes = generate_synthetic_dataset(cfg, ontology);
  save_scenes(scenes, o.out);
  if (!o.ontology_out.empty()) save_ontology(ontology, o.ontology_out);
  json snap;
  snap["command"] = "gen";
  snap["n_scenes"] = o.n_scenes;
  snap["objects_min"] = o.objects_min;
  snap["objects_max"] = o.objects_max;
  snap["exponent"] = o.exponent;
  snap["noise"] = o.noise;
  snap["seed"] = o.seed;
  snap["num_object_classes"] = o.num_object_classes;
  snap["num_relations"] = o.num_relations;
  write_snapshot(o.out, snap);
  std::cout << "wrote " << scenes.size() << " scenes to " << o.out << "\n";
  return 0;
}

int cmd_prepare_stats(const CommonOpts& o) {
  require_exists(o.ontology, "--ontology");
  require_exists(o.scenes, "--scenes");
  refuse_overwrite(o.out, o.force);
  const Ontology ontology = load_ontology(o.ontology);
  const auto scenes = load_scenes(o.scenes, ontology, o.max_objects);
  const CooccurrenceStats stats = build_cooccurrence_stats(scenes, ontology);
  save_stats(stats, o.out);
  for (int a = 0; a < stats.num_classes(); ++a) {
    std::cout << "class " << ontology.object_name(a) << ": " << stats.counts.row(a).sum()
              << " subject occurrences\n";
  }
  json snap;
  snap["command"] = "prepare-stats";
  snap["ontology"] = o.ontology;
  snap["scenes"] = o.scenes;
  write_snapshot(o.out, snap);
  return 0;
}

int cmd_train(const CommonOpts& o) {
  require_exists(o.ontology, "--ontology");
  require_exists(o.scenes, "--scenes");
  require_exists(o.stats, "--stats");
  const Ontology ontology = load_ontology(o.ontology);
  const auto train_scenes = load_scenes(o.scenes, ontology, o.max_objects);
  std::vector<Scene> val_scenes;
  if (!o.val_scenes.empty()) {
    require_exists(o.val_scenes, "--val-scenes");
    val_scenes = load_scenes(o.val_scenes, ontology, o.max_objects);
  }
  const CooccurrenceStats stats = load_stats(o.stats);
  const ModelConfig model_cfg = model_config_from(o);
  const TrainConfig train_cfg = train_config_from(o);

  fs::create_directories(o.out);
  TrainResult result = train(train_scenes, val_scenes, ontology, stats, model_cfg, train_cfg);

  json combined;
  combined["model"] = json::parse(model_cfg.to_json());
  combined["train"] = train_config_json(train_cfg);
  result.checkpoint.config_json = combined.dump();
  const std::string ckpt_path = (fs::path(o.out) / "checkpoint.bin").string();
  save_checkpoint(result.checkpoint, ckpt_path);

  std::ostringstream log;
  for (const auto& e : result.log) {
    json j;
    j["epoch"] = e.epoch;
    j["train_loss"] = e.train_loss;
    j["val_loss"] = e.val_loss;
    j["r50"] = e.r50;
    j["r100"] = e.r100;
    j["mr50"] = e.mr50;
    j["mr100"] = e.mr100;
    log << j.dump() << "\n";
  }
  write_text((fs::path(o.out) / "metrics.jsonl").string(), log.str());

  json snap;
  snap["command"] = "train";
  snap["ontology"] = o.ontology;
  snap["scenes"] = o.scenes;
  snap["val_scenes"] = o.val_scenes;
  snap["stats"] = o.stats;
  snap["model"] = json::parse(model_cfg.to_json());
  snap["train"] = train_config_json(train_cfg);
  write_snapshot(ckpt_path, snap);

  if (!result.log.empty()) {
    const auto& last = result.log.back();
    std::cout << "epoch " << last.epoch << ": train_loss=" << last.train_loss
              << " val_loss=" << last.val_loss << " r50=" << last.r50 << " mr50=" << last.mr50
              << "\n";
  }
  return result.diverged ? 1 : 0;
}

int cmd_infer(const CommonOpts& o) {
  require_exists(o.ontology, "--ontology");
  require_exists(o.scenes, "--scenes");
  require_exists(o.stats, "--stats");
  require_exists(o.checkpoint, "--checkpoint");
  const Ontology ontology = load_ontology(o.ontology);
  const auto scenes = load_scenes(o.scenes, ontology, o.max_objects);
  const CooccurrenceStats stats = load_stats(o.stats);
  Model model = Model::from_checkpoint(load_checkpoint(o.checkpoint, ontology.hash()), ontology);
  const EvalMode mode = parse_eval_mode(o.mode);

  const auto preds = infer_corpus(scenes, model, ontology, stats, mode);
  save_predictions(preds, o.out);
  json snap;
  snap["command"] = "infer";
  snap["ontology"] = o.ontology;
  snap["scenes"] = o.scenes;
  snap["stats"] = o.stats;
  snap["checkpoint"] = o.checkpoint;
  snap["mode"] = o.mode;
  write_snapshot(o.out, snap);
  return 0;
}

int cmd_eval(const CommonOpts& o) {
  require_exists(o.ontology, "--ontology");
  require_exists(o.scenes, "--scenes");
  require_exists(o.predictions, "--predictions");
  const Ontology ontology = load_ontology(o.ontology);
  const auto scenes = load_scenes(o.scenes, ontology, o.max_objects);
  const auto preds = load_predictions(o.predictions);
  MatchCriterion criterion;
  criterion.mode = parse_eval_mode(o.mode);
  const MetricReport report = evaluate(preds, scenes, ontology, criterion);
  write_text(o.out, report.to_json() + "\n");
  if (o.emit_csv) write_text(o.out + ".csv", report.to_csv());
  json snap;
  snap["command"] = "eval";
  snap["ontology"] = o.ontology;
  snap["scenes"] = o.scenes;
  snap["predictions"] = o.predictions;
  snap["mode"] = o.mode;
  write_snapshot(o.out, snap);
  std::cout << "r50=" << (report.r_at.count(50) ? report.r_at.at(50) : 0.0)
            << " mr50=" << (report.mr_at.count(50) ? report.mr_at.at(50) : 0.0) << "\n";
  return 0;
}

int cmd_ablate(const CommonOpts& o) {
  require_exists(o.ontology, "--ontology");
  require_exists(o.scenes, "--scenes");
  require_exists(o.stats, "--stats");
  const Ontology ontology = load_ontology(o.ontology);
  const auto train_scenes = load_scenes(o.scenes, ontology, o.max_objects);
  std::vector<Scene> val_scenes;
  if (!o.val_scenes.empty()) val_scenes = load_scenes(o.val_scenes, ontology, o.max_objects);
  const auto& eval_scenes = val_scenes.empty() ? train_scenes : val_scenes;
  const CooccurrenceStats stats = load_stats(o.stats);
  const TrainConfig train_cfg = train_config_from(o);

  fs::create_directories(o.out);
  std::ostringstream csv, txt;
  csv << "# A: pair selection with distance+existence+confidence (off = confidence top-K "
         "only)\n"
      << "# B: heterogeneous graph and typed inter-type message passing (off = single "
         "shared weight set, one type)\n"
      << "# C: dual graph and intra-type message passing (off = intra stage skipped)\n"
      << "no,A,B,C,r50,r100,mr50,mr100\n";
  txt << std::left << std::setw(4) << "no" << std::setw(3) << "A" << std::setw(3) << "B"
      << std::setw(3) << "C" << std::right << std::setw(8) << "r50" << std::setw(8) << "r100"
      << std::setw(8) << "mr50" << std::setw(8) << "mr100" << "\n";

  const bool combos[8][3] = {{false, false, false}, {false, false, true},
                             {false, true, false},  {false, true, true},
                             {true, false, false},  {true, false, true},
                             {true, true, false},   {true, true, true}};
  for (int row = 0; row < 8; ++row) {
    ModelConfig cfg = model_config_from(o);
    cfg.use_pair_selection = combos[row][0];
    cfg.typed_message_passing = combos[row][1];
    cfg.use_intra_stage = combos[row][2];
    TrainResult result = train(train_scenes, val_scenes, ontology, stats, cfg, train_cfg);
    Model model = Model::from_checkpoint(result.checkpoint, ontology);
    const auto preds = infer_corpus(eval_scenes, model, ontology, stats, train_cfg.mode);
    MatchCriterion criterion;
    criterion.mode = train_cfg.mode;
    const MetricReport rep = evaluate(preds, eval_scenes, ontology, criterion);
    char line[128];
    std::snprintf(line, sizeof(line), "%d,%d,%d,%d,%.2f,%.2f,%.2f,%.2f", row + 1,
                  combos[row][0] ? 1 : 0, combos[row][1] ? 1 : 0, combos[row][2] ? 1 : 0,
                  rep.r_at.at(50), rep.r_at.at(100), rep.mr_at.at(50), rep.mr_at.at(100));
    csv << line << "\n";
    std::snprintf(line, sizeof(line), "%-4d%-3s%-3s%-3s%8.2f%8.2f%8.2f%8.2f", row + 1,
                  combos[row][0] ? "x" : "-", combos[row][1] ? "x" : "-",
                  combos[row][2] ? "x" : "-", rep.r_at.at(50), rep.r_at.at(100),
                  rep.mr_at.at(50), rep.mr_at.at(100));
    txt << line << "\n";
    std::cout << "ablation row " << row + 1 << " done\n";
  }
  const std::string csv_path = (fs::path(o.out) / "ablation.csv").string();
  write_text(csv_path, csv.str());
  write_text((fs::path(o.out) / "ablation.txt").string(), txt.str());
  json snap;
  snap["command"] = "ablate";
  snap["ontology"] = o.ontology;
  snap["scenes"] = o.scenes;
  snap["val_scenes"] = o.val_scenes;
  snap["stats"] = o.stats;
  snap["train"] = train_config_json(train_cfg);
  write_snapshot(csv_path, snap);
  return 0;
}

int cmd_pairsel_bench(const CommonOpts& o) {
  require_exists(o.ontology, "--ontology");
  require_exists(o.scenes, "--scenes");
  require_exists(o.stats, "--stats");
  const Ontology ontology = load_ontology(o.ontology);
  const auto scenes = load_scenes(o.scenes, ontology, o.max_objects);
  const CooccurrenceStats stats = load_stats(o.stats);

  // The sim strategy scores label pairs with a seeded stand-in embedding when
  // no trained checkpoint is supplied.
  Eigen::MatrixXd embedding(ontology.num_object_classes(), o.d_c);
  {
    std::mt19937_64 rng(o.seed);
    std::normal_distribution<double> d(0.0, 1.0);
    for (Eigen::Index i = 0; i < embedding.rows(); ++i) {
      for (Eigen::Index j = 0; j < embedding.cols(); ++j) embedding(i, j) = d(rng);
    }
  }
  if (!o.checkpoint.empty()) {
    Model model =
        Model::from_checkpoint(load_checkpoint(o.checkpoint, ontology.hash()), ontology);
    embedding = model.enc.embedding.value;
  }

  PairSelectParams params;
  params.s_b = o.s_b;
  params.s_l = o.s_l;
  params.top_k = o.top_k;

  std::ostringstream csv;
  csv << "strategy,pr50,pr100,mean_edges\n";
  for (PairStrategy strategy : all_pair_strategies()) {
    double pr50_sum = 0, pr100_sum = 0;
    long edge_total = 0;
    int scored = 0;
    for (const auto& scene : scenes) {
      if (scene.objects.size() < 2) continue;
      const auto edges = select_pairs_variant(strategy, scene, stats, params, &embedding);
      edge_total += static_cast<long>(edges.size());
      if (!scene.has_gt()) continue;
      const PairScores scores = compute_pair_matrices(scene, stats);
      std::vector<Triplet> proposals;
      for (const auto& [i, j] : edges) {
        Triplet t;
        t.subject_idx = i;
        t.object_idx = j;
        t.relation = 1;  // ignored by pair matching
        t.score = strategy_rank_score(strategy, scores, &embedding, scene, i, j);
        t.s_box = scene.objects[i].box;
        t.o_box = scene.objects[j].box;
        t.s_label = scene.objects[i].label;
        t.o_label = scene.objects[j].label;
        proposals.push_back(t);
      }
      std::stable_sort(proposals.begin(), proposals.end(),
                       [](const Triplet& a, const Triplet& b) { return a.score > b.score; });
      MatchCriterion criterion;
      const auto ranks = match_pairs(proposals, scene.gt_triplets, criterion);
      pr50_sum += recall_at_k(ranks, 50);
      pr100_sum += recall_at_k(ranks, 100);
      ++scored;
    }
    char line[128];
    std::snprintf(line, sizeof(line), "%s,%.2f,%.2f,%.2f", to_string(strategy),
                  scored ? 100.0 * pr50_sum / scored : 0.0,
                  scored ? 100.0 * pr100_sum / scored : 0.0,
                  scenes.empty() ? 0.0 : static_cast<double>(edge_total) / scenes.size());
    csv << line << "\n";
  }
  write_text(o.out, csv.str());
  json snap;
  snap["command"] = "pairsel-bench";
  snap["ontology"] = o.ontology;
  snap["scenes"] = o.scenes;
  snap["stats"] = o.stats;
  snap["seed"] = o.seed;
  write_snapshot(o.out, snap);
  return 0;
}

int cmd_distrib_report(const CommonOpts& o) {
  require_exists(o.ontology, "--ontology");
  require_exists(o.scenes, "--scenes");
  const Ontology ontology = load_ontology(o.ontology);
  const auto scenes = load_scenes(o.scenes, ontology, o.max_objects);
  const auto rows = distribution_ratio_report(scenes, ontology);
  std::ostringstream csv;
  csv << "relation,type,global_ratio,within_type_ratio\n";
  for (const auto& row : rows) {
    char line[160];
    std::snprintf(line, sizeof(line), "%s,%s,%.4f,%.4f", row.relation.c_str(),
                  to_string(row.type), row.global_ratio, row.within_type_ratio);
    csv << line << "\n";
  }
  write_text(o.out, csv.str());
  json snap;
  snap["command"] = "distrib-report";
  snap["ontology"] = o.ontology;
  snap["scenes"] = o.scenes;
  write_snapshot(o.out, snap);
  return 0;
}

void add_common_flags(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--ontology", o.ontology, "ontology JSON file");
  cmd->add_option("--scenes", o.scenes, "scene JSONL file");
  cmd->add_option("--val-scenes", o.val_scenes, "validation scene JSONL file");
  cmd->add_option("--stats", o.stats, "co-occurrence stats file");
  cmd->add_option("--checkpoint", o.checkpoint, "checkpoint file");
  cmd->add_option("--predictions", o.predictions, "prediction JSONL file");
  cmd->add_option("--out", o.out, "output path");
  cmd->add_option("--mode", o.mode, "predcls|sgcls|sgdet");
  cmd->add_option("--sb", o.s_b, "pair filter distance threshold");
  cmd->add_option("--sl", o.s_l, "pair filter existence threshold");
  cmd->add_option("--topk", o.top_k, "pair filter confidence top-K");
  cmd->add_option("--lr", o.lr, "learning rate");
  cmd->add_option("--batch", o.batch, "batch size in scenes");
  cmd->add_option("--wd", o.wd, "weight decay");
  cmd->add_option("--epochs", o.epochs, "training epochs");
  cmd->add_option("--layers-intra", o.layers_intra, "intra-type stage depth");
  cmd->add_option("--layers-inter", o.layers_inter, "inter-type stage depth");
  cmd->add_option("--seed", o.seed, "random seed");
  cmd->add_option("--strategy", o.strategy, "pair selection strategy");
  cmd->add_option("--loss-mode", o.loss_mode, "bce_on_softmax|cross_entropy");
  cmd->add_option("--max-objects", o.max_objects, "cap objects per scene at load (0 = off)");
  cmd->add_option("--dv", o.d_v, "visual feature dimension");
  cmd->add_option("--dv-proj", o.d_v_proj, "projected visual dimension");
  cmd->add_option("--db", o.d_b, "box projection dimension");
  cmd->add_option("--dc", o.d_c, "class embedding dimension");
  cmd->add_option("--dh", o.d_h, "hidden dimension");
  cmd->add_flag("--force", o.force, "overwrite existing outputs");
  cmd->add_flag("--csv", o.emit_csv, "also emit CSV mirror");
  cmd->add_flag("--no-pair-selection", o.no_pair_selection, "ablation: toggle A off");
  cmd->add_flag("--untyped", o.untyped, "ablation: toggle B off");
  cmd->add_flag("--no-intra", o.no_intra, "ablation: toggle C off");
}

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{"TA-HDG scene graph generation pipeline"};
  app.require_subcommand(1);
  CommonOpts o;

  auto* gen = app.add_subcommand("gen", "generate a synthetic long-tail dataset");
  gen->add_option("--n-scenes", o.n_scenes, "number of scenes");
  gen->add_option("--objects-min", o.objects_min, "min objects per scene");
  gen->add_option("--objects-max", o.objects_max, "max objects per scene");
  gen->add_option("--exponent", o.exponent, "long-tail exponent");
  gen->add_option("--noise", o.noise, "feature noise level");
  gen->add_option("--num-object-classes", o.num_object_classes, "object classes");
  gen->add_option("--num-relations", o.num_relations, "non-background relation classes");
  gen->add_option("--ontology-out", o.ontology_out, "also write the synthetic ontology");
  add_common_flags(gen, o);

  auto* prep = app.add_subcommand("prepare-stats", "build the co-occurrence statistics");
  add_common_flags(prep, o);
  auto* tr = app.add_subcommand("train", "train a model");
  add_common_flags(tr, o);
  auto* inf = app.add_subcommand("infer", "run inference and write predictions");
  add_common_flags(inf, o);
  auto* ev = app.add_subcommand("eval", "evaluate predictions against GT");
  add_common_flags(ev, o);
  auto* ab = app.add_subcommand("ablate", "module ablation table (8 rows)");
  add_common_flags(ab, o);
  auto* pb = app.add_subcommand("pairsel-bench", "pair-selection strategy benchmark");
  add_common_flags(pb, o);
  auto* dr = app.add_subcommand("distrib-report", "relation categorization distribution table");
  add_common_flags(dr, o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) return cmd_gen(o);
    if (prep->parsed()) return cmd_prepare_stats(o);
    if (tr->parsed()) return cmd_train(o);
    if (inf->parsed()) return cmd_infer(o);
    if (ev->parsed()) return cmd_eval(o);
    if (ab->parsed()) return cmd_ablate(o);
    if (pb->parsed()) return cmd_pairsel_bench(o);
    if (dr->parsed()) return cmd_distrib_report(o);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

int run(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  argv.push_back("tahdg");
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data());
}

}  // namespace tahdg::cli
