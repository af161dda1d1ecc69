#include "tahdg/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>

namespace tahdg {

using nlohmann::json;

namespace {

bool boxes_match(const Triplet& p, const GtTriplet& g, const MatchCriterion& c) {
  if (c.phrase_mode) {
    return iou(union_box(p.s_box, p.o_box), union_box(g.s_box, g.o_box)) >= c.iou_threshold;
  }
  return iou(p.s_box, g.s_box) >= c.iou_threshold && iou(p.o_box, g.o_box) >= c.iou_threshold;
}

bool pair_compatible(const Triplet& p, const GtTriplet& g, const MatchCriterion& c) {
  return p.s_label == g.s_label && p.o_label == g.o_label && boxes_match(p, g, c);
}

bool triplet_compatible(const Triplet& p, const GtTriplet& g, const MatchCriterion& c) {
  return p.relation == g.relation && pair_compatible(p, g, c);
}

}  // namespace

std::vector<int> match_triplets(const std::vector<Triplet>& ranked,
                                const std::vector<GtTriplet>& gt, const MatchCriterion& c) {
  std::vector<int> hit_rank(gt.size(), 0);
  for (size_t r = 0; r < ranked.size(); ++r) {
    for (size_t g = 0; g < gt.size(); ++g) {
      if (hit_rank[g] == 0 && triplet_compatible(ranked[r], gt[g], c)) {
        hit_rank[g] = static_cast<int>(r) + 1;
        break;
      }
    }
  }
  return hit_rank;
}

std::vector<int> match_pairs(const std::vector<Triplet>& ranked,
                             const std::vector<GtTriplet>& gt, const MatchCriterion& c) {
  std::vector<int> hit_rank = match_triplets(ranked, gt, c);
  std::vector<bool> pred_used(ranked.size(), false);
  for (int r : hit_rank) {
    if (r > 0) pred_used[r - 1] = true;
  }
  for (size_t r = 0; r < ranked.size(); ++r) {
    if (pred_used[r]) continue;
    for (size_t g = 0; g < gt.size(); ++g) {
      if (hit_rank[g] == 0 && pair_compatible(ranked[r], gt[g], c)) {
        hit_rank[g] = static_cast<int>(r) + 1;
        pred_used[r] = true;
        break;
      }
    }
  }
  return hit_rank;
}

double recall_at_k(const std::vector<int>& hit_ranks, int k) {
  if (hit_ranks.empty()) return 0.0;
  int hits = 0;
  for (int r : hit_ranks) {
    if (r > 0 && r <= k) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(hit_ranks.size());
}

double score_wtd(double r50, double wmap_rel, double wmap_phr) {
  return 0.2 * r50 + 0.4 * wmap_rel + 0.4 * wmap_phr;
}

namespace {

double percent(double fraction) { return 100.0 * fraction; }

double round2(double x) { return std::round(x * 100.0) / 100.0; }

struct ApPrediction {
  double score;
  int scene_idx;
  int local_idx;
  const Triplet* triplet;
};

/// Exact area under the precision-recall step curve for one relation class.
double average_precision(std::vector<ApPrediction> preds,
                         const std::vector<std::vector<const GtTriplet*>>& gt_by_scene,
                         int total_gt, const MatchCriterion& c) {
  if (total_gt == 0) return 0.0;
  std::sort(preds.begin(), preds.end(), [](const ApPrediction& a, const ApPrediction& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.scene_idx != b.scene_idx) return a.scene_idx < b.scene_idx;
    return a.local_idx < b.local_idx;
  });
  std::vector<std::vector<bool>> used(gt_by_scene.size());
  for (size_t s = 0; s < gt_by_scene.size(); ++s) used[s].assign(gt_by_scene[s].size(), false);

  double ap = 0;
  int tp = 0;
  for (size_t k = 0; k < preds.size(); ++k) {
    const auto& p = preds[k];
    const auto& gts = gt_by_scene[p.scene_idx];
    int match = -1;
    for (size_t g = 0; g < gts.size(); ++g) {
      if (!used[p.scene_idx][g] && pair_compatible(*p.triplet, *gts[g], c)) {
        match = static_cast<int>(g);
        break;
      }
    }
    if (match >= 0) {
      used[p.scene_idx][match] = true;
      ++tp;
      ap += static_cast<double>(tp) / static_cast<double>(k + 1);
    }
  }
  return ap / total_gt;
}

double weighted_map(const std::vector<ScenePredictions>& preds_by_scene,
                    const std::vector<const Scene*>& scenes, int num_relation_classes,
                    const MatchCriterion& base, bool phrase_mode) {
  MatchCriterion c = base;
  c.phrase_mode = phrase_mode;

  std::vector<int> gt_count(num_relation_classes, 0);
  int total_gt = 0;
  for (const Scene* s : scenes) {
    for (const auto& g : s->gt_triplets) {
      ++gt_count[g.relation];
      ++total_gt;
    }
  }
  if (total_gt == 0) return 0.0;

  double wmap = 0;
  for (int cls = 1; cls < num_relation_classes; ++cls) {
    if (gt_count[cls] == 0) continue;  // zero-GT classes carry no weight
    std::vector<ApPrediction> cls_preds;
    std::vector<std::vector<const GtTriplet*>> gt_by_scene(scenes.size());
    for (size_t s = 0; s < scenes.size(); ++s) {
      for (const auto& g : scenes[s]->gt_triplets) {
        if (g.relation == cls) gt_by_scene[s].push_back(&g);
      }
      for (size_t t = 0; t < preds_by_scene[s].triplets.size(); ++t) {
        const Triplet& p = preds_by_scene[s].triplets[t];
        if (p.relation == cls) {
          cls_preds.push_back({p.score, static_cast<int>(s), static_cast<int>(t), &p});
        }
      }
    }
    const double ap = average_precision(std::move(cls_preds), gt_by_scene, gt_count[cls], c);
    wmap += ap * gt_count[cls] / total_gt;
  }
  return wmap;
}

}  // namespace

std::map<LongtailSplit, double> longtail_report(const std::map<int, double>& per_class_recall,
                                                const Ontology& ontology) {
  std::map<LongtailSplit, std::pair<double, int>> acc;
  for (const auto& [cls, recall] : per_class_recall) {
    const LongtailSplit split = ontology.longtail_split(cls);
    acc[split].first += recall;
    acc[split].second += 1;
  }
  std::map<LongtailSplit, double> out;
  for (const auto& [split, sr] : acc) out[split] = sr.first / sr.second;
  return out;
}

MetricReport evaluate(const std::vector<ScenePredictions>& predictions,
                      const std::vector<Scene>& scenes, const Ontology& ontology,
                      const MatchCriterion& criterion, const std::vector<int>& ks) {
  std::map<std::string, const ScenePredictions*> by_id;
  for (const auto& sp : predictions) by_id[sp.scene_id] = &sp;

  static const ScenePredictions kEmpty{};
  std::vector<const Scene*> scene_ptrs;
  std::vector<ScenePredictions> aligned;
  for (const auto& s : scenes) {
    scene_ptrs.push_back(&s);
    auto it = by_id.find(s.scene_id);
    aligned.push_back(it == by_id.end() ? kEmpty : *it->second);
  }

  MetricReport rep;
  const int n_rel = ontology.num_relation_classes();

  std::map<int, double> r_sum, pr_sum;
  int scenes_with_gt = 0;
  std::map<int, std::vector<int>> class_hits;  // K -> per-class hit count
  std::vector<int> class_gt(n_rel, 0);
  for (int k : ks) class_hits[k].assign(n_rel, 0);

  for (size_t s = 0; s < aligned.size(); ++s) {
    const auto& gt = scene_ptrs[s]->gt_triplets;
    if (gt.empty()) continue;  // zero-GT scenes are excluded from recall averages
    ++scenes_with_gt;
    const auto trip_ranks = match_triplets(aligned[s].triplets, gt, criterion);
    const auto pair_ranks = match_pairs(aligned[s].triplets, gt, criterion);
    for (int k : ks) {
      r_sum[k] += recall_at_k(trip_ranks, k);
      pr_sum[k] += recall_at_k(pair_ranks, k);
    }
    for (size_t g = 0; g < gt.size(); ++g) {
      ++class_gt[gt[g].relation];
      for (int k : ks) {
        if (trip_ranks[g] > 0 && trip_ranks[g] <= k) ++class_hits[k][gt[g].relation];
      }
    }
  }

  for (int k : ks) {
    rep.r_at[k] = scenes_with_gt == 0 ? 0.0 : percent(r_sum[k] / scenes_with_gt);
    rep.pr_at[k] = scenes_with_gt == 0 ? 0.0 : percent(pr_sum[k] / scenes_with_gt);

    std::map<int, double> per_class;  // fractions, by class index
    for (int cls = 1; cls < n_rel; ++cls) {
      if (class_gt[cls] == 0) continue;
      per_class[cls] = static_cast<double>(class_hits[k][cls]) / class_gt[cls];
    }
    double mr = 0;
    for (const auto& [cls, rec] : per_class) {
      mr += rec;
      rep.per_class_recall[k][ontology.relation_name(cls)] = percent(rec);
    }
    rep.mr_at[k] = per_class.empty() ? 0.0 : percent(mr / per_class.size());

    const auto splits = longtail_report(per_class, ontology);
    for (const auto& [split, value] : splits) {
      rep.longtail[k][to_string(split)] = percent(value);
    }
    for (LongtailSplit split :
         {LongtailSplit::head, LongtailSplit::body, LongtailSplit::tail}) {
      if (splits.find(split) == splits.end()) {
        rep.notes.push_back("longtail split '" + std::string(to_string(split)) +
                            "' has no scored classes at K=" + std::to_string(k));
      }
    }
  }

  rep.wmap_rel = percent(weighted_map(aligned, scene_ptrs, n_rel, criterion, false));
  rep.wmap_phr = percent(weighted_map(aligned, scene_ptrs, n_rel, criterion, true));
  const double r50 = rep.r_at.count(50) ? rep.r_at.at(50) : 0.0;
  rep.score_wtd = score_wtd(r50, rep.wmap_rel, rep.wmap_phr);
  return rep;
}

std::string MetricReport::to_json() const {
  json j;
  json r = json::object(), p = json::object(), m = json::object();
  for (const auto& [k, v] : r_at) r[std::to_string(k)] = round2(v);
  for (const auto& [k, v] : pr_at) p[std::to_string(k)] = round2(v);
  for (const auto& [k, v] : mr_at) {
    json entry;
    entry["mean"] = round2(v);
    json pc = json::object();
    if (per_class_recall.count(k)) {
      for (const auto& [name, rec] : per_class_recall.at(k)) pc[name] = round2(rec);
    }
    entry["per_class"] = std::move(pc);
    m[std::to_string(k)] = std::move(entry);
  }
  j["r_at"] = std::move(r);
  j["pr_at"] = std::move(p);
  j["mr_at"] = std::move(m);
  j["wmap_rel"] = round2(wmap_rel);
  j["wmap_phr"] = round2(wmap_phr);
  j["score_wtd"] = round2(score_wtd);
  json lt = json::object();
  for (const auto& [k, splits] : longtail) {
    json entry = json::object();
    for (const auto& [name, v] : splits) entry[name] = round2(v);
    lt[std::to_string(k)] = std::move(entry);
  }
  j["longtail"] = std::move(lt);
  j["notes"] = notes;
  return j.dump(2);
}

std::string MetricReport::to_csv() const {
  std::ostringstream out;
  out << "metric,k,split,value\n";
  char buf[64];
  const auto row = [&](const std::string& metric, const std::string& k,
                       const std::string& split, double v) {
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    out << metric << "," << k << "," << split << "," << buf << "\n";
  };
  for (const auto& [k, v] : r_at) row("r_at", std::to_string(k), "", v);
  for (const auto& [k, v] : pr_at) row("pr_at", std::to_string(k), "", v);
  for (const auto& [k, v] : mr_at) row("mr_at", std::to_string(k), "", v);
  for (const auto& [k, splits] : longtail) {
    for (const auto& [name, v] : splits) row("longtail_mr", std::to_string(k), name, v);
  }
  row("wmap_rel", "", "", wmap_rel);
  row("wmap_phr", "", "", wmap_phr);
  row("score_wtd", "", "", score_wtd);
  return out.str();
}

std::vector<DistributionRow> distribution_ratio_report(const std::vector<Scene>& corpus,
                                                       const Ontology& ontology) {
  const int n_rel = ontology.num_relation_classes();
  std::vector<long> count(n_rel, 0);
  long total = 0;
  for (const auto& s : corpus) {
    for (const auto& g : s.gt_triplets) {
      if (g.relation == kBackgroundRelation) continue;
      ++count[g.relation];
      ++total;
    }
  }
  if (total == 0) throw ConfigError("distribution_ratio_report: corpus has no GT triplets");

  long type_total[kNumRelationTypes] = {0, 0};
  for (int r = 1; r < n_rel; ++r) {
    type_total[static_cast<int>(ontology.relation_type(r))] += count[r];
  }
  std::vector<DistributionRow> rows;
  for (int r = 1; r < n_rel; ++r) {
    DistributionRow row;
    row.relation = ontology.relation_name(r);
    row.type = ontology.relation_type(r);
    row.count = count[r];
    row.global_ratio = static_cast<double>(count[r]) / total;
    const long tt = type_total[static_cast<int>(row.type)];
    row.within_type_ratio = tt == 0 ? 0.0 : static_cast<double>(count[r]) / tt;
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace tahdg
