#ifndef TAHDG_EVALUATION_HPP
#define TAHDG_EVALUATION_HPP

#include <map>
#include <string>
#include <vector>

#include "tahdg/data_io.hpp"
#include "tahdg/scene_model.hpp"

namespace tahdg {

struct MatchCriterion {
  double iou_threshold = 0.5;
  EvalMode mode = EvalMode::sgdet;
  bool phrase_mode = false;  // match on union boxes instead of both boxes
};

/// Greedy rank-first matching: predictions in rank order each claim the first
/// unmatched compatible GT (GT index order). Returns the 1-based rank of the
/// matching prediction per GT triplet, 0 if unmatched. Matching is online in
/// the ranking, so thresholding ranks at K equals matching a top-K prefix.
std::vector<int> match_triplets(const std::vector<Triplet>& ranked,
                                const std::vector<GtTriplet>& gt, const MatchCriterion& c);

/// Relation-agnostic hit ranks. Exact-relation matches are kept as-is and the
/// remaining predictions extend the matching pair-wise, so every pair hit rank
/// is at most the triplet hit rank and pR@K >= R@K holds at every K.
std::vector<int> match_pairs(const std::vector<Triplet>& ranked,
                             const std::vector<GtTriplet>& gt, const MatchCriterion& c);

double recall_at_k(const std::vector<int>& hit_ranks, int k);

double score_wtd(double r50, double wmap_rel, double wmap_phr);

struct MetricReport {
  std::map<int, double> r_at;   // percent, 2-decimal rounded on output
  std::map<int, double> pr_at;  // percent
  std::map<int, double> mr_at;  // percent
  std::map<int, std::map<std::string, double>> per_class_recall;  // percent
  double wmap_rel = 0;   // percent
  double wmap_phr = 0;   // percent
  double score_wtd = 0;  // percent scale
  std::map<int, std::map<std::string, double>> longtail;  // K -> split -> mR percent
  std::vector<std::string> notes;

  std::string to_json() const;
  std::string to_csv() const;
};

MetricReport evaluate(const std::vector<ScenePredictions>& predictions,
                      const std::vector<Scene>& scenes, const Ontology& ontology,
                      const MatchCriterion& criterion, const std::vector<int>& ks = {50, 100});

/// mR restricted to each longtail split, from per-class recall fractions
/// keyed by relation index. Splits with no scored classes are omitted.
std::map<LongtailSplit, double> longtail_report(const std::map<int, double>& per_class_recall,
                                                const Ontology& ontology);

struct DistributionRow {
  std::string relation;
  RelationType type;
  long count = 0;
  double global_ratio = 0;
  double within_type_ratio = 0;
};

/// Per-relation GT frequency before and after grouping by relation type.
std::vector<DistributionRow> distribution_ratio_report(const std::vector<Scene>& corpus,
                                                       const Ontology& ontology);

}  // namespace tahdg

#endif
