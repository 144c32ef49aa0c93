#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "teta/annot_model.hpp"
#include "teta/assignment.hpp"
#include "teta/ingest.hpp"
#include "teta/parallel.hpp"

namespace teta {

enum class AnnotationMode { incomplete, complete, single_category };

inline std::string to_string(AnnotationMode m) {
  switch (m) {
    case AnnotationMode::incomplete: return "incomplete";
    case AnnotationMode::complete: return "complete";
    case AnnotationMode::single_category: return "single_category";
  }
  return "?";
}

struct EvalConfig {
  double alpha = 0.5;     // IoU needed for a (gt, pred) match candidate
  double margin_r = 0.5;  // IoU needed to join a gt anchor's cluster
  AnnotationMode mode = AnnotationMode::incomplete;
  double cls_alpha_floor = 0.5;  // "well-matched" IoU for classification
  std::int64_t rare_max = 10;
  std::int64_t common_max = 100;
  std::optional<std::int64_t> top_k;

  void validate() const {
    if (!(alpha > 0.0 && alpha < 1.0)) throw Error("alpha must lie in (0, 1)");
    if (!(margin_r >= 0.0 && margin_r < 1.0)) throw Error("margin r must lie in [0, 1)");
    if (cls_alpha_floor != 0.5) throw Error("classification floor is fixed at 0.5");
    if (!(rare_max > 0 && rare_max < common_max)) throw Error("frequency thresholds need 0 < rare_max < common_max");
    if (top_k && *top_k <= 0) throw Error("top_k must be positive");
  }
};

/// Category used for every box in single-category mode.
inline constexpr std::int64_t kSingleCategoryId = 0;

/// For every prediction of a frame, the index of its anchor gt box, if any.
struct FrameClusters {
  std::vector<std::optional<std::size_t>> anchor;
};

/// Assigns each prediction to its highest-IoU gt box when that IoU reaches `margin_r`.
/// Equal IoUs go to the lowest gt index.
inline FrameClusters build_clusters(const Frame& frame, double margin_r) {
  FrameClusters out;
  out.anchor.resize(frame.preds.size());
  for (std::size_t p = 0; p < frame.preds.size(); ++p) {
    double best = -1.0;
    std::optional<std::size_t> arg;
    for (std::size_t g = 0; g < frame.gt.size(); ++g) {
      const double v = iou(frame.gt[g].box, frame.preds[p].box);
      if (v > best) {
        best = v;
        arg = g;
      }
    }
    if (arg && best >= margin_r) out.anchor[p] = arg;
  }
  return out;
}

/// A matched (gt, pred) pair, the element of TPL.
struct MatchedPair {
  std::int64_t frame_index = 0;
  std::size_t frame_pos = 0;  // position of the frame within its sequence
  std::size_t gt_index = 0;
  std::size_t pred_index = 0;
  double iou_value = 0.0;
  std::int64_t gt_track = 0;
  std::int64_t pred_track = 0;
  std::int64_t gt_class = 0;
  std::int64_t pred_class = 0;
};

struct MatchResult {
  std::vector<MatchedPair> pairs;  // ordered by frame, then gt index
  std::map<std::pair<std::int64_t, std::int64_t>, std::int64_t> potential;  // (gt track, pred track) -> candidate frames
  std::map<std::int64_t, std::int64_t> gt_track_frames;
  std::map<std::int64_t, std::int64_t> pred_track_frames;
  std::vector<std::int64_t> frame_indices;
};

/// Weight of IoU relative to the association potential in the matching objective.
inline constexpr double kIouTieWeight = 1.0 / 1000.0;

/// Class-agnostic per-frame matching over pairs with IoU >= alpha, maximizing the
/// sequence-level association potential plus a small IoU term.
inline MatchResult match_sequence(const Sequence& seq, double alpha) {
  MatchResult out;
  std::vector<CostMatrix> ious;
  ious.reserve(seq.frames.size());
  for (const auto& f : seq.frames) {
    out.frame_indices.push_back(f.frame_index);
    for (const auto& g : f.gt) ++out.gt_track_frames[g.track_id];
    for (const auto& p : f.preds) ++out.pred_track_frames[p.track_id];
    CostMatrix m(f.gt.size(), f.preds.size());
    for (std::size_t g = 0; g < f.gt.size(); ++g)
      for (std::size_t p = 0; p < f.preds.size(); ++p) {
        m(g, p) = iou(f.gt[g].box, f.preds[p].box);
        if (m(g, p) >= alpha) ++out.potential[{f.gt[g].track_id, f.preds[p].track_id}];
      }
    ious.push_back(std::move(m));
  }
  for (std::size_t fi = 0; fi < seq.frames.size(); ++fi) {
    const auto& f = seq.frames[fi];
    const auto& im = ious[fi];
    CostMatrix score(f.gt.size(), f.preds.size());
    bool any = false;
    for (std::size_t g = 0; g < f.gt.size(); ++g)
      for (std::size_t p = 0; p < f.preds.size(); ++p) {
        if (im(g, p) < alpha) continue;
        const std::int64_t gt_track = f.gt[g].track_id, pred_track = f.preds[p].track_id;
        const double pot = static_cast<double>(out.potential.at({gt_track, pred_track}));
        const double jaccard =
            pot / (static_cast<double>(out.gt_track_frames.at(gt_track) + out.pred_track_frames.at(pred_track)) - pot);
        score(g, p) = jaccard + kIouTieWeight * im(g, p);
        any = true;
      }
    if (!any) continue;
    for (auto [g, p] : solve_max_assignment(score).pairs) {
      if (im(g, p) < alpha) continue;
      out.pairs.push_back(MatchedPair{f.frame_index, fi, g, p, im(g, p), f.gt[g].track_id, f.preds[p].track_id,
                                      f.gt[g].category_id, f.preds[p].category_id});
    }
  }
  return out;
}

struct LocCounts {
  std::int64_t tpl = 0;
  std::int64_t fpl = 0;
  std::int64_t fnl = 0;

  double loc_a() const { return ratio(tpl, tpl + fpl + fnl); }
  double loc_re() const { return ratio(tpl, tpl + fnl); }
  double loc_pr() const { return ratio(tpl, tpl + fpl); }

  static double ratio(std::int64_t num, std::int64_t den) {
    return den > 0 ? static_cast<double>(num) / static_cast<double>(den) : 0.0;
  }
  bool operator==(const LocCounts&) const = default;
};

namespace detail {

inline void check_frames(const Sequence& seq, const MatchResult& match, const std::vector<FrameClusters>& clusters) {
  if (clusters.size() != seq.frames.size() || match.frame_indices.size() != seq.frames.size())
    throw Error("sequence " + seq.sequence_id + ": frame sets of match and clusters differ");
  for (std::size_t i = 0; i < seq.frames.size(); ++i) {
    if (match.frame_indices[i] != seq.frames[i].frame_index ||
        clusters[i].anchor.size() != seq.frames[i].preds.size())
      throw Error("sequence " + seq.sequence_id + ": frame sets of match and clusters differ");
  }
}

/// matched[frame_pos] -> (gt matched flags, pred matched flags)
inline std::vector<std::pair<std::vector<char>, std::vector<char>>> matched_flags(const Sequence& seq,
                                                                                  const MatchResult& match) {
  std::vector<std::pair<std::vector<char>, std::vector<char>>> out(seq.frames.size());
  for (std::size_t i = 0; i < seq.frames.size(); ++i) {
    out[i].first.assign(seq.frames[i].gt.size(), 0);
    out[i].second.assign(seq.frames[i].preds.size(), 0);
  }
  for (const auto& b : match.pairs) {
    out[b.frame_pos].first[b.gt_index] = 1;
    out[b.frame_pos].second[b.pred_index] = 1;
  }
  return out;
}

}  // namespace detail

/// Per-class TPL/FPL/FNL for one sequence. Classes come from the gt anchors.
/// Unmatched predictions outside every cluster are ignored, except in single-category
/// mode (exhaustive labels) where they count as FPL of the single class.
inline std::map<std::int64_t, LocCounts> localization_scores(const Sequence& seq, const MatchResult& match,
                                                             const std::vector<FrameClusters>& clusters,
                                                             AnnotationMode mode) {
  detail::check_frames(seq, match, clusters);
  std::map<std::int64_t, LocCounts> out;
  for (const auto& b : match.pairs) ++out[b.gt_class].tpl;
  const auto flags = detail::matched_flags(seq, match);
  for (std::size_t fi = 0; fi < seq.frames.size(); ++fi) {
    const auto& f = seq.frames[fi];
    for (std::size_t g = 0; g < f.gt.size(); ++g)
      if (!flags[fi].first[g]) ++out[f.gt[g].category_id].fnl;
    for (std::size_t p = 0; p < f.preds.size(); ++p) {
      if (flags[fi].second[p]) continue;
      if (const auto& anchor = clusters[fi].anchor[p]) {
        ++out[f.gt[*anchor].category_id].fpl;
      } else if (mode == AnnotationMode::single_category) {
        ++out[kSingleCategoryId].fpl;
      }
    }
  }
  return out;
}

struct PairAssoc {
  std::int64_t tpa = 0;
  std::int64_t fpa = 0;
  std::int64_t fna = 0;
  double score() const { return static_cast<double>(tpa) / static_cast<double>(tpa + fpa + fna); }
};

struct AssocCounts {
  std::vector<PairAssoc> per_pair;  // parallel to MatchResult::pairs
  std::map<std::int64_t, std::pair<double, std::int64_t>> per_class;  // class -> (sum of assoc_b, |TPL|)

  double assoc_a(std::int64_t cls) const {
    auto it = per_class.find(cls);
    if (it == per_class.end() || it->second.second == 0) return 0.0;
    return it->second.first / static_cast<double>(it->second.second);
  }
};

/// TPA/FPA/FNA for every matched pair and the per-class mean of assoc_b.
inline AssocCounts association_scores(const MatchResult& match) {
  std::map<std::pair<std::int64_t, std::int64_t>, std::int64_t> together;
  for (const auto& b : match.pairs) ++together[{b.gt_track, b.pred_track}];
  AssocCounts out;
  out.per_pair.reserve(match.pairs.size());
  for (const auto& b : match.pairs) {
    PairAssoc a;
    a.tpa = together.at({b.gt_track, b.pred_track});
    a.fna = match.gt_track_frames.at(b.gt_track) - a.tpa;
    a.fpa = match.pred_track_frames.at(b.pred_track) - a.tpa;
    out.per_pair.push_back(a);
    auto& [sum, n] = out.per_class[b.gt_class];
    sum += a.score();
    ++n;
  }
  return out;
}

struct ClsCounts {
  std::int64_t tpc = 0;
  std::int64_t fpc = 0;
  std::int64_t fnc = 0;
  double cls_a() const { return LocCounts::ratio(tpc, tpc + fpc + fnc); }
};

/// Per-class TPC/FNC/FPC over well-matched pairs. In complete mode every unmatched
/// prediction outside all clusters is also a false positive of its predicted class.
inline std::map<std::int64_t, ClsCounts> classification_scores(const Sequence& seq, const MatchResult& match,
                                                               const std::vector<FrameClusters>& clusters,
                                                               AnnotationMode mode, double cls_alpha_floor) {
  std::map<std::int64_t, ClsCounts> out;
  for (const auto& b : match.pairs) {
    if (b.iou_value < cls_alpha_floor) continue;
    if (b.pred_class == b.gt_class) {
      ++out[b.gt_class].tpc;
    } else {
      ++out[b.gt_class].fnc;
      ++out[b.pred_class].fpc;
    }
  }
  if (mode == AnnotationMode::complete) {
    detail::check_frames(seq, match, clusters);
    const auto flags = detail::matched_flags(seq, match);
    for (std::size_t fi = 0; fi < seq.frames.size(); ++fi)
      for (std::size_t p = 0; p < seq.frames[fi].preds.size(); ++p)
        if (!flags[fi].second[p] && !clusters[fi].anchor[p]) ++out[seq.frames[fi].preds[p].category_id].fpc;
  }
  return out;
}

/// Arithmetic mean of the three sub-scores.
inline double compose_teta(double loc_a, double assoc_a, double cls_a) { return (loc_a + assoc_a + cls_a) / 3.0; }

enum class FreqGroup { rare, common, frequent };

inline std::string to_string(FreqGroup g) {
  switch (g) {
    case FreqGroup::rare: return "rare";
    case FreqGroup::common: return "common";
    case FreqGroup::frequent: return "frequent";
  }
  return "?";
}

inline std::map<std::int64_t, FreqGroup> frequency_groups(const CategoryTable& cats, std::int64_t rare_max,
                                                          std::int64_t common_max) {
  std::map<std::int64_t, FreqGroup> out;
  for (const auto& [id, info] : cats) {
    if (info.gt_track_count <= rare_max) out[id] = FreqGroup::rare;
    else if (info.gt_track_count <= common_max) out[id] = FreqGroup::common;
    else out[id] = FreqGroup::frequent;
  }
  return out;
}

struct ClassScores {
  std::int64_t category_id = 0;
  std::string name;
  std::int64_t gt_tracks = 0;
  FreqGroup group = FreqGroup::rare;
  LocCounts loc;
  double assoc_a = 0.0;
  std::int64_t num_tpl = 0;
  ClsCounts cls;
  std::optional<double> cls_a;  // absent in single-category mode
  double teta = 0.0;
};

/// Macro-average over classes with ground-truth presence.
struct ScoreSummary {
  double loc_a = 0.0;
  double assoc_a = 0.0;
  std::optional<double> cls_a;
  double teta = 0.0;
  double loc_re = 0.0;
  double loc_pr = 0.0;
  std::size_t num_classes = 0;
};

struct TetaReport {
  EvalConfig config;
  std::vector<ClassScores> per_class;  // ascending category id
  std::map<FreqGroup, std::optional<ScoreSummary>> per_group;
  ScoreSummary overall;
};

namespace detail {

struct ClassAccum {
  LocCounts loc;
  double assoc_sum = 0.0;
  std::int64_t assoc_n = 0;
  ClsCounts cls;
};

using SequenceAccum = std::map<std::int64_t, ClassAccum>;

inline SequenceAccum score_sequence(const Sequence& seq, const EvalConfig& cfg) {
  SequenceAccum acc;
  const MatchResult match = match_sequence(seq, cfg.alpha);
  std::vector<FrameClusters> clusters;
  clusters.reserve(seq.frames.size());
  for (const auto& f : seq.frames) clusters.push_back(build_clusters(f, cfg.margin_r));
  for (const auto& [cls, c] : localization_scores(seq, match, clusters, cfg.mode)) acc[cls].loc = c;
  const AssocCounts assoc = association_scores(match);
  for (const auto& [cls, sn] : assoc.per_class) {
    acc[cls].assoc_sum = sn.first;
    acc[cls].assoc_n = sn.second;
  }
  for (const auto& [cls, c] : classification_scores(seq, match, clusters, cfg.mode, cfg.cls_alpha_floor))
    acc[cls].cls = c;
  return acc;
}

inline ScoreSummary summarize(const std::vector<const ClassScores*>& classes, bool with_cls) {
  ScoreSummary s;
  s.num_classes = classes.size();
  if (classes.empty()) {
    if (with_cls) s.cls_a = 0.0;
    return s;
  }
  double loc = 0, assoc = 0, cls = 0, re = 0, pr = 0;
  for (const auto* c : classes) {
    loc += c->loc.loc_a();
    assoc += c->assoc_a;
    cls += c->cls_a.value_or(0.0);
    re += c->loc.loc_re();
    pr += c->loc.loc_pr();
  }
  const double n = static_cast<double>(classes.size());
  s.loc_a = loc / n;
  s.assoc_a = assoc / n;
  s.loc_re = re / n;
  s.loc_pr = pr / n;
  if (with_cls) {
    s.cls_a = cls / n;
    s.teta = compose_teta(s.loc_a, s.assoc_a, *s.cls_a);
  } else {
    s.teta = (s.loc_a + s.assoc_a) / 2.0;
  }
  return s;
}

/// Maps every category to the single synthetic class.
inline Dataset collapse_categories(Dataset ds) {
  for (auto& seq : ds.sequences)
    for (auto& f : seq.frames) {
      for (auto& g : f.gt) g.category_id = kSingleCategoryId;
      for (auto& p : f.preds) p.category_id = kSingleCategoryId;
    }
  ds.categories = {{kSingleCategoryId, CategoryInfo{"object", 0}}};
  return canonicalize(std::move(ds));
}

}  // namespace detail

/// Full TETA evaluation of `pred` against `gt`.
///
/// Sequences are scored independently (on up to `jobs` threads), counts are summed
/// dataset-wide in sequence order, and per-class scores are macro-averaged over
/// classes that have at least one ground-truth track.
inline TetaReport evaluate(const Dataset& gt, const Dataset& pred, EvalConfig cfg, unsigned jobs = 1) {
  cfg.validate();
  if (cfg.mode == AnnotationMode::single_category) cfg.margin_r = 0.0;
  Dataset merged = merge_roles(gt, pred);
  if (cfg.top_k) merged = top_k_filter(std::move(merged), *cfg.top_k);
  if (cfg.mode == AnnotationMode::single_category) merged = detail::collapse_categories(std::move(merged));
  if (box_counts(merged).first == 0) throw Error("nothing to evaluate: ground truth is empty");

  const auto per_seq = parallel_map(merged.sequences.size(), jobs,
                                    [&](std::size_t i) { return detail::score_sequence(merged.sequences[i], cfg); });
  detail::SequenceAccum total;
  for (const auto& acc : per_seq)
    for (const auto& [cls, a] : acc) {
      auto& t = total[cls];
      t.loc.tpl += a.loc.tpl;
      t.loc.fpl += a.loc.fpl;
      t.loc.fnl += a.loc.fnl;
      t.assoc_sum += a.assoc_sum;
      t.assoc_n += a.assoc_n;
      t.cls.tpc += a.cls.tpc;
      t.cls.fpc += a.cls.fpc;
      t.cls.fnc += a.cls.fnc;
    }

  const bool with_cls = cfg.mode != AnnotationMode::single_category;
  const auto groups = frequency_groups(merged.categories, cfg.rare_max, cfg.common_max);
  TetaReport report;
  report.config = cfg;
  for (const auto& [id, info] : merged.categories) {
    if (info.gt_track_count == 0) continue;
    ClassScores c;
    c.category_id = id;
    c.name = info.name;
    c.gt_tracks = info.gt_track_count;
    c.group = groups.at(id);
    const detail::ClassAccum a = total.contains(id) ? total.at(id) : detail::ClassAccum{};
    c.loc = a.loc;
    c.num_tpl = a.assoc_n;
    c.assoc_a = a.assoc_n > 0 ? a.assoc_sum / static_cast<double>(a.assoc_n) : 0.0;
    c.cls = a.cls;
    if (with_cls) {
      c.cls_a = a.cls.cls_a();
      c.teta = compose_teta(c.loc.loc_a(), c.assoc_a, *c.cls_a);
    } else {
      c.teta = (c.loc.loc_a() + c.assoc_a) / 2.0;
    }
    report.per_class.push_back(std::move(c));
  }
  std::vector<const ClassScores*> all;
  std::map<FreqGroup, std::vector<const ClassScores*>> by_group;
  for (const auto& c : report.per_class) {
    all.push_back(&c);
    by_group[c.group].push_back(&c);
  }
  report.overall = detail::summarize(all, with_cls);
  for (FreqGroup g : {FreqGroup::rare, FreqGroup::common, FreqGroup::frequent}) {
    if (by_group[g].empty()) report.per_group[g] = std::nullopt;
    else report.per_group[g] = detail::summarize(by_group[g], with_cls);
  }
  return report;
}

/// Rounds a fraction to a percentage with two decimals, ties to even.
inline double percent(double fraction) {
  const double scaled = fraction * 10000.0;
  const double lower = std::floor(scaled);
  const double diff = scaled - lower;
  double r = lower;
  if (diff > 0.5 || (diff == 0.5 && std::fmod(lower, 2.0) != 0.0)) r = lower + 1.0;
  return r / 100.0;
}

/// Fixed two-decimal rendering of percent(fraction).
inline std::string percent_string(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", percent(fraction));
  return buf;
}

inline nlohmann::ordered_json config_to_json(const EvalConfig& cfg) {
  nlohmann::ordered_json j;
  j["alpha"] = cfg.alpha;
  j["margin_r"] = cfg.margin_r;
  j["mode"] = to_string(cfg.mode);
  j["cls_alpha_floor"] = cfg.cls_alpha_floor;
  j["freq_thresholds"] = {cfg.rare_max, cfg.common_max};
  j["top_k"] = cfg.top_k ? nlohmann::ordered_json(*cfg.top_k) : nlohmann::ordered_json(nullptr);
  return j;
}

inline nlohmann::ordered_json summary_to_json(const ScoreSummary& s) {
  using ojson = nlohmann::ordered_json;
  ojson j;
  j["loc_a"] = s.loc_a;
  j["assoc_a"] = s.assoc_a;
  j["cls_a"] = s.cls_a ? ojson(*s.cls_a) : ojson(nullptr);
  j["teta"] = s.teta;
  j["loc_re"] = s.loc_re;
  j["loc_pr"] = s.loc_pr;
  j["num_classes"] = s.num_classes;
  ojson pct;
  pct["loc_a"] = percent(s.loc_a);
  pct["assoc_a"] = percent(s.assoc_a);
  pct["cls_a"] = s.cls_a ? ojson(percent(*s.cls_a)) : ojson(nullptr);
  pct["teta"] = percent(s.teta);
  pct["loc_re"] = percent(s.loc_re);
  pct["loc_pr"] = percent(s.loc_pr);
  j["percent"] = pct;
  return j;
}

inline std::string report_to_json(const TetaReport& r) {
  using ojson = nlohmann::ordered_json;
  ojson j;
  j["config"] = config_to_json(r.config);
  j["per_class"] = ojson::array();
  for (const auto& c : r.per_class) {
    ojson e;
    e["cat"] = c.category_id;
    e["name"] = c.name;
    e["group"] = to_string(c.group);
    e["gt_tracks"] = c.gt_tracks;
    e["loc_a"] = c.loc.loc_a();
    e["assoc_a"] = c.assoc_a;
    e["cls_a"] = c.cls_a ? ojson(*c.cls_a) : ojson(nullptr);
    e["teta"] = c.teta;
    e["tpl"] = c.loc.tpl;
    e["fpl"] = c.loc.fpl;
    e["fnl"] = c.loc.fnl;
    e["loc_re"] = c.loc.loc_re();
    e["loc_pr"] = c.loc.loc_pr();
    e["tpc"] = c.cls.tpc;
    e["fpc"] = c.cls.fpc;
    e["fnc"] = c.cls.fnc;
    ojson pct;
    pct["loc_a"] = percent(c.loc.loc_a());
    pct["assoc_a"] = percent(c.assoc_a);
    pct["cls_a"] = c.cls_a ? ojson(percent(*c.cls_a)) : ojson(nullptr);
    pct["teta"] = percent(c.teta);
    pct["loc_re"] = percent(c.loc.loc_re());
    pct["loc_pr"] = percent(c.loc.loc_pr());
    e["percent"] = pct;
    j["per_class"].push_back(e);
  }
  ojson groups;
  for (const auto& [g, s] : r.per_group) groups[to_string(g)] = s ? summary_to_json(*s) : ojson(nullptr);
  j["per_group"] = groups;
  j["overall"] = summary_to_json(r.overall);
  return j.dump(2) + "\n";
}

/// Human-readable percent table.
inline std::string report_to_table(const TetaReport& r) {
  std::string out;
  char line[256];
  auto cls = [](const std::optional<double>& v) { return v ? percent_string(*v) : std::string("-"); };
  std::snprintf(line, sizeof line, "%-24s %8s %8s %8s %8s %8s %8s\n", "class", "TETA", "LocA", "AssocA", "ClsA",
                "LocRe", "LocPr");
  out += line;
  auto row = [&](const std::string& name, double teta, double loc, double assoc, const std::optional<double>& c,
                 double re, double pr) {
    std::snprintf(line, sizeof line, "%-24s %8s %8s %8s %8s %8s %8s\n", name.substr(0, 24).c_str(),
                  percent_string(teta).c_str(), percent_string(loc).c_str(), percent_string(assoc).c_str(),
                  cls(c).c_str(), percent_string(re).c_str(), percent_string(pr).c_str());
    out += line;
  };
  for (const auto& c : r.per_class)
    row(c.name, c.teta, c.loc.loc_a(), c.assoc_a, c.cls_a, c.loc.loc_re(), c.loc.loc_pr());
  for (const auto& [g, s] : r.per_group)
    if (s) row("[" + to_string(g) + "]", s->teta, s->loc_a, s->assoc_a, s->cls_a, s->loc_re, s->loc_pr);
  const auto& o = r.overall;
  row("[overall]", o.teta, o.loc_a, o.assoc_a, o.cls_a, o.loc_re, o.loc_pr);
  return out;
}

}  // namespace teta
