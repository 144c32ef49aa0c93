#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "teta/annot_model.hpp"
#include "teta/assignment.hpp"
#include "teta/baseline_metrics.hpp"
#include "teta/ingest.hpp"
#include "teta/parallel.hpp"
#include "teta/teta_core.hpp"

namespace teta {

/// Seedable generator with a platform-independent output stream: std::mt19937_64
/// (fully specified by the standard), 53-bit doubles from the top bits, and
/// rejection-sampled bounded integers. Standard distributions are avoided because
/// their algorithms are implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw Error("Rng::below(0)");
    const std::uint64_t bound = (std::numeric_limits<std::uint64_t>::max() / n) * n;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= bound);
    return x % n;
  }

 private:
  std::mt19937_64 engine_;
};

namespace detail {

inline std::set<std::int64_t> pred_tracks(const Sequence& seq) {
  std::set<std::int64_t> ids;
  for (const auto& f : seq.frames)
    for (const auto& p : f.preds) ids.insert(p.track_id);
  return ids;
}

inline std::int64_t next_pred_track_id(const Sequence& seq) {
  std::int64_t next = 0;
  for (const auto& f : seq.frames)
    for (const auto& p : f.preds) next = std::max(next, p.track_id + 1);
  return next;
}

}  // namespace detail

/// With probability `rate`, each prediction track moves every box to a different
/// class: the class index is shifted by a uniform nonzero offset within the category table.
inline Dataset inject_class_noise(Dataset pred, double rate, std::uint64_t seed) {
  if (!(rate >= 0.0 && rate <= 1.0)) throw Error("class noise rate must lie in [0, 1]");
  std::vector<std::int64_t> classes;
  for (const auto& [id, info] : pred.categories) classes.push_back(id);
  if (rate > 0.0 && classes.size() < 2) throw Error("class noise needs at least two categories");
  std::map<std::int64_t, std::size_t> position;
  for (std::size_t i = 0; i < classes.size(); ++i) position[classes[i]] = i;
  Rng rng(seed);
  for (auto& seq : pred.sequences) {
    std::map<std::int64_t, std::uint64_t> shift;
    for (std::int64_t track : detail::pred_tracks(seq)) {
      if (rng.uniform01() < rate) shift[track] = 1 + rng.below(classes.size() - 1);
    }
    for (auto& f : seq.frames)
      for (auto& p : f.preds)
        if (auto it = shift.find(p.track_id); it != shift.end())
          p.category_id = classes[(position.at(p.category_id) + it->second) % classes.size()];
  }
  return canonicalize(std::move(pred));
}

/// Duplicates every prediction track `copies` times under fresh ids with confidence `score`.
inline Dataset copy_paste_tracks(Dataset pred, std::int64_t copies, double score = 0.01) {
  if (copies < 1) throw Error("copies must be positive");
  if (!(score >= 0.0 && score <= 1.0)) throw Error("copy score must lie in [0, 1]");
  for (auto& seq : pred.sequences) {
    const auto tracks = detail::pred_tracks(seq);
    std::int64_t next = detail::next_pred_track_id(seq);
    std::map<std::pair<std::int64_t, std::int64_t>, std::int64_t> copy_id;  // (copy k, track) -> id
    for (std::int64_t k = 1; k <= copies; ++k)
      for (std::int64_t t : tracks) copy_id[{k, t}] = next++;
    for (auto& f : seq.frames) {
      const auto originals = f.preds;
      for (std::int64_t k = 1; k <= copies; ++k)
        for (const auto& p : originals) {
          PredBox c = p;
          c.track_id = copy_id.at({k, p.track_id});
          c.score = score;
          f.preds.push_back(c);
        }
    }
  }
  return canonicalize(std::move(pred));
}

/// Sorts classes by descending gt track count (ties: ascending id) and merges the
/// last `n` into one new class in both datasets.
inline std::pair<Dataset, Dataset> merge_tail_classes(Dataset gt, Dataset pred, std::int64_t n) {
  CategoryTable universe = pred.categories;
  for (const auto& [id, info] : gt.categories) universe[id] = info;
  if (n < 1 || n > static_cast<std::int64_t>(universe.size()))
    throw Error("merge count must lie in [1, number of classes]");
  const auto counts = count_gt_tracks(gt);
  std::vector<std::int64_t> order;
  for (const auto& [id, info] : universe) order.push_back(id);
  auto count_of = [&](std::int64_t id) {
    auto it = counts.find(id);
    return it == counts.end() ? std::int64_t{0} : it->second;
  };
  std::stable_sort(order.begin(), order.end(), [&](std::int64_t a, std::int64_t b) {
    return count_of(a) != count_of(b) ? count_of(a) > count_of(b) : a < b;
  });
  const std::set<std::int64_t> tail(order.end() - n, order.end());
  const std::int64_t merged_id = universe.rbegin()->first + 1;
  CategoryTable table;
  for (const auto& [id, info] : universe)
    if (!tail.contains(id)) table[id] = CategoryInfo{info.name, 0};
  std::string name = "merged_tail_" + std::to_string(n);
  for (const auto& [id, info] : table)
    if (info.name == name) name += "_" + std::to_string(merged_id);
  table[merged_id] = CategoryInfo{name, 0};
  auto relabel = [&](Dataset ds) {
    for (auto& seq : ds.sequences)
      for (auto& f : seq.frames) {
        for (auto& g : f.gt)
          if (tail.contains(g.category_id)) g.category_id = merged_id;
        for (auto& p : f.preds)
          if (tail.contains(p.category_id)) p.category_id = merged_id;
      }
    ds.categories = table;
    return canonicalize(std::move(ds));
  };
  return {relabel(std::move(gt)), relabel(std::move(pred))};
}

/// Splits every prediction track into pieces of `period` consecutive boxes. The first
/// piece keeps its id; the others get fresh ids, permuted by `seed`.
inline Dataset fragment_tracks(Dataset pred, std::int64_t period, std::uint64_t seed) {
  if (period < 2) throw Error("fragment period must be at least 2");
  Rng rng(seed);
  for (auto& seq : pred.sequences) {
    std::map<std::int64_t, std::int64_t> ordinal;
    std::set<std::pair<std::int64_t, std::int64_t>> piece_set;  // (track, piece >= 1)
    for (const auto& f : seq.frames)
      for (const auto& p : f.preds) {
        const std::int64_t piece = ordinal[p.track_id]++ / period;
        if (piece >= 1) piece_set.emplace(p.track_id, piece);
      }
    const std::vector<std::pair<std::int64_t, std::int64_t>> pieces(piece_set.begin(), piece_set.end());
    std::vector<std::int64_t> fresh(pieces.size());
    const std::int64_t next = detail::next_pred_track_id(seq);
    for (std::size_t i = 0; i < fresh.size(); ++i) fresh[i] = next + static_cast<std::int64_t>(i);
    for (std::size_t i = fresh.size(); i > 1; --i) std::swap(fresh[i - 1], fresh[rng.below(i)]);
    std::map<std::pair<std::int64_t, std::int64_t>, std::int64_t> new_id;
    for (std::size_t i = 0; i < pieces.size(); ++i) new_id[pieces[i]] = fresh[i];
    ordinal.clear();
    for (auto& f : seq.frames)
      for (auto& p : f.preds) {
        const std::int64_t piece = ordinal[p.track_id]++ / period;
        if (piece >= 1) p.track_id = new_id.at({p.track_id, piece});
      }
  }
  return canonicalize(std::move(pred));
}

struct OverlapCdf {
  std::vector<double> thresholds;
  std::vector<double> fractions;  // share of gt boxes whose max inter-object IoU <= threshold
};

/// 0, 0.05, ..., 1
inline std::vector<double> default_overlap_thresholds() {
  std::vector<double> t;
  for (int k = 0; k <= 20; ++k) t.push_back(k / 20.0);
  return t;
}

inline OverlapCdf overlap_cdf(const Dataset& gt, const std::vector<double>& thresholds) {
  for (std::size_t i = 0; i < thresholds.size(); ++i) {
    if (!(thresholds[i] >= 0.0 && thresholds[i] <= 1.0)) throw Error("overlap thresholds must lie in [0, 1]");
    if (i > 0 && thresholds[i] <= thresholds[i - 1]) throw Error("overlap thresholds must be ascending");
  }
  std::vector<double> max_overlap;
  for (const auto& seq : gt.sequences)
    for (const auto& f : seq.frames)
      for (std::size_t i = 0; i < f.gt.size(); ++i) {
        double best = 0.0;
        for (std::size_t j = 0; j < f.gt.size(); ++j)
          if (j != i) best = std::max(best, iou(f.gt[i].box, f.gt[j].box));
        max_overlap.push_back(best);
      }
  if (max_overlap.empty()) throw Error("overlap statistics need ground-truth boxes");
  std::sort(max_overlap.begin(), max_overlap.end());
  OverlapCdf out;
  out.thresholds = thresholds;
  for (double t : thresholds) {
    const auto k = std::upper_bound(max_overlap.begin(), max_overlap.end(), t) - max_overlap.begin();
    out.fractions.push_back(static_cast<double>(k) / static_cast<double>(max_overlap.size()));
  }
  return out;
}

inline std::string overlap_cdf_csv(const OverlapCdf& cdf) {
  std::string out = "threshold,fraction\n";
  for (std::size_t i = 0; i < cdf.thresholds.size(); ++i)
    out += format_number(cdf.thresholds[i]) + "," + format_number(cdf.fractions[i]) + "\n";
  return out;
}

/// Relabels every box of a prediction track with the track's majority class.
/// Ties go to the larger summed confidence, then the lower category id.
inline Dataset temporal_class_correction(Dataset pred) {
  for (auto& seq : pred.sequences) {
    std::map<std::int64_t, std::map<std::int64_t, std::pair<std::int64_t, double>>> tally;  // track -> cls -> (votes, mass)
    for (const auto& f : seq.frames)
      for (const auto& p : f.preds) {
        auto& [votes, mass] = tally[p.track_id][p.category_id];
        ++votes;
        mass += p.score;
      }
    std::map<std::int64_t, std::int64_t> winner;
    for (const auto& [track, classes] : tally) {
      std::int64_t best = classes.begin()->first;
      auto best_key = classes.begin()->second;
      for (const auto& [cls, key] : classes) {
        if (key.first > best_key.first || (key.first == best_key.first && key.second > best_key.second)) {
          best = cls;
          best_key = key;
        }
      }
      winner[track] = best;
    }
    for (auto& f : seq.frames)
      for (auto& p : f.preds) p.category_id = winner.at(p.track_id);
  }
  return canonicalize(std::move(pred));
}

enum class PerturbKind { class_noise, copy_paste, merge_tail, fragment };

struct PerturbSpec {
  PerturbKind kind = PerturbKind::class_noise;
  double rate = 0.0;
  std::int64_t copies = 1;
  double score = 0.01;
  std::int64_t n = 1;
  std::int64_t period = 2;
  std::optional<std::uint64_t> seed;

  void validate() const {
    switch (kind) {
      case PerturbKind::class_noise:
        if (!(rate >= 0.0 && rate <= 1.0)) throw Error("class_noise: rate must lie in [0, 1]");
        if (!seed) throw Error("class_noise: seed is required");
        break;
      case PerturbKind::copy_paste:
        if (copies < 1) throw Error("copy_paste: copies must be positive");
        if (!(score >= 0.0 && score <= 1.0)) throw Error("copy_paste: score must lie in [0, 1]");
        break;
      case PerturbKind::merge_tail:
        if (n < 1) throw Error("merge_tail: n must be positive");
        break;
      case PerturbKind::fragment:
        if (period < 2) throw Error("fragment: period must be at least 2");
        if (!seed) throw Error("fragment: seed is required");
        break;
    }
  }

  std::string label() const {
    switch (kind) {
      case PerturbKind::class_noise:
        return "class_noise(rate=" + format_number(rate) + ";seed=" + std::to_string(*seed) + ")";
      case PerturbKind::copy_paste:
        return "copy_paste(copies=" + std::to_string(copies) + ";score=" + format_number(score) + ")";
      case PerturbKind::merge_tail: return "merge_tail(n=" + std::to_string(n) + ")";
      case PerturbKind::fragment:
        return "fragment(period=" + std::to_string(period) + ";seed=" + std::to_string(*seed) + ")";
    }
    return "?";
  }
};

inline std::optional<PerturbKind> perturb_kind_from_string(std::string_view s) {
  if (s == "class_noise") return PerturbKind::class_noise;
  if (s == "copy_paste") return PerturbKind::copy_paste;
  if (s == "merge_tail") return PerturbKind::merge_tail;
  if (s == "fragment") return PerturbKind::fragment;
  return std::nullopt;
}

/// Parses "kind:key=value,key=value", e.g. "class_noise:rate=0.5,seed=7".
inline PerturbSpec parse_perturb_spec(std::string_view text) {
  PerturbSpec spec;
  const auto colon = text.find(':');
  const auto kind = perturb_kind_from_string(text.substr(0, colon));
  if (!kind) throw Error("unknown perturbation kind in '" + std::string(text) + "'");
  spec.kind = *kind;
  if (colon != std::string_view::npos) {
    std::string_view rest = text.substr(colon + 1);
    while (!rest.empty()) {
      const auto comma = rest.find(',');
      const std::string_view item = rest.substr(0, comma);
      rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
      const auto eq = item.find('=');
      if (eq == std::string_view::npos) throw Error("perturbation parameter needs key=value: '" + std::string(item) + "'");
      const std::string key(item.substr(0, eq));
      const std::string value(item.substr(eq + 1));
      try {
        std::size_t used = 0;
        if (key == "rate") spec.rate = std::stod(value, &used);
        else if (key == "score") spec.score = std::stod(value, &used);
        else if (key == "copies") spec.copies = std::stoll(value, &used);
        else if (key == "n") spec.n = std::stoll(value, &used);
        else if (key == "period") spec.period = std::stoll(value, &used);
        else if (key == "seed") spec.seed = std::stoull(value, &used);
        else throw Error("unknown perturbation parameter '" + key + "'");
        if (used != value.size()) throw Error("bad value for '" + key + "'");
      } catch (const std::logic_error&) {
        throw Error("bad value for '" + key + "': '" + value + "'");
      }
    }
  }
  spec.validate();
  return spec;
}

/// Applies one perturbation; only merge_tail touches the ground truth.
inline std::pair<Dataset, Dataset> apply_perturbation(const Dataset& gt, const Dataset& pred, const PerturbSpec& spec) {
  spec.validate();
  switch (spec.kind) {
    case PerturbKind::class_noise: return {gt, inject_class_noise(pred, spec.rate, *spec.seed)};
    case PerturbKind::copy_paste: return {gt, copy_paste_tracks(pred, spec.copies, spec.score)};
    case PerturbKind::merge_tail: return merge_tail_classes(gt, pred, spec.n);
    case PerturbKind::fragment: return {gt, fragment_tracks(pred, spec.period, *spec.seed)};
  }
  return {gt, pred};
}

struct ComparisonRow {
  std::string perturbation;
  std::string metric;     // TETA | HOTA | CLEAR
  std::string component;  // e.g. LocA, DetA, MOTA
  std::string cls;        // category name or "overall"
  double value = 0.0;
};

struct ComparisonTable {
  std::vector<ComparisonRow> rows;
};

namespace detail {

inline Dataset filter_class(const Dataset& ds, std::int64_t cat) {
  Dataset out = ds;
  for (auto& seq : out.sequences)
    for (auto& f : seq.frames) {
      std::erase_if(f.gt, [&](const GtBox& g) { return g.category_id != cat; });
      std::erase_if(f.preds, [&](const PredBox& p) { return p.category_id != cat; });
    }
  return out;
}

inline std::vector<ComparisonRow> teta_rows(const std::string& label, const Dataset& gt, const Dataset& pred,
                                            const EvalConfig& cfg) {
  const TetaReport r = evaluate(gt, pred, cfg);
  std::vector<ComparisonRow> rows;
  auto emit = [&](const std::string& cls, double teta, double loc, double assoc, std::optional<double> c, double re,
                  double pr) {
    rows.push_back({label, "TETA", "TETA", cls, teta});
    rows.push_back({label, "TETA", "LocA", cls, loc});
    rows.push_back({label, "TETA", "AssocA", cls, assoc});
    if (c) rows.push_back({label, "TETA", "ClsA", cls, *c});
    rows.push_back({label, "TETA", "LocRe", cls, re});
    rows.push_back({label, "TETA", "LocPr", cls, pr});
  };
  for (const auto& c : r.per_class) emit(c.name, c.teta, c.loc.loc_a(), c.assoc_a, c.cls_a, c.loc.loc_re(), c.loc.loc_pr());
  const auto& o = r.overall;
  emit("overall", o.teta, o.loc_a, o.assoc_a, o.cls_a, o.loc_re, o.loc_pr);
  return rows;
}

inline std::vector<ComparisonRow> hota_rows(const std::string& label, const Dataset& gt, const Dataset& pred) {
  const Dataset merged = merge_roles(gt, pred);
  std::vector<ComparisonRow> rows;
  double h = 0, d = 0, a = 0;
  std::size_t n = 0;
  for (const auto& [cat, info] : merged.categories) {
    if (info.gt_track_count == 0) continue;
    const HotaReport r = hota_evaluate(filter_class(gt, cat), filter_class(pred, cat), default_hota_alphas());
    rows.push_back({label, "HOTA", "HOTA", info.name, r.hota});
    rows.push_back({label, "HOTA", "DetA", info.name, r.det_a});
    rows.push_back({label, "HOTA", "AssA", info.name, r.ass_a});
    h += r.hota;
    d += r.det_a;
    a += r.ass_a;
    ++n;
  }
  const double k = n > 0 ? static_cast<double>(n) : 1.0;
  rows.push_back({label, "HOTA", "HOTA", "overall", h / k});
  rows.push_back({label, "HOTA", "DetA", "overall", d / k});
  rows.push_back({label, "HOTA", "AssA", "overall", a / k});
  return rows;
}

inline std::vector<ComparisonRow> clear_rows(const std::string& label, const Dataset& gt, const Dataset& pred) {
  const ClearReport r = clear_evaluate(gt, pred);
  std::vector<ComparisonRow> rows;
  auto emit = [&](const std::string& cls, double mota, double motp, double idf1, std::int64_t idsw, std::int64_t fp,
                  std::int64_t fn) {
    rows.push_back({label, "CLEAR", "MOTA", cls, mota});
    rows.push_back({label, "CLEAR", "MOTP", cls, motp});
    rows.push_back({label, "CLEAR", "IDF1", cls, idf1});
    rows.push_back({label, "CLEAR", "IDSW", cls, static_cast<double>(idsw)});
    rows.push_back({label, "CLEAR", "FP", cls, static_cast<double>(fp)});
    rows.push_back({label, "CLEAR", "FN", cls, static_cast<double>(fn)});
  };
  for (const auto& c : r.per_class) emit(c.name, c.mota, c.motp, c.idf1, c.idsw, c.fp, c.fn);
  emit("overall", r.mota, r.motp, r.idf1, r.idsw, r.fp, r.fn);
  return rows;
}

}  // namespace detail

/// Scores the base predictions and each perturbation of them with TETA, HOTA and
/// CLEAR, one long-format row per (perturbation, metric, component, class).
inline ComparisonTable compare_metrics(const Dataset& gt, const Dataset& pred, const std::vector<PerturbSpec>& perturbs,
                                       const EvalConfig& cfg, unsigned jobs = 1) {
  std::vector<std::string> labels{"base"};
  std::vector<std::pair<Dataset, Dataset>> cases{{gt, pred}};
  for (const auto& spec : perturbs) {
    labels.push_back(spec.label());
    cases.push_back(apply_perturbation(gt, pred, spec));
  }
  const std::size_t cells = cases.size() * 3;
  const auto parts = parallel_map(cells, jobs, [&](std::size_t i) {
    const auto& [g, p] = cases[i / 3];
    const auto& label = labels[i / 3];
    switch (i % 3) {
      case 0: return detail::teta_rows(label, g, p, cfg);
      case 1: return detail::hota_rows(label, g, p);
      default: return detail::clear_rows(label, g, p);
    }
  });
  ComparisonTable table;
  for (const auto& part : parts) table.rows.insert(table.rows.end(), part.begin(), part.end());
  return table;
}

namespace detail {

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace detail

inline std::string comparison_to_csv(const ComparisonTable& t) {
  std::string out = "perturbation,metric,component,class,value\n";
  for (const auto& r : t.rows)
    out += detail::csv_field(r.perturbation) + "," + r.metric + "," + r.component + "," + detail::csv_field(r.cls) +
           "," + format_number(r.value) + "\n";
  return out;
}

inline std::string comparison_to_json(const ComparisonTable& t) {
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const auto& r : t.rows)
    rows.push_back({{"perturbation", r.perturbation},
                    {"metric", r.metric},
                    {"component", r.component},
                    {"class", r.cls},
                    {"value", r.value}});
  nlohmann::ordered_json doc;
  doc["rows"] = rows;
  return doc.dump(2) + "\n";
}

/// Looks up one value; throws if absent.
inline double lookup(const ComparisonTable& t, std::string_view perturbation, std::string_view metric,
                     std::string_view component, std::string_view cls) {
  for (const auto& r : t.rows)
    if (r.perturbation == perturbation && r.metric == metric && r.component == component && r.cls == cls)
      return r.value;
  throw Error("no comparison row for " + std::string(perturbation) + "/" + std::string(metric) + "/" +
              std::string(component) + "/" + std::string(cls));
}

}  // namespace teta
