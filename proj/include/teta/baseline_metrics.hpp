#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "teta/annot_model.hpp"
#include "teta/assignment.hpp"

namespace teta {

// Reference HOTA and CLEAR-MOT/IDF1. These share only geometry and the assignment
// solver with the TETA pipeline so the two can be cross-checked.

struct HotaAlphaResult {
  double alpha = 0.0;
  double det_a = 0.0;
  double ass_a = 0.0;
  double hota = 0.0;
  std::int64_t tp = 0;
  std::int64_t fn = 0;
  std::int64_t fp = 0;
};

struct HotaReport {
  std::vector<HotaAlphaResult> per_alpha;
  double det_a = 0.0;  // means over the alpha set
  double ass_a = 0.0;
  double hota = 0.0;
};

/// 0.05, 0.10, ..., 0.95
inline std::vector<double> default_hota_alphas() {
  std::vector<double> a;
  for (int k = 1; k <= 19; ++k) a.push_back(0.05 * k);
  return a;
}

namespace detail {

/// Dense relabeling of the track ids of one sequence.
struct TrackIndex {
  std::map<std::int64_t, std::size_t> gt, pred;
  std::vector<std::int64_t> gt_dets, pred_dets;

  explicit TrackIndex(const Sequence& seq) {
    for (const auto& f : seq.frames) {
      for (const auto& g : f.gt) {
        auto [it, fresh] = gt.try_emplace(g.track_id, gt.size());
        if (fresh) gt_dets.push_back(0);
        ++gt_dets[it->second];
      }
      for (const auto& p : f.preds) {
        auto [it, fresh] = pred.try_emplace(p.track_id, pred.size());
        if (fresh) pred_dets.push_back(0);
        ++pred_dets[it->second];
      }
    }
  }
};

}  // namespace detail

/// HOTA over all boxes of the two datasets (no class filtering) at each alpha.
/// Matching maximizes the count-based global alignment of the track pair plus 1e-3 IoU,
/// over pairs whose IoU reaches alpha.
inline HotaReport hota_evaluate(const Dataset& gt, const Dataset& pred, const std::vector<double>& alphas) {
  const Dataset merged = merge_roles(gt, pred);
  if (box_counts(merged).first == 0) throw Error("hota: ground truth is empty");
  if (alphas.empty()) throw Error("hota: empty alpha set");
  HotaReport report;
  for (double alpha : alphas) {
    HotaAlphaResult res;
    res.alpha = alpha;
    double ass_weighted = 0.0;
    for (const auto& seq : merged.sequences) {
      const detail::TrackIndex idx(seq);
      const std::size_t ng = idx.gt.size(), np = idx.pred.size();
      std::vector<std::vector<double>> sims;
      std::vector<double> potential(ng * np, 0.0);
      for (const auto& f : seq.frames) {
        std::vector<double> s(f.gt.size() * f.preds.size());
        for (std::size_t g = 0; g < f.gt.size(); ++g)
          for (std::size_t p = 0; p < f.preds.size(); ++p) {
            s[g * f.preds.size() + p] = iou(f.gt[g].box, f.preds[p].box);
            if (s[g * f.preds.size() + p] >= alpha)
              potential[idx.gt.at(f.gt[g].track_id) * np + idx.pred.at(f.preds[p].track_id)] += 1.0;
          }
        sims.push_back(std::move(s));
      }
      std::vector<double> alignment(ng * np, 0.0);
      for (std::size_t i = 0; i < ng; ++i)
        for (std::size_t j = 0; j < np; ++j) {
          const double pot = potential[i * np + j];
          alignment[i * np + j] = pot / (static_cast<double>(idx.gt_dets[i] + idx.pred_dets[j]) - pot);
        }
      std::vector<double> matches(ng * np, 0.0);
      for (std::size_t fi = 0; fi < seq.frames.size(); ++fi) {
        const auto& f = seq.frames[fi];
        const auto& s = sims[fi];
        const std::size_t fg = f.gt.size(), fp = f.preds.size();
        CostMatrix score(fg, fp);
        for (std::size_t g = 0; g < fg; ++g)
          for (std::size_t p = 0; p < fp; ++p)
            if (s[g * fp + p] >= alpha)
              score(g, p) = alignment[idx.gt.at(f.gt[g].track_id) * np + idx.pred.at(f.preds[p].track_id)] +
                            1e-3 * s[g * fp + p];
        std::int64_t n = 0;
        for (auto [g, p] : solve_max_assignment(score).pairs) {
          if (s[g * fp + p] < alpha) continue;
          ++n;
          matches[idx.gt.at(f.gt[g].track_id) * np + idx.pred.at(f.preds[p].track_id)] += 1.0;
        }
        res.tp += n;
        res.fn += static_cast<std::int64_t>(fg) - n;
        res.fp += static_cast<std::int64_t>(fp) - n;
      }
      for (std::size_t i = 0; i < ng; ++i)
        for (std::size_t j = 0; j < np; ++j) {
          const double m = matches[i * np + j];
          if (m == 0.0) continue;
          ass_weighted += m * (m / (static_cast<double>(idx.gt_dets[i] + idx.pred_dets[j]) - m));
        }
    }
    const std::int64_t det_den = res.tp + res.fn + res.fp;
    res.det_a = det_den > 0 ? static_cast<double>(res.tp) / static_cast<double>(det_den) : 0.0;
    res.ass_a = res.tp > 0 ? ass_weighted / static_cast<double>(res.tp) : 0.0;
    res.hota = std::sqrt(res.det_a * res.ass_a);
    report.per_alpha.push_back(res);
  }
  for (const auto& r : report.per_alpha) {
    report.det_a += r.det_a;
    report.ass_a += r.ass_a;
    report.hota += r.hota;
  }
  const double n = static_cast<double>(report.per_alpha.size());
  report.det_a /= n;
  report.ass_a /= n;
  report.hota /= n;
  return report;
}

struct ClearClassResult {
  std::int64_t category_id = 0;
  std::string name;
  double mota = 0.0;
  double motp = 0.0;
  double idf1 = 0.0;
  std::int64_t idsw = 0;
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t fn = 0;
  std::int64_t num_gt = 0;
  std::int64_t idtp = 0;
  std::int64_t idfp = 0;
  std::int64_t idfn = 0;
};

struct ClearReport {
  std::vector<ClearClassResult> per_class;  // classes with gt presence, ascending id
  double mota = 0.0;                        // macro means
  double motp = 0.0;
  double idf1 = 0.0;
  std::int64_t idsw = 0;  // summed
  std::int64_t fp = 0;
  std::int64_t fn = 0;
};

inline constexpr double kClearIouThreshold = 0.5;

/// Per-class CLEAR-MOT and IDF1. Predictions are grouped by their predicted label.
inline ClearReport clear_evaluate(const Dataset& gt, const Dataset& pred) {
  const Dataset merged = merge_roles(gt, pred);
  if (box_counts(merged).first == 0) throw Error("clear: ground truth is empty");
  ClearReport report;
  for (const auto& [cat, info] : merged.categories) {
    if (info.gt_track_count == 0) continue;
    ClearClassResult r;
    r.category_id = cat;
    r.name = info.name;
    double iou_sum = 0.0;
    for (const auto& seq : merged.sequences) {
      std::map<std::int64_t, std::int64_t> prev_frame_match;  // gt track -> pred track, last frame only
      std::map<std::int64_t, std::int64_t> last_match;        // gt track -> most recent pred track
      std::map<std::pair<std::int64_t, std::int64_t>, std::int64_t> id_pot;
      std::map<std::int64_t, std::int64_t> gt_count, pred_count;
      for (const auto& f : seq.frames) {
        std::vector<const GtBox*> gs;
        std::vector<const PredBox*> ps;
        for (const auto& g : f.gt)
          if (g.category_id == cat) gs.push_back(&g);
        for (const auto& p : f.preds)
          if (p.category_id == cat) ps.push_back(&p);
        r.num_gt += static_cast<std::int64_t>(gs.size());
        for (const auto* g : gs) ++gt_count[g->track_id];
        for (const auto* p : ps) ++pred_count[p->track_id];
        CostMatrix sim(gs.size(), ps.size()), score(gs.size(), ps.size());
        for (std::size_t i = 0; i < gs.size(); ++i)
          for (std::size_t j = 0; j < ps.size(); ++j) {
            sim(i, j) = iou(gs[i]->box, ps[j]->box);
            if (sim(i, j) < kClearIouThreshold) continue;
            ++id_pot[{gs[i]->track_id, ps[j]->track_id}];
            auto it = prev_frame_match.find(gs[i]->track_id);
            const bool continues = it != prev_frame_match.end() && it->second == ps[j]->track_id;
            score(i, j) = sim(i, j) + (continues ? 1000.0 : 0.0);
          }
        std::map<std::int64_t, std::int64_t> this_frame;
        std::int64_t n = 0;
        for (auto [i, j] : solve_max_assignment(score).pairs) {
          if (sim(i, j) < kClearIouThreshold) continue;
          ++n;
          iou_sum += sim(i, j);
          const std::int64_t gtrack = gs[i]->track_id, ptrack = ps[j]->track_id;
          if (auto it = last_match.find(gtrack); it != last_match.end() && it->second != ptrack) ++r.idsw;
          last_match[gtrack] = ptrack;
          this_frame[gtrack] = ptrack;
        }
        prev_frame_match = std::move(this_frame);
        r.tp += n;
        r.fn += static_cast<std::int64_t>(gs.size()) - n;
        r.fp += static_cast<std::int64_t>(ps.size()) - n;
      }
      // Identity matching: one gt trajectory to at most one predicted trajectory.
      std::vector<std::int64_t> gids, pids;
      for (const auto& [id, n] : gt_count) gids.push_back(id);
      for (const auto& [id, n] : pred_count) pids.push_back(id);
      CostMatrix idm(gids.size(), pids.size());
      for (std::size_t i = 0; i < gids.size(); ++i)
        for (std::size_t j = 0; j < pids.size(); ++j) {
          auto it = id_pot.find({gids[i], pids[j]});
          idm(i, j) = it == id_pot.end() ? 0.0 : static_cast<double>(it->second);
        }
      std::int64_t idtp = 0;
      for (auto [i, j] : solve_max_assignment(idm).pairs) idtp += static_cast<std::int64_t>(idm(i, j));
      std::int64_t total_gt = 0, total_pred = 0;
      for (const auto& [id, n] : gt_count) total_gt += n;
      for (const auto& [id, n] : pred_count) total_pred += n;
      r.idtp += idtp;
      r.idfn += total_gt - idtp;
      r.idfp += total_pred - idtp;
    }
    r.mota = r.num_gt > 0 ? 1.0 - static_cast<double>(r.fn + r.fp + r.idsw) / static_cast<double>(r.num_gt) : 0.0;
    r.motp = r.tp > 0 ? iou_sum / static_cast<double>(r.tp) : 0.0;
    const double idf_den = static_cast<double>(r.idtp) + 0.5 * static_cast<double>(r.idfp + r.idfn);
    r.idf1 = idf_den > 0.0 ? static_cast<double>(r.idtp) / idf_den : 0.0;
    report.per_class.push_back(r);
  }
  for (const auto& r : report.per_class) {
    report.mota += r.mota;
    report.motp += r.motp;
    report.idf1 += r.idf1;
    report.idsw += r.idsw;
    report.fp += r.fp;
    report.fn += r.fn;
  }
  if (!report.per_class.empty()) {
    const double n = static_cast<double>(report.per_class.size());
    report.mota /= n;
    report.motp /= n;
    report.idf1 /= n;
  }
  return report;
}

}  // namespace teta
