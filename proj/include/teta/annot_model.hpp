#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

namespace teta {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Axis-aligned box in pixels, top-left corner plus extent.
struct BBox {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;

  double area() const { return w * h; }
  bool valid() const {
    return std::isfinite(x) && std::isfinite(y) && std::isfinite(w) && std::isfinite(h) && w > 0.0 &&
           h > 0.0;
  }
  friend bool operator==(const BBox&, const BBox&) = default;
};

struct GtBox {
  BBox box;
  std::int64_t track_id = 0;
  std::int64_t category_id = 0;
  friend bool operator==(const GtBox&, const GtBox&) = default;
};

struct PredBox {
  BBox box;
  std::int64_t track_id = 0;
  std::int64_t category_id = 0;
  double score = 1.0;
  friend bool operator==(const PredBox&, const PredBox&) = default;
};

struct Frame {
  std::int64_t frame_index = 0;
  std::vector<GtBox> gt;
  std::vector<PredBox> preds;
  friend bool operator==(const Frame&, const Frame&) = default;
};

struct Sequence {
  std::string sequence_id;
  std::vector<Frame> frames;
  std::optional<double> fps_hint;
  friend bool operator==(const Sequence&, const Sequence&) = default;
};

struct CategoryInfo {
  std::string name;
  std::int64_t gt_track_count = 0;
  friend bool operator==(const CategoryInfo&, const CategoryInfo&) = default;
};

/// category_id -> (name, number of distinct ground-truth tracks).
using CategoryTable = std::map<std::int64_t, CategoryInfo>;

struct Dataset {
  std::vector<Sequence> sequences;
  CategoryTable categories;
  friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// One broken invariant, located by sequence/frame/entity.
struct Violation {
  std::string sequence_id;
  std::optional<std::int64_t> frame_index;
  std::string entity;
  std::string message;
  friend bool operator==(const Violation&, const Violation&) = default;
};

using ValidationReport = std::vector<Violation>;

namespace detail {

inline std::string describe(const Violation& v) {
  std::string s = v.message;
  if (!v.sequence_id.empty()) s += " [sequence " + v.sequence_id;
  if (v.frame_index) s += ", frame " + std::to_string(*v.frame_index);
  if (!v.entity.empty()) s += ", " + v.entity;
  if (!v.sequence_id.empty()) s += "]";
  return s;
}

template <typename Box>
void validate_boxes(const std::vector<Box>& boxes, const char* role, const Sequence& seq, const Frame& f,
                    const CategoryTable& cats, ValidationReport& out) {
  std::set<std::int64_t> seen;
  for (const auto& b : boxes) {
    const std::string entity = std::string(role) + " track " + std::to_string(b.track_id);
    if (b.track_id < 0) out.push_back({seq.sequence_id, f.frame_index, entity, "negative track id"});
    if (b.category_id < 0) out.push_back({seq.sequence_id, f.frame_index, entity, "negative category id"});
    if (!b.box.valid()) out.push_back({seq.sequence_id, f.frame_index, entity, "degenerate box"});
    if (!seen.insert(b.track_id).second)
      out.push_back({seq.sequence_id, f.frame_index, entity, std::string("duplicate ") + role + " identity"});
    if (b.category_id >= 0 && !cats.contains(b.category_id))
      out.push_back({seq.sequence_id, f.frame_index, entity, "unknown category"});
    if constexpr (requires { b.score; }) {
      if (!(b.score >= 0.0 && b.score <= 1.0))
        out.push_back({seq.sequence_id, f.frame_index, entity, "score outside [0,1]"});
    }
  }
}

}  // namespace detail

/// Lists every invariant violation. An empty report means the dataset is usable.
inline ValidationReport validate_dataset(const Dataset& ds) {
  ValidationReport out;
  std::set<std::string> names;
  for (const auto& [id, info] : ds.categories) {
    if (id < 0) out.push_back({"", std::nullopt, "category " + std::to_string(id), "negative category id"});
    if (!names.insert(info.name).second)
      out.push_back({"", std::nullopt, "category " + std::to_string(id), "duplicate category name"});
    if (info.gt_track_count < 0)
      out.push_back({"", std::nullopt, "category " + std::to_string(id), "negative track count"});
  }
  std::set<std::string> seq_ids;
  for (const auto& seq : ds.sequences) {
    if (!seq_ids.insert(seq.sequence_id).second)
      out.push_back({seq.sequence_id, std::nullopt, "", "duplicate sequence id"});
    if (seq.fps_hint && !(*seq.fps_hint > 0.0 && std::isfinite(*seq.fps_hint)))
      out.push_back({seq.sequence_id, std::nullopt, "", "non-positive fps hint"});
    std::set<std::int64_t> frame_ids;
    for (const auto& f : seq.frames) {
      if (f.frame_index < 0) out.push_back({seq.sequence_id, f.frame_index, "", "negative frame index"});
      if (!frame_ids.insert(f.frame_index).second)
        out.push_back({seq.sequence_id, f.frame_index, "", "duplicate frame index"});
      detail::validate_boxes(f.gt, "gt", seq, f, ds.categories, out);
      detail::validate_boxes(f.preds, "pred", seq, f, ds.categories, out);
    }
  }
  return out;
}

/// Number of distinct (sequence, track) ground-truth tracks per category.
inline std::map<std::int64_t, std::int64_t> count_gt_tracks(const Dataset& ds) {
  std::map<std::int64_t, std::set<std::pair<std::size_t, std::int64_t>>> tracks;
  for (std::size_t s = 0; s < ds.sequences.size(); ++s)
    for (const auto& f : ds.sequences[s].frames)
      for (const auto& g : f.gt) tracks[g.category_id].insert({s, g.track_id});
  std::map<std::int64_t, std::int64_t> out;
  for (const auto& [cat, set] : tracks) out[cat] = static_cast<std::int64_t>(set.size());
  return out;
}

/// Sorts sequences, frames and boxes and recomputes per-category track counts.
/// Throws teta::Error when the dataset has validation violations.
inline Dataset canonicalize(Dataset ds) {
  if (auto report = validate_dataset(ds); !report.empty()) {
    std::string msg = "cannot canonicalize invalid dataset: " + detail::describe(report.front());
    if (report.size() > 1) msg += " (+" + std::to_string(report.size() - 1) + " more)";
    throw Error(msg);
  }
  std::sort(ds.sequences.begin(), ds.sequences.end(),
            [](const Sequence& a, const Sequence& b) { return a.sequence_id < b.sequence_id; });
  for (auto& seq : ds.sequences) {
    std::sort(seq.frames.begin(), seq.frames.end(),
              [](const Frame& a, const Frame& b) { return a.frame_index < b.frame_index; });
    for (auto& f : seq.frames) {
      std::sort(f.gt.begin(), f.gt.end(), [](const GtBox& a, const GtBox& b) { return a.track_id < b.track_id; });
      std::sort(f.preds.begin(), f.preds.end(),
                [](const PredBox& a, const PredBox& b) { return a.track_id < b.track_id; });
    }
  }
  const auto counts = count_gt_tracks(ds);
  for (auto& [id, info] : ds.categories) {
    auto it = counts.find(id);
    info.gt_track_count = it == counts.end() ? 0 : it->second;
  }
  return ds;
}

/// Total number of ground-truth and predicted boxes.
inline std::pair<std::size_t, std::size_t> box_counts(const Dataset& ds) {
  std::size_t g = 0, p = 0;
  for (const auto& seq : ds.sequences)
    for (const auto& f : seq.frames) {
      g += f.gt.size();
      p += f.preds.size();
    }
  return {g, p};
}

/// Combines a ground-truth-only and a prediction-only dataset into one, frame by frame.
/// Sequence id sets must match. Categories are the union; gt names win on id collisions.
inline Dataset merge_roles(const Dataset& gt, const Dataset& pred) {
  std::set<std::string> gt_ids, pred_ids;
  for (const auto& s : gt.sequences) gt_ids.insert(s.sequence_id);
  for (const auto& s : pred.sequences) pred_ids.insert(s.sequence_id);
  // A prediction set without any sequence (e.g. an empty results file) means "no predictions".
  if (gt_ids != pred_ids && !pred_ids.empty()) {
    std::string missing;
    for (const auto& id : gt_ids)
      if (!pred_ids.contains(id)) missing += " -" + id;
    for (const auto& id : pred_ids)
      if (!gt_ids.contains(id)) missing += " +" + id;
    throw Error("sequence id mismatch between ground truth and predictions:" + missing);
  }
  Dataset out;
  out.categories = pred.categories;
  for (const auto& [id, info] : gt.categories) out.categories[id] = info;
  // Name collisions across the two tables would break uniqueness; suffix the pred-only entry.
  std::set<std::string> names;
  for (auto& [id, info] : out.categories) {
    while (!names.insert(info.name).second) info.name += "_" + std::to_string(id);
  }
  std::map<std::string, const Sequence*> pred_by_id;
  for (const auto& s : pred.sequences) pred_by_id[s.sequence_id] = &s;
  for (const auto& gs : gt.sequences) {
    Sequence seq;
    seq.sequence_id = gs.sequence_id;
    seq.fps_hint = gs.fps_hint;
    std::map<std::int64_t, Frame> frames;
    for (const auto& f : gs.frames) {
      auto& dst = frames[f.frame_index];
      dst.frame_index = f.frame_index;
      dst.gt = f.gt;
    }
    const auto it = pred_by_id.find(gs.sequence_id);
    for (const auto& f : it == pred_by_id.end() ? std::vector<Frame>{} : it->second->frames) {
      auto& dst = frames[f.frame_index];
      dst.frame_index = f.frame_index;
      dst.preds = f.preds;
    }
    for (auto& [idx, f] : frames) seq.frames.push_back(std::move(f));
    out.sequences.push_back(std::move(seq));
  }
  return canonicalize(std::move(out));
}

}  // namespace teta
