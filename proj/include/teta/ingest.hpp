#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "teta/annot_model.hpp"

namespace teta {

enum class FormatKind { canonical_json, mot_csv, cocovid_json };
enum class Role { gt, pred, both };

struct IngestOptions {
  FormatKind format = FormatKind::canonical_json;
  Role role = Role::both;
  std::optional<std::int64_t> top_k_per_frame;  // predictions only
  std::string sequence_id = "mot";               // MOT CSV files carry a single unnamed sequence
};

/// Malformed input. `line` is 1-based when the failure can be pinned to a line.
class ParseError : public Error {
 public:
  ParseError(std::optional<std::size_t> line, const std::string& reason)
      : Error(line ? "line " + std::to_string(*line) + ": " + reason : reason), line_(line), reason_(reason) {}
  std::optional<std::size_t> line() const { return line_; }
  const std::string& reason() const { return reason_; }

 private:
  std::optional<std::size_t> line_;
  std::string reason_;
};

inline std::string to_string(FormatKind f) {
  switch (f) {
    case FormatKind::canonical_json: return "canonical_json";
    case FormatKind::mot_csv: return "mot_csv";
    case FormatKind::cocovid_json: return "cocovid_json";
  }
  return "?";
}

inline std::optional<FormatKind> format_from_string(std::string_view s) {
  if (s == "canonical_json" || s == "canonical" || s == "json") return FormatKind::canonical_json;
  if (s == "mot_csv" || s == "mot") return FormatKind::mot_csv;
  if (s == "cocovid_json" || s == "cocovid" || s == "tao") return FormatKind::cocovid_json;
  return std::nullopt;
}

/// Shortest representation that parses back to the same double.
inline std::string format_number(double v) {
  if (v == 0.0) return "0";  // folds -0
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc{}) throw Error("number formatting failed");
  return std::string(buf, end);
}

namespace detail {

using json = nlohmann::json;

inline std::size_t line_of_offset(std::string_view text, std::size_t offset) {
  offset = std::min(offset, text.size());
  return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(offset), '\n'));
}

inline json parse_json_text(std::string_view text) {
  try {
    return json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw ParseError(line_of_offset(text, e.byte == 0 ? 0 : e.byte - 1), "invalid JSON: " + std::string(e.what()));
  }
}

inline const json& require(const json& obj, const char* key, const std::string& where) {
  if (!obj.is_object()) throw ParseError(std::nullopt, where + ": expected object");
  auto it = obj.find(key);
  if (it == obj.end()) throw ParseError(std::nullopt, where + ": missing key \"" + key + "\"");
  return *it;
}

inline std::int64_t as_int(const json& v, const std::string& where) {
  if (v.is_number_integer()) return v.get<std::int64_t>();
  if (v.is_number_float()) {
    const double d = v.get<double>();
    if (std::isfinite(d) && d == std::floor(d)) return static_cast<std::int64_t>(d);
  }
  throw ParseError(std::nullopt, where + ": expected integer");
}

inline double as_double(const json& v, const std::string& where) {
  if (!v.is_number()) throw ParseError(std::nullopt, where + ": expected number");
  return v.get<double>();
}

inline BBox as_bbox(const json& v, const std::string& where) {
  if (!v.is_array() || v.size() != 4) throw ParseError(std::nullopt, where + ": bbox must be [x,y,w,h]");
  BBox b{as_double(v[0], where), as_double(v[1], where), as_double(v[2], where), as_double(v[3], where)};
  if (!b.valid()) throw ParseError(std::nullopt, where + ": degenerate box");
  return b;
}

/// Runs validation and canonicalization, converting violations to ParseError.
inline Dataset finish(Dataset ds) {
  auto report = validate_dataset(ds);
  if (!report.empty()) throw ParseError(std::nullopt, describe(report.front()));
  return canonicalize(std::move(ds));
}

inline Dataset parse_canonical(std::string_view text, Role role) {
  Dataset ds;
  if (text.find_first_not_of(" \t\r\n") == std::string_view::npos) return ds;
  const json doc = parse_json_text(text);
  for (const auto& c : require(doc, "categories", "document")) {
    const std::string where = "category";
    const std::int64_t id = as_int(require(c, "id", where), where);
    const auto& name = require(c, "name", where);
    if (!name.is_string()) throw ParseError(std::nullopt, "category " + std::to_string(id) + ": name must be a string");
    if (ds.categories.contains(id)) throw ParseError(std::nullopt, "duplicate category id " + std::to_string(id));
    ds.categories[id] = CategoryInfo{name.get<std::string>(), 0};
  }
  auto check_cat = [&](std::int64_t cat, const std::string& where) {
    if (!ds.categories.contains(cat))
      throw ParseError(std::nullopt, where + ": unknown category " + std::to_string(cat));
  };
  std::size_t si = 0;
  for (const auto& s : require(doc, "sequences", "document")) {
    const std::string swhere = "sequences[" + std::to_string(si++) + "]";
    Sequence seq;
    const auto& id = require(s, "id", swhere);
    if (!id.is_string()) throw ParseError(std::nullopt, swhere + ": id must be a string");
    seq.sequence_id = id.get<std::string>();
    if (auto it = s.find("fps"); it != s.end()) seq.fps_hint = as_double(*it, swhere + ".fps");
    std::size_t fi = 0;
    for (const auto& f : require(s, "frames", swhere)) {
      const std::string fwhere = swhere + ".frames[" + std::to_string(fi++) + "]";
      Frame frame;
      frame.frame_index = as_int(require(f, "index", fwhere), fwhere + ".index");
      if (role != Role::pred) {
        std::size_t k = 0;
        for (const auto& g : require(f, "gt", fwhere)) {
          const std::string w = fwhere + ".gt[" + std::to_string(k++) + "]";
          GtBox b{as_bbox(require(g, "bbox", w), w), as_int(require(g, "track", w), w), as_int(require(g, "cat", w), w)};
          check_cat(b.category_id, w);
          frame.gt.push_back(b);
        }
      }
      if (role != Role::gt) {
        std::size_t k = 0;
        for (const auto& p : require(f, "pred", fwhere)) {
          const std::string w = fwhere + ".pred[" + std::to_string(k++) + "]";
          PredBox b{as_bbox(require(p, "bbox", w), w), as_int(require(p, "track", w), w),
                    as_int(require(p, "cat", w), w), as_double(require(p, "score", w), w)};
          check_cat(b.category_id, w);
          frame.preds.push_back(b);
        }
      }
      seq.frames.push_back(std::move(frame));
    }
    ds.sequences.push_back(std::move(seq));
  }
  return finish(std::move(ds));
}

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline Dataset parse_mot_csv(std::string_view text, Role role, const std::string& sequence_id) {
  if (role == Role::both) throw ParseError(std::nullopt, "MOT CSV holds one role; choose gt or pred");
  Dataset ds;
  std::map<std::int64_t, Frame> frames;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    const std::string_view raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    const std::string_view line = trim(raw);
    if (line.empty()) continue;
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
      const auto comma = line.find(',', start);
      fields.push_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (fields.size() < 8 || fields.size() > 10)
      throw ParseError(line_no, "expected 8 to 10 comma-separated fields, got " + std::to_string(fields.size()));
    std::vector<double> v(fields.size());
    for (std::size_t k = 0; k < fields.size(); ++k) {
      const auto f = fields[k];
      auto [end, ec] = std::from_chars(f.data(), f.data() + f.size(), v[k]);
      if (ec != std::errc{} || end != f.data() + f.size() || !std::isfinite(v[k]))
        throw ParseError(line_no, "field " + std::to_string(k + 1) + " is not a number: '" + std::string(f) + "'");
    }
    auto integral = [&](std::size_t k, const char* what) {
      if (v[k] != std::floor(v[k])) throw ParseError(line_no, std::string(what) + " must be an integer");
      return static_cast<std::int64_t>(v[k]);
    };
    const std::int64_t frame_idx = integral(0, "frame");
    const std::int64_t track = integral(1, "track id");
    const std::int64_t cls = integral(7, "class");
    const BBox box{v[2], v[3], v[4], v[5]};
    if (frame_idx < 0) throw ParseError(line_no, "negative frame index");
    if (track < 0) throw ParseError(line_no, "negative track id");
    if (cls < 0) throw ParseError(line_no, "negative class");
    if (!box.valid()) throw ParseError(line_no, "degenerate box");
    auto& fr = frames[frame_idx];
    fr.frame_index = frame_idx;
    auto dup = [&](const auto& list) {
      return std::any_of(list.begin(), list.end(), [&](const auto& b) { return b.track_id == track; });
    };
    if (role == Role::gt) {
      if (dup(fr.gt)) throw ParseError(line_no, "duplicate gt identity in frame " + std::to_string(frame_idx));
      fr.gt.push_back(GtBox{box, track, cls});
    } else {
      const double score = v[6];
      if (!(score >= 0.0 && score <= 1.0)) throw ParseError(line_no, "confidence outside [0,1]");
      if (dup(fr.preds)) throw ParseError(line_no, "duplicate pred identity in frame " + std::to_string(frame_idx));
      fr.preds.push_back(PredBox{box, track, cls, score});
    }
    if (!ds.categories.contains(cls)) ds.categories[cls] = CategoryInfo{"class_" + std::to_string(cls), 0};
  }
  if (frames.empty()) return ds;
  Sequence seq;
  seq.sequence_id = sequence_id;
  for (auto& [idx, f] : frames) seq.frames.push_back(std::move(f));
  ds.sequences.push_back(std::move(seq));
  return finish(std::move(ds));
}

inline Dataset parse_cocovid(std::string_view text, Role role) {
  if (role == Role::both) throw ParseError(std::nullopt, "COCO-VID files hold one role; choose gt or pred");
  Dataset ds;
  if (text.find_first_not_of(" \t\r\n") == std::string_view::npos) return ds;
  const json doc = parse_json_text(text);
  for (const auto& c : require(doc, "categories", "document")) {
    const std::int64_t id = as_int(require(c, "id", "category"), "category.id");
    std::string name = "class_" + std::to_string(id);
    if (auto it = c.find("name"); it != c.end() && it->is_string()) name = it->get<std::string>();
    ds.categories[id] = CategoryInfo{name, 0};
  }
  struct VideoInfo {
    std::string name;
    std::optional<double> fps;
  };
  std::map<std::int64_t, VideoInfo> videos;
  for (const auto& v : require(doc, "videos", "document")) {
    const std::int64_t id = as_int(require(v, "id", "video"), "video.id");
    VideoInfo info{std::to_string(id), std::nullopt};
    if (auto it = v.find("name"); it != v.end() && it->is_string()) info.name = it->get<std::string>();
    if (auto it = v.find("fps"); it != v.end() && it->is_number()) info.fps = it->get<double>();
    if (!videos.emplace(id, info).second) throw ParseError(std::nullopt, "duplicate video id " + std::to_string(id));
  }
  struct ImageInfo {
    std::int64_t video_id;
    std::optional<std::int64_t> frame;
  };
  std::map<std::int64_t, ImageInfo> images;
  for (const auto& im : require(doc, "images", "document")) {
    const std::int64_t id = as_int(require(im, "id", "image"), "image.id");
    const std::string where = "image " + std::to_string(id);
    ImageInfo info{as_int(require(im, "video_id", where), where + ".video_id"), std::nullopt};
    if (!videos.contains(info.video_id)) throw ParseError(std::nullopt, where + ": unknown video " + std::to_string(info.video_id));
    if (auto it = im.find("frame_id"); it != im.end()) info.frame = as_int(*it, where + ".frame_id");
    else if (auto it2 = im.find("frame_index"); it2 != im.end()) info.frame = as_int(*it2, where + ".frame_index");
    if (!images.emplace(id, info).second) throw ParseError(std::nullopt, "duplicate image id " + std::to_string(id));
  }
  // Images without an explicit frame id take their order (by image id) within the video.
  std::map<std::int64_t, std::int64_t> order_in_video;
  std::map<std::int64_t, std::int64_t> image_frame;
  for (const auto& [id, info] : images) {
    const std::int64_t ordinal = order_in_video[info.video_id]++;
    image_frame[id] = info.frame.value_or(ordinal);
  }
  std::map<std::int64_t, std::map<std::int64_t, Frame>> frames;  // video -> frame index -> frame
  for (const auto& [id, info] : images) {
    auto& f = frames[info.video_id][image_frame[id]];
    f.frame_index = image_frame[id];
  }
  std::size_t k = 0;
  for (const auto& a : require(doc, "annotations", "document")) {
    const std::string where = "annotations[" + std::to_string(k++) + "]";
    const std::int64_t image_id = as_int(require(a, "image_id", where), where + ".image_id");
    auto im = images.find(image_id);
    if (im == images.end()) throw ParseError(std::nullopt, where + ": unknown image " + std::to_string(image_id));
    const std::int64_t cat = as_int(require(a, "category_id", where), where + ".category_id");
    if (!ds.categories.contains(cat)) throw ParseError(std::nullopt, where + ": unknown category " + std::to_string(cat));
    std::int64_t track = 0;
    if (auto it = a.find("track_id"); it != a.end()) track = as_int(*it, where + ".track_id");
    else if (auto it2 = a.find("instance_id"); it2 != a.end()) track = as_int(*it2, where + ".instance_id");
    else throw ParseError(std::nullopt, where + ": missing track_id");
    const BBox box = as_bbox(require(a, "bbox", where), where);
    auto& f = frames[im->second.video_id][image_frame[image_id]];
    if (role == Role::gt) {
      f.gt.push_back(GtBox{box, track, cat});
    } else {
      double score = 1.0;
      if (auto it = a.find("score"); it != a.end()) score = as_double(*it, where + ".score");
      f.preds.push_back(PredBox{box, track, cat, score});
    }
  }
  for (const auto& [vid, info] : videos) {
    Sequence seq;
    seq.sequence_id = info.name;
    seq.fps_hint = info.fps;
    for (auto& [idx, f] : frames[vid]) seq.frames.push_back(std::move(f));
    ds.sequences.push_back(std::move(seq));
  }
  return finish(std::move(ds));
}

}  // namespace detail

/// Keeps the k highest-scoring predictions of every frame (ties: lower track id first).
/// Ground truth is untouched.
inline Dataset top_k_filter(Dataset ds, std::int64_t k) {
  if (k <= 0) throw Error("top_k must be positive");
  for (auto& seq : ds.sequences)
    for (auto& f : seq.frames) {
      if (static_cast<std::int64_t>(f.preds.size()) <= k) continue;
      std::sort(f.preds.begin(), f.preds.end(), [](const PredBox& a, const PredBox& b) {
        return a.score != b.score ? a.score > b.score : a.track_id < b.track_id;
      });
      f.preds.resize(static_cast<std::size_t>(k));
      std::sort(f.preds.begin(), f.preds.end(), [](const PredBox& a, const PredBox& b) { return a.track_id < b.track_id; });
    }
  return ds;
}

/// Parses `text` in the declared format and returns a canonical dataset.
/// Throws ParseError on malformed input or dangling category references.
inline Dataset parse(std::string_view text, const IngestOptions& opts) {
  Dataset ds;
  switch (opts.format) {
    case FormatKind::canonical_json: ds = detail::parse_canonical(text, opts.role); break;
    case FormatKind::mot_csv: ds = detail::parse_mot_csv(text, opts.role, opts.sequence_id); break;
    case FormatKind::cocovid_json: ds = detail::parse_cocovid(text, opts.role); break;
  }
  if (opts.top_k_per_frame) {
    if (opts.role == Role::gt) throw Error("top_k applies to predictions only");
    ds = top_k_filter(std::move(ds), *opts.top_k_per_frame);
  }
  return ds;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(std::nullopt, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Guesses the format from the extension and, for JSON, the top-level keys.
inline FormatKind detect_format(const std::filesystem::path& path, std::string_view text) {
  const auto ext = path.extension().string();
  if (ext == ".txt" || ext == ".csv") return FormatKind::mot_csv;
  if (text.find("\"videos\"") != std::string_view::npos && text.find("\"annotations\"") != std::string_view::npos)
    return FormatKind::cocovid_json;
  return FormatKind::canonical_json;
}

inline Dataset parse_file(const std::filesystem::path& path, const IngestOptions& opts) {
  return parse(read_file(path), opts);
}

/// Canonical JSON document. Keys appear in schema order; output is deterministic.
inline std::string write_canonical(const Dataset& ds) {
  std::string out;
  auto quote = [&](const std::string& s) { out += nlohmann::json(s).dump(); };
  auto bbox = [&](const BBox& b) {
    out += "[" + format_number(b.x) + "," + format_number(b.y) + "," + format_number(b.w) + "," + format_number(b.h) + "]";
  };
  out += "{\"categories\":[";
  bool first = true;
  for (const auto& [id, info] : ds.categories) {
    if (!first) out += ",";
    first = false;
    out += "{\"id\":" + std::to_string(id) + ",\"name\":";
    quote(info.name);
    out += "}";
  }
  out += "],\"sequences\":[";
  for (std::size_t s = 0; s < ds.sequences.size(); ++s) {
    const auto& seq = ds.sequences[s];
    if (s) out += ",";
    out += "{\"id\":";
    quote(seq.sequence_id);
    if (seq.fps_hint) out += ",\"fps\":" + format_number(*seq.fps_hint);
    out += ",\"frames\":[";
    for (std::size_t fi = 0; fi < seq.frames.size(); ++fi) {
      const auto& f = seq.frames[fi];
      if (fi) out += ",";
      out += "\n{\"index\":" + std::to_string(f.frame_index) + ",\"gt\":[";
      for (std::size_t k = 0; k < f.gt.size(); ++k) {
        const auto& g = f.gt[k];
        if (k) out += ",";
        out += "{\"track\":" + std::to_string(g.track_id) + ",\"cat\":" + std::to_string(g.category_id) + ",\"bbox\":";
        bbox(g.box);
        out += "}";
      }
      out += "],\"pred\":[";
      for (std::size_t k = 0; k < f.preds.size(); ++k) {
        const auto& p = f.preds[k];
        if (k) out += ",";
        out += "{\"track\":" + std::to_string(p.track_id) + ",\"cat\":" + std::to_string(p.category_id) +
               ",\"score\":" + format_number(p.score) + ",\"bbox\":";
        bbox(p.box);
        out += "}";
      }
      out += "]}";
    }
    out += "]}";
  }
  out += "]}\n";
  return out;
}

/// MOT-Challenge rows frame,id,x,y,w,h,conf,class,visibility for one role of a
/// single-sequence dataset. Ground-truth rows carry conf 1; visibility is written as -1.
inline std::string write_mot_csv(const Dataset& ds, Role role) {
  if (role == Role::both) throw Error("MOT CSV holds one role; choose gt or pred");
  if (ds.sequences.size() > 1) throw Error("MOT CSV holds a single sequence; dataset has " + std::to_string(ds.sequences.size()));
  std::string out;
  for (const auto& seq : ds.sequences)
    for (const auto& f : seq.frames) {
      auto row = [&](std::int64_t track, const BBox& b, double conf, std::int64_t cls) {
        out += std::to_string(f.frame_index) + "," + std::to_string(track) + "," + format_number(b.x) + "," +
               format_number(b.y) + "," + format_number(b.w) + "," + format_number(b.h) + "," + format_number(conf) +
               "," + std::to_string(cls) + ",-1\n";
      };
      if (role == Role::gt)
        for (const auto& g : f.gt) row(g.track_id, g.box, 1.0, g.category_id);
      else
        for (const auto& p : f.preds) row(p.track_id, p.box, p.score, p.category_id);
    }
  return out;
}

/// COCO-VID / TAO style document for one role. Videos, images and annotations are
/// numbered from 1 in canonical order.
inline std::string write_cocovid(const Dataset& ds, Role role) {
  if (role == Role::both) throw Error("COCO-VID output holds one role; choose gt or pred");
  using ojson = nlohmann::ordered_json;
  ojson doc;
  doc["videos"] = ojson::array();
  doc["images"] = ojson::array();
  doc["annotations"] = ojson::array();
  doc["categories"] = ojson::array();
  std::int64_t video_id = 0, image_id = 0, ann_id = 0;
  for (const auto& seq : ds.sequences) {
    ojson v;
    v["id"] = ++video_id;
    v["name"] = seq.sequence_id;
    if (seq.fps_hint) v["fps"] = *seq.fps_hint;
    doc["videos"].push_back(v);
    for (const auto& f : seq.frames) {
      ojson im;
      im["id"] = ++image_id;
      im["video_id"] = video_id;
      im["frame_id"] = f.frame_index;
      doc["images"].push_back(im);
      auto ann = [&](std::int64_t track, std::int64_t cat, const BBox& b) {
        ojson a;
        a["id"] = ++ann_id;
        a["image_id"] = image_id;
        a["video_id"] = video_id;
        a["track_id"] = track;
        a["category_id"] = cat;
        a["bbox"] = {b.x, b.y, b.w, b.h};
        return a;
      };
      if (role == Role::gt) {
        for (const auto& g : f.gt) doc["annotations"].push_back(ann(g.track_id, g.category_id, g.box));
      } else {
        for (const auto& p : f.preds) {
          auto a = ann(p.track_id, p.category_id, p.box);
          a["score"] = p.score;
          doc["annotations"].push_back(a);
        }
      }
    }
  }
  for (const auto& [id, info] : ds.categories) doc["categories"].push_back({{"id", id}, {"name", info.name}});
  return doc.dump() + "\n";
}

inline std::string write(const Dataset& ds, FormatKind format, Role role) {
  switch (format) {
    case FormatKind::canonical_json: return write_canonical(ds);
    case FormatKind::mot_csv: return write_mot_csv(ds, role);
    case FormatKind::cocovid_json: return write_cocovid(ds, role);
  }
  return {};
}

}  // namespace teta
