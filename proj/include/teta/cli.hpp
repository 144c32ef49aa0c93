#pragma once

#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "teta/annot_model.hpp"
#include "teta/harness.hpp"
#include "teta/ingest.hpp"
#include "teta/teta_core.hpp"

namespace teta::cli {

inline constexpr const char* kVersion = "0.1.0";

enum ExitCode : int { kOk = 0, kBadFlags = 2, kParseFailure = 3, kEvalFailure = 4 };

/// Flag misuse detected after CLI11 parsing.
class UsageError : public Error {
 public:
  using Error::Error;
};

inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream ss;
  ss << std::hex << std::setw(16) << std::setfill('0') << v;
  return ss.str();
}

/// Provenance record written next to every output.
struct RunManifest {
  std::vector<std::string> command_line;
  std::string config_hash;
  std::vector<std::pair<std::string, std::string>> input_digests;  // (path, fnv1a64)
  std::string tool_version = kVersion;
  std::string timestamp;

  std::string to_json() const {
    nlohmann::ordered_json j;
    j["command_line"] = command_line;
    j["config_hash"] = config_hash;
    j["inputs"] = nlohmann::ordered_json::array();
    for (const auto& [path, digest] : input_digests) j["inputs"].push_back({{"path", path}, {"fnv1a64", digest}});
    j["tool_version"] = tool_version;
    j["timestamp"] = timestamp;
    return j.dump(2) + "\n";
  }
};

inline std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Hash of the subcommand and every flag except --jobs, which never changes outputs.
inline RunManifest make_manifest(const std::vector<std::string>& args, const std::vector<std::string>& inputs) {
  RunManifest m;
  m.command_line = args;
  std::string canon;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--jobs" || args[i] == "-j") {
      ++i;
      continue;
    }
    if (args[i].rfind("--jobs=", 0) == 0) continue;
    canon += args[i];
    canon += '\x1f';
  }
  m.config_hash = hex64(fnv1a64(canon));
  for (const auto& path : inputs) m.input_digests.emplace_back(path, hex64(fnv1a64(read_file(path))));
  m.timestamp = utc_timestamp();
  return m;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

inline void write_manifest(const std::filesystem::path& output, const RunManifest& m) {
  write_text(output.string() + ".manifest.json", m.to_json());
}

inline Dataset load(const std::string& path, const std::string& format_flag, Role role, const std::string& sequence_id,
                    std::optional<std::int64_t> top_k = std::nullopt) {
  const std::string text = read_file(path);
  IngestOptions opts;
  opts.format = format_flag == "auto" ? detect_format(path, text) : *format_from_string(format_flag);
  opts.role = role;
  if (opts.format != FormatKind::canonical_json && role == Role::both) opts.role = Role::gt;
  opts.sequence_id = sequence_id;
  opts.top_k_per_frame = top_k;
  return parse(text, opts);
}

inline std::vector<double> parse_double_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw UsageError("bad number '" + item + "'");
    } catch (const std::logic_error&) {
      throw UsageError("bad number '" + item + "'");
    }
  }
  return out;
}

struct EvalFlags {
  double alpha = 0.5;
  double margin = 0.5;
  std::string mode = "incomplete";
  std::int64_t top_k = 0;
  std::string freq_thresholds = "10,100";
  CLI::Option* margin_opt = nullptr;
  CLI::Option* top_k_opt = nullptr;

  void add_to(CLI::App& app) {
    app.add_option("--alpha", alpha, "IoU threshold for match candidates")->check(CLI::Range(0.0, 1.0));
    margin_opt = app.add_option("--margin", margin, "cluster IoU margin r")->check(CLI::Range(0.0, 1.0));
    app.add_option("--mode", mode, "annotation mode")
        ->check(CLI::IsMember({"incomplete", "complete", "single"}));
    top_k_opt = app.add_option("--top-k", top_k, "keep the k best predictions per frame")->check(CLI::PositiveNumber);
    app.add_option("--freq-thresholds", freq_thresholds, "rare_max,common_max gt track counts");
  }

  EvalConfig to_config() const {
    EvalConfig cfg;
    cfg.alpha = alpha;
    cfg.margin_r = margin;
    cfg.mode = mode == "complete" ? AnnotationMode::complete
               : mode == "single" ? AnnotationMode::single_category
                                  : AnnotationMode::incomplete;
    if (cfg.mode == AnnotationMode::single_category) {
      if (margin_opt->count() > 0 && margin != 0.0)
        throw UsageError("--mode single fixes the margin at 0; drop --margin");
      cfg.margin_r = 0.0;
    }
    if (top_k_opt->count() > 0) cfg.top_k = top_k;
    const auto t = parse_double_list(freq_thresholds);
    if (t.size() != 2 || t[0] != std::floor(t[0]) || t[1] != std::floor(t[1]))
      throw UsageError("--freq-thresholds expects two integers");
    cfg.rare_max = static_cast<std::int64_t>(t[0]);
    cfg.common_max = static_cast<std::int64_t>(t[1]);
    try {
      cfg.validate();
    } catch (const Error& e) {
      throw UsageError(e.what());
    }
    return cfg;
  }
};

inline const std::vector<std::string> kFormatChoices{"auto", "canonical_json", "mot_csv", "cocovid_json"};

/// Runs the command line; returns the process exit code.
inline int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args(argv + 1, argv + argc);
  CLI::App app{"Tracking evaluation: TETA, HOTA and CLEAR metrics, converters and perturbation harness", "teta"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  // evaluate
  auto* evaluate_cmd = app.add_subcommand("evaluate", "score predictions against ground truth with TETA");
  std::string gt_path, pred_path, gt_format = "auto", pred_format = "auto", out_path, table_path, seq_id = "mot";
  unsigned jobs = 1;
  EvalFlags eval_flags;
  evaluate_cmd->add_option("--gt", gt_path, "ground-truth file")->required();
  evaluate_cmd->add_option("--pred", pred_path, "prediction file")->required();
  evaluate_cmd->add_option("--gt-format", gt_format)->check(CLI::IsMember(kFormatChoices));
  evaluate_cmd->add_option("--pred-format", pred_format)->check(CLI::IsMember(kFormatChoices));
  evaluate_cmd->add_option("--sequence-id", seq_id, "sequence id for MOT CSV inputs");
  evaluate_cmd->add_option("--out", out_path, "report JSON path");
  evaluate_cmd->add_option("--table", table_path, "percent table path");
  evaluate_cmd->add_option("--jobs,-j", jobs)->check(CLI::PositiveNumber);
  eval_flags.add_to(*evaluate_cmd);

  // convert
  auto* convert_cmd = app.add_subcommand("convert", "convert between annotation formats");
  std::string in_path, from = "auto", to, role_flag = "auto";
  std::string convert_out;
  convert_cmd->add_option("--in", in_path)->required();
  convert_cmd->add_option("--out", convert_out)->required();
  convert_cmd->add_option("--from", from)->check(CLI::IsMember(kFormatChoices));
  convert_cmd->add_option("--to", to)->required()->check(CLI::IsMember({"canonical_json", "mot_csv", "cocovid_json"}));
  convert_cmd->add_option("--role", role_flag)->check(CLI::IsMember({"auto", "gt", "pred", "both"}));
  convert_cmd->add_option("--sequence-id", seq_id);

  // perturb
  auto* perturb_cmd = app.add_subcommand("perturb", "apply a synthetic perturbation to predictions");
  std::string kind, perturb_pred, perturb_out, perturb_gt, perturb_gt_out;
  double rate = 0.0, score = 0.01;
  std::int64_t copies = 1, merge_n = 1, period = 2;
  std::uint64_t seed = 0;
  perturb_cmd->add_option("--pred", perturb_pred)->required();
  perturb_cmd->add_option("--out", perturb_out)->required();
  perturb_cmd->add_option("--kind", kind)
      ->required()
      ->check(CLI::IsMember({"class_noise", "copy_paste", "merge_tail", "fragment", "tcc"}));
  auto* rate_opt = perturb_cmd->add_option("--rate", rate)->check(CLI::Range(0.0, 1.0));
  auto* seed_opt = perturb_cmd->add_option("--seed", seed);
  perturb_cmd->add_option("--copies", copies)->check(CLI::PositiveNumber);
  perturb_cmd->add_option("--score", score)->check(CLI::Range(0.0, 1.0));
  perturb_cmd->add_option("--n", merge_n)->check(CLI::PositiveNumber);
  perturb_cmd->add_option("--period", period)->check(CLI::Range(std::int64_t{2}, std::numeric_limits<std::int64_t>::max()));
  perturb_cmd->add_option("--gt", perturb_gt, "ground truth (merge_tail only)");
  perturb_cmd->add_option("--gt-out", perturb_gt_out, "relabelled ground truth (merge_tail only)");
  perturb_cmd->add_option("--sequence-id", seq_id);

  // stats
  auto* stats_cmd = app.add_subcommand("stats", "dataset statistics");
  stats_cmd->require_subcommand(1);
  auto* cdf_cmd = stats_cmd->add_subcommand("overlap-cdf", "CDF of max inter-object IoU over gt boxes");
  std::string stats_gt, stats_out, thresholds_flag;
  cdf_cmd->add_option("--gt", stats_gt)->required();
  cdf_cmd->add_option("--out", stats_out, "CSV path (stdout when omitted)");
  cdf_cmd->add_option("--thresholds", thresholds_flag, "comma-separated ascending thresholds");
  cdf_cmd->add_option("--sequence-id", seq_id);

  // compare
  auto* compare_cmd = app.add_subcommand("compare", "TETA vs HOTA vs CLEAR under perturbations");
  std::string cmp_gt, cmp_pred, out_csv, out_json;
  std::vector<std::string> perturb_specs;
  EvalFlags cmp_flags;
  compare_cmd->add_option("--gt", cmp_gt)->required();
  compare_cmd->add_option("--pred", cmp_pred)->required();
  compare_cmd->add_option("--perturb", perturb_specs, "kind:key=value,... (repeatable)");
  compare_cmd->add_option("--out-csv", out_csv);
  compare_cmd->add_option("--out-json", out_json);
  compare_cmd->add_option("--jobs,-j", jobs)->check(CLI::PositiveNumber);
  compare_cmd->add_option("--sequence-id", seq_id);
  cmp_flags.add_to(*compare_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kOk : kBadFlags;
  }

  // Phase tags route failures to the documented exit codes.
  enum class Phase { flags, parse, eval } phase = Phase::flags;
  try {
    if (*evaluate_cmd) {
      const EvalConfig cfg = eval_flags.to_config();
      phase = Phase::parse;
      const Dataset gt = load(gt_path, gt_format, Role::gt, seq_id);
      const Dataset pred = load(pred_path, pred_format, Role::pred, seq_id);
      phase = Phase::eval;
      const TetaReport report = evaluate(gt, pred, cfg, jobs);
      const std::string table = report_to_table(report);
      out << table;
      if (!out_path.empty()) {
        write_text(out_path, report_to_json(report));
        write_manifest(out_path, make_manifest(args, {gt_path, pred_path}));
      }
      if (!table_path.empty()) write_text(table_path, table);
      return kOk;
    }
    if (*convert_cmd) {
      const FormatKind to_kind = *format_from_string(to);
      Role role = role_flag == "gt" ? Role::gt : role_flag == "pred" ? Role::pred : Role::both;
      phase = Phase::parse;
      const std::string text = read_file(in_path);
      const FormatKind from_kind = from == "auto" ? detect_format(in_path, text) : *format_from_string(from);
      if (role_flag == "auto")
        role = (from_kind == FormatKind::canonical_json && to_kind == FormatKind::canonical_json) ? Role::both : Role::gt;
      if (role == Role::both && (from_kind != FormatKind::canonical_json || to_kind != FormatKind::canonical_json)) {
        phase = Phase::flags;
        throw UsageError("--role both needs canonical_json on both sides");
      }
      IngestOptions opts;
      opts.format = from_kind;
      opts.role = role;
      opts.sequence_id = seq_id;
      const Dataset ds = parse(text, opts);
      phase = Phase::eval;
      write_text(convert_out, write(ds, to_kind, role));
      write_manifest(convert_out, make_manifest(args, {in_path}));
      return kOk;
    }
    if (*perturb_cmd) {
      if ((kind == "class_noise" || kind == "fragment") && seed_opt->count() == 0)
        throw UsageError("--kind " + kind + " requires --seed");
      if (kind == "class_noise" && rate_opt->count() == 0) throw UsageError("--kind class_noise requires --rate");
      if (kind == "merge_tail" && (perturb_gt.empty() || perturb_gt_out.empty()))
        throw UsageError("--kind merge_tail requires --gt and --gt-out");
      phase = Phase::parse;
      const Dataset pred = load(perturb_pred, "auto", Role::pred, seq_id);
      std::vector<std::string> inputs{perturb_pred};
      phase = Phase::eval;
      Dataset result;
      if (kind == "class_noise") {
        result = inject_class_noise(pred, rate, seed);
      } else if (kind == "copy_paste") {
        result = copy_paste_tracks(pred, copies, score);
      } else if (kind == "fragment") {
        result = fragment_tracks(pred, period, seed);
      } else if (kind == "tcc") {
        result = temporal_class_correction(pred);
      } else {
        phase = Phase::parse;
        const Dataset gt = load(perturb_gt, "auto", Role::gt, seq_id);
        inputs.push_back(perturb_gt);
        phase = Phase::eval;
        auto [g, p] = merge_tail_classes(gt, pred, merge_n);
        result = std::move(p);
        write_text(perturb_gt_out, write_canonical(g));
        write_manifest(perturb_gt_out, make_manifest(args, inputs));
      }
      write_text(perturb_out, write_canonical(result));
      write_manifest(perturb_out, make_manifest(args, inputs));
      return kOk;
    }
    if (*stats_cmd) {
      const auto thresholds = thresholds_flag.empty() ? default_overlap_thresholds() : parse_double_list(thresholds_flag);
      for (std::size_t i = 0; i < thresholds.size(); ++i)
        if (!(thresholds[i] >= 0.0 && thresholds[i] <= 1.0) || (i > 0 && thresholds[i] <= thresholds[i - 1]))
          throw UsageError("--thresholds must be ascending values in [0, 1]");
      phase = Phase::parse;
      const Dataset gt = load(stats_gt, "auto", Role::gt, seq_id);
      phase = Phase::eval;
      const std::string csv = overlap_cdf_csv(overlap_cdf(gt, thresholds));
      if (stats_out.empty()) {
        out << csv;
      } else {
        write_text(stats_out, csv);
        write_manifest(stats_out, make_manifest(args, {stats_gt}));
      }
      return kOk;
    }
    if (*compare_cmd) {
      const EvalConfig cfg = cmp_flags.to_config();
      std::vector<PerturbSpec> specs;
      for (const auto& s : perturb_specs) {
        try {
          specs.push_back(parse_perturb_spec(s));
        } catch (const Error& e) {
          throw UsageError(e.what());
        }
      }
      phase = Phase::parse;
      const Dataset gt = load(cmp_gt, "auto", Role::gt, seq_id);
      const Dataset pred = load(cmp_pred, "auto", Role::pred, seq_id);
      phase = Phase::eval;
      const ComparisonTable table = compare_metrics(gt, pred, specs, cfg, jobs);
      const std::string csv = comparison_to_csv(table);
      if (out_csv.empty() && out_json.empty()) out << csv;
      const auto manifest = make_manifest(args, {cmp_gt, cmp_pred});
      if (!out_csv.empty()) {
        write_text(out_csv, csv);
        write_manifest(out_csv, manifest);
      }
      if (!out_json.empty()) {
        write_text(out_json, comparison_to_json(table));
        write_manifest(out_json, manifest);
      }
      return kOk;
    }
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kBadFlags;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    switch (phase) {
      case Phase::flags: return kBadFlags;
      case Phase::parse: return kParseFailure;
      case Phase::eval: return kEvalFailure;
    }
  }
  return kBadFlags;
}

}  // namespace teta::cli
