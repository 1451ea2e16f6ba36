// ctcpipe: batch CTC detection over multi-channel sample directories.
//
//   ctcpipe detect    <input-dir> [--config FILE] [--output FILE] ...
//   ctcpipe calibrate <candidates.jsonl> [--grid-step S] [--output FILE]
//   ctcpipe generate  (--preset NAME | --spec FILE | --n N --positives P) --output DIR
//   ctcpipe report    <results.jsonl> [--top K]
//
// Exit codes: 0 clean, 1 fatal (config, I/O, nothing to do), 2 partial
// (some samples failed a stage).

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <fmt/core.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "ctcpipe/ctcpipe.hpp"

namespace {

namespace fs = std::filesystem;
using ctc::json;

constexpr int kExitOk = 0;
constexpr int kExitFatal = 1;
constexpr int kExitPartial = 2;

void init_logging() {
  auto logger = spdlog::stderr_color_mt("ctcpipe");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  spdlog::set_level(spdlog::level::info);
  if (const char* env = std::getenv("CTCPIPE_LOG")) spdlog::set_level(spdlog::level::from_str(env));
}

struct CommonOverrides {
  std::optional<std::string> semantics;
  std::optional<double> r1;
  std::optional<double> r2;
  std::optional<double> microns_per_pixel;
  std::optional<unsigned> workers;
  std::optional<int> padding;
};

// --- detect ---------------------------------------------------------------

struct DetectArgs {
  std::string input;
  std::optional<std::string> config;
  std::string output = "results.jsonl";
  std::optional<std::string> report;
  std::optional<std::string> labels;
  bool timings = false;
  CommonOverrides overrides;
};

ctc::RunConfig build_config(const DetectArgs& a) {
  json j = a.config ? ctc::read_json_file(*a.config) : json::object();
  const auto& o = a.overrides;
  if (o.semantics) j["semantics"] = *o.semantics;
  if (o.r1) j["r1"] = *o.r1;
  if (o.r2) j["r2"] = *o.r2;
  if (o.microns_per_pixel) j["microns_per_pixel"] = *o.microns_per_pixel;
  if (o.workers) j["workers"] = *o.workers;
  if (o.padding) j["crop_padding"] = *o.padding;
  return ctc::run_config_from_json(j);
}

int cmd_detect(const DetectArgs& a) {
  ctc::RunConfig cfg;
  std::vector<std::string> ids;
  std::optional<std::map<std::string, bool>> labels;
  try {
    cfg = build_config(a);
    ids = ctc::list_samples(a.input);
    if (ids.empty()) {
      spdlog::error("no samples found in {}", a.input);
      return kExitFatal;
    }
    const fs::path manifest = a.labels ? fs::path(*a.labels) : fs::path(a.input) / "manifest.json";
    if (a.labels || fs::exists(manifest)) {
      auto l = ctc::read_manifest_labels(manifest);
      const bool covers = l.size() == ids.size() &&
                          std::all_of(ids.begin(), ids.end(), [&](const std::string& id) { return l.contains(id); });
      if (covers) {
        labels = std::move(l);
      } else if (a.labels) {
        spdlog::error("labels in {} do not match the samples in {}", manifest.string(), a.input);
        return kExitFatal;
      } else {
        spdlog::warn("ignoring {}: its labels do not match the sample directories", manifest.string());
      }
    }
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitFatal;
  }

  const ctc::Pipeline pipeline(cfg.stage1, cfg.stage2, cfg.pipeline);
  spdlog::info("processing {} samples with {} worker(s)", ids.size(), cfg.workers);
  const fs::path root = a.input;
  const auto results =
      pipeline.run_batch(ids, [&](const std::string& id) { return ctc::load_sample(root, id); }, cfg.workers);

  std::ofstream out(a.output);
  if (!out) {
    spdlog::error("cannot write {}", a.output);
    return kExitFatal;
  }
  std::size_t errors = 0;
  for (const auto& r : results) {
    std::optional<bool> label;
    if (labels) label = labels->at(r.sample_id);
    out << ctc::to_json(r, label, a.timings).dump() << '\n';
    if (r.outcome == ctc::Outcome::error) {
      ++errors;
      spdlog::warn("{}: {}", r.sample_id, r.error);
    }
  }
  const auto report = ctc::evaluate_batch(results, labels ? &*labels : nullptr);
  const fs::path report_path = a.report ? fs::path(*a.report) : fs::path(a.output).replace_extension(".report.json");
  std::ofstream(report_path) << ctc::to_json(report).dump(2) << '\n';

  fmt::print("{} samples: {} evaluated, {} no CK, {} no DAPI, {} errors; {} predicted positive\n", report.n_samples,
             report.n_evaluated, report.n_no_ck, report.n_no_dapi, report.n_errors, report.n_predicted_positive);
  if (report.accuracy) fmt::print("accuracy {:.2f}%\n", *report.accuracy * 100.0);
  fmt::print("results: {}\nreport: {}\n", a.output, report_path.string());
  return errors > 0 ? kExitPartial : kExitOk;
}

// --- calibrate ------------------------------------------------------------

struct CalibrateArgs {
  std::string input;
  double grid_step = 0.01;
  std::string semantics = "exclusionary";
  std::string output = "params.json";
};

int cmd_calibrate(const CalibrateArgs& a) {
  try {
    const auto semantics = ctc::parse_semantics(a.semantics);
    std::ifstream in(a.input);
    if (!in) throw ctc::Error(ctc::ErrorCode::io, "cannot open " + a.input);
    std::vector<ctc::LabeledOverlap> records;
    std::string line;
    for (std::size_t n = 1; std::getline(in, line); ++n) {
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      try {
        const auto j = json::parse(line);
        records.push_back({j.at("p_ck_given_c").get<double>(), j.at("p_cd45_given_c").get<double>(),
                           j.at("label").get<bool>()});
      } catch (const json::exception& e) {
        throw ctc::Error(ctc::ErrorCode::invalid_argument, a.input + ":" + std::to_string(n) + ": " + e.what());
      }
    }
    if (records.empty()) throw ctc::Error(ctc::ErrorCode::uncalibratable, "no labelled records in " + a.input);
    const auto r = ctc::calibrate_thresholds(records, a.grid_step, semantics);
    std::ofstream(a.output) << ctc::params_to_json(r.params).dump(2) << '\n';
    fmt::print("r1 {} r2 {} semantics {}\nF1 {:.4f} (tp {} fp {} fn {} tn {}) over {} candidates\nparams: {}\n",
               r.params.r1, r.params.r2, ctc::to_string(r.params.semantics), r.f1, r.tp, r.fp, r.fn, r.tn,
               records.size(), a.output);
    return kExitOk;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitFatal;
  }
}

// --- generate -------------------------------------------------------------

struct GenerateArgs {
  std::optional<std::string> preset;
  std::optional<std::string> spec;
  std::optional<std::size_t> n;
  std::size_t positives = 0;
  std::string output;
  std::uint64_t seed = 1;
  int width = 128;
  int height = 128;
  int noise_amplitude = 16;
  CommonOverrides overrides;
};

int cmd_generate(const GenerateArgs& a) {
  try {
    ctc::DecisionParams params;
    if (a.overrides.r1) params.r1 = *a.overrides.r1;
    if (a.overrides.r2) params.r2 = *a.overrides.r2;
    ctc::validate(params);

    std::vector<ctc::synth::PlannedScene> scenes;
    int padding = 0;
    if (a.spec) {
      const auto doc = ctc::read_json_file(*a.spec);
      const auto list = doc.is_array() ? doc : json::array({doc});
      for (std::size_t i = 0; i < list.size(); ++i) {
        auto s = ctc::scene_spec_from_json(list[i]);
        if (!list[i].contains("sample_id")) s.sample_id = "scene_" + std::to_string(i);
        for (const auto& d : s.dapi_blobs) padding = std::max(padding, 2 * d.radius + 2);
        scenes.push_back({std::move(s), false});
      }
    } else {
      ctc::synth::BatchSpec b;
      if (a.preset == "paper-train-shape") {
        b.n = 46;
        b.positives = 36;
      } else if (a.preset == "paper-test-shape") {
        b.n = 420;
        b.positives = 0;
      } else if (a.preset) {
        throw ctc::Error(ctc::ErrorCode::invalid_argument, "unknown preset '" + *a.preset + "'");
      } else if (a.n) {
        b.n = *a.n;
        b.positives = a.positives;
      } else {
        throw ctc::Error(ctc::ErrorCode::invalid_argument, "one of --preset, --spec or --n is required");
      }
      if (a.width < 1 || a.height < 1) {
        throw ctc::Error(ctc::ErrorCode::invalid_argument,
                         "dimensions " + std::to_string(a.width) + "x" + std::to_string(a.height) + " are empty");
      }
      b.seed = a.seed;
      b.width = a.width;
      b.height = a.height;
      b.noise = {a.noise_amplitude > 0 ? ctc::synth::NoiseKind::gaussian : ctc::synth::NoiseKind::none,
                 a.noise_amplitude};
      b.params = params;
      scenes = ctc::synth::plan_batch(b);
      padding = 2 * b.dapi_radius_max + 2;
    }
    // Validate every scene before touching the output directory.
    for (std::size_t i = 0; i < scenes.size(); ++i) {
      try {
        (void)ctc::synth::generate(scenes[i].spec, params);
      } catch (const ctc::Error& e) {
        throw ctc::Error(e.code(), "scene " + std::to_string(i) + " (" + scenes[i].spec.sample_id + "): " + e.what());
      }
    }
    const auto summary = ctc::write_dataset(scenes, a.output, params, padding, a.seed);
    fmt::print("{} samples ({} positive, {} negative) written to {}\n", summary.n, summary.positives,
               summary.n - summary.positives, a.output);
    return kExitOk;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitFatal;
  }
}

// --- report ---------------------------------------------------------------

struct ReportArgs {
  std::string input;
  std::size_t top = 5;
  std::optional<std::string> json_out;
};

int cmd_report(const ReportArgs& a) {
  std::ifstream in(a.input);
  if (!in) {
    spdlog::error("cannot open {}", a.input);
    return kExitFatal;
  }
  std::vector<ctc::ParsedResult> parsed;
  std::string line;
  std::size_t corrupt = 0;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      parsed.push_back(ctc::sample_result_from_json(json::parse(line)));
    } catch (const std::exception& e) {
      ++corrupt;
      spdlog::warn("{}:{}: skipping corrupt line ({})", a.input, n, e.what());
    }
  }
  if (parsed.empty()) {
    fmt::print("0 samples\n");
    return kExitOk;
  }

  std::vector<ctc::SampleResult> results;
  results.reserve(parsed.size());
  for (const auto& p : parsed) results.push_back(p.result);
  const auto labels = ctc::collect_labels(parsed);
  ctc::BatchReport rep;
  try {
    rep = ctc::evaluate_batch(results, labels ? &*labels : nullptr);
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitFatal;
  }

  fmt::print("{} samples\n", rep.n_samples);
  fmt::print("  no CK detected     {}\n", rep.n_no_ck);
  fmt::print("  no DAPI detected   {}\n", rep.n_no_dapi);
  fmt::print("  evaluated          {}\n", rep.n_evaluated);
  fmt::print("  errors             {}\n", rep.n_errors);
  fmt::print("predicted positive   {}\n", rep.n_predicted_positive);
  fmt::print("predicted negative   {}\n", rep.n_predicted_negative);
  if (rep.accuracy) {
    fmt::print("accuracy {:.2f}% ({}/{})\n", *rep.accuracy * 100.0, rep.n_correct, rep.n_samples);
  }
  if (rep.stage3_accuracy) {
    fmt::print("stage-3 accuracy {:.2f}% ({}/{})\n", *rep.stage3_accuracy * 100.0, rep.n_correct_evaluated,
               rep.n_evaluated);
  }

  std::vector<const ctc::Verdict*> verdicts;
  for (const auto& r : results) {
    for (const auto& v : r.verdicts) verdicts.push_back(&v);
  }
  std::stable_sort(verdicts.begin(), verdicts.end(), [](const ctc::Verdict* x, const ctc::Verdict* y) {
    return x->breakdown.confidence > y->breakdown.confidence;
  });
  if (!verdicts.empty() && a.top > 0) {
    fmt::print("top {} verdicts by confidence\n", std::min(a.top, verdicts.size()));
    for (std::size_t i = 0; i < std::min(a.top, verdicts.size()); ++i) {
      const auto& v = *verdicts[i];
      fmt::print("  {:<32} {} confidence {:.4f}  p(CK|C) {:.3f}  p(CD45|C) {:.3f}\n", v.candidate_id,
                 v.is_ctc ? "CTC    " : "non-CTC", v.breakdown.confidence, v.breakdown.p_ck_given_c,
                 v.breakdown.p_cd45_given_c);
    }
  }
  if (corrupt > 0) fmt::print("warning: {} corrupt line(s) skipped\n", corrupt);
  if (a.json_out) std::ofstream(*a.json_out) << ctc::to_json(rep).dump(2) << '\n';
  return kExitOk;
}

void add_overrides(CLI::App* cmd, CommonOverrides& o, bool full) {
  cmd->add_option("--r1", o.r1, "CK overlap threshold in [0,1]");
  cmd->add_option("--r2", o.r2, "CD45 overlap threshold in [0,1]");
  if (!full) return;
  cmd->add_option("--semantics", o.semantics, "exclusionary | paper-literal");
  cmd->add_option("--microns-per-pixel", o.microns_per_pixel, "pixel pitch; enables the 5 um size filter");
  cmd->add_option("--workers", o.workers, "worker threads");
  cmd->add_option("--padding", o.padding, "crop padding around CK boxes, in pixels");
}

}  // namespace

int main(int argc, char** argv) {
  init_logging();
  CLI::App app{"CTC detection pipeline"};
  app.require_subcommand(1);

  DetectArgs detect;
  auto* d = app.add_subcommand("detect", "run the pipeline over a directory of samples");
  d->add_option("input", detect.input, "directory with one sub-directory per sample")->required();
  d->add_option("--config", detect.config, "run configuration or calibrated params (JSON)");
  d->add_option("--output,-o", detect.output, "results file (JSON lines)");
  d->add_option("--report", detect.report, "batch report path (default: <output>.report.json)");
  d->add_option("--labels", detect.labels, "manifest.json with sample labels");
  d->add_flag("--timings", detect.timings, "include per-stage timings in results");
  add_overrides(d, detect.overrides, true);

  CalibrateArgs calibrate;
  auto* c = app.add_subcommand("calibrate", "grid-search r1/r2 on labelled overlaps");
  c->add_option("input", calibrate.input, "JSON lines with p_ck_given_c, p_cd45_given_c, label")->required();
  c->add_option("--grid-step", calibrate.grid_step, "grid spacing in (0, 0.5]");
  c->add_option("--semantics", calibrate.semantics, "exclusionary | paper-literal");
  c->add_option("--output,-o", calibrate.output, "params file to write");

  GenerateArgs generate;
  auto* g = app.add_subcommand("generate", "write a synthetic dataset");
  g->add_option("--preset", generate.preset, "paper-train-shape | paper-test-shape");
  g->add_option("--spec", generate.spec, "scene spec JSON (object or array)");
  g->add_option("--n", generate.n, "number of samples");
  g->add_option("--positives", generate.positives, "planted positive samples");
  g->add_option("--output,-o", generate.output, "dataset directory")->required();
  g->add_option("--seed", generate.seed, "batch seed");
  g->add_option("--width", generate.width, "image width");
  g->add_option("--height", generate.height, "image height");
  g->add_option("--noise-amplitude", generate.noise_amplitude, "bounded gaussian noise amplitude (0 = none)");
  add_overrides(g, generate.overrides, false);

  ReportArgs report;
  auto* r = app.add_subcommand("report", "summarise a results file");
  r->add_option("input", report.input, "results file (JSON lines)")->required();
  r->add_option("--top", report.top, "number of most confident verdicts to list");
  r->add_option("--json", report.json_out, "also write the recomputed batch report here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitFatal;
  }

  if (*d) return cmd_detect(detect);
  if (*c) return cmd_calibrate(calibrate);
  if (*g) return cmd_generate(generate);
  return cmd_report(report);
}
