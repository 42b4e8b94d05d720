#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lsadapt/config.hpp"
#include "lsadapt/experiment.hpp"
#include "lsadapt/io.hpp"
#include "lsadapt/report.hpp"

namespace fs = std::filesystem;
using namespace lsadapt;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

/// Usage or configuration problem; exit code 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string config;
};

std::string slug(const std::string& arm) {
  std::string s = arm;
  for (char& c : s) {
    if (c == '+') c = '_';
  }
  return s;
}

std::string fixed(double v, int digits = 4) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

/// Reads a user-supplied input; a missing file is a usage error.
std::string read_input(const std::string& path) {
  if (!fs::is_regular_file(path)) throw UsageError("cannot read " + path);
  return read_file(path);
}

ExperimentConfig load_config(const Globals& g, std::optional<int> rounds = std::nullopt) {
  try {
    ExperimentConfig cfg =
        g.config.empty() ? ExperimentConfig{} : parse_experiment_config(read_input(g.config));
    if (g.seed) cfg.seed = *g.seed;
    if (rounds) cfg.loop.rounds = *rounds;
    cfg.validate();
    return cfg;
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
}

// ---- generate ----

struct GenerateArgs {
  std::string preset;
  int subjects = 0;
};

int cmd_generate(const Globals& g, const GenerateArgs& a) {
  if (g.out.empty()) throw UsageError("generate needs --out <cohort file>");
  CohortSpec spec;
  try {
    if (!g.config.empty()) {
      spec = parse_cohort_spec(read_input(g.config));
    } else if (!a.preset.empty()) {
      spec = preset_by_name(a.preset, a.subjects > 0 ? a.subjects : 50, 0);
    } else {
      throw UsageError("generate needs --config <spec file> or --preset fdg|psma");
    }
    if (!g.config.empty() && a.subjects > 0) spec.n_subjects = a.subjects;
    if (g.seed) spec.seed = *g.seed;
    spec.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }

  CohortFile file;
  file.spacing = spec.world.spacing;
  file.subjects = generate_cohort(spec);
  write_file_atomic(g.out, write_cohort(file));

  std::size_t lesions = 0;
  for (const auto& s : file.subjects) lesions += s.gt_boxes.size();
  std::cout << "subjects " << file.subjects.size() << "\nlesions " << lesions << "\nhistogram";
  for (double h : cohort_histogram(file.subjects, spec.world)) std::cout << ' ' << fixed(h);
  std::cout << "\nwrote " << g.out << "\n";
  return 0;
}

// ---- run ----

struct RunArgs {
  bool resume = false;
  int stop_after = 0;
  std::optional<int> rounds;
};

/// Keeps the round lines of an existing log that precede `next_round`.
std::string truncate_log(const fs::path& path, int next_round) {
  if (!fs::exists(path)) {
    if (next_round > 1) throw std::runtime_error("cannot resume: round log missing at " + path.string());
    return {};
  }
  std::istringstream in(read_file(path));
  std::string line, kept;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    if (j.at("type") == "round" && j.at("round").get<int>() < next_round) {
      kept += line + "\n";
    }
  }
  return kept;
}

void append(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::app);
  out << text;
  out.flush();
  if (!out) throw std::runtime_error("cannot append to " + path.string());
}

int cmd_run(const Globals& g, const RunArgs& a) {
  if (g.out.empty()) throw UsageError("run needs --out <directory>");
  const ExperimentConfig cfg = load_config(g, a.rounds);
  const std::string digest = config_digest(cfg);
  const fs::path dir = g.out;
  fs::create_directories(dir);
  const fs::path manifest = dir / "manifest.json";
  const fs::path checkpoint_path = dir / "checkpoint.json";
  const fs::path log_path = dir / "rounds.jsonl";
  fs::remove(manifest);

  std::optional<Experiment> ex;
  if (a.resume) {
    if (!fs::exists(checkpoint_path)) throw UsageError("--resume: no checkpoint in " + dir.string());
    Checkpoint ck = checkpoint_from_json(json::parse(read_file(checkpoint_path)));
    if (ck.config_digest != digest) {
      throw UsageError("refusing to resume: checkpoint digest " + ck.config_digest +
                       " does not match config digest " + digest);
    }
    const int next = ck.next_round;
    ex.emplace(cfg, std::move(ck));
    write_file_atomic(log_path, truncate_log(log_path, next));
    std::cout << "resuming at round " << next << "\n";
  } else {
    ex.emplace(cfg);
    write_file_atomic(dir / "config.txt", serialize_experiment_config(cfg));
    write_file_atomic(log_path, "");
    write_file_atomic(checkpoint_path, to_json(ex->checkpoint()).dump(1) + "\n");
  }

  const auto& co = ex->cohorts();
  const std::map<std::string, const std::vector<Subject>*> cohort_files{
      {"source.cohort", &co.source},
      {"target_train.cohort", &co.target_train},
      {"target_val.cohort", &co.target_val},
      {"target_test.cohort", &co.target_test}};
  for (const auto& [name, subjects] : cohort_files) {
    write_file_atomic(dir / name, write_cohort({cfg.world.spacing, *subjects, std::nullopt}));
  }

  while (!ex->finished()) {
    std::string lines;
    for (const auto& rec : ex->step()) lines += round_log_line(rec);
    append(log_path, lines);
    write_file_atomic(checkpoint_path, to_json(ex->checkpoint()).dump(1) + "\n");
    const int done = ex->next_round() - 1;
    if (done % 20 == 0 || ex->finished()) std::cout << "round " << done << "/" << cfg.loop.rounds << "\n";
    if (a.stop_after > 0 && done >= a.stop_after && !ex->finished()) {
      std::cerr << "stopped after round " << done << "; continue with --resume\n";
      return 1;
    }
  }

  json files = {{"config", "config.txt"}, {"checkpoint", "checkpoint.json"}, {"log", "rounds.jsonl"}};
  for (const auto& [name, subjects] : cohort_files) files["cohorts"].push_back(name);
  fs::create_directories(dir / "detections");
  std::string tests;
  for (const auto& state : ex->arms()) {
    const TestRecord t = evaluate_test(state, co, cfg);
    tests += test_log_line(t);
    std::vector<SubjectDetections> dets;
    for (const auto& s : co.target_test) {
      dets.push_back({s.id, infer(state.detector, s, state.anchors, cfg.world, test_seed(cfg.seed))});
    }
    const std::string rel = "detections/" + slug(t.arm) + ".det";
    write_file_atomic(dir / rel, write_detections(dets));
    files["detections"][t.arm] = rel;
    std::cout << t.arm << ": AP@0.1 " << fixed(t.metrics.ap[0]) << "  AP@0.25 " << fixed(t.metrics.ap[1])
              << "  AP@0.5 " << fixed(t.metrics.ap[2]) << "  mean sensitivity "
              << fixed(t.metrics.mean_sensitivity) << "\n";
  }
  append(log_path, tests);

  const json m = {{"format", "lsadapt-manifest"}, {"version", kFormatMajor}, {"config_digest", digest},
                  {"seed", cfg.seed}, {"code_version", kVersion}, {"files", files}};
  write_file_atomic(manifest, m.dump(1) + "\n");
  std::cout << "manifest " << manifest.string() << "\n";
  return 0;
}

// ---- eval ----

struct EvalArgs {
  std::string cohort;
  std::string detections;
  std::string checkpoint;
  std::string arm = "prior_guided+anchor";
  std::vector<double> ious{0.1, 0.25, 0.5};
};

int cmd_eval(const Globals& g, const EvalArgs& a) {
  if (a.detections.empty() == a.checkpoint.empty()) {
    throw UsageError("eval needs exactly one of --detections or --checkpoint");
  }
  const CohortFile cohort = read_cohort(read_input(a.cohort));
  std::vector<SubjectDetections> dets;
  if (!a.detections.empty()) {
    dets = read_detections(read_input(a.detections));
  } else {
    const ExperimentConfig cfg = load_config(g);
    const Checkpoint ck = checkpoint_from_json(json::parse(read_input(a.checkpoint)));
    if (ck.config_digest != config_digest(cfg)) {
      throw UsageError("checkpoint digest " + ck.config_digest + " does not match config digest " +
                       config_digest(cfg));
    }
    if (cohort.spacing.dx() != cfg.world.spacing.dx() || cohort.spacing.dy() != cfg.world.spacing.dy() ||
        cohort.spacing.dz() != cfg.world.spacing.dz()) {
      throw UsageError("cohort spacing differs from the configured spacing");
    }
    const ArmState* state = nullptr;
    for (const auto& s : ck.arms) {
      if (s.arm.name() == a.arm) state = &s;
    }
    if (!state) throw UsageError("checkpoint has no arm named '" + a.arm + "'");
    SimDetector detector = state->detector;
    detector.params = cfg.detector;
    for (const auto& s : cohort.subjects) {
      dets.push_back({s.id, infer(detector, s, state->anchors, cfg.world, test_seed(cfg.seed))});
    }
  }
  const auto cases = join_by_subject(cohort.subjects, dets);

  json metrics;
  metrics["format"] = "lsadapt-metrics";
  metrics["version"] = kFormatMajor;
  for (double iou : a.ious) {
    const double ap = average_precision(cases, iou);
    metrics["ap"].push_back({{"iou", iou}, {"ap", ap}});
    std::cout << "AP@" << format_double(iou) << " " << fixed(ap) << "\n";
  }
  const FrocCurve curve = froc(cases, 0.1);
  std::cout << "FROC (IoU 0.1): fp/scan sensitivity\n";
  std::vector<std::pair<double, double>> rows;
  for (const auto& p : curve.points) {
    rows.emplace_back(p.fp_per_scan, p.sensitivity);
    metrics["froc"].push_back({p.cutoff, p.fp_per_scan, p.sensitivity});
    std::cout << "  " << fixed(p.fp_per_scan) << " " << fixed(p.sensitivity) << "\n";
  }
  if (curve.points.empty()) metrics["froc"] = json::array();
  std::cout << "sensitivity at FP/scan budgets:\n";
  for (double b : standard_fp_budgets()) {
    const double s = sensitivity_at(curve, b);
    metrics["sensitivity"].push_back({{"fp_per_scan", b}, {"sensitivity", s}});
    std::cout << "  " << format_double(b) << " " << fixed(s) << "\n";
  }
  metrics["mean_sensitivity"] = mean_sensitivity(curve);

  if (!g.out.empty()) {
    const fs::path dir = g.out;
    fs::create_directories(dir);
    write_file_atomic(dir / "metrics.json", metrics.dump(1) + "\n");
    write_file_atomic(dir / "froc.dat", write_columns(rows, "fp_per_scan sensitivity"));
    write_file_atomic(dir / "detections.det", write_detections(dets));
  }
  return 0;
}

// ---- report ----

struct ReportArgs {
  std::string log;
  std::string from_data;
};

int cmd_report(const Globals& g, const ReportArgs& a) {
  std::vector<fs::path> written;
  if (!a.from_data.empty()) {
    written = render_plot_dir(a.from_data);
  } else {
    if (a.log.empty() || g.out.empty()) throw UsageError("report needs --log <rounds.jsonl> and --out <dir>");
    const RunLog log = read_run_log(read_input(a.log));
    if (log.rounds.empty() && log.tests.empty()) throw UsageError("run log " + a.log + " is empty");
    written = write_report(log, g.out);
  }
  for (const auto& p : written) std::cout << "wrote " << p.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Label-shift-aware self-training simulator for 3D lesion detection"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  Globals g;
  std::uint64_t seed = 0;
  auto* seed_opt = app.add_option("--seed", seed, "Override the seed");
  app.add_option("--out", g.out, "Output file or directory");
  app.add_option("--config", g.config, "Config or cohort spec file");
  for (auto* opt : app.get_options()) opt->configurable(false);

  GenerateArgs gen;
  auto* generate = app.add_subcommand("generate", "Generate a synthetic cohort file");
  generate->add_option("--preset", gen.preset, "fdg or psma (when no --config spec)");
  generate->add_option("--subjects", gen.subjects, "Number of subjects");

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "Run the adaptation experiment");
  run_cmd->add_flag("--resume", run.resume, "Continue from the checkpoint in --out");
  run_cmd->add_option("--stop-after", run.stop_after, "Stop after this round (exit 1, no manifest)");
  int rounds = 0;
  auto* rounds_opt = run_cmd->add_option("--rounds", rounds, "Override the number of rounds");

  EvalArgs ev;
  auto* eval = app.add_subcommand("eval", "Evaluate detections against a cohort");
  eval->add_option("--cohort", ev.cohort, "Cohort file with ground truth")->required();
  eval->add_option("--detections", ev.detections, "Detections file");
  eval->add_option("--checkpoint", ev.checkpoint, "Checkpoint to run inference from");
  eval->add_option("--arm", ev.arm, "Arm name inside the checkpoint");
  eval->add_option("--iou", ev.ious, "IoU thresholds for AP")->delimiter(',');

  ReportArgs rep;
  auto* report = app.add_subcommand("report", "Plot a run log");
  report->add_option("--log", rep.log, "Round log (rounds.jsonl)");
  report->add_option("--from-data", rep.from_data, "Re-plot from an existing report directory");

  for (auto* sub : {generate, run_cmd, eval, report}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  if (seed_opt->count()) g.seed = seed;
  if (rounds_opt->count()) run.rounds = rounds;

  try {
    if (generate->parsed()) return cmd_generate(g, gen);
    if (run_cmd->parsed()) return cmd_run(g, run);
    if (eval->parsed()) return cmd_eval(g, ev);
    if (report->parsed()) return cmd_report(g, rep);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
