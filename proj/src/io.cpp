#include "lsadapt/io.hpp"

#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "lsadapt/config.hpp"

namespace lsadapt {

using nlohmann::json;

namespace {

std::string num(double v) { return format_double(v); }

void check_header(std::istream& in, std::string_view expected_tag) {
  std::string tag;
  int major = 0;
  if (!(in >> tag >> major) || tag != expected_tag) {
    throw FormatError("not a " + std::string(expected_tag) + " file");
  }
  if (major != kFormatMajor) {
    throw FormatError("unsupported " + std::string(expected_tag) + " version " +
                      std::to_string(major));
  }
}

void expect_word(std::istream& in, std::string_view word) {
  std::string got;
  if (!(in >> got) || got != word) {
    throw FormatError("expected '" + std::string(word) + "', got '" + got + "'");
  }
}

double read_number(std::istream& in, const std::string& context) {
  std::string tok;
  if (!(in >> tok)) throw FormatError("truncated record for " + context);
  try {
    std::size_t used = 0;
    const double v = std::stod(tok, &used);
    if (used != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw FormatError("bad number '" + tok + "' in " + context);
  }
}

int read_count(std::istream& in, const std::string& context) {
  const double v = read_number(in, context);
  if (v < 0 || v != static_cast<double>(static_cast<long>(v))) {
    throw FormatError("bad count in " + context);
  }
  return static_cast<int>(v);
}

Box3 read_box(std::istream& in, const std::string& context) {
  double c[6];
  for (double& v : c) v = read_number(in, context);
  try {
    return Box3({c[0], c[1], c[2]}, {c[3], c[4], c[5]});
  } catch (const std::invalid_argument& e) {
    throw FormatError(context + ": " + e.what());
  }
}

void write_box(std::ostringstream& out, const Box3& b) {
  for (double v : b.coords()) out << ' ' << num(v);
}

json shape_json(const Shape3& s) { return json::array({s.x, s.y, s.z}); }
Shape3 shape_from(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()}; }

json shapes_json(std::span<const Shape3> shapes) {
  json a = json::array();
  for (const auto& s : shapes) a.push_back(shape_json(s));
  return a;
}

std::vector<Shape3> shapes_from(const json& j) {
  std::vector<Shape3> out;
  for (const auto& s : j) out.push_back(shape_from(s));
  return out;
}

json skill_json(const DomainSkill& s) {
  return {{"recall", s.recall}, {"fp_rate", s.fp_rate}, {"belief", s.belief}};
}

DomainSkill skill_from(const json& j) {
  return {j.at("recall").get<std::vector<double>>(), j.at("fp_rate").get<double>(),
          j.at("belief").get<std::vector<double>>()};
}

void check_json_version(const json& j, std::string_view format) {
  if (j.value("format", "") != format) throw FormatError("not a " + std::string(format) + " document");
  if (j.value("version", 0) != kFormatMajor) {
    throw FormatError("unsupported " + std::string(format) + " version");
  }
}

EvalSnapshot snapshot_from(const json& j) {
  EvalSnapshot s;
  const auto ap = j.at("ap").get<std::vector<double>>();
  for (std::size_t i = 0; i < s.ap.size() && i < ap.size(); ++i) s.ap[i] = ap[i];
  s.sensitivity = j.at("sensitivity").get<std::vector<double>>();
  s.mean_sensitivity = j.at("mean_sensitivity").get<double>();
  return s;
}

}  // namespace

std::string write_cohort(const CohortFile& file) {
  std::ostringstream out;
  out << "lsadapt-cohort " << kFormatMajor << '\n';
  out << "spacing " << num(file.spacing.dx()) << ' ' << num(file.spacing.dy()) << ' '
      << num(file.spacing.dz()) << '\n';
  if (file.provenance) {
    out << "provenance " << file.provenance->first << ' ' << to_string(file.provenance->second)
        << '\n';
  }
  out << "subjects " << file.subjects.size() << '\n';
  for (const auto& s : file.subjects) {
    out << s.id << ' ' << to_string(s.domain) << ' ' << s.gt_boxes.size();
    for (const auto& b : s.gt_boxes) write_box(out, b);
    out << '\n';
  }
  return out.str();
}

CohortFile read_cohort(std::string_view text) {
  std::istringstream in{std::string(text)};
  check_header(in, "lsadapt-cohort");
  CohortFile file;
  expect_word(in, "spacing");
  const double dx = read_number(in, "spacing");
  const double dy = read_number(in, "spacing");
  const double dz = read_number(in, "spacing");
  try {
    file.spacing = Spacing(dx, dy, dz);
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("spacing: ") + e.what());
  }
  std::string word;
  in >> word;
  if (word == "provenance") {
    const int round = read_count(in, "provenance");
    std::string mode;
    in >> mode;
    try {
      file.provenance = std::make_pair(round, parse_selection_mode(mode));
    } catch (const std::invalid_argument& e) {
      throw FormatError(std::string("provenance: ") + e.what());
    }
    in >> word;
  }
  if (word != "subjects") throw FormatError("expected 'subjects', got '" + word + "'");
  const int n = read_count(in, "subject count");
  std::set<std::string> ids;
  for (int i = 0; i < n; ++i) {
    Subject s;
    std::string domain;
    if (!(in >> s.id >> domain)) throw FormatError("truncated cohort: expected " + std::to_string(n) + " subjects");
    if (!ids.insert(s.id).second) throw FormatError("duplicate subject id " + s.id);
    try {
      s.domain = parse_domain(domain);
    } catch (const std::invalid_argument& e) {
      throw FormatError(s.id + ": " + e.what());
    }
    const int boxes = read_count(in, s.id);
    for (int b = 0; b < boxes; ++b) s.gt_boxes.push_back(read_box(in, s.id));
    file.subjects.push_back(std::move(s));
  }
  if (in >> word) throw FormatError("trailing content after " + std::to_string(n) + " subjects");
  return file;
}

std::string write_pseudo_labels(const PseudoLabelSet& labels, const Spacing& spacing) {
  CohortFile file;
  file.spacing = spacing;
  file.provenance = std::make_pair(labels.round, labels.mode);
  for (const auto& e : labels.subjects) file.subjects.push_back({e.subject_id, Domain::kTarget, e.boxes});
  return write_cohort(file);
}

std::string write_detections(std::span<const SubjectDetections> dets) {
  std::ostringstream out;
  out << "lsadapt-detections " << kFormatMajor << '\n';
  out << "subjects " << dets.size() << '\n';
  for (const auto& s : dets) {
    out << s.id << ' ' << s.detections.size();
    for (const auto& d : s.detections) {
      write_box(out, d.box());
      out << ' ' << num(d.confidence());
    }
    out << '\n';
  }
  return out.str();
}

std::vector<SubjectDetections> read_detections(std::string_view text) {
  std::istringstream in{std::string(text)};
  check_header(in, "lsadapt-detections");
  expect_word(in, "subjects");
  const int n = read_count(in, "subject count");
  std::vector<SubjectDetections> out;
  for (int i = 0; i < n; ++i) {
    SubjectDetections s;
    if (!(in >> s.id)) throw FormatError("truncated detections file");
    const int k = read_count(in, s.id);
    for (int j = 0; j < k; ++j) {
      const Box3 box = read_box(in, s.id);
      const double conf = read_number(in, s.id);
      try {
        s.detections.emplace_back(box, conf);
      } catch (const std::invalid_argument& e) {
        throw FormatError(s.id + ": " + e.what());
      }
    }
    out.push_back(std::move(s));
  }
  std::string word;
  if (in >> word) throw FormatError("trailing content in detections file");
  return out;
}

std::vector<EvalCase> join_by_subject(std::span<const Subject> cohort,
                                      std::span<const SubjectDetections> dets) {
  std::map<std::string, const SubjectDetections*> by_id;
  for (const auto& d : dets) by_id.emplace(d.id, &d);
  std::set<std::string> cohort_ids;
  std::vector<std::string> orphans;
  std::vector<EvalCase> cases;
  for (const auto& s : cohort) {
    cohort_ids.insert(s.id);
    const auto it = by_id.find(s.id);
    if (it == by_id.end()) {
      orphans.push_back(s.id + " (no detections)");
      continue;
    }
    cases.push_back({it->second->detections, s.gt_boxes});
  }
  for (const auto& d : dets) {
    if (!cohort_ids.count(d.id)) orphans.push_back(d.id + " (not in cohort)");
  }
  if (!orphans.empty()) {
    std::string msg = "subject ids do not match:";
    for (const auto& o : orphans) msg += " " + o;
    throw FormatError(msg);
  }
  return cases;
}

json to_json(const SimDetector& d) {
  return {{"source", skill_json(d.source)}, {"target", skill_json(d.target)}};
}

SimDetector detector_from_json(const json& j) {
  SimDetector d;
  d.source = skill_from(j.at("source"));
  d.target = skill_from(j.at("target"));
  return d;
}

json to_json(const Checkpoint& c) {
  json arms = json::array();
  for (const auto& a : c.arms) {
    arms.push_back({{"arm", a.arm.name()},
                    {"detector", to_json(a.detector)},
                    {"priors", {{"mu", a.priors.mu()},
                                {"hist", std::vector<double>(a.priors.hist().begin(), a.priors.hist().end())},
                                {"round", a.priors.round()}}},
                    {"anchors", {{"shapes", shapes_json(a.anchors.shapes())}, {"round", a.anchors.round()}}}});
  }
  return {{"format", "lsadapt-checkpoint"},
          {"version", kFormatMajor},
          {"config_digest", c.config_digest},
          {"rng", {{"seed", c.seed}, {"cursor", c.next_round}}},
          {"next_round", c.next_round},
          {"arms", arms}};
}

Checkpoint checkpoint_from_json(const json& j) {
  check_json_version(j, "lsadapt-checkpoint");
  Checkpoint c;
  try {
    c.config_digest = j.at("config_digest").get<std::string>();
    c.seed = j.at("rng").at("seed").get<std::uint64_t>();
    c.next_round = j.at("next_round").get<int>();
    for (const auto& a : j.at("arms")) {
      const auto& p = a.at("priors");
      const auto& an = a.at("anchors");
      c.arms.push_back({ArmSpec::parse(a.at("arm").get<std::string>()),
                        detector_from_json(a.at("detector")),
                        PriorState(p.at("mu").get<double>(), p.at("hist").get<std::vector<double>>(),
                                   p.at("round").get<int>()),
                        AnchorSet(shapes_from(an.at("shapes")), an.at("round").get<int>())});
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  }
  return c;
}

json to_json(const EvalSnapshot& s) {
  return {{"ap", std::vector<double>(s.ap.begin(), s.ap.end())},
          {"iou", std::vector<double>(EvalSnapshot::kIouThresholds.begin(), EvalSnapshot::kIouThresholds.end())},
          {"sensitivity", s.sensitivity},
          {"mean_sensitivity", s.mean_sensitivity}};
}

json to_json(const RoundRecord& r) {
  return {{"type", "round"},
          {"arm", r.arm},
          {"round", r.round},
          {"lambda", r.lambda},
          {"mu", r.mu},
          {"hist", r.hist},
          {"anchors", shapes_json(r.anchors)},
          {"n_allow", r.n_allow},
          {"quota", r.quota},
          {"selected_per_bin", r.selected_per_bin},
          {"selected_hist", r.selected_hist},
          {"candidates", r.candidates},
          {"selected", r.selected},
          {"validation", to_json(r.validation)}};
}

RoundRecord round_record_from_json(const json& j) {
  RoundRecord r;
  r.arm = j.at("arm").get<std::string>();
  r.round = j.at("round").get<int>();
  r.lambda = j.at("lambda").get<double>();
  r.mu = j.at("mu").get<double>();
  r.hist = j.at("hist").get<std::vector<double>>();
  r.anchors = shapes_from(j.at("anchors"));
  r.n_allow = j.at("n_allow").get<int>();
  r.quota = j.at("quota").get<std::vector<int>>();
  r.selected_per_bin = j.at("selected_per_bin").get<std::vector<int>>();
  r.selected_hist = j.at("selected_hist").get<std::vector<double>>();
  r.candidates = j.at("candidates").get<int>();
  r.selected = j.at("selected").get<int>();
  r.validation = snapshot_from(j.at("validation"));
  return r;
}

json to_json(const TestRecord& t) {
  json froc_pts = json::array();
  for (const auto& p : t.froc.points) froc_pts.push_back({p.cutoff, p.fp_per_scan, p.sensitivity});
  json pr_pts = json::array();
  for (const auto& p : t.pr) pr_pts.push_back({p.cutoff, p.recall, p.precision});
  return {{"type", "test"},
          {"arm", t.arm},
          {"metrics", to_json(t.metrics)},
          {"froc", froc_pts},
          {"pr", pr_pts},
          {"anchors", shapes_json(t.anchors)}};
}

TestRecord test_record_from_json(const json& j) {
  TestRecord t;
  t.arm = j.at("arm").get<std::string>();
  t.metrics = snapshot_from(j.at("metrics"));
  for (const auto& p : j.at("froc")) {
    t.froc.points.push_back({p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>()});
  }
  for (const auto& p : j.at("pr")) {
    t.pr.push_back({p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>()});
  }
  t.anchors = shapes_from(j.at("anchors"));
  return t;
}

std::string round_log_line(const RoundRecord& r) { return to_json(r).dump() + "\n"; }
std::string test_log_line(const TestRecord& t) { return to_json(t).dump() + "\n"; }

RunLog read_run_log(std::string_view text) {
  RunLog log;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      const auto type = j.at("type").get<std::string>();
      if (type == "round") {
        log.rounds.push_back(round_record_from_json(j));
      } else if (type == "test") {
        log.tests.push_back(test_record_from_json(j));
      } else {
        throw FormatError("unknown record type '" + type + "'");
      }
    } catch (const json::exception& e) {
      throw FormatError("log line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return log;
}

std::string write_columns(std::span<const std::pair<double, double>> rows, std::string_view header) {
  std::string out = "# " + std::string(header) + "\n";
  for (const auto& [a, b] : rows) out += num(a) + " " + num(b) + "\n";
  return out;
}

std::vector<std::pair<double, double>> read_columns(std::string_view text) {
  std::vector<std::pair<double, double>> rows;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    const double a = read_number(ls, "column row");
    const double b = read_number(ls, "column row");
    rows.emplace_back(a, b);
  }
  return rows;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace lsadapt
