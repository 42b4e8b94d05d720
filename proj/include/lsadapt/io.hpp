#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "lsadapt/experiment.hpp"
#include "lsadapt/matching.hpp"
#include "lsadapt/selection.hpp"
#include "lsadapt/simulation.hpp"

namespace lsadapt {

/// Malformed or incompatible file contents.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kFormatMajor = 1;

/// Cohort file: a "lsadapt-cohort <major>" header, a spacing line, an
/// optional provenance line, a subject count, then one line per subject:
///   <id> <domain> <n> {x y z w h d} * n
struct CohortFile {
  Spacing spacing = default_spacing();
  std::vector<Subject> subjects;
  /// Present for pseudo-label files: round and selection mode.
  std::optional<std::pair<int, SelectionMode>> provenance;
};

std::string write_cohort(const CohortFile& file);
CohortFile read_cohort(std::string_view text);

/// Pseudo labels in the cohort format, domain "target", with provenance.
std::string write_pseudo_labels(const PseudoLabelSet& labels, const Spacing& spacing);

/// Detections file: "lsadapt-detections <major>", a subject count, then one
/// line per subject: <id> <n> {x y z w h d confidence} * n
struct SubjectDetections {
  std::string id;
  std::vector<Detection> detections;
};
std::string write_detections(std::span<const SubjectDetections> dets);
std::vector<SubjectDetections> read_detections(std::string_view text);

/// Pairs detections with cohort ground truth by subject id. Throws
/// FormatError listing subject ids present on only one side.
std::vector<EvalCase> join_by_subject(std::span<const Subject> cohort,
                                      std::span<const SubjectDetections> dets);

nlohmann::json to_json(const SimDetector& d);
SimDetector detector_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Checkpoint& c);
Checkpoint checkpoint_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RoundRecord& r);
RoundRecord round_record_from_json(const nlohmann::json& j);
nlohmann::json to_json(const TestRecord& t);
TestRecord test_record_from_json(const nlohmann::json& j);
nlohmann::json to_json(const EvalSnapshot& s);

/// Round log: one JSON object per line, "type" is "round" or "test".
struct RunLog {
  std::vector<RoundRecord> rounds;
  std::vector<TestRecord> tests;
};
std::string round_log_line(const RoundRecord& r);
std::string test_log_line(const TestRecord& t);
RunLog read_run_log(std::string_view text);

/// Two-column numeric text; '#' lines are comments.
std::string write_columns(std::span<const std::pair<double, double>> rows, std::string_view header);
std::vector<std::pair<double, double>> read_columns(std::string_view text);

std::string read_file(const std::filesystem::path& path);
/// Writes via a temporary sibling and rename.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

}  // namespace lsadapt
