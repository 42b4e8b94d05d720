#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lsadapt/geometry.hpp"
#include "lsadapt/matching.hpp"
#include "lsadapt/priors.hpp"

namespace lsadapt {

enum class SelectionMode { kPriorGuided, kTopP, kFixedThreshold, kSourceOnly };

std::string_view to_string(SelectionMode mode);
/// Parses "prior_guided", "top_p", "fixed_threshold" or "source_only".
SelectionMode parse_selection_mode(std::string_view text);

/// Pseudo labels for a set of subjects (all class 1), with provenance.
struct PseudoLabelSet {
  struct Entry {
    std::string subject_id;
    std::vector<Box3> boxes;
  };
  std::vector<Entry> subjects;
  int round = 0;
  SelectionMode mode = SelectionMode::kPriorGuided;

  std::size_t total() const;
  std::vector<Box3> all_boxes() const;
};

/// Per-subject cleaned candidates C_i.
struct CandidateSet {
  std::string subject_id;
  std::vector<Detection> detections;  // rank order
};

/// Drops detections below tau, then applies NMS at nms_iou.
std::vector<Detection> candidate_set(std::vector<Detection> raw, double tau, double nms_iou);

/// Keeps the top-n_b candidates of every volume bin for each subject. Unused
/// slots of an under-filled bin are not handed to other bins.
PseudoLabelSet select_prior_guided(std::span<const CandidateSet> candidates, const Quota& quota,
                                   const BinningConfig& bins, const Spacing& spacing);

/// Keeps ceil(p * |C_i|) highest-ranked candidates per subject.
PseudoLabelSet select_top_p(std::span<const CandidateSet> candidates, double p);

/// Keeps every candidate with confidence >= threshold.
PseudoLabelSet select_fixed_threshold(std::span<const CandidateSet> candidates, double threshold);

}  // namespace lsadapt
