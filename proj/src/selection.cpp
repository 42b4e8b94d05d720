#include "lsadapt/selection.hpp"

#include <cmath>
#include <stdexcept>

namespace lsadapt {

std::string_view to_string(SelectionMode mode) {
  switch (mode) {
    case SelectionMode::kPriorGuided:
      return "prior_guided";
    case SelectionMode::kTopP:
      return "top_p";
    case SelectionMode::kFixedThreshold:
      return "fixed_threshold";
    case SelectionMode::kSourceOnly:
      return "source_only";
  }
  return "unknown";
}

SelectionMode parse_selection_mode(std::string_view text) {
  for (auto m : {SelectionMode::kPriorGuided, SelectionMode::kTopP,
                 SelectionMode::kFixedThreshold, SelectionMode::kSourceOnly}) {
    if (text == to_string(m)) return m;
  }
  throw std::invalid_argument("unknown selection mode '" + std::string(text) + "'");
}

std::size_t PseudoLabelSet::total() const {
  std::size_t n = 0;
  for (const auto& s : subjects) n += s.boxes.size();
  return n;
}

std::vector<Box3> PseudoLabelSet::all_boxes() const {
  std::vector<Box3> out;
  out.reserve(total());
  for (const auto& s : subjects) out.insert(out.end(), s.boxes.begin(), s.boxes.end());
  return out;
}

std::vector<Detection> candidate_set(std::vector<Detection> raw, double tau, double nms_iou) {
  std::erase_if(raw, [tau](const Detection& d) { return d.confidence() < tau; });
  return nms3d(std::move(raw), nms_iou);
}

PseudoLabelSet select_prior_guided(std::span<const CandidateSet> candidates, const Quota& quota,
                                   const BinningConfig& bins, const Spacing& spacing) {
  if (static_cast<int>(quota.per_bin.size()) != bins.num_bins()) {
    throw std::invalid_argument("quota has a different number of bins than the binning");
  }
  PseudoLabelSet out;
  out.mode = SelectionMode::kPriorGuided;
  for (const auto& c : candidates) {
    auto ranked = c.detections;
    sort_by_rank(ranked);
    std::vector<int> taken(quota.per_bin.size(), 0);
    PseudoLabelSet::Entry entry{c.subject_id, {}};
    for (const auto& d : ranked) {
      const int b = bin_of(d.box(), spacing, bins) - 1;
      if (taken[b] < quota.per_bin[b]) {
        ++taken[b];
        entry.boxes.push_back(d.box());
      }
    }
    out.subjects.push_back(std::move(entry));
  }
  return out;
}

PseudoLabelSet select_top_p(std::span<const CandidateSet> candidates, double p) {
  if (!(p > 0.0 && p <= 1.0)) throw std::invalid_argument("top-p fraction must lie in (0, 1]");
  PseudoLabelSet out;
  out.mode = SelectionMode::kTopP;
  for (const auto& c : candidates) {
    auto ranked = c.detections;
    sort_by_rank(ranked);
    const auto keep = static_cast<std::size_t>(std::ceil(p * static_cast<double>(ranked.size())));
    PseudoLabelSet::Entry entry{c.subject_id, {}};
    for (std::size_t i = 0; i < keep && i < ranked.size(); ++i) entry.boxes.push_back(ranked[i].box());
    out.subjects.push_back(std::move(entry));
  }
  return out;
}

PseudoLabelSet select_fixed_threshold(std::span<const CandidateSet> candidates, double threshold) {
  PseudoLabelSet out;
  out.mode = SelectionMode::kFixedThreshold;
  for (const auto& c : candidates) {
    PseudoLabelSet::Entry entry{c.subject_id, {}};
    auto ranked = c.detections;
    sort_by_rank(ranked);
    for (const auto& d : ranked) {
      if (d.confidence() >= threshold) entry.boxes.push_back(d.box());
    }
    out.subjects.push_back(std::move(entry));
  }
  return out;
}

}  // namespace lsadapt
