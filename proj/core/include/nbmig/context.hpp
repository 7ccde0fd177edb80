#pragma once

#include <compare>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nbmig/trace.hpp"

namespace nbmig {

// A maximal nondecreasing run of executed cell orders.
struct CellSequence {
  std::vector<CellOrder> orders;

  bool contains(CellOrder order) const noexcept;
  std::size_t size() const noexcept { return orders.size(); }

  auto operator<=>(const CellSequence&) const = default;
  bool operator==(const CellSequence&) const = default;
};

// Scored sequences. Scores are percentages of the total support mass and sum to 100
// for the unfiltered output of score_sequences.
struct SequenceStats {
  std::map<CellSequence, double> entries;

  bool empty() const noexcept { return entries.empty(); }
  std::size_t size() const noexcept { return entries.size(); }
  double total() const noexcept;

  // Descending score, then longer sequence, then lexicographic.
  std::vector<std::pair<CellSequence, double>> ranked() const;
};

struct BlockPrediction {
  CellSequence block;
  double score = 0;
  CellOrder anchor = 0;
};

// Splits the history wherever the next order is strictly smaller than the current one.
std::vector<CellSequence> get_sequences(std::span<const CellOrder> history);

// Each unique sequence S is credited once per occurrence of S and once per occurrence
// of every other unique sequence that contains S as a contiguous run; credits are
// normalized to percentages.
SequenceStats score_sequences(std::span<const CellSequence> sequences);

// Keeps entries that contain `active`. Scores keep their global values.
SequenceStats filter_active(const SequenceStats& stats, CellOrder active);

enum class AnchorRule : std::uint8_t {
  // Any sequence that contains the active cell.
  Contains,
  // Only sequences whose first element is the active cell.
  Starts,
};

std::optional<BlockPrediction> predict_block(const SequenceStats& stats, CellOrder active,
                                             double min_score = 0.0,
                                             AnchorRule rule = AnchorRule::Contains);

std::vector<CellOrder> history_of(std::span<const ExecutionEvent> events);

// {"sequence": [...], "score": ...} objects in ranked order.
std::string stats_json(const SequenceStats& stats);

}  // namespace nbmig
