#include "nbmig/context.hpp"

#include <algorithm>
#include <unordered_map>

#include <json.hpp>

namespace nbmig {

namespace {

struct OrdersHash {
  std::size_t operator()(const std::vector<CellOrder>& v) const noexcept {
    std::size_t h = 1469598103934665603ULL;
    for (auto o : v) {
      h ^= o;
      h *= 1099511628211ULL;
    }
    return h;
  }
};

// Strict weak order used by both ranked() and predict_block().
bool ranks_before(const CellSequence& a, double score_a, const CellSequence& b, double score_b) {
  if (score_a != score_b) return score_a > score_b;
  if (a.size() != b.size()) return a.size() > b.size();
  return a.orders < b.orders;
}

}  // namespace

bool CellSequence::contains(CellOrder order) const noexcept {
  return std::find(orders.begin(), orders.end(), order) != orders.end();
}

double SequenceStats::total() const noexcept {
  double sum = 0;
  for (const auto& [seq, score] : entries) sum += score;
  return sum;
}

std::vector<std::pair<CellSequence, double>> SequenceStats::ranked() const {
  std::vector<std::pair<CellSequence, double>> out(entries.begin(), entries.end());
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return ranks_before(a.first, a.second, b.first, b.second);
  });
  return out;
}

std::vector<CellSequence> get_sequences(std::span<const CellOrder> history) {
  std::vector<CellSequence> out;
  for (std::size_t i = 0; i < history.size(); ++i) {
    if (i == 0 || history[i] < history[i - 1]) out.emplace_back();
    out.back().orders.push_back(history[i]);
  }
  return out;
}

SequenceStats score_sequences(std::span<const CellSequence> sequences) {
  SequenceStats stats;
  if (sequences.empty()) return stats;

  // Unique sequences with their occurrence counts.
  std::unordered_map<std::vector<CellOrder>, std::size_t, OrdersHash> slot;
  std::vector<const CellSequence*> unique;
  std::vector<std::uint64_t> occurrences;
  for (const auto& seq : sequences) {
    auto [it, inserted] = slot.try_emplace(seq.orders, unique.size());
    if (inserted) {
      unique.push_back(&seq);
      occurrences.push_back(0);
    }
    ++occurrences[it->second];
  }

  std::vector<std::uint64_t> subtotal = occurrences;

  // Every distinct contiguous run of a unique sequence T that is itself a different
  // unique sequence inherits T's occurrence count.
  std::vector<CellOrder> window;
  for (std::size_t t = 0; t < unique.size(); ++t) {
    const auto& orders = unique[t]->orders;
    std::vector<std::size_t> credited;
    for (std::size_t len = 1; len < orders.size(); ++len) {
      for (std::size_t start = 0; start + len <= orders.size(); ++start) {
        window.assign(orders.begin() + static_cast<std::ptrdiff_t>(start),
                      orders.begin() + static_cast<std::ptrdiff_t>(start + len));
        auto hit = slot.find(window);
        if (hit != slot.end()) credited.push_back(hit->second);
      }
    }
    std::sort(credited.begin(), credited.end());
    credited.erase(std::unique(credited.begin(), credited.end()), credited.end());
    for (auto s : credited) subtotal[s] += occurrences[t];
  }

  std::uint64_t total = 0;
  for (auto v : subtotal) total += v;
  for (std::size_t s = 0; s < unique.size(); ++s) {
    stats.entries.emplace(*unique[s],
                          static_cast<double>(subtotal[s]) / static_cast<double>(total) * 100.0);
  }
  return stats;
}

SequenceStats filter_active(const SequenceStats& stats, CellOrder active) {
  SequenceStats out;
  for (const auto& [seq, score] : stats.entries) {
    if (seq.contains(active)) out.entries.emplace(seq, score);
  }
  return out;
}

std::optional<BlockPrediction> predict_block(const SequenceStats& stats, CellOrder active,
                                             double min_score, AnchorRule rule) {
  const std::pair<const CellSequence, double>* best = nullptr;
  for (const auto& entry : stats.entries) {
    const auto& [seq, score] = entry;
    if (score < min_score || seq.orders.empty()) continue;
    const bool anchored = rule == AnchorRule::Starts ? seq.orders.front() == active
                                                     : seq.contains(active);
    if (!anchored) continue;
    if (best == nullptr || ranks_before(seq, score, best->first, best->second)) best = &entry;
  }
  if (best == nullptr) return std::nullopt;
  return BlockPrediction{best->first, best->second, active};
}

std::vector<CellOrder> history_of(std::span<const ExecutionEvent> events) {
  std::vector<CellOrder> out;
  out.reserve(events.size());
  for (const auto& ev : events) out.push_back(ev.cell_order);
  return out;
}

std::string stats_json(const SequenceStats& stats) {
  auto arr = nlohmann::json::array();
  for (const auto& [seq, score] : stats.ranked()) {
    arr.push_back({{"sequence", seq.orders}, {"score", score}});
  }
  return arr.dump();
}

}  // namespace nbmig
