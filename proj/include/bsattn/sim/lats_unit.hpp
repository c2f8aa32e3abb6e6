#pragma once

#include <cstdint>
#include <limits>

namespace bsattn::sim {

/// Running max of every lower bound reported for the current query, minus
/// the integer gap. Updates land in a staging register and become visible
/// to the lanes on commit(), i.e. on the next cycle.
class LatsUnit {
 public:
  static constexpr std::int64_t kNoThreshold = std::numeric_limits<std::int64_t>::min();

  explicit LatsUnit(std::int64_t gap = 0) : gap_(gap) {}

  void reset(std::int64_t gap) {
    gap_ = gap;
    max_lb_ = staged_max_lb_ = kNoThreshold;
    have_ = staged_have_ = false;
  }

  void update(std::int64_t lower_bound) {
    if (!staged_have_ || lower_bound > staged_max_lb_) staged_max_lb_ = lower_bound;
    staged_have_ = true;
  }

  void commit() {
    max_lb_ = staged_max_lb_;
    have_ = staged_have_;
  }

  bool has_threshold() const { return have_; }

  /// Broadcast threshold; kNoThreshold before the first committed bound.
  std::int64_t eta() const { return have_ ? max_lb_ - gap_ : kNoThreshold; }

  std::int64_t gap() const { return gap_; }

 private:
  std::int64_t gap_ = 0;
  std::int64_t max_lb_ = kNoThreshold;
  std::int64_t staged_max_lb_ = kNoThreshold;
  bool have_ = false;
  bool staged_have_ = false;
};

}  // namespace bsattn::sim
