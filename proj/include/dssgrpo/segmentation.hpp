// Think/answer segmentation of a completion by boundary marker tokens.
//
// Positions are 1-based and inclusive throughout: a think-end marker at
// position 3 means tokens 1..3 form the think segment (marker included).

#ifndef DSSGRPO_SEGMENTATION_HPP_
#define DSSGRPO_SEGMENTATION_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dssgrpo {

using TokenId = std::int32_t;
using TokenSeq = std::vector<TokenId>;
using Mask = std::vector<std::uint8_t>;

struct SegmentBoundaries {
  std::size_t tau_thk = 0;
  std::size_t tau_end = 0;
  bool think_found = false;
  bool answer_found = false;

  bool complete() const { return think_found && answer_found; }
  bool operator==(const SegmentBoundaries&) const = default;
};

struct SegmentMasks {
  Mask thk;
  Mask ans;
  Mask val;

  std::size_t capacity() const { return val.size(); }
  bool operator==(const SegmentMasks&) const = default;
};

struct SegmentLengths {
  std::size_t thk = 0;
  std::size_t ans = 0;

  bool operator==(const SegmentLengths&) const = default;
};

inline void validate_tokens(std::span<const TokenId> tokens, int vocab_size,
                            std::size_t capacity) {
  if (tokens.size() > capacity) {
    throw std::invalid_argument("token sequence longer than capacity " +
                                std::to_string(capacity));
  }
  for (TokenId id : tokens) {
    if (id < 0 || id >= vocab_size) {
      throw std::invalid_argument("token id " + std::to_string(id) +
                                  " outside vocabulary");
    }
  }
}

// First think_end, then the first answer_end strictly after it. If think_end
// is absent the answer_end search is skipped and both flags stay false.
inline SegmentBoundaries find_boundaries(std::span<const TokenId> tokens,
                                         TokenId think_end_id,
                                         TokenId answer_end_id) {
  if (think_end_id == answer_end_id) {
    throw std::invalid_argument("boundary markers must be distinct");
  }
  SegmentBoundaries b;
  std::size_t t = 0;
  for (; t < tokens.size(); ++t) {
    if (tokens[t] == think_end_id) {
      b.think_found = true;
      b.tau_thk = t + 1;
      break;
    }
  }
  if (!b.think_found) return b;
  for (++t; t < tokens.size(); ++t) {
    if (tokens[t] == answer_end_id) {
      b.answer_found = true;
      b.tau_end = t + 1;
      break;
    }
  }
  return b;
}

// Masks of length `capacity`. Incomplete boundaries give all-zero masks so a
// malformed completion carries no loss weight anywhere.
inline SegmentMasks build_masks(const SegmentBoundaries& b,
                                std::size_t capacity) {
  SegmentMasks m{Mask(capacity, 0), Mask(capacity, 0), Mask(capacity, 0)};
  if (!b.complete()) return m;
  if (b.tau_thk < 1 || b.tau_thk >= b.tau_end || b.tau_end > capacity) {
    throw std::invalid_argument("segment boundaries inconsistent with capacity");
  }
  for (std::size_t t = 1; t <= b.tau_end; ++t) {
    m.val[t - 1] = 1;
    if (t <= b.tau_thk) {
      m.thk[t - 1] = 1;
    } else {
      m.ans[t - 1] = 1;
    }
  }
  return m;
}

inline SegmentLengths segment_lengths(const SegmentMasks& m) {
  SegmentLengths l;
  for (std::size_t t = 0; t < m.capacity(); ++t) {
    l.thk += m.thk[t];
    l.ans += m.ans[t];
  }
  return l;
}

}  // namespace dssgrpo

#endif  // DSSGRPO_SEGMENTATION_HPP_
