// Segment-wise group-relative advantages, asymmetric difficulty scaling of
// the think advantage, and mask routing to per-token weights.

#ifndef DSSGRPO_ADVANTAGES_HPP_
#define DSSGRPO_ADVANTAGES_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "dssgrpo/segmentation.hpp"

namespace dssgrpo {

inline constexpr double kDefaultEpsNorm = 1e-4;

struct GroupAdvantage {
  std::vector<double> adv;
  double mean = 0.0;
  double sigma = 0.0;  // population standard deviation
};

struct SegmentAdvantages {
  GroupAdvantage thk;
  GroupAdvantage ans;
};

/// Per-token advantage weights A_t^(k), row-major K x T.
class RoutedWeights {
 public:
  RoutedWeights() = default;
  RoutedWeights(std::size_t group_size, std::size_t capacity)
      : group_size_(group_size), capacity_(capacity),
        data_(group_size * capacity, 0.0) {}

  std::size_t group_size() const { return group_size_; }
  std::size_t capacity() const { return capacity_; }

  double& at(std::size_t k, std::size_t t) { return data_[k * capacity_ + t]; }
  double at(std::size_t k, std::size_t t) const {
    return data_[k * capacity_ + t];
  }
  std::span<const double> row(std::size_t k) const {
    return {data_.data() + k * capacity_, capacity_};
  }
  std::span<double> row(std::size_t k) {
    return {data_.data() + k * capacity_, capacity_};
  }
  const std::vector<double>& data() const { return data_; }

  bool all_zero() const {
    for (double a : data_) {
      if (a != 0.0) return false;
    }
    return true;
  }

  bool operator==(const RoutedWeights&) const = default;

 private:
  std::size_t group_size_ = 0;
  std::size_t capacity_ = 0;
  std::vector<double> data_;
};

inline GroupAdvantage group_relative_advantage(std::span<const double> returns,
                                               double eps_norm = kDefaultEpsNorm) {
  if (returns.size() < 2) {
    throw std::invalid_argument("group-relative advantage needs K >= 2");
  }
  if (!(eps_norm > 0.0)) throw std::invalid_argument("eps_norm must be > 0");
  const double n = static_cast<double>(returns.size());
  GroupAdvantage out;
  out.adv.assign(returns.size(), 0.0);
  const bool constant = std::all_of(returns.begin(), returns.end(),
                                    [&](double r) { return r == returns[0]; });
  if (constant) {
    // Zero variance: the mean may round, the advantages may not.
    out.mean = returns[0];
    return out;
  }
  for (double r : returns) out.mean += r;
  out.mean /= n;
  double ss = 0.0;
  for (double r : returns) ss += (r - out.mean) * (r - out.mean);
  out.sigma = std::sqrt(ss / n);
  for (std::size_t k = 0; k < returns.size(); ++k) {
    out.adv[k] = (returns[k] - out.mean) / (out.sigma + eps_norm);
  }
  return out;
}

inline SegmentAdvantages segment_advantages(std::span<const double> r_think,
                                            std::span<const double> r_answer,
                                            double eps_norm = kDefaultEpsNorm) {
  if (r_think.size() != r_answer.size()) {
    throw std::invalid_argument("segment return vectors differ in size");
  }
  return {group_relative_advantage(r_think, eps_norm),
          group_relative_advantage(r_answer, eps_norm)};
}

/// Only non-negative think advantages are amplified by w_diff * scale.
inline double asymmetric_difficulty_scale(double adv_thk, double w_diff,
                                          double scale) {
  return adv_thk >= 0.0 ? adv_thk * (w_diff * scale) : adv_thk;
}

inline std::vector<double> scale_think_advantages(std::span<const double> adv_thk,
                                                  double w_diff, double scale) {
  std::vector<double> out;
  out.reserve(adv_thk.size());
  for (double a : adv_thk) out.push_back(asymmetric_difficulty_scale(a, w_diff, scale));
  return out;
}

inline RoutedWeights route_advantages(std::span<const double> adv_thk_scaled,
                                      std::span<const double> adv_ans,
                                      std::span<const SegmentMasks> masks) {
  const std::size_t k_size = masks.size();
  if (adv_thk_scaled.size() != k_size || adv_ans.size() != k_size) {
    throw std::invalid_argument("advantage and mask counts differ");
  }
  const std::size_t capacity = k_size == 0 ? 0 : masks[0].capacity();
  RoutedWeights w(k_size, capacity);
  for (std::size_t k = 0; k < k_size; ++k) {
    const SegmentMasks& m = masks[k];
    if (m.capacity() != capacity || m.thk.size() != capacity ||
        m.ans.size() != capacity) {
      throw std::invalid_argument("mask dimensions inconsistent");
    }
    for (std::size_t t = 0; t < capacity; ++t) {
      if (!m.val[t]) continue;
      w.at(k, t) = adv_thk_scaled[k] * m.thk[t] + adv_ans[k] * m.ans[t];
    }
  }
  return w;
}

/// Completion-level broadcast: one advantage on every valid token.
inline RoutedWeights broadcast_advantages(std::span<const double> adv,
                                          std::span<const SegmentMasks> masks) {
  if (adv.size() != masks.size()) {
    throw std::invalid_argument("advantage and mask counts differ");
  }
  const std::size_t capacity = masks.empty() ? 0 : masks[0].capacity();
  RoutedWeights w(masks.size(), capacity);
  for (std::size_t k = 0; k < masks.size(); ++k) {
    if (masks[k].capacity() != capacity) {
      throw std::invalid_argument("mask dimensions inconsistent");
    }
    for (std::size_t t = 0; t < capacity; ++t) {
      if (masks[k].val[t]) w.at(k, t) = adv[k];
    }
  }
  return w;
}

}  // namespace dssgrpo

#endif  // DSSGRPO_ADVANTAGES_HPP_
