#pragma once

#include <algorithm>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "fedseg/metrics.hpp"

namespace fedseg {

struct EmptyCohortError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Clipped per-metric deviation rates from a perfect segmentation. DSC and
// LF1 have expert reference 1, so their deltas are 1 - value. For AVD and
// ALD the expert reference is the ground-truth volume / lesion count; when
// that reference is 0 the delta is 0 for an exact match and 1 otherwise.
struct RelativeErrors {
  double delta_dsc = 0.0;
  double delta_avd = 0.0;
  double delta_ald = 0.0;
  double delta_lf1 = 0.0;

  double mean() const {
    return (delta_dsc + delta_avd + delta_ald + delta_lf1) / 4.0;
  }
};

namespace detail {
inline double clip01(double v) { return std::min(1.0, std::max(0.0, v)); }
}

inline RelativeErrors relative_errors(const SegmentationMetrics& m) {
  RelativeErrors e;
  e.delta_dsc = detail::clip01(1.0 - m.dsc);
  e.delta_lf1 = detail::clip01(1.0 - m.lf1);
  e.delta_avd = m.gt_volume_ml > 0.0
                    ? detail::clip01(m.avd_ml / m.gt_volume_ml)
                    : (m.avd_ml == 0.0 ? 0.0 : 1.0);
  e.delta_ald = m.gt_lesion_count > 0
                    ? detail::clip01(static_cast<double>(m.ald) / m.gt_lesion_count)
                    : (m.ald == 0 ? 0.0 : 1.0);
  return e;
}

// Mean Patients Relative Error: the mean over patients of the mean of the
// four metric deltas; in [0,1], lower is better.
inline double pre(const std::vector<RelativeErrors>& patients) {
  if (patients.empty()) throw EmptyCohortError("pre: empty patient list");
  double acc = 0.0;
  for (const auto& e : patients) acc += e.mean();
  return acc / static_cast<double>(patients.size());
}

struct ModelRanking {
  struct Entry {
    std::string model;
    double pre = 0.0;
  };
  std::vector<Entry> entries;  // ascending PRE; ties by model name
};

inline ModelRanking rank_models(const std::map<std::string, double>& scores) {
  if (scores.empty()) throw std::invalid_argument("rank_models: no models");
  ModelRanking r;
  for (const auto& [name, score] : scores) r.entries.push_back({name, score});
  std::sort(r.entries.begin(), r.entries.end(), [](const auto& a, const auto& b) {
    if (a.pre != b.pre) return a.pre < b.pre;
    return a.model < b.model;
  });
  return r;
}

}  // namespace fedseg
