#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "fedseg/grid.hpp"

namespace fedseg {

struct DimMismatchError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Lesion volume categories: control, small, medium, large.
enum class LesionCategory : std::uint8_t { N = 0, S = 1, M = 2, L = 3 };

inline char category_char(LesionCategory c) {
  switch (c) {
    case LesionCategory::N: return 'N';
    case LesionCategory::S: return 'S';
    case LesionCategory::M: return 'M';
    case LesionCategory::L: return 'L';
  }
  return '?';
}

inline LesionCategory parse_category(char c) {
  switch (c) {
    case 'N': return LesionCategory::N;
    case 'S': return LesionCategory::S;
    case 'M': return LesionCategory::M;
    case 'L': return LesionCategory::L;
  }
  throw std::invalid_argument("unknown lesion category");
}

// N at exactly 0 mL, S up to 5 mL inclusive, M up to 20 mL inclusive,
// L above 20 mL.
inline LesionCategory categorize(double volume_ml) {
  if (!(volume_ml >= 0.0))
    throw std::invalid_argument("categorize: volume must be non-negative");
  if (volume_ml == 0.0) return LesionCategory::N;
  if (volume_ml <= 5.0) return LesionCategory::S;
  if (volume_ml <= 20.0) return LesionCategory::M;
  return LesionCategory::L;
}

struct LabeledComponents {
  Grid<int> labels;  // 0 = background, components numbered 1..count
  int count = 0;
};

// Two-pass union-find labeling under 4- or 8-connectivity.
inline LabeledComponents connected_components(const Mask& mask, int connectivity = 8) {
  if (connectivity != 4 && connectivity != 8)
    throw std::invalid_argument("connectivity must be 4 or 8");
  const int rows = mask.rows, cols = mask.cols;
  LabeledComponents out;
  out.labels = Grid<int>(rows, cols, 0);

  std::vector<int> parent(1, 0);  // parent[0] unused
  const auto find_root = [&parent](int x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  };
  const auto unite = [&](int a, int b) {
    a = find_root(a);
    b = find_root(b);
    if (a == b) return;
    if (b < a) std::swap(a, b);
    parent[b] = a;
  };

  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      if (!mask(r, c)) continue;
      // previously visited neighbours
      int neigh[4];
      int n = 0;
      if (c > 0 && mask(r, c - 1)) neigh[n++] = out.labels(r, c - 1);
      if (r > 0 && mask(r - 1, c)) neigh[n++] = out.labels(r - 1, c);
      if (connectivity == 8 && r > 0) {
        if (c > 0 && mask(r - 1, c - 1)) neigh[n++] = out.labels(r - 1, c - 1);
        if (c + 1 < cols && mask(r - 1, c + 1)) neigh[n++] = out.labels(r - 1, c + 1);
      }
      if (n == 0) {
        const int fresh = static_cast<int>(parent.size());
        parent.push_back(fresh);
        out.labels(r, c) = fresh;
      } else {
        int m = neigh[0];
        for (int i = 1; i < n; ++i) m = std::min(m, neigh[i]);
        out.labels(r, c) = m;
        for (int i = 0; i < n; ++i) unite(m, neigh[i]);
      }
    }
  }

  // compress provisional labels to 1..count in scan order
  std::vector<int> remap(parent.size(), 0);
  for (auto& v : out.labels.data) {
    if (v == 0) continue;
    const int root = find_root(v);
    if (remap[root] == 0) remap[root] = ++out.count;
    v = remap[root];
  }
  return out;
}

inline void require_same_dims(const Mask& a, const Mask& b) {
  if (!a.same_shape(b)) throw DimMismatchError("mask dimensions differ");
}

// Dice similarity 2|A&B| / (|A|+|B|); 1.0 when both masks are empty.
inline double dsc(const Mask& pred, const Mask& gt) {
  require_same_dims(pred, gt);
  std::size_t inter = 0, total = 0;
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    const bool p = pred.data[i] != 0, g = gt.data[i] != 0;
    inter += (p && g);
    total += p + g;
  }
  if (total == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(total);
}

// Volume of `count` voxels in millilitres.
inline double volume_of_count(std::size_t count, const Spacing& sp) {
  return static_cast<double>(count) * (sp.x_mm * sp.y_mm * sp.slice_mm) / 1000.0;
}

inline double volume_ml(const Mask& mask, const Spacing& sp) {
  return volume_of_count(count_nonzero(mask), sp);
}

// Absolute volume difference in mL.
inline double avd(const Mask& pred, const Mask& gt, const Spacing& sp) {
  require_same_dims(pred, gt);
  return std::abs(volume_ml(pred, sp) - volume_ml(gt, sp));
}

// Absolute difference in lesion instance counts.
inline int ald(const Mask& pred, const Mask& gt, int connectivity = 8) {
  require_same_dims(pred, gt);
  return std::abs(connected_components(pred, connectivity).count -
                  connected_components(gt, connectivity).count);
}

// Lesion-wise F1. A ground-truth lesion counts as detected when any
// predicted voxel overlaps it; a predicted lesion is a false positive when
// it overlaps no ground-truth voxel. Both empty -> 1, exactly one empty -> 0.
inline double lf1(const Mask& pred, const Mask& gt, int connectivity = 8) {
  require_same_dims(pred, gt);
  const auto pc = connected_components(pred, connectivity);
  const auto gc = connected_components(gt, connectivity);
  if (pc.count == 0 && gc.count == 0) return 1.0;
  if (pc.count == 0 || gc.count == 0) return 0.0;

  std::vector<char> gt_hit(static_cast<std::size_t>(gc.count) + 1, 0);
  std::vector<char> pred_hit(static_cast<std::size_t>(pc.count) + 1, 0);
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    const int pl = pc.labels.data[i], gl = gc.labels.data[i];
    if (pl > 0 && gl > 0) {
      gt_hit[gl] = 1;
      pred_hit[pl] = 1;
    }
  }
  const auto tally = [](const std::vector<char>& v) {
    int n = 0;
    for (std::size_t i = 1; i < v.size(); ++i) n += v[i];
    return n;
  };
  const double recall = static_cast<double>(tally(gt_hit)) / gc.count;
  const double precision = static_cast<double>(tally(pred_hit)) / pc.count;
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

// Everything the ranking needs about one patient.
struct SegmentationMetrics {
  double dsc = 0.0;
  double avd_ml = 0.0;
  int ald = 0;
  double lf1 = 0.0;
  double gt_volume_ml = 0.0;
  int gt_lesion_count = 0;
  LesionCategory category = LesionCategory::N;
};

inline SegmentationMetrics evaluate_patient(const Mask& pred, const Mask& gt,
                                            const Spacing& sp,
                                            int connectivity = 8) {
  require_same_dims(pred, gt);
  SegmentationMetrics m;
  m.dsc = dsc(pred, gt);
  m.avd_ml = avd(pred, gt, sp);
  m.ald = ald(pred, gt, connectivity);
  m.lf1 = lf1(pred, gt, connectivity);
  m.gt_volume_ml = volume_ml(gt, sp);
  m.gt_lesion_count = connected_components(gt, connectivity).count;
  m.category = categorize(m.gt_volume_ml);
  return m;
}

}  // namespace fedseg
