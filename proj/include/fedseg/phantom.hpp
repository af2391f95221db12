#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <iterator>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "fedseg/grid.hpp"
#include "fedseg/hash.hpp"
#include "fedseg/metrics.hpp"
#include "fedseg/rng.hpp"

namespace fedseg {

struct InfeasibleLesionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct EmptySplitError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// One emulated institution. Limited centers (is_large == false) hold no
// training data; they only validate generalization.
struct CenterProfile {
  int center_id = 0;
  bool is_large = true;
  int n_train = 0;
  int n_test = 0;
  std::array<double, 4> category_mix{0.25, 0.25, 0.25, 0.25};  // N, S, M, L
  double dwi_lesion_mean = 0.78;   // normalized units, hyperintense vs brain
  double dwi_lesion_std = 0.05;
  double adc_lesion_mean = 620.0;  // 1e-6 mm^2/s units, hypointense vs brain
  double adc_lesion_std = 25.0;
  Spacing voxel_spacing;
  int image_rows = 32;
  int image_cols = 32;
  std::uint64_t seed = 0;

  void validate() const {
    if (!is_large && n_train != 0)
      throw std::invalid_argument("limited centers are test-only (n_train must be 0)");
    if (n_train < 0 || n_test < 0)
      throw std::invalid_argument("negative patient count");
    double sum = 0.0;
    for (double p : category_mix) {
      if (p < 0.0) throw std::invalid_argument("negative category probability");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9)
      throw std::invalid_argument("category mix must sum to 1");
    if (voxel_spacing.x_mm <= 0 || voxel_spacing.y_mm <= 0 || voxel_spacing.slice_mm <= 0)
      throw std::invalid_argument("spacings must be positive");
    if (image_rows <= 0 || image_cols <= 0)
      throw std::invalid_argument("image size must be positive");
    if (dwi_lesion_std < 0 || adc_lesion_std < 0)
      throw std::invalid_argument("negative intensity stddev");
  }
};

// Two-channel synthetic study: DWI (normalized units) and ADC
// (1e-6 mm^2/s units) over the same single-slice grid, plus the expert mask.
struct PhantomStudy {
  Image dwi;
  Image adc;
  Mask gt_mask;
  Spacing spacing;
  std::string patient_id;
  int center_id = 0;
  LesionCategory category = LesionCategory::N;

  std::uint64_t digest() const {
    Fnv1a h;
    h.update_value(dwi.rows);
    h.update_value(dwi.cols);
    h.update_vector(dwi.data);
    h.update_vector(adc.data);
    h.update_vector(gt_mask.data);
    h.update_value(spacing.x_mm);
    h.update_value(spacing.y_mm);
    h.update_value(spacing.slice_mm);
    h.update_string(patient_id);
    h.update_value(center_id);
    h.update_value(static_cast<std::uint8_t>(category));
    return h.digest();
  }
};

struct CenterDataset {
  CenterProfile profile;
  std::vector<PhantomStudy> train;
  std::vector<PhantomStudy> test;

  std::uint64_t digest() const {
    Fnv1a h;
    h.update_value(profile.center_id);
    h.update_value<std::uint64_t>(train.size());
    for (const auto& s : train) h.update_value(s.digest());
    h.update_value<std::uint64_t>(test.size());
    for (const auto& s : test) h.update_value(s.digest());
    return h.digest();
  }
};

namespace detail {

// Brain phantom constants shared by both channels.
inline constexpr double kDwiBrainMean = 0.45;
inline constexpr double kDwiTextureAmp = 0.03;
inline constexpr double kDwiNoiseStd = 0.02;
inline constexpr double kAdcBrainMean = 790.0;
inline constexpr double kAdcTextureAmp = 12.0;
inline constexpr double kAdcNoiseStd = 18.0;
inline constexpr double kDwiLesionFloor = 0.62;   // keeps lesions hyperintense
inline constexpr double kAdcLesionCeil = 720.0;   // keeps lesions hypointense
inline constexpr double kMaxLesionBrainFraction = 0.60;

struct EllipseFrame {
  double cy, cx, ry, rx, phi;

  bool contains(int r, int c) const {
    const double dy = r - cy, dx = c - cx;
    const double cs = std::cos(phi), sn = std::sin(phi);
    const double u = (dy * cs + dx * sn) / ry;
    const double v = (-dy * sn + dx * cs) / rx;
    return u * u + v * v <= 1.0;
  }

  // Map unit-disc coordinates into voxel space.
  std::pair<double, double> to_voxel(double u, double v) const {
    const double cs = std::cos(phi), sn = std::sin(phi);
    return {cy + u * ry * cs - v * rx * sn, cx + u * ry * sn + v * rx * cs};
  }
};

struct CosineTexture {
  std::array<double, 3> fy, fx, phase;

  static CosineTexture draw(Rng& rng) {
    CosineTexture t;
    for (int j = 0; j < 3; ++j) {
      t.fy[j] = rng.uniform(0.02, 0.09);
      t.fx[j] = rng.uniform(0.02, 0.09);
      t.phase[j] = rng.uniform(0.0, 2.0 * 3.141592653589793);
    }
    return t;
  }

  double at(int r, int c) const {
    double s = 0.0;
    for (int j = 0; j < 3; ++j)
      s += std::cos(2.0 * 3.141592653589793 * (fy[j] * r + fx[j] * c) + phase[j]);
    return s / 3.0;
  }
};

// Category bounds in mL: (lo, hi]; L is open above.
inline void category_bounds_ml(LesionCategory cat, double& lo, double& hi) {
  switch (cat) {
    case LesionCategory::S: lo = 0.0; hi = 5.0; return;
    case LesionCategory::M: lo = 5.0; hi = 20.0; return;
    case LesionCategory::L: lo = 20.0; hi = -1.0; return;  // unbounded above
    case LesionCategory::N: lo = 0.0; hi = 0.0; return;
  }
}

// Voxel-count window [lo_vox, hi_vox] whose volume lands strictly inside the
// category, computed with the same volume_of_count used by the metrics so
// categorize(volume) is exact by construction.
inline bool category_voxel_window(LesionCategory cat, const Spacing& sp,
                                  std::size_t max_vox, std::size_t& lo_vox,
                                  std::size_t& hi_vox) {
  double lo_ml, hi_ml;
  category_bounds_ml(cat, lo_ml, hi_ml);
  std::size_t n = lo_ml <= 0.0
                      ? 1
                      : static_cast<std::size_t>(
                            std::floor(lo_ml * 1000.0 / (sp.x_mm * sp.y_mm * sp.slice_mm)));
  if (n < 1) n = 1;
  while (volume_of_count(n, sp) <= lo_ml) ++n;
  lo_vox = n;
  if (hi_ml < 0.0) {
    hi_vox = max_vox;
  } else {
    std::size_t m = static_cast<std::size_t>(
        std::ceil(hi_ml * 1000.0 / (sp.x_mm * sp.y_mm * sp.slice_mm)));
    while (m > 0 && volume_of_count(m, sp) > hi_ml) --m;
    hi_vox = std::min(m, max_vox);
  }
  return lo_vox <= hi_vox && lo_vox >= 1;
}

}  // namespace detail

// Category sampled from the profile's mix.
inline LesionCategory sample_category(const std::array<double, 4>& mix, Rng& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  for (int i = 0; i < 4; ++i) {
    acc += mix[i];
    if (u < acc) return static_cast<LesionCategory>(i);
  }
  return LesionCategory::L;
}

// Deterministic phantom: an elliptical brain with low-frequency texture and
// voxel noise on both channels; the lesion is the top-N superlevel set of a
// few Gaussian bumps, grown to a voxel count whose volume falls in the
// requested category. DWI lesion voxels are hyperintense, ADC hypointense.
// The draw order from rng is fixed, so identical (profile, seed, category)
// reproduce the study bit-exactly.
inline PhantomStudy generate_phantom(const CenterProfile& profile, Rng& rng,
                                     LesionCategory category) {
  profile.validate();
  const int rows = profile.image_rows, cols = profile.image_cols;

  detail::EllipseFrame brain;
  brain.cy = rows / 2.0 + rng.uniform(-1.5, 1.5);
  brain.cx = cols / 2.0 + rng.uniform(-1.5, 1.5);
  brain.ry = rows * rng.uniform(0.38, 0.44);
  brain.rx = cols * rng.uniform(0.34, 0.40);
  brain.phi = rng.uniform(0.0, 3.141592653589793);

  const auto dwi_tex = detail::CosineTexture::draw(rng);
  const auto adc_tex = detail::CosineTexture::draw(rng);

  PhantomStudy study;
  study.spacing = profile.voxel_spacing;
  study.center_id = profile.center_id;
  study.category = category;
  study.dwi = Image(rows, cols, 0.0);
  study.adc = Image(rows, cols, 0.0);
  study.gt_mask = Mask(rows, cols, 0);

  std::vector<std::size_t> brain_voxels;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const double dwi_noise = rng.normal();
      const double adc_noise = rng.normal();
      if (!brain.contains(r, c)) continue;
      brain_voxels.push_back(static_cast<std::size_t>(r) * cols + c);
      study.dwi(r, c) = detail::kDwiBrainMean +
                        detail::kDwiTextureAmp * dwi_tex.at(r, c) +
                        detail::kDwiNoiseStd * dwi_noise;
      study.adc(r, c) = detail::kAdcBrainMean +
                        detail::kAdcTextureAmp * adc_tex.at(r, c) +
                        detail::kAdcNoiseStd * adc_noise;
    }
  }

  if (category == LesionCategory::N) return study;

  const auto max_vox = static_cast<std::size_t>(
      detail::kMaxLesionBrainFraction * static_cast<double>(brain_voxels.size()));
  std::size_t lo_vox, hi_vox;
  if (!detail::category_voxel_window(category, study.spacing, max_vox, lo_vox, hi_vox))
    throw InfeasibleLesionError(
        "category volume range infeasible for image size and spacing (center " +
        std::to_string(profile.center_id) + ")");
  const auto target = static_cast<std::size_t>(
      rng.uniform_int(static_cast<std::int64_t>(lo_vox), static_cast<std::int64_t>(hi_vox)));

  int bumps = 1;
  switch (category) {
    case LesionCategory::S: bumps = rng.uniform() < 0.3 ? 2 : 1; break;
    case LesionCategory::M: bumps = 1 + static_cast<int>(rng.uniform_int(0, 2)); break;
    case LesionCategory::L: bumps = 2 + static_cast<int>(rng.uniform_int(0, 2)); break;
    default: break;
  }

  struct Bump {
    double y, x, sigma, weight;
  };
  std::vector<Bump> blobs(bumps);
  const double base_sigma = std::sqrt(static_cast<double>(target) /
                                      (3.141592653589793 * bumps));
  for (auto& b : blobs) {
    const double angle = rng.uniform(0.0, 2.0 * 3.141592653589793);
    const double radius = 0.78 * std::sqrt(rng.uniform());
    const auto [y, x] = brain.to_voxel(radius * std::cos(angle), radius * std::sin(angle));
    b.y = y;
    b.x = x;
    b.sigma = std::max(1.2, base_sigma * rng.uniform(0.55, 0.95));
    b.weight = rng.uniform(0.75, 1.0);
  }

  // top `target` field values inside the brain become the lesion
  std::vector<std::pair<double, std::size_t>> field;
  field.reserve(brain_voxels.size());
  for (auto idx : brain_voxels) {
    const int r = static_cast<int>(idx) / cols, c = static_cast<int>(idx) % cols;
    double f = 0.0;
    for (const auto& b : blobs) {
      const double d2 = (r - b.y) * (r - b.y) + (c - b.x) * (c - b.x);
      f += b.weight * std::exp(-d2 / (2.0 * b.sigma * b.sigma));
    }
    field.emplace_back(f, idx);
  }
  std::sort(field.begin(), field.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  for (std::size_t i = 0; i < target; ++i) study.gt_mask.data[field[i].second] = 1;

  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      if (!study.gt_mask(r, c)) continue;
      study.dwi(r, c) = std::max(
          rng.normal(profile.dwi_lesion_mean, profile.dwi_lesion_std),
          detail::kDwiLesionFloor);
      study.adc(r, c) = std::min(
          rng.normal(profile.adc_lesion_mean, profile.adc_lesion_std),
          detail::kAdcLesionCeil);
    }
  }
  return study;
}

// Stratified split hitting an exact train count; per-category proportions
// hold to within one study. Selection within a category is a seeded shuffle.
inline std::pair<std::vector<PhantomStudy>, std::vector<PhantomStudy>>
stratified_split_exact(const std::vector<PhantomStudy>& studies,
                       std::size_t n_train, std::uint64_t seed) {
  if (studies.empty()) throw EmptySplitError("cannot split an empty study list");
  if (n_train > studies.size())
    throw std::invalid_argument("train count exceeds study count");

  std::array<std::vector<std::size_t>, 4> by_cat;
  for (std::size_t i = 0; i < studies.size(); ++i)
    by_cat[static_cast<int>(studies[i].category)].push_back(i);

  const double fraction =
      static_cast<double>(n_train) / static_cast<double>(studies.size());
  std::array<std::size_t, 4> take{};
  std::array<double, 4> frac{};
  std::size_t assigned = 0;
  for (int c = 0; c < 4; ++c) {
    const double t = fraction * static_cast<double>(by_cat[c].size());
    take[c] = static_cast<std::size_t>(std::floor(t));
    frac[c] = t - static_cast<double>(take[c]);
    assigned += take[c];
  }
  // hand out the remainder by largest fractional part, category order on ties
  while (assigned < n_train) {
    int best = -1;
    for (int c = 0; c < 4; ++c) {
      if (take[c] >= by_cat[c].size()) continue;
      if (best < 0 || frac[c] > frac[best]) best = c;
    }
    if (best < 0) throw std::logic_error("stratified split bookkeeping failed");
    ++take[best];
    frac[best] = -1.0;
    ++assigned;
  }

  Rng rng(seed);
  std::vector<char> in_train(studies.size(), 0);
  for (int c = 0; c < 4; ++c) {
    const auto perm = rng.permutation(by_cat[c].size());
    for (std::size_t k = 0; k < take[c]; ++k) in_train[by_cat[c][perm[k]]] = 1;
  }
  std::pair<std::vector<PhantomStudy>, std::vector<PhantomStudy>> out;
  for (std::size_t i = 0; i < studies.size(); ++i)
    (in_train[i] ? out.first : out.second).push_back(studies[i]);
  return out;
}

inline std::pair<std::vector<PhantomStudy>, std::vector<PhantomStudy>>
stratified_split(const std::vector<PhantomStudy>& studies, double train_fraction,
                 std::uint64_t seed) {
  if (studies.empty()) throw EmptySplitError("cannot split an empty study list");
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw std::invalid_argument("train_fraction must lie in (0,1)");
  const auto n_train = static_cast<std::size_t>(
      std::floor(train_fraction * static_cast<double>(studies.size()) + 0.5));
  return stratified_split_exact(studies, n_train, seed);
}

// All of one center's phantoms, generated on the center's own seed stream
// and stratified into train/test at the profile's exact counts.
inline CenterDataset generate_center(const CenterProfile& profile) {
  profile.validate();
  const int total = profile.n_train + profile.n_test;
  std::vector<PhantomStudy> studies;
  studies.reserve(total);
  for (int i = 0; i < total; ++i) {
    Rng rng(derive_seed(profile.seed, kSeedStudy, static_cast<std::uint64_t>(i)));
    const LesionCategory cat = sample_category(profile.category_mix, rng);
    PhantomStudy s = generate_phantom(profile, rng, cat);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "c%02d_p%03d", profile.center_id, i);
    s.patient_id = buf;
    studies.push_back(std::move(s));
  }
  CenterDataset out;
  out.profile = profile;
  if (total > 0) {
    auto [train, test] = stratified_split_exact(
        studies, static_cast<std::size_t>(profile.n_train),
        derive_seed(profile.seed, kSeedSplit));
    out.train = std::move(train);
    out.test = std::move(test);
  }
  return out;
}

// The default 14-center federation: 10 large and 4 limited centers whose
// relative training sizes follow the reference cohort (the biggest center
// holds ~40% of pooled training patients) and whose spacing, intensity and
// category mixes vary per center. In-plane spacings are scaled up ~4x from
// clinical values so that every volume category fits a 32x32 single slice.
inline std::vector<CenterProfile> default_federation(std::uint64_t master_seed = 42) {
  struct Row {
    int id;
    bool large;
    int n_train, n_test;
    double inplane, slice;
    double dwi_mean, dwi_std;
    double adc_mean, adc_std;
    std::array<double, 4> mix;
  };
  static const Row rows[] = {
      {1, true, 10, 3, 4.62, 6.38, 0.78, 0.05, 620, 25, {0.15, 0.50, 0.25, 0.10}},
      {2, false, 0, 8, 4.61, 6.40, 0.70, 0.07, 648, 32, {0.20, 0.35, 0.30, 0.15}},
      {3, false, 0, 16, 4.65, 6.37, 0.86, 0.06, 596, 28, {0.10, 0.40, 0.35, 0.15}},
      {4, true, 15, 4, 4.60, 6.38, 0.74, 0.06, 610, 30, {0.15, 0.40, 0.30, 0.15}},
      {5, true, 7, 2, 4.68, 6.38, 0.80, 0.05, 632, 22, {0.20, 0.30, 0.35, 0.15}},
      {6, true, 48, 12, 4.68, 6.38, 0.76, 0.06, 618, 28, {0.10, 0.50, 0.28, 0.12}},
      {7, true, 11, 3, 4.43, 6.38, 0.82, 0.04, 605, 20, {0.15, 0.35, 0.30, 0.20}},
      {8, true, 5, 1, 4.63, 6.38, 0.72, 0.06, 640, 30, {0.25, 0.35, 0.25, 0.15}},
      {9, false, 0, 8, 4.60, 6.38, 0.69, 0.05, 655, 30, {0.15, 0.30, 0.40, 0.15}},
      {10, true, 12, 3, 5.20, 5.78, 0.77, 0.07, 615, 25, {0.10, 0.55, 0.25, 0.10}},
      {11, true, 3, 1, 4.94, 6.20, 0.84, 0.05, 628, 24, {0.10, 0.30, 0.45, 0.15}},
      {12, true, 6, 2, 4.34, 5.78, 0.75, 0.05, 600, 22, {0.20, 0.40, 0.25, 0.15}},
      {13, true, 2, 1, 4.30, 6.08, 0.79, 0.06, 624, 26, {0.15, 0.35, 0.30, 0.20}},
      {14, false, 0, 1, 4.38, 5.60, 0.73, 0.08, 588, 26, {0.00, 0.30, 0.55, 0.15}},
  };
  std::vector<CenterProfile> out;
  out.reserve(std::size(rows));
  for (const auto& r : rows) {
    CenterProfile p;
    p.center_id = r.id;
    p.is_large = r.large;
    p.n_train = r.n_train;
    p.n_test = r.n_test;
    p.category_mix = r.mix;
    p.dwi_lesion_mean = r.dwi_mean;
    p.dwi_lesion_std = r.dwi_std;
    p.adc_lesion_mean = r.adc_mean;
    p.adc_lesion_std = r.adc_std;
    p.voxel_spacing = {r.inplane, r.inplane, r.slice};
    p.image_rows = 32;
    p.image_cols = 32;
    p.seed = derive_seed(master_seed, kSeedCenter, static_cast<std::uint64_t>(r.id));
    p.validate();
    out.push_back(p);
  }
  return out;
}

}  // namespace fedseg
