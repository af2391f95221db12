#include <gtest/gtest.h>

#include <vector>

#include "fedseg/metrics.hpp"
#include "fedseg/rng.hpp"
#include "test_util.hpp"

using namespace fedseg;
using testutil::make_mask;
using testutil::random_mask;

namespace {

// Independent oracle: plain recursive-style flood fill with an explicit
// stack, structurally different from the union-find implementation.
int flood_fill_count(const Mask& mask, int connectivity) {
  const int rows = mask.rows, cols = mask.cols;
  std::vector<char> seen(mask.data.size(), 0);
  int count = 0;
  for (int sr = 0; sr < rows; ++sr) {
    for (int sc = 0; sc < cols; ++sc) {
      const std::size_t start = static_cast<std::size_t>(sr) * cols + sc;
      if (!mask.data[start] || seen[start]) continue;
      ++count;
      std::vector<std::pair<int, int>> stack{{sr, sc}};
      seen[start] = 1;
      while (!stack.empty()) {
        const auto [r, c] = stack.back();
        stack.pop_back();
        for (int dr = -1; dr <= 1; ++dr) {
          for (int dc = -1; dc <= 1; ++dc) {
            if (dr == 0 && dc == 0) continue;
            if (connectivity == 4 && dr != 0 && dc != 0) continue;
            const int nr = r + dr, nc = c + dc;
            if (nr < 0 || nr >= rows || nc < 0 || nc >= cols) continue;
            const std::size_t ni = static_cast<std::size_t>(nr) * cols + nc;
            if (!mask.data[ni] || seen[ni]) continue;
            seen[ni] = 1;
            stack.emplace_back(nr, nc);
          }
        }
      }
    }
  }
  return count;
}

}  // namespace

TEST(ConnectedComponents, EmptyMask) {
  EXPECT_EQ(connected_components(make_mask(8, 8), 8).count, 0);
  EXPECT_EQ(connected_components(make_mask(8, 8), 4).count, 0);
}

TEST(ConnectedComponents, DiagonalPairDependsOnConnectivity) {
  const auto m = make_mask(4, 4, {{1, 1}, {2, 2}});
  EXPECT_EQ(connected_components(m, 8).count, 1);
  EXPECT_EQ(connected_components(m, 4).count, 2);
}

TEST(ConnectedComponents, LabelsAreCompact) {
  const auto m = make_mask(4, 8, {{0, 0}, {0, 7}, {3, 3}, {3, 4}});
  const auto lc = connected_components(m, 8);
  EXPECT_EQ(lc.count, 3);
  int max_label = 0;
  for (auto v : lc.labels.data) max_label = std::max(max_label, v);
  EXPECT_EQ(max_label, lc.count);
}

TEST(ConnectedComponents, MatchesFloodFillOracleOnRandomMasks) {
  Rng rng(2024);
  for (int iter = 0; iter < 200; ++iter) {
    const auto m = random_mask(16, 16, rng, rng.uniform(0.15, 0.6));
    for (int conn : {4, 8}) {
      EXPECT_EQ(connected_components(m, conn).count, flood_fill_count(m, conn))
          << "iteration " << iter << " connectivity " << conn;
    }
  }
}

TEST(ConnectedComponents, RejectsBadConnectivity) {
  EXPECT_THROW(connected_components(make_mask(2, 2), 6), std::invalid_argument);
}

TEST(Dsc, PerfectAndDisjointAndHalf) {
  const auto a = make_mask(4, 4, {{0, 0}, {1, 1}});
  EXPECT_DOUBLE_EQ(dsc(a, a), 1.0);
  const auto b = make_mask(4, 4, {{3, 3}, {2, 2}});
  EXPECT_DOUBLE_EQ(dsc(a, b), 0.0);
  const auto c = make_mask(4, 4, {{0, 0}, {2, 2}});
  EXPECT_DOUBLE_EQ(dsc(a, c), 0.5);  // |A|=2, |B|=2, overlap 1
}

TEST(Dsc, BothEmptyIsPerfect) {
  EXPECT_DOUBLE_EQ(dsc(make_mask(3, 3), make_mask(3, 3)), 1.0);
}

TEST(Dsc, SymmetricAndBounded) {
  Rng rng(5);
  for (int iter = 0; iter < 50; ++iter) {
    const auto a = random_mask(8, 8, rng);
    const auto b = random_mask(8, 8, rng);
    const double d = dsc(a, b);
    EXPECT_DOUBLE_EQ(d, dsc(b, a));
    EXPECT_GE(d, 0.0);
    EXPECT_LE(d, 1.0);
  }
}

TEST(Dsc, RejectsDimMismatch) {
  EXPECT_THROW(dsc(make_mask(2, 2), make_mask(2, 3)), DimMismatchError);
}

TEST(VolumeMl, UnitConversion) {
  EXPECT_DOUBLE_EQ(volume_ml(make_mask(4, 4), {1, 1, 1}), 0.0);

  Mask thousand(40, 25, 1);  // 1000 voxels
  EXPECT_DOUBLE_EQ(volume_ml(thousand, {1, 1, 1}), 1.0);

  Mask ten(5, 2, 1);  // 10 voxels at the reference center-1 spacing
  EXPECT_NEAR(volume_ml(ten, {0.93, 0.93, 6.0}), 0.051894, 1e-12);
}

TEST(Avd, ExamplesAndSymmetry) {
  const auto a = make_mask(4, 4, {{0, 0}, {1, 1}});
  EXPECT_DOUBLE_EQ(avd(a, a, {1, 1, 1}), 0.0);

  Mask ten(5, 4, 0), seven(5, 4, 0);
  for (int i = 0; i < 10; ++i) ten.data[i] = 1;
  for (int i = 0; i < 7; ++i) seven.data[i] = 1;
  EXPECT_NEAR(avd(ten, seven, {1, 1, 2}), 0.006, 1e-15);  // |20 - 14| mm^3
  EXPECT_DOUBLE_EQ(avd(ten, seven, {1, 1, 2}), avd(seven, ten, {1, 1, 2}));
}

TEST(Ald, CountsComponentDifference) {
  const auto one = make_mask(8, 8, {{4, 4}});
  EXPECT_EQ(ald(one, one, 8), 0);
  const auto three = make_mask(8, 8, {{0, 0}, {0, 4}, {7, 7}});
  EXPECT_EQ(ald(three, one, 8), 2);

  Rng rng(17);
  for (int iter = 0; iter < 50; ++iter) {
    const auto a = random_mask(12, 12, rng, 0.3);
    const auto b = random_mask(12, 12, rng, 0.3);
    EXPECT_EQ(ald(a, b, 4),
              std::abs(flood_fill_count(a, 4) - flood_fill_count(b, 4)));
  }
}

TEST(Lf1, PerfectSingleLesion) {
  const auto m = make_mask(6, 6, {{2, 2}, {2, 3}, {3, 2}});
  EXPECT_DOUBLE_EQ(lf1(m, m, 8), 1.0);
}

TEST(Lf1, PartialDetectionWithFalsePositive) {
  // gt has two lesions; pred hits one of them and adds one pure false
  // positive: precision 1/2, recall 1/2, F1 = 1/2.
  const auto gt = make_mask(8, 8, {{1, 1}, {6, 6}});
  const auto pred = make_mask(8, 8, {{1, 1}, {4, 0}});
  EXPECT_DOUBLE_EQ(lf1(pred, gt, 8), 0.5);
}

TEST(Lf1, EmptyConventions) {
  const auto empty = make_mask(4, 4);
  const auto some = make_mask(4, 4, {{1, 1}});
  EXPECT_DOUBLE_EQ(lf1(empty, empty, 8), 1.0);
  EXPECT_DOUBLE_EQ(lf1(empty, some, 8), 0.0);
  EXPECT_DOUBLE_EQ(lf1(some, empty, 8), 0.0);
}

TEST(Categorize, ExactBoundaries) {
  EXPECT_EQ(categorize(0.0), LesionCategory::N);
  EXPECT_EQ(categorize(4.999), LesionCategory::S);
  EXPECT_EQ(categorize(5.0), LesionCategory::S);
  EXPECT_EQ(categorize(5.001), LesionCategory::M);
  EXPECT_EQ(categorize(20.0), LesionCategory::M);
  EXPECT_EQ(categorize(20.001), LesionCategory::L);
  EXPECT_EQ(categorize(25.0), LesionCategory::L);
  EXPECT_THROW(categorize(-1.0), std::invalid_argument);
}

TEST(Categorize, PartitionsTheLine) {
  Rng rng(3);
  for (int iter = 0; iter < 200; ++iter) {
    const double v = rng.uniform(0.0, 40.0);
    const auto c = categorize(v);
    const bool is_n = v == 0.0;
    const bool is_s = v > 0.0 && v <= 5.0;
    const bool is_m = v > 5.0 && v <= 20.0;
    const bool is_l = v > 20.0;
    EXPECT_EQ(is_n ? 1 : 0, c == LesionCategory::N ? 1 : 0);
    EXPECT_EQ(is_s ? 1 : 0, c == LesionCategory::S ? 1 : 0);
    EXPECT_EQ(is_m ? 1 : 0, c == LesionCategory::M ? 1 : 0);
    EXPECT_EQ(is_l ? 1 : 0, c == LesionCategory::L ? 1 : 0);
  }
}

TEST(EvaluatePatient, PerfectSegmentation) {
  const auto gt = make_mask(8, 8, {{2, 2}, {2, 3}, {5, 5}});
  const auto m = evaluate_patient(gt, gt, {1, 1, 1}, 8);
  EXPECT_DOUBLE_EQ(m.dsc, 1.0);
  EXPECT_DOUBLE_EQ(m.avd_ml, 0.0);
  EXPECT_EQ(m.ald, 0);
  EXPECT_DOUBLE_EQ(m.lf1, 1.0);
  EXPECT_EQ(m.gt_lesion_count, 2);
}

TEST(EvaluatePatient, ControlPatientWithEmptyPrediction) {
  const auto empty = make_mask(8, 8);
  const auto m = evaluate_patient(empty, empty, {1, 1, 1}, 8);
  EXPECT_DOUBLE_EQ(m.dsc, 1.0);
  EXPECT_DOUBLE_EQ(m.lf1, 1.0);
  EXPECT_DOUBLE_EQ(m.avd_ml, 0.0);
  EXPECT_EQ(m.ald, 0);
  EXPECT_EQ(m.category, LesionCategory::N);
}

TEST(EvaluatePatient, ComposedWorkedExample) {
  // pred hits one of two gt lesions, adds one false positive, and over-
  // segments: combining the per-metric oracles worked out by hand.
  const auto gt = make_mask(8, 8, {{1, 1}, {6, 6}});
  const auto pred = make_mask(8, 8, {{1, 1}, {1, 2}, {4, 0}});
  const auto m = evaluate_patient(pred, gt, {1, 1, 2}, 8);
  EXPECT_DOUBLE_EQ(m.dsc, 2.0 * 1.0 / (3.0 + 2.0));
  EXPECT_NEAR(m.avd_ml, 0.002, 1e-15);  // |6 - 4| mm^3
  EXPECT_EQ(m.ald, 0);                  // both have 2 components
  EXPECT_DOUBLE_EQ(m.lf1, 0.5);
  EXPECT_EQ(m.gt_lesion_count, 2);
  EXPECT_EQ(m.category, LesionCategory::S);
}
