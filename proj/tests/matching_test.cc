#include "semloc/matching.h"

#include <set>

#include <gtest/gtest.h>

#include "oracles.h"
#include "semloc/errors.h"
#include "semloc/random.h"

namespace semloc {
namespace {

DescriptorSet make_set(const std::vector<std::vector<float>>& rows) {
  DescriptorSet s;
  s.rows = static_cast<std::uint32_t>(rows.size());
  s.dim = rows.empty() ? 1 : static_cast<std::uint32_t>(rows[0].size());
  for (const auto& r : rows) s.data.insert(s.data.end(), r.begin(), r.end());
  return s;
}

std::vector<std::vector<float>> random_rows(Rng& rng, std::size_t n, std::size_t dim) {
  std::vector<std::vector<float>> rows(n, std::vector<float>(dim));
  for (auto& r : rows) {
    for (float& x : r) x = static_cast<float>(rng.normal());
  }
  return rows;
}

TEST(KnnRatioMatch, AcceptsBelowThreshold) {
  // d1 = 0.8, d2 = 1.0
  const auto m = knn_ratio_match(make_set({{0}}), make_set({{0.8f}, {-1.0f}}), 0.9);
  ASSERT_EQ(m.size(), 1u);
  EXPECT_EQ(m[0].db_kp, 0u);
  EXPECT_NEAR(m[0].distance, 0.8, 1e-7);
}

TEST(KnnRatioMatch, RejectsAboveThreshold) {
  // d1 = 0.95, d2 = 1.0
  EXPECT_TRUE(knn_ratio_match(make_set({{0}}), make_set({{0.95f}, {-1.0f}}), 0.9).empty());
}

TEST(KnnRatioMatch, RatioZeroAcceptsNothing) {
  Rng rng(1);
  const auto q = random_rows(rng, 30, 8);
  auto db = random_rows(rng, 40, 8);
  db[3] = q[0];  // even an exact duplicate (d1 = 0) is rejected
  EXPECT_TRUE(knn_ratio_match(make_set(q), make_set(db), 0.0).empty());
}

TEST(KnnRatioMatch, RatioOneAcceptsUniqueNearest) {
  const auto q = make_set({{0}, {5}});
  // Query 0 has a unique nearest; query 1 is equidistant from 4 and 6.
  const auto m = knn_ratio_match(q, make_set({{1}, {4}, {6}}), 1.0);
  ASSERT_EQ(m.size(), 1u);
  EXPECT_EQ(m[0].query_kp, 0u);
}

TEST(KnnRatioMatch, OneToOneKeepsSmallerDistance) {
  const auto m = knn_ratio_match(make_set({{0.3f}, {0.1f}, {0.2f}}),
                                 make_set({{0}, {10}}), 0.9);
  ASSERT_EQ(m.size(), 1u);
  EXPECT_EQ(m[0].query_kp, 1u);
}

TEST(KnnRatioMatch, Errors) {
  EXPECT_THROW(knn_ratio_match(make_set({{0, 0}}), make_set({{0}, {1}}), 0.9), DimMismatch);
  EXPECT_THROW(knn_ratio_match(make_set({{0}}), make_set({{1}}), 0.9), TooFewDescriptors);
}

TEST(KnnRatioMatch, MatchesAllPairsOracle) {
  Rng rng(2);
  for (int trial = 0; trial < 150; ++trial) {
    const std::size_t nq = trial == 0 ? 50 : 5 + rng.uniform_index(60);
    const std::size_t nd = trial == 0 ? 60 : 2 + rng.uniform_index(60);
    const std::size_t dim = 1 + rng.uniform_index(16);
    auto q = random_rows(rng, nq, dim);
    const auto db = random_rows(rng, nd, dim);
    // Plant near-duplicates so plenty of matches pass the test and some
    // compete for the same db row.
    for (std::size_t i = 0; i < nq / 2; ++i) {
      const auto& src = db[rng.uniform_index(nd)];
      for (std::size_t d = 0; d < dim; ++d) {
        q[i][d] = src[d] + static_cast<float>(rng.normal(0, 0.05));
      }
    }
    const double ratio = rng.uniform(0.5, 1.0);
    const auto ours = knn_ratio_match(make_set(q), make_set(db), ratio);
    const auto oracle = testing::knn_oracle(q, db, ratio);
    ASSERT_EQ(ours.size(), oracle.size()) << "trial " << trial;
    std::set<std::uint32_t> used;
    for (std::size_t i = 0; i < ours.size(); ++i) {
      EXPECT_EQ(ours[i].query_kp, oracle[i].query);
      EXPECT_EQ(ours[i].db_kp, oracle[i].db);
      EXPECT_EQ(ours[i].distance, oracle[i].distance);
      EXPECT_TRUE(used.insert(ours[i].db_kp).second) << "db keypoint used twice";
    }
  }
}

TEST(LiftMatches, KeepsOnlyLivePoints) {
  DbImageRecord img;
  img.id = 4;
  img.keypoints = {{1, 1}, {2, 2}, {3, 3}};
  img.point3d_ids = {7, kNoPoint, 9};
  SemanticPoint p7;
  p7.id = 7;
  const SemanticMap map({p7}, ClassTable::cityscapes());  // point 9 was pruned
  const std::vector<Eigen::Vector2d> query_kps = {{10, 10}, {20, 20}, {30, 30}};
  const std::vector<Match2D2D> matches = {{2, 0, 0.1}, {0, 1, 0.1}, {1, 2, 0.1}};
  const auto lifted = lift_matches(matches, query_kps, img, map, 4);
  ASSERT_EQ(lifted.size(), 1u);
  EXPECT_EQ(lifted[0].point3d, 7u);
  EXPECT_EQ(lifted[0].query_kp, 2u);
  EXPECT_EQ(lifted[0].query_px, Eigen::Vector2d(30, 30));
  EXPECT_EQ(lifted[0].source_image, 4u);
}

TEST(LiftMatches, NeverFabricates) {
  Rng rng(3);
  std::vector<SemanticPoint> pts;
  for (PointId id = 1; id <= 50; id += 2) {
    SemanticPoint p;
    p.id = id;
    pts.push_back(p);
  }
  const SemanticMap map(pts, ClassTable::cityscapes());
  DbImageRecord img;
  for (int i = 0; i < 80; ++i) {
    img.keypoints.emplace_back(i, i);
    img.point3d_ids.push_back(rng.uniform01() < 0.2 ? kNoPoint : 1 + rng.uniform_index(60));
  }
  std::vector<Eigen::Vector2d> qk(80, Eigen::Vector2d(1, 1));
  std::vector<Match2D2D> matches;
  for (std::uint32_t i = 0; i < 80; ++i) matches.push_back({i, i, 0.0});
  const auto lifted = lift_matches(matches, qk, img, map, 1);
  EXPECT_LE(lifted.size(), matches.size());
  for (const auto& m : lifted) EXPECT_NE(map.find(m.point3d), nullptr);
}

}  // namespace
}  // namespace semloc
