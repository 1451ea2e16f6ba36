#include <random>

#include <gtest/gtest.h>

#include "branch_table.hpp"
#include "ctcpipe/decision.hpp"
#include "oracles.hpp"

using namespace ctc;

namespace {

BinaryMask strip(int w, int from, int to) {
  BinaryMask m(w, 1);
  for (int x = from; x < to; ++x) m.set(x, 0, 1);
  return m;
}

}  // namespace

TEST(Overlap, Examples) {
  const auto c = strip(20, 0, 10);
  EXPECT_EQ(overlap_fraction(strip(20, 0, 20), c), 1.0);
  EXPECT_EQ(overlap_fraction(strip(20, 10, 20), c), 0.0);
  EXPECT_EQ(overlap_fraction(strip(20, 7, 15), c), 0.3);
}

TEST(Overlap, ZeroAreaCandidateIsAnError) {
  try {
    overlap_fraction(strip(5, 0, 5), BinaryMask(5, 1));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::zero_area_candidate);
  }
}

TEST(Overlap, MatchesBruteForceRatio) {
  std::mt19937_64 rng(21);
  for (int i = 0; i < 500; ++i) {
    const int w = 1 + static_cast<int>(rng() % 64), h = 1 + static_cast<int>(rng() % 64);
    const auto t = oracle::random_mask(rng, w, h, static_cast<unsigned>(rng() % 101));
    auto c = oracle::random_mask(rng, w, h, static_cast<unsigned>(rng() % 101));
    if (oracle::count(c) == 0) c.set(0, 0, 1);
    const double expected =
        static_cast<double>(oracle::count_both(t, c)) / static_cast<double>(oracle::count(c));
    const double got = overlap_fraction(t, c);
    ASSERT_EQ(got, expected);
    ASSERT_GE(got, 0.0);
    ASSERT_LE(got, 1.0);
  }
}

TEST(Decide, BranchTableUnderBothSemantics) {
  for (const auto& row : branch_table::kRows) {
    EXPECT_EQ(decide(row.p_ck, row.p_cd45, {0.17, 0.2, Semantics::exclusionary}), row.exclusionary)
        << row.p_ck << " " << row.p_cd45;
    EXPECT_EQ(decide(row.p_ck, row.p_cd45, {0.17, 0.2, Semantics::paper_literal}), row.paper_literal)
        << row.p_ck << " " << row.p_cd45;
  }
}

TEST(Decide, Examples) {
  EXPECT_TRUE(decide(0.5, 0.0, {}));
  EXPECT_FALSE(decide(0.10, 0.0, {0.17, 0.2, Semantics::exclusionary}));
  EXPECT_FALSE(decide(0.10, 0.9, {0.17, 0.2, Semantics::paper_literal}));
  EXPECT_FALSE(decide(0.5, 0.3, {0.17, 0.2, Semantics::exclusionary}));
  EXPECT_TRUE(decide(0.5, 0.3, {0.17, 0.2, Semantics::paper_literal}));
}

TEST(Decide, MonotoneInCkOverlap) {
  for (auto sem : {Semantics::exclusionary, Semantics::paper_literal}) {
    const DecisionParams p{0.17, 0.2, sem};
    for (int cd = 0; cd <= 100; ++cd) {
      bool prev = false;
      for (int ck = 0; ck <= 100; ++ck) {
        const bool now = decide(ck / 100.0, cd / 100.0, p);
        ASSERT_FALSE(prev && !now) << "ck=" << ck << " cd45=" << cd;
        prev = now;
      }
    }
  }
}

TEST(Confidence, Examples) {
  ConfidenceInputs in;
  in.p_c = 0.9;
  in.p_ck = 0.8;
  in.p_ck_given_c = 0.5;
  in.p_cd45_given_c = 0.0;
  in.p_cd45 = 1.0;
  EXPECT_NEAR(confidence_score(in, Semantics::exclusionary), 0.36, 1e-15);
  EXPECT_EQ(confidence_score(in, Semantics::paper_literal), 0.0);
}

TEST(Confidence, BoundedAndAbsorbingZero) {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 2000; ++i) {
    ConfidenceInputs in{u(rng), u(rng), u(rng), u(rng), u(rng)};
    for (auto sem : {Semantics::exclusionary, Semantics::paper_literal}) {
      const double c = confidence_score(in, sem);
      ASSERT_GE(c, 0.0);
      ASSERT_LE(c, 1.0);
    }
    auto zeroed = in;
    switch (i % 4) {
      case 0: zeroed.p_ck = 0; break;
      case 1: zeroed.p_c = 0; break;
      case 2: zeroed.p_ck_given_c = 0; break;
      default: zeroed.p_cd45 = 0; break;
    }
    ASSERT_EQ(confidence_score(zeroed, Semantics::exclusionary), 0.0);
    ASSERT_EQ(confidence_score(zeroed, Semantics::paper_literal), 0.0);
  }
}

TEST(Confidence, RejectsFactorsOutsideUnitInterval) {
  ConfidenceInputs in;
  in.p_c = 1.5;
  EXPECT_THROW(confidence_score(in, Semantics::exclusionary), Error);
}

TEST(Classify, UsesMaskOverlapsAndIsSelfConsistent) {
  const auto c = strip(20, 0, 10);
  const auto ck = strip(20, 0, 8);     // 0.8
  const auto cd45 = strip(20, 9, 20);  // 0.1
  const auto v = classify_candidate(c, ck, cd45, {}, 0.9, 0.95);
  EXPECT_TRUE(v.is_ctc);
  EXPECT_EQ(v.p_ck_given_c(), 0.8);
  EXPECT_EQ(v.p_cd45_given_c(), 0.1);
  EXPECT_EQ(v.breakdown.p_cd45, 1.0);
  EXPECT_NEAR(v.breakdown.confidence, (1.0 - 0.1) * 0.8 * 0.95 * 0.9, 1e-15);
  EXPECT_EQ(v.bbox, (BoundingBox{0, 0, 10, 1}));
  EXPECT_TRUE(self_consistent(v));
  auto flipped = v;
  flipped.is_ctc = false;
  EXPECT_FALSE(self_consistent(flipped));
}

TEST(Classify, RejectsBadParamsAndMisalignedMasks) {
  const auto c = strip(20, 0, 10);
  EXPECT_THROW(classify_candidate(c, c, c, {1.5, 0.2, Semantics::exclusionary}), Error);
  try {
    classify_candidate(c, strip(19, 0, 5), c, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::dimension_mismatch);
  }
}

TEST(Semantics, ParsesBothSpellings) {
  EXPECT_EQ(parse_semantics("exclusionary"), Semantics::exclusionary);
  EXPECT_EQ(parse_semantics("paper-literal"), Semantics::paper_literal);
  EXPECT_EQ(parse_semantics("paper_literal"), Semantics::paper_literal);
  EXPECT_THROW(parse_semantics("lenient"), Error);
}

TEST(Grid, HundredthsAreExact) {
  const auto g = threshold_grid(0.01);
  ASSERT_EQ(g.size(), 101u);
  EXPECT_EQ(g[17], 0.17);
  EXPECT_EQ(g[20], 0.2);
  EXPECT_EQ(g.back(), 1.0);
  EXPECT_THROW(threshold_grid(0.0), Error);
}

TEST(Calibrate, SinglePairPicksSmallestSeparatingThresholds) {
  const std::vector<LabeledOverlap> data{{0.5, 0.0, true}, {0.1, 0.0, false}};
  const auto r = calibrate_thresholds(data, 0.01, Semantics::exclusionary);
  EXPECT_EQ(r.params.r1, 0.10);
  EXPECT_EQ(r.params.r2, 0.0);
  EXPECT_EQ(r.f1, 1.0);
}

TEST(Calibrate, OneClassIsUncalibratable) {
  for (bool label : {false, true}) {
    const std::vector<LabeledOverlap> data{{0.5, 0.0, label}, {0.1, 0.0, label}};
    try {
      calibrate_thresholds(data, 0.01, Semantics::exclusionary);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::uncalibratable);
    }
  }
}

TEST(Calibrate, NoTruePositiveAnywhereIsUncalibratable) {
  // Under the printed rule a positive with zero CD45 overlap is never accepted.
  const std::vector<LabeledOverlap> data{{0.5, 0.0, true}, {0.1, 0.0, false}};
  try {
    calibrate_thresholds(data, 0.01, Semantics::paper_literal);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::uncalibratable);
  }
}

TEST(Calibrate, MatchesBruteForceOnRandomSets) {
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 40; ++trial) {
    std::vector<LabeledOverlap> data;
    for (int i = 0; i < 30; ++i) {
      data.push_back({static_cast<double>(rng() % 101) / 100.0, static_cast<double>(rng() % 101) / 100.0,
                      rng() % 2 == 0});
    }
    data[0].label = true;
    data[1].label = false;
    for (auto sem : {Semantics::exclusionary, Semantics::paper_literal}) {
      const auto expected = oracle::calibrate(data, 20, sem);
      if (expected.f1 == 0) {
        EXPECT_THROW(calibrate_thresholds(data, 0.05, sem), Error);
        continue;
      }
      const auto got = calibrate_thresholds(data, 0.05, sem);
      ASSERT_EQ(got.params.r1, expected.i1 / 20.0) << trial;
      ASSERT_EQ(got.params.r2, expected.i2 / 20.0) << trial;
      ASSERT_EQ(oracle::rational(2 * got.tp, 2 * got.tp + got.fp + got.fn), expected.f1);
    }
  }
}
