// Copyright 2026 The blindsight Authors
// SPDX-License-Identifier: Apache-2.0

#include "blindsight/attention.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "blindsight/error.hpp"
#include "generators.hpp"
#include "oracles.hpp"

namespace blindsight {
namespace {

constexpr auto kCausal = BaseVisibility::kCausal;

AttentionOutput from_rows(std::size_t rows, std::size_t cols, const std::vector<double>& data) {
  AttentionOutput out(rows, cols);
  out.data = data;
  return out;
}

double rel_frobenius(const std::vector<double>& a, const std::vector<double>& ref) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - ref[i]) * (a[i] - ref[i]);
    den += ref[i] * ref[i];
  }
  return std::sqrt(num / den);
}

TEST(MaskedAttention, SingleTokenReturnsValueRow) {
  const auto layout = TokenLayout::from_segments(1, {{SegmentKind::kText, 0, 1}});
  HeadTensor q(1, 4), k(1, 4), v(1, 3);
  q.data = {0.3f, -2.0f, 1.0f, 5.0f};
  k.data = {1.0f, 1.0f, -1.0f, 0.5f};
  v.data = {0.125f, -7.5f, 3.0f};
  const auto out = masked_attention(q.view(), k.view(), v.view(),
                                    build_mask(layout, MaskType::kDense, SinkSpec::prefix(0.1), kCausal));
  for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(out.at(0, c), static_cast<double>(v.at(0, c)));
}

TEST(MaskedAttention, FullImageDocumentSinkEqualsDense) {
  testing::Rng rng(31);
  const auto layout = TokenLayout::from_segments(48, {{SegmentKind::kImage, 0, 48}});
  const auto q = testing::random_tensor(rng, 48, 8), k = testing::random_tensor(rng, 48, 8),
             v = testing::random_tensor(rng, 48, 8);
  for (auto base : {kCausal, BaseVisibility::kCausalWithBidirectionalImages}) {
    const auto dense = masked_attention(q.view(), k.view(), v.view(),
                                        build_mask(layout, MaskType::kDense, SinkSpec::prefix(0.1), base));
    const auto ds = masked_attention(q.view(), k.view(), v.view(),
                                     build_mask(layout, MaskType::kDocumentSink, SinkSpec::prefix(0.1), base));
    EXPECT_EQ(dense.data, ds.data);
    EXPECT_EQ(nmse(ds, dense), 0.0);
  }
}

TEST(MaskedAttention, SinkMatchesNaiveLoop) {
  testing::Rng rng(32);
  const auto layout = TokenLayout::from_segments(
      64, {{SegmentKind::kText, 0, 4}, {SegmentKind::kImage, 4, 30}, {SegmentKind::kText, 30, 34},
           {SegmentKind::kImage, 34, 60}, {SegmentKind::kText, 60, 64}});
  const auto q = testing::random_tensor(rng, 64, 8), k = testing::random_tensor(rng, 64, 8),
             v = testing::random_tensor(rng, 64, 8);
  const auto sinks = SinkSpec::prefix(0.1);
  const auto out = masked_attention(q.view(), k.view(), v.view(), build_mask(layout, MaskType::kSink, sinks, kCausal));
  const auto ref = testing::naive_attention(q, k, v, testing::TokenFacts(layout, sinks), MaskType::kSink, kCausal);
  EXPECT_LE(rel_frobenius(out.data, ref), 1e-6);
}

TEST(MaskedAttention, LargeLogitsStayFinite) {
  const auto layout = TokenLayout::from_segments(6, {{SegmentKind::kText, 0, 6}});
  HeadTensor q(6, 2), k(6, 2), v(6, 1);
  for (std::size_t i = 0; i < 6; ++i) {
    q.at(i, 0) = 1e4f;
    k.at(i, 0) = static_cast<float>(i) * 1e3f;
    v.at(i, 0) = static_cast<float>(i);
  }
  const auto out = masked_attention(q.view(), k.view(), v.view(),
                                    build_mask(layout, MaskType::kDense, SinkSpec::prefix(0.1), kCausal));
  for (std::size_t i = 0; i < 6; ++i) EXPECT_DOUBLE_EQ(out.at(i, 0), static_cast<double>(i));
}

TEST(MaskedAttention, RejectsBadInputs) {
  const auto layout = TokenLayout::from_segments(4, {{SegmentKind::kText, 0, 4}});
  const auto mask = build_mask(layout, MaskType::kDense, SinkSpec::prefix(0.1), kCausal);
  HeadTensor q(4, 2), k(4, 2), v(4, 2), short_k(3, 2);
  try {
    masked_attention(q.view(), short_k.view(), v.view(), mask);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kShapeMismatch);
  }
  q.at(2, 1) = std::numeric_limits<float>::quiet_NaN();
  try {
    masked_attention(q.view(), k.view(), v.view(), mask);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNonFinite);
  }
  q.at(2, 1) = std::numeric_limits<float>::infinity();
  EXPECT_THROW(attention_probabilities(q.view(), k.view(), mask), Error);
}

TEST(Nmse, Examples) {
  const auto x = from_rows(2, 2, {1.0, -2.0, 0.5, 3.0});
  const auto twice = from_rows(2, 2, {2.0, -4.0, 1.0, 6.0});
  const auto zero = from_rows(2, 2, {0.0, 0.0, 0.0, 0.0});
  EXPECT_EQ(nmse(x, x), 0.0);
  EXPECT_DOUBLE_EQ(nmse(twice, x), 1.0);
  EXPECT_DOUBLE_EQ(nmse(zero, x), 1.0);
  try {
    nmse(x, zero);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDegenerateReference);
  }
  EXPECT_THROW(nmse(x, from_rows(1, 2, {1.0, 1.0})), Error);
}

// Properties.

TEST(AttentionProperty, MatchesNaiveLoopOnRandomInstances) {
  testing::Rng rng(33);
  testing::LayoutShape shape;
  shape.max_seq = 96;
  shape.max_image = 24;
  for (int i = 0; i < 60; ++i) {
    const auto layout = testing::random_layout(rng, shape);
    const auto sinks = testing::random_sinks(rng);
    const auto base = testing::random_base(rng);
    const std::size_t d = testing::uniform(rng, 1, 32);
    const std::size_t s = layout.seq_len();
    const auto q = testing::random_tensor(rng, s, d, 2.0), k = testing::random_tensor(rng, s, d, 2.0),
               v = testing::random_tensor(rng, s, testing::uniform(rng, 1, 16));
    const testing::TokenFacts facts(layout, sinks);
    for (auto t : kAllMaskTypes) {
      const auto out = masked_attention(q.view(), k.view(), v.view(), build_mask(layout, t, sinks, base));
      ASSERT_LE(rel_frobenius(out.data, testing::naive_attention(q, k, v, facts, t, base)), 1e-6);
    }
  }
}

TEST(AttentionProperty, RowsAreStochastic) {
  testing::Rng rng(34);
  for (int i = 0; i < 40; ++i) {
    const auto layout = testing::random_layout(rng, {.max_seq = 128, .max_images = 6, .max_image = 32});
    const auto s = layout.seq_len();
    const auto q = testing::random_tensor(rng, s, 8, 3.0), k = testing::random_tensor(rng, s, 8, 3.0);
    for (auto t : kAllMaskTypes) {
      const auto mask = build_mask(layout, t, SinkSpec::prefix(0.1), testing::random_base(rng));
      const auto p = attention_probabilities(q.view(), k.view(), mask);
      for (std::size_t r = 0; r < s; ++r) {
        double sum = 0.0;
        for (std::size_t c = 0; c < s; ++c) {
          sum += p[r * s + c];
          if (!mask.allows(r, c)) ASSERT_EQ(p[r * s + c], 0.0);
        }
        ASSERT_NEAR(sum, 1.0, 1e-6);
      }
    }
  }
}

TEST(AttentionProperty, ValueColumnPermutationCommutes) {
  testing::Rng rng(35);
  for (int i = 0; i < 30; ++i) {
    const auto layout = testing::random_layout(rng, {.max_seq = 96, .max_images = 4, .max_image = 24});
    const auto s = layout.seq_len();
    const std::size_t dv = 6;
    const auto q = testing::random_tensor(rng, s, 8), k = testing::random_tensor(rng, s, 8),
               v = testing::random_tensor(rng, s, dv);
    std::vector<std::size_t> perm(dv);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    HeadTensor pv(s, dv);
    for (std::size_t r = 0; r < s; ++r) {
      for (std::size_t c = 0; c < dv; ++c) pv.at(r, c) = v.at(r, perm[c]);
    }
    const auto mask = build_mask(layout, MaskType::kDocumentSink, SinkSpec::prefix(0.2), BaseVisibility::kCausal);
    const auto a = masked_attention(q.view(), k.view(), v.view(), mask);
    const auto b = masked_attention(q.view(), k.view(), pv.view(), mask);
    for (std::size_t r = 0; r < s; ++r) {
      for (std::size_t c = 0; c < dv; ++c) ASSERT_EQ(b.at(r, c), a.at(r, perm[c]));
    }
  }
}

TEST(AttentionProperty, EqualAllowedSetsGiveEqualOutputs) {
  testing::Rng rng(36);
  for (int i = 0; i < 40; ++i) {
    const auto layout = testing::random_layout(rng, {.max_seq = 96, .max_images = 3, .max_image = 24});
    const auto s = layout.seq_len();
    const auto q = testing::random_tensor(rng, s, 4), k = testing::random_tensor(rng, s, 4),
               v = testing::random_tensor(rng, s, 4);
    const auto sinks = testing::random_sinks(rng);
    const auto base = testing::random_base(rng);
    for (auto a : kAllMaskTypes) {
      for (auto b : kAllMaskTypes) {
        const auto ma = build_mask(layout, a, sinks, base);
        const auto mb = build_mask(layout, b, sinks, base);
        if (!(materialize(ma) == materialize(mb))) continue;
        EXPECT_EQ(masked_attention(q.view(), k.view(), v.view(), ma).data,
                  masked_attention(q.view(), k.view(), v.view(), mb).data);
      }
    }
  }
}

}  // namespace
}  // namespace blindsight
