// Copyright 2026 The blindsight Authors
// SPDX-License-Identifier: Apache-2.0

#include "blindsight/layout.hpp"

#include <gtest/gtest.h>

#include <set>

#include "blindsight/error.hpp"
#include "generators.hpp"

namespace blindsight {
namespace {

constexpr std::int64_t kStart = 1000;
constexpr std::int64_t kEnd = 1001;

Segment text(std::size_t a, std::size_t b) { return {SegmentKind::kText, a, b}; }
Segment image(std::size_t a, std::size_t b) { return {SegmentKind::kImage, a, b}; }

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an Error";
  return ErrorCode::kIo;
}

TEST(ParseLayout, MarkersBelongToTheImage) {
  const std::vector<std::int64_t> ids = {7, 7, kStart, 1, 1, 1, kEnd, 7};
  const auto layout = parse_layout(ids, kStart, kEnd);
  ASSERT_EQ(layout.segments().size(), 3u);
  EXPECT_EQ(layout.segments()[0], text(0, 2));
  EXPECT_EQ(layout.segments()[1], image(2, 7));
  EXPECT_EQ(layout.segments()[2], text(7, 8));
  EXPECT_EQ(layout.seq_len(), 8u);
}

TEST(ParseLayout, NoMarkersIsOneTextSegment) {
  const std::vector<std::int64_t> ids = {3, 4, 5, 6};
  const auto layout = parse_layout(ids, kStart, kEnd);
  ASSERT_EQ(layout.segments().size(), 1u);
  EXPECT_EQ(layout.segments()[0], text(0, 4));
  EXPECT_FALSE(layout.has_images());
}

TEST(ParseLayout, BackToBackImagesStaySeparate) {
  const std::vector<std::int64_t> ids = {kStart, 1, kEnd, kStart, 2, 2, kEnd};
  const auto layout = parse_layout(ids, kStart, kEnd);
  ASSERT_EQ(layout.segments().size(), 2u);
  EXPECT_EQ(layout.segments()[0], image(0, 3));
  EXPECT_EQ(layout.segments()[1], image(3, 7));
}

TEST(ParseLayout, MarkerErrorsNamePositions) {
  const std::vector<std::int64_t> nested = {kStart, 1, kStart, kEnd};
  try {
    parse_layout(nested, kStart, kEnd);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNestedMarker);
    EXPECT_NE(std::string(e.what()).find("position 2"), std::string::npos) << e.what();
  }
  const std::vector<std::int64_t> stray_end = {1, kEnd};
  try {
    parse_layout(stray_end, kStart, kEnd);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kUnmatchedMarker);
    EXPECT_NE(std::string(e.what()).find("position 1"), std::string::npos) << e.what();
  }
  const std::vector<std::int64_t> unclosed = {1, 1, kStart, 1};
  EXPECT_EQ(code_of([&] { parse_layout(unclosed, kStart, kEnd); }), ErrorCode::kUnmatchedMarker);
  EXPECT_EQ(code_of([&] { parse_layout(std::vector<std::int64_t>{}, kStart, kEnd); }), ErrorCode::kInvalidArgument);
}

TEST(TokenLayout, RejectsGapsOverlapsAndEmptySegments) {
  EXPECT_EQ(code_of([] { TokenLayout::from_segments(10, {text(0, 4), image(5, 10)}); }),
            ErrorCode::kInvalidArgument);
  EXPECT_EQ(code_of([] { TokenLayout::from_segments(10, {text(0, 6), image(5, 10)}); }),
            ErrorCode::kInvalidArgument);
  EXPECT_EQ(code_of([] { TokenLayout::from_segments(10, {text(0, 0), image(0, 10)}); }),
            ErrorCode::kInvalidArgument);
  EXPECT_EQ(code_of([] { TokenLayout::from_segments(12, {text(0, 4), image(4, 10)}); }),
            ErrorCode::kInvalidArgument);
}

TEST(TokenLayout, MergesAdjacentTextAndSortsInput) {
  const auto layout = TokenLayout::from_segments(10, {image(6, 10), text(3, 6), text(0, 3)});
  ASSERT_EQ(layout.segments().size(), 2u);
  EXPECT_EQ(layout.segments()[0], text(0, 6));
  EXPECT_EQ(layout.segments()[1], image(6, 10));
  EXPECT_EQ(layout.segment_index(5), 0u);
  EXPECT_EQ(layout.segment_index(6), 1u);
  EXPECT_EQ(layout.image_token_count(), 4u);
}

TEST(SinkRegion, PrefixExamples) {
  EXPECT_EQ(sink_region(image(10, 110), SinkSpec::prefix(0.1)).tokens,
            (std::vector<std::size_t>{10, 11, 12, 13, 14, 15, 16, 17, 18, 19}));
  EXPECT_EQ(sink_region(image(5, 8), SinkSpec::prefix(0.1)).tokens, (std::vector<std::size_t>{5}));
  // 0.1 * 110 is 11.000000000000002 in binary floating point.
  EXPECT_EQ(sink_region(image(0, 110), SinkSpec::prefix(0.1)).tokens.size(), 11u);
}

TEST(SinkRegion, FixedOffsets) {
  const auto r = sink_region(image(100, 356), SinkSpec::fixed_offsets({128, 0, 64}));
  EXPECT_EQ(r.tokens, (std::vector<std::size_t>{100, 164, 228}));
  EXPECT_FALSE(r.empty_flagged);
  const auto none = sink_region(image(0, 32), SinkSpec::fixed_offsets({64, 128}));
  EXPECT_TRUE(none.tokens.empty());
  EXPECT_TRUE(none.empty_flagged);
  EXPECT_EQ(code_of([] { sink_region(text(0, 3), SinkSpec::prefix(0.1)); }), ErrorCode::kInvalidArgument);
}

TEST(SinkSpec, RejectsInvalidParameters) {
  EXPECT_EQ(code_of([] { SinkSpec::prefix(0.0); }), ErrorCode::kInvalidArgument);
  EXPECT_EQ(code_of([] { SinkSpec::prefix(1.5); }), ErrorCode::kInvalidArgument);
  EXPECT_EQ(code_of([] { SinkSpec::fixed_offsets({}); }), ErrorCode::kInvalidArgument);
  EXPECT_NO_THROW(SinkSpec::prefix(1.0));
}

TEST(SinkSpec, ParsesTextAndJson) {
  EXPECT_EQ(parse_sink_spec("prefix:0.25"), SinkSpec::prefix(0.25));
  EXPECT_EQ(parse_sink_spec("offsets:64,0,128"), SinkSpec::fixed_offsets({0, 64, 128}));
  EXPECT_EQ(code_of([] { parse_sink_spec("suffix:3"); }), ErrorCode::kInvalidArgument);
  EXPECT_EQ(code_of([] { parse_sink_spec("offsets:1,x"); }), ErrorCode::kInvalidArgument);
  for (const auto& spec : {SinkSpec::prefix(0.1), SinkSpec::fixed_offsets({0, 7})}) {
    EXPECT_EQ(sink_spec_from_json(sink_spec_to_json(spec)), spec);
  }
}

// Properties over random layouts.

TEST(LayoutProperty, JsonRoundTripIsIdentity) {
  testing::Rng rng(11);
  for (int i = 0; i < 300; ++i) {
    const auto layout = testing::random_layout(rng, {});
    EXPECT_EQ(layout_from_json(layout_to_json(layout)), layout);
  }
}

TEST(LayoutProperty, TokenRoundTripIsIdentity) {
  // Rendering a layout as marker-delimited ids and parsing it back is the
  // identity for images of at least two tokens (room for both markers).
  testing::Rng rng(12);
  testing::LayoutShape shape;
  shape.min_image = 2;
  for (int i = 0; i < 300; ++i) {
    const auto layout = testing::random_layout(rng, shape);
    std::vector<std::int64_t> ids(layout.seq_len(), 7);
    for (const auto& img : layout.images()) {
      ids[img.start] = kStart;
      ids[img.end - 1] = kEnd;
    }
    EXPECT_EQ(parse_layout(ids, kStart, kEnd), layout);
  }
}

TEST(LayoutProperty, SinkRegionsAreDisjointImageSubsets) {
  testing::Rng rng(13);
  for (int i = 0; i < 300; ++i) {
    const auto layout = testing::random_layout(rng, {});
    const auto spec = testing::random_sinks(rng);
    std::set<std::size_t> seen;
    for (const auto& img : layout.images()) {
      for (std::size_t t : sink_region(img, spec).tokens) {
        EXPECT_TRUE(img.contains(t));
        EXPECT_TRUE(seen.insert(t).second) << "token " << t << " in two sink regions";
      }
    }
  }
}

TEST(LayoutProperty, PrefixSizeIsCeilWithFloorOne) {
  testing::Rng rng(14);
  std::uniform_real_distribution<double> frac(1e-4, 1.0);
  for (int i = 0; i < 2000; ++i) {
    const std::size_t len = testing::uniform(rng, 1, 2048);
    const double f = frac(rng);
    const auto r = sink_region(image(3, 3 + len), SinkSpec::prefix(f));
    // Independent statement of the rule with exact rational rounding where
    // f * len is not within 1e-9 of an integer.
    const double x = f * static_cast<double>(len);
    auto expect = static_cast<std::size_t>(std::ceil(x));
    if (std::abs(x - std::round(x)) < 1e-9) expect = static_cast<std::size_t>(std::llround(x));
    expect = std::max<std::size_t>(1, expect);
    ASSERT_EQ(r.tokens.size(), expect) << "len=" << len << " f=" << f;
    EXPECT_EQ(r.tokens.front(), 3u);
    EXPECT_EQ(r.tokens.back(), 3 + expect - 1);
  }
  EXPECT_EQ(sink_region(image(0, 37), SinkSpec::prefix(1.0)).tokens.size(), 37u);
}

}  // namespace
}  // namespace blindsight
