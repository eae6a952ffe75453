// Copyright 2026 The blindsight Authors
// SPDX-License-Identifier: Apache-2.0

#include "blindsight/capture_io.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <limits>

#include "blindsight/error.hpp"
#include "generators.hpp"

namespace blindsight {
namespace {

namespace fs = std::filesystem;

const ModelMeta kModel{"tiny", 2, 2, 8};

TokenLayout small_layout() {
  return TokenLayout::from_segments(16, {{SegmentKind::kText, 0, 4}, {SegmentKind::kImage, 4, 12},
                                         {SegmentKind::kText, 12, 16}});
}

PromptCapture random_capture(const std::string& id, std::uint64_t seed, const ModelMeta& model = kModel) {
  testing::Rng rng(seed);
  auto c = make_capture(id, small_layout(), model);
  std::normal_distribution<float> n(0.0f, 1.0f);
  for (auto* t : {&c.q, &c.k, &c.v}) {
    for (auto& x : *t) x = n(rng);
  }
  return c;
}

ErrorCode load_error(const fs::path& dir) {
  try {
    load_capture(dir);
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "load_capture did not throw";
  return ErrorCode::kInvalidArgument;
}

nlohmann::json read_manifest(const fs::path& dir) {
  std::ifstream in(dir / "manifest.json");
  return nlohmann::json::parse(in);
}

void write_manifest(const fs::path& dir, const nlohmann::json& j) {
  std::ofstream(dir / "manifest.json", std::ios::trunc) << j.dump(2);
}

TEST(CaptureIo, RoundTripIsBitExact) {
  testing::TempDir dir("cap");
  const std::vector<PromptCapture> caps = {random_capture("a", 1), random_capture("b", 2)};
  save_capture(caps, kModel, dir.path());
  const auto loaded = load_capture(dir.path());
  ASSERT_EQ(loaded.size(), 2u);
  EXPECT_EQ(loaded[0], caps[0]);
  EXPECT_EQ(loaded[1], caps[1]);
  CaptureReader reader(dir.path());
  EXPECT_EQ(reader.model(), kModel);
  EXPECT_EQ(reader.entry(1).id, "b");
}

TEST(CaptureIo, ManifestLayout) {
  testing::TempDir dir("cap");
  const std::vector<PromptCapture> caps = {random_capture("p0", 3)};
  save_capture(caps, kModel, dir.path());
  const auto m = read_manifest(dir.path());
  EXPECT_EQ(m["version"], 1);
  const auto& p = m["prompts"][0];
  EXPECT_EQ(p["dtype"], "f32");
  EXPECT_EQ(p["byte_order"], "little");
  EXPECT_EQ(p["shape"], nlohmann::json({2, 2, 16, 8}));
  EXPECT_EQ(p["tensors"]["q"], "prompts/p0/q.bin");
  EXPECT_EQ(fs::file_size(dir / "prompts/p0/q.bin"), 2u * 2u * 16u * 8u * 4u);
}

TEST(CaptureIo, EmptyPromptListIsValid) {
  testing::TempDir dir("cap");
  save_capture({}, kModel, dir.path());
  EXPECT_TRUE(load_capture(dir.path()).empty());
  EXPECT_EQ(CaptureReader(dir.path()).model(), kModel);
}

TEST(CaptureIo, RefusesOverwriteWithoutForce) {
  testing::TempDir dir("cap");
  const std::vector<PromptCapture> caps = {random_capture("a", 1)};
  save_capture(caps, kModel, dir.path());
  try {
    save_capture(caps, kModel, dir.path());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kAlreadyExists);
  }
  EXPECT_NO_THROW(save_capture(caps, kModel, dir.path(), true));
}

TEST(CaptureIo, TruncatedFileNamesTheFile) {
  testing::TempDir dir("cap");
  const std::vector<PromptCapture> caps = {random_capture("a", 1)};
  save_capture(caps, kModel, dir.path());
  fs::resize_file(dir / "prompts/a/k.bin", 100);
  try {
    load_capture(dir.path());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kCaptureTruncated);
    EXPECT_NE(std::string(e.what()).find("k.bin"), std::string::npos);
  }
}

TEST(CaptureIo, LongerFileIsShapeError) {
  testing::TempDir dir("cap");
  const std::vector<PromptCapture> caps = {random_capture("a", 1)};
  save_capture(caps, kModel, dir.path());
  std::ofstream(dir / "prompts/a/v.bin", std::ios::binary | std::ios::app) << "xxxx";
  EXPECT_EQ(load_error(dir.path()), ErrorCode::kCaptureShape);
}

TEST(CaptureIo, NonFiniteValue) {
  testing::TempDir dir("cap");
  auto c = random_capture("a", 1);
  save_capture(std::vector<PromptCapture>{c}, kModel, dir.path());
  const float nan = std::numeric_limits<float>::quiet_NaN();
  std::fstream f(dir / "prompts/a/q.bin", std::ios::binary | std::ios::in | std::ios::out);
  f.seekp(40);
  f.write(reinterpret_cast<const char*>(&nan), sizeof(float));
  f.close();
  EXPECT_EQ(load_error(dir.path()), ErrorCode::kCaptureNonFinite);

  c.v[3] = std::numeric_limits<float>::infinity();
  testing::TempDir other("cap");
  try {
    save_capture(std::vector<PromptCapture>{c}, kModel, other.path());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kCaptureNonFinite);
  }
}

TEST(CaptureIo, ManifestErrors) {
  testing::TempDir dir("cap");
  const std::vector<PromptCapture> caps = {random_capture("a", 1)};
  save_capture(caps, kModel, dir.path());
  const auto good = read_manifest(dir.path());

  auto j = good;
  j["version"] = 2;
  write_manifest(dir.path(), j);
  EXPECT_EQ(load_error(dir.path()), ErrorCode::kCaptureVersion);

  j = good;
  j["prompts"][0]["dtype"] = "f16";
  write_manifest(dir.path(), j);
  EXPECT_EQ(load_error(dir.path()), ErrorCode::kCaptureFormat);

  j = good;
  j["prompts"][0]["byte_order"] = "big";
  write_manifest(dir.path(), j);
  EXPECT_EQ(load_error(dir.path()), ErrorCode::kCaptureFormat);

  j = good;
  j["prompts"][0]["shape"] = {2, 2, 15, 8};
  write_manifest(dir.path(), j);
  EXPECT_EQ(load_error(dir.path()), ErrorCode::kCaptureShape);

  j = good;
  j["prompts"].push_back(good["prompts"][0]);
  write_manifest(dir.path(), j);
  EXPECT_EQ(load_error(dir.path()), ErrorCode::kCaptureFormat);

  j = good;
  j["prompts"][0]["layout"]["segments"][1]["end"] = 40;
  write_manifest(dir.path(), j);
  EXPECT_EQ(load_error(dir.path()), ErrorCode::kCaptureFormat);

  j = good;
  j.erase("model");
  write_manifest(dir.path(), j);
  EXPECT_EQ(load_error(dir.path()), ErrorCode::kCaptureFormat);

  std::ofstream(dir / "manifest.json", std::ios::trunc) << "{not json";
  EXPECT_EQ(load_error(dir.path()), ErrorCode::kCaptureFormat);

  fs::remove(dir / "manifest.json");
  EXPECT_EQ(load_error(dir.path()), ErrorCode::kIo);
}

TEST(CaptureIo, ValidateCaptureShape) {
  auto c = random_capture("a", 1);
  EXPECT_NO_THROW(validate_capture(c, kModel));
  EXPECT_THROW(validate_capture(c, {"tiny", 2, 2, 16}), Error);
  c.k.pop_back();
  try {
    validate_capture(c, kModel);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kCaptureShape);
  }
}

TEST(CaptureIo, PromptIds) {
  EXPECT_TRUE(is_valid_prompt_id("img-01_a.b"));
  EXPECT_FALSE(is_valid_prompt_id(""));
  EXPECT_FALSE(is_valid_prompt_id(".."));
  EXPECT_FALSE(is_valid_prompt_id("a/b"));
  EXPECT_FALSE(is_valid_prompt_id("a b"));
}

TEST(CaptureIo, HeadSlices) {
  auto c = random_capture("a", 4);
  const auto h = c.head(TensorRole::kValue, 1, 0);
  EXPECT_EQ(h.rows, 16u);
  EXPECT_EQ(h.cols, 8u);
  EXPECT_EQ(h.data.data(), c.v.data() + 2 * 16 * 8);
  c.head_data(TensorRole::kQuery, 0, 1)[0] = 42.0f;
  EXPECT_EQ(c.q[16 * 8], 42.0f);
}

// Properties.

TEST(CaptureIoProperty, RandomShapesRoundTrip) {
  testing::Rng rng(77);
  for (int trial = 0; trial < 20; ++trial) {
    const ModelMeta model{"m", testing::uniform(rng, 1, 3), testing::uniform(rng, 1, 3), testing::uniform(rng, 1, 12)};
    std::vector<PromptCapture> caps;
    const std::size_t n = testing::uniform(rng, 0, 3);
    for (std::size_t i = 0; i < n; ++i) {
      auto c = make_capture("p" + std::to_string(i),
                            testing::random_layout(rng, {.max_seq = 64, .max_images = 3, .max_image = 16, .max_text = 8}),
                            model);
      std::uniform_real_distribution<float> u(-1e30f, 1e30f);
      for (auto* t : {&c.q, &c.k, &c.v}) {
        for (auto& x : *t) x = u(rng);
      }
      caps.push_back(std::move(c));
    }
    testing::TempDir dir("capprop");
    save_capture(caps, model, dir.path());
    EXPECT_EQ(load_capture(dir.path()), caps);
  }
}

}  // namespace
}  // namespace blindsight
