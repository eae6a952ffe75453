// Copyright 2026 The blindsight Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "blindsight/attention.hpp"
#include "blindsight/layout.hpp"
#include "blindsight/mask.hpp"

namespace blindsight::testing {

using Rng = std::mt19937_64;

inline std::size_t uniform(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

struct LayoutShape {
  std::size_t max_seq = 1024;
  std::size_t max_images = 12;
  std::size_t min_image = 1;
  std::size_t max_image = 128;
  std::size_t max_text = 32;
  /// Allow images directly after one another (no text between).
  bool back_to_back = true;
};

/// Random canonical layout; text gaps may be empty, images never are. The
/// image count is drawn first and clipped so the sequence fits max_seq.
inline TokenLayout random_layout(Rng& rng, const LayoutShape& shape) {
  for (;;) {
    const std::size_t images = uniform(rng, 0, shape.max_images);
    std::vector<Segment> segs;
    std::size_t cursor = 0;
    auto text = [&](std::size_t min_len) {
      const std::size_t len = uniform(rng, min_len, shape.max_text);
      if (len == 0) return;
      segs.push_back({SegmentKind::kText, cursor, cursor + len});
      cursor += len;
    };
    text(0);
    for (std::size_t i = 0; i < images; ++i) {
      const std::size_t len = uniform(rng, shape.min_image, shape.max_image);
      segs.push_back({SegmentKind::kImage, cursor, cursor + len});
      cursor += len;
      text(shape.back_to_back ? 0 : 1);
    }
    if (cursor == 0 || cursor > shape.max_seq) continue;
    return TokenLayout::from_segments(cursor, std::move(segs));
  }
}

inline HeadTensor random_tensor(Rng& rng, std::size_t rows, std::size_t cols, double scale = 1.0) {
  std::normal_distribution<float> n(0.0f, static_cast<float>(scale));
  HeadTensor t(rows, cols);
  for (auto& x : t.data) x = n(rng);
  return t;
}

inline BaseVisibility random_base(Rng& rng) {
  return uniform(rng, 0, 1) == 0 ? BaseVisibility::kCausal : BaseVisibility::kCausalWithBidirectionalImages;
}

inline SinkSpec random_sinks(Rng& rng) {
  if (uniform(rng, 0, 2) > 0) return SinkSpec::prefix(std::uniform_real_distribution<double>(0.01, 1.0)(rng));
  std::vector<std::size_t> offsets;
  const std::size_t n = uniform(rng, 1, 4);
  for (std::size_t i = 0; i < n; ++i) offsets.push_back(uniform(rng, 0, 96));
  return SinkSpec::fixed_offsets(std::move(offsets));
}

/// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::uint64_t counter = 0;
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("blindsight_" + tag + "_" + std::to_string(rd()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace blindsight::testing
