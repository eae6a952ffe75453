// Copyright 2026 The blindsight Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "blindsight/capture_io.hpp"
#include "blindsight/layout.hpp"
#include "blindsight/mask.hpp"

namespace blindsight {

struct ColumnMass {
  std::vector<double> mass;  // one entry per image-relative offset
  /// No query row outside the image exists, or none of them reaches it.
  bool degenerate = false;
};

/// Mean attention received by each column of `image` from query rows outside
/// the image. `attn` is a row-major S x S post-softmax matrix.
ColumnMass column_mass(std::span<const double> attn, const TokenLayout& layout, const Segment& image);

/// Indices of the `count` largest entries, ties broken by lower index, in
/// ascending index order.
std::vector<std::size_t> top_offsets(std::span<const double> mass, std::size_t count);

struct SinkFinderConfig {
  double top_fraction = 0.1;
  std::size_t uniform_image_len = 0;
  BaseVisibility base = BaseVisibility::kCausalWithBidirectionalImages;

  std::size_t top_count() const;
  void validate() const;
};

struct SinkHistogram {
  std::vector<std::uint64_t> votes;  // per offset
  std::size_t samples = 0;           // prompts seen
  std::size_t heads_considered = 0;  // (prompt, layer, head) cells
  std::size_t images_considered = 0;

  void merge(const SinkHistogram& other);
};

/// Accumulates votes one capture at a time: for every head and image the
/// top-k offsets by outside-row column mass each earn one vote.
class SinkVoteCounter {
 public:
  explicit SinkVoteCounter(SinkFinderConfig cfg);

  /// Throws Error(kMixedImageLengths) if an image length differs from
  /// uniform_image_len.
  void add(const PromptCapture& capture, std::size_t jobs = 1);

  const SinkHistogram& histogram() const { return hist_; }
  const SinkFinderConfig& config() const { return cfg_; }
  /// The top-k offsets by vote count, ties broken by lower offset.
  std::vector<std::size_t> winners() const;

 private:
  SinkFinderConfig cfg_;
  SinkHistogram hist_;
};

struct SinkFinderResult {
  SinkFinderConfig config;
  SinkHistogram histogram;
  std::vector<std::size_t> offsets;
};

SinkFinderResult find_sink_offsets(std::span<const PromptCapture> captures, const SinkFinderConfig& cfg,
                                   std::size_t jobs = 1);
SinkFinderResult find_sink_offsets(const CaptureReader& reader, const SinkFinderConfig& cfg, std::size_t jobs = 1);

/// {"uniform_image_len", "top_fraction", "offsets", "histogram": {"<offset>": votes}, ...}
nlohmann::ordered_json sink_result_to_json(const SinkFinderResult& result);

}  // namespace blindsight
