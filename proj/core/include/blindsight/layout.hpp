// Copyright 2026 The blindsight Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

namespace blindsight {

enum class SegmentKind { kText, kImage };

/// Half-open token range [start, end) of one modality.
struct Segment {
  SegmentKind kind = SegmentKind::kText;
  std::size_t start = 0;
  std::size_t end = 0;

  std::size_t length() const { return end - start; }
  bool is_image() const { return kind == SegmentKind::kImage; }
  bool contains(std::size_t token) const { return token >= start && token < end; }

  friend bool operator==(const Segment&, const Segment&) = default;
};

/// Interleaved text/image structure of a prompt.
///
/// Always canonical: segments are sorted, non-overlapping, cover
/// [0, seq_len) and no two text segments are adjacent. Adjacent images stay
/// distinct documents. The only way to
/// obtain a layout is through `from_segments` or `parse_layout`, both of which
/// validate and canonicalize.
class TokenLayout {
 public:
  TokenLayout() = default;

  /// Validates coverage and merges adjacent text segments.
  /// Throws Error(kInvalidArgument) on gaps, overlaps or empty segments.
  static TokenLayout from_segments(std::size_t seq_len, std::vector<Segment> segments);

  std::size_t seq_len() const { return seq_len_; }
  std::span<const Segment> segments() const { return segments_; }

  /// Image segments in order of appearance.
  std::vector<Segment> images() const;
  std::size_t image_count() const;
  std::size_t image_token_count() const;
  bool has_images() const { return image_count() > 0; }

  /// Index into segments() of the segment holding `token`.
  std::size_t segment_index(std::size_t token) const;

  friend bool operator==(const TokenLayout&, const TokenLayout&) = default;

 private:
  std::size_t seq_len_ = 0;
  std::vector<Segment> segments_;
};

/// Splits a token stream at image start/end marker ids. Markers belong to the
/// image they delimit. Throws Error(kUnmatchedMarker / kNestedMarker) naming
/// the offending position.
TokenLayout parse_layout(std::span<const std::int64_t> token_ids, std::int64_t image_start_id,
                         std::int64_t image_end_id);

/// Sink tokens as the first ceil(fraction * len) tokens of every image.
struct PrefixSinks {
  double fraction = 0.1;
  friend bool operator==(const PrefixSinks&, const PrefixSinks&) = default;
};

/// Sink tokens at fixed image-relative offsets.
struct FixedOffsetSinks {
  std::vector<std::size_t> offsets;  // sorted, unique, non-empty
  friend bool operator==(const FixedOffsetSinks&, const FixedOffsetSinks&) = default;
};

class SinkSpec {
 public:
  SinkSpec() = default;

  static SinkSpec prefix(double fraction);
  static SinkSpec fixed_offsets(std::vector<std::size_t> offsets);

  bool is_prefix() const { return std::holds_alternative<PrefixSinks>(value_); }
  const PrefixSinks& as_prefix() const { return std::get<PrefixSinks>(value_); }
  const FixedOffsetSinks& as_fixed() const { return std::get<FixedOffsetSinks>(value_); }

  friend bool operator==(const SinkSpec&, const SinkSpec&) = default;

 private:
  std::variant<PrefixSinks, FixedOffsetSinks> value_ = PrefixSinks{};
};

struct SinkRegion {
  std::vector<std::size_t> tokens;  // absolute, ascending
  /// Set when a FixedOffsets spec has no offset inside the image.
  bool empty_flagged = false;
};

/// ceil(x) that ignores representation noise below 1e-9, so that
/// 0.1 * 110 yields 11 rather than 12.
std::size_t ceil_tolerant(double x);

/// Number of prefix sink tokens for an image of `length` tokens: max(1, ceil(f * length)).
std::size_t prefix_sink_size(std::size_t length, double fraction);

SinkRegion sink_region(const Segment& image, const SinkSpec& spec);

// JSON schema: {"seq_len": S, "segments": [{"kind": "text"|"image", "start": a, "end": b}]}
nlohmann::json layout_to_json(const TokenLayout& layout);
TokenLayout layout_from_json(const nlohmann::json& j);

// {"kind": "prefix", "fraction": f} or {"kind": "fixed_offsets", "offsets": [...]}
nlohmann::json sink_spec_to_json(const SinkSpec& spec);
SinkSpec sink_spec_from_json(const nlohmann::json& j);

/// Parses the CLI form "prefix:0.1" or "offsets:0,64,128".
SinkSpec parse_sink_spec(std::string_view text);

}  // namespace blindsight
