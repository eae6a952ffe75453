// Copyright 2026 The blindsight Authors
// SPDX-License-Identifier: Apache-2.0

#include "blindsight/layout.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <optional>
#include <string>

#include "blindsight/error.hpp"

namespace blindsight {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid_argument";
    case ErrorCode::kUnmatchedMarker: return "unmatched_marker";
    case ErrorCode::kNestedMarker: return "nested_marker";
    case ErrorCode::kShapeMismatch: return "shape_mismatch";
    case ErrorCode::kNonFinite: return "non_finite";
    case ErrorCode::kSizeCap: return "size_cap";
    case ErrorCode::kDegenerateReference: return "degenerate_reference";
    case ErrorCode::kIo: return "io";
    case ErrorCode::kAlreadyExists: return "already_exists";
    case ErrorCode::kCaptureFormat: return "capture_format";
    case ErrorCode::kCaptureVersion: return "capture_version";
    case ErrorCode::kCaptureShape: return "capture_shape";
    case ErrorCode::kCaptureTruncated: return "capture_truncated";
    case ErrorCode::kCaptureNonFinite: return "capture_non_finite";
    case ErrorCode::kMixedImageLengths: return "mixed_image_lengths";
  }
  return "unknown";
}

TokenLayout TokenLayout::from_segments(std::size_t seq_len, std::vector<Segment> segments) {
  std::sort(segments.begin(), segments.end(),
            [](const Segment& a, const Segment& b) { return a.start < b.start; });
  std::size_t cursor = 0;
  for (const auto& seg : segments) {
    if (seg.start >= seg.end) {
      throw Error(ErrorCode::kInvalidArgument,
                  "empty segment [" + std::to_string(seg.start) + ", " + std::to_string(seg.end) + ")");
    }
    if (seg.start != cursor) {
      throw Error(ErrorCode::kInvalidArgument,
                  (seg.start < cursor ? "overlapping segment at token " : "gap before token ") +
                      std::to_string(seg.start));
    }
    cursor = seg.end;
  }
  if (cursor != seq_len) {
    throw Error(ErrorCode::kInvalidArgument, "segments cover [0, " + std::to_string(cursor) +
                                                 ") but seq_len is " + std::to_string(seq_len));
  }

  TokenLayout layout;
  layout.seq_len_ = seq_len;
  for (const auto& seg : segments) {
    if (!layout.segments_.empty() && !seg.is_image() && !layout.segments_.back().is_image()) {
      layout.segments_.back().end = seg.end;
    } else {
      layout.segments_.push_back(seg);
    }
  }
  return layout;
}

std::vector<Segment> TokenLayout::images() const {
  std::vector<Segment> out;
  std::copy_if(segments_.begin(), segments_.end(), std::back_inserter(out),
               [](const Segment& s) { return s.is_image(); });
  return out;
}

std::size_t TokenLayout::image_count() const {
  return static_cast<std::size_t>(std::count_if(segments_.begin(), segments_.end(),
                                                [](const Segment& s) { return s.is_image(); }));
}

std::size_t TokenLayout::image_token_count() const {
  std::size_t n = 0;
  for (const auto& s : segments_) {
    if (s.is_image()) n += s.length();
  }
  return n;
}

std::size_t TokenLayout::segment_index(std::size_t token) const {
  auto it = std::upper_bound(segments_.begin(), segments_.end(), token,
                             [](std::size_t t, const Segment& s) { return t < s.start; });
  if (it == segments_.begin() || token >= seq_len_) {
    throw Error(ErrorCode::kInvalidArgument, "token " + std::to_string(token) + " outside layout");
  }
  return static_cast<std::size_t>(std::distance(segments_.begin(), it) - 1);
}

TokenLayout parse_layout(std::span<const std::int64_t> token_ids, std::int64_t image_start_id,
                         std::int64_t image_end_id) {
  if (token_ids.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "token sequence is empty");
  }
  if (image_start_id == image_end_id) {
    throw Error(ErrorCode::kInvalidArgument, "image start and end markers must differ");
  }
  std::vector<Segment> segments;
  std::size_t text_start = 0;
  std::optional<std::size_t> open;
  for (std::size_t i = 0; i < token_ids.size(); ++i) {
    const auto id = token_ids[i];
    if (id == image_start_id) {
      if (open) {
        throw Error(ErrorCode::kNestedMarker,
                    "image start marker at position " + std::to_string(i) +
                        " nested inside image opened at " + std::to_string(*open));
      }
      if (i > text_start) segments.push_back({SegmentKind::kText, text_start, i});
      open = i;
    } else if (id == image_end_id) {
      if (!open) {
        throw Error(ErrorCode::kUnmatchedMarker,
                    "image end marker at position " + std::to_string(i) + " has no matching start");
      }
      segments.push_back({SegmentKind::kImage, *open, i + 1});
      open.reset();
      text_start = i + 1;
    }
  }
  if (open) {
    throw Error(ErrorCode::kUnmatchedMarker,
                "image start marker at position " + std::to_string(*open) + " is never closed");
  }
  if (text_start < token_ids.size()) {
    segments.push_back({SegmentKind::kText, text_start, token_ids.size()});
  }
  return TokenLayout::from_segments(token_ids.size(), std::move(segments));
}

SinkSpec SinkSpec::prefix(double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "prefix sink fraction must lie in (0, 1]");
  }
  SinkSpec spec;
  spec.value_ = PrefixSinks{fraction};
  return spec;
}

SinkSpec SinkSpec::fixed_offsets(std::vector<std::size_t> offsets) {
  if (offsets.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "fixed sink offsets must be non-empty");
  }
  std::sort(offsets.begin(), offsets.end());
  offsets.erase(std::unique(offsets.begin(), offsets.end()), offsets.end());
  SinkSpec spec;
  spec.value_ = FixedOffsetSinks{std::move(offsets)};
  return spec;
}

std::size_t ceil_tolerant(double x) {
  if (x <= 0.0) return 0;
  return static_cast<std::size_t>(std::ceil(x - 1e-9));
}

std::size_t prefix_sink_size(std::size_t length, double fraction) {
  return std::min(length, std::max<std::size_t>(1, ceil_tolerant(fraction * static_cast<double>(length))));
}

SinkRegion sink_region(const Segment& image, const SinkSpec& spec) {
  if (!image.is_image()) {
    throw Error(ErrorCode::kInvalidArgument, "sink_region requires an image segment");
  }
  SinkRegion region;
  if (spec.is_prefix()) {
    const std::size_t n = prefix_sink_size(image.length(), spec.as_prefix().fraction);
    region.tokens.reserve(n);
    for (std::size_t i = 0; i < n; ++i) region.tokens.push_back(image.start + i);
  } else {
    for (std::size_t off : spec.as_fixed().offsets) {
      if (off < image.length()) region.tokens.push_back(image.start + off);
    }
    region.empty_flagged = region.tokens.empty();
  }
  return region;
}

nlohmann::json layout_to_json(const TokenLayout& layout) {
  nlohmann::json segs = nlohmann::json::array();
  for (const auto& s : layout.segments()) {
    segs.push_back({{"kind", s.is_image() ? "image" : "text"}, {"start", s.start}, {"end", s.end}});
  }
  return {{"seq_len", layout.seq_len()}, {"segments", std::move(segs)}};
}

TokenLayout layout_from_json(const nlohmann::json& j) {
  try {
    std::vector<Segment> segs;
    for (const auto& s : j.at("segments")) {
      const auto kind = s.at("kind").get<std::string>();
      if (kind != "text" && kind != "image") {
        throw Error(ErrorCode::kInvalidArgument, "unknown segment kind '" + kind + "'");
      }
      segs.push_back({kind == "image" ? SegmentKind::kImage : SegmentKind::kText,
                      s.at("start").get<std::size_t>(), s.at("end").get<std::size_t>()});
    }
    return TokenLayout::from_segments(j.at("seq_len").get<std::size_t>(), std::move(segs));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("malformed layout JSON: ") + e.what());
  }
}

nlohmann::json sink_spec_to_json(const SinkSpec& spec) {
  if (spec.is_prefix()) return {{"kind", "prefix"}, {"fraction", spec.as_prefix().fraction}};
  return {{"kind", "fixed_offsets"}, {"offsets", spec.as_fixed().offsets}};
}

SinkSpec sink_spec_from_json(const nlohmann::json& j) {
  try {
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "prefix") return SinkSpec::prefix(j.at("fraction").get<double>());
    if (kind == "fixed_offsets") {
      return SinkSpec::fixed_offsets(j.at("offsets").get<std::vector<std::size_t>>());
    }
    throw Error(ErrorCode::kInvalidArgument, "unknown sink spec kind '" + kind + "'");
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("malformed sink spec JSON: ") + e.what());
  }
}

SinkSpec parse_sink_spec(std::string_view text) {
  const auto colon = text.find(':');
  const auto kind = text.substr(0, colon);
  const auto rest = colon == std::string_view::npos ? std::string_view{} : text.substr(colon + 1);
  if (kind == "prefix") {
    double f = 0.1;
    if (!rest.empty()) {
      try {
        f = std::stod(std::string(rest));
      } catch (const std::exception&) {
        throw Error(ErrorCode::kInvalidArgument, "bad prefix fraction '" + std::string(rest) + "'");
      }
    }
    return SinkSpec::prefix(f);
  }
  if (kind == "offsets") {
    std::vector<std::size_t> offsets;
    std::size_t pos = 0;
    while (pos <= rest.size() && !rest.empty()) {
      auto comma = rest.find(',', pos);
      auto item = rest.substr(pos, comma == std::string_view::npos ? rest.size() - pos : comma - pos);
      std::size_t v = 0;
      auto [p, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
      if (ec != std::errc{} || p != item.data() + item.size()) {
        throw Error(ErrorCode::kInvalidArgument, "bad sink offset '" + std::string(item) + "'");
      }
      offsets.push_back(v);
      if (comma == std::string_view::npos) break;
      pos = comma + 1;
    }
    return SinkSpec::fixed_offsets(std::move(offsets));
  }
  throw Error(ErrorCode::kInvalidArgument,
              "sink spec must be 'prefix:<fraction>' or 'offsets:<o1,o2,...>'");
}

}  // namespace blindsight
