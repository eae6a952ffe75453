// Copyright 2026 The blindsight Authors
// SPDX-License-Identifier: Apache-2.0

#include "blindsight/mask.hpp"

#include <algorithm>
#include <bit>
#include <string>

#include "blindsight/error.hpp"

namespace blindsight {

std::string_view to_string(MaskType type) {
  switch (type) {
    case MaskType::kDense: return "dense";
    case MaskType::kSink: return "sink";
    case MaskType::kDocument: return "document";
    case MaskType::kDocumentSink: return "document_sink";
  }
  return "dense";
}

MaskType mask_type_from_string(std::string_view name) {
  std::string norm(name);
  std::replace(norm.begin(), norm.end(), '-', '_');
  for (auto t : kAllMaskTypes) {
    if (to_string(t) == norm) return t;
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown mask type '" + std::string(name) + "'");
}

std::string_view to_string(BaseVisibility base) {
  return base == BaseVisibility::kCausal ? "causal" : "causal_bidirectional_images";
}

BaseVisibility base_visibility_from_string(std::string_view name) {
  if (name == "causal") return BaseVisibility::kCausal;
  if (name == "causal_bidirectional_images" || name == "bidirectional" || name == "gemma") {
    return BaseVisibility::kCausalWithBidirectionalImages;
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown base visibility '" + std::string(name) + "'");
}

std::uint64_t Block::cell_count() const {
  if (q_end <= q_begin || k_end <= k_begin) return 0;
  switch (shape) {
    case BlockShape::kRect:
      return std::uint64_t{q_end - q_begin} * (k_end - k_begin);
    case BlockShape::kDiagonal:
      return q_end - q_begin;
    case BlockShape::kLower: {
      // Row q contributes clamp(q + 1 - k_begin, 0, width).
      const std::uint64_t width = k_end - k_begin;
      const std::size_t tri_lo = std::max(q_begin, k_begin);
      const std::size_t tri_hi = std::min(q_end, k_end);
      std::uint64_t total = 0;
      if (tri_hi > tri_lo) {
        const std::uint64_t first = tri_lo + 1 - k_begin;
        const std::uint64_t last = tri_hi - k_begin;
        total += (first + last) * (last - first + 1) / 2;
      }
      const std::size_t full_lo = std::max(q_begin, k_end);
      if (q_end > full_lo) total += std::uint64_t{q_end - full_lo} * width;
      return total;
    }
  }
  return 0;
}

bool Block::contains(std::size_t q, std::size_t k) const {
  if (q < q_begin || q >= q_end || k < k_begin || k >= k_end) return false;
  switch (shape) {
    case BlockShape::kRect: return true;
    case BlockShape::kLower: return k <= q;
    case BlockShape::kDiagonal: return k == q;
  }
  return false;
}

AttentionMask::AttentionMask(std::size_t seq_len, BaseVisibility base, MaskType type,
                             std::vector<Block> blocks)
    : seq_len_(seq_len), base_(base), type_(type), blocks_(std::move(blocks)) {
  std::sort(blocks_.begin(), blocks_.end(), [](const Block& a, const Block& b) {
    return a.q_begin != b.q_begin ? a.q_begin < b.q_begin : a.k_begin < b.k_begin;
  });
}

bool AttentionMask::allows(std::size_t q, std::size_t k) const {
  // Blocks are few (segments x key runs); a linear scan is fine here.
  return std::any_of(blocks_.begin(), blocks_.end(),
                     [&](const Block& b) { return b.contains(q, k); });
}

RowSpans AttentionMask::row_spans() const {
  std::vector<std::vector<KeySpan>> rows(seq_len_);
  for (const auto& b : blocks_) {
    for (std::size_t q = b.q_begin; q < b.q_end; ++q) {
      switch (b.shape) {
        case BlockShape::kRect:
          rows[q].push_back({b.k_begin, b.k_end});
          break;
        case BlockShape::kLower:
          if (q >= b.k_begin) rows[q].push_back({b.k_begin, std::min(b.k_end, q + 1)});
          break;
        case BlockShape::kDiagonal:
          rows[q].push_back({q, q + 1});
          break;
      }
    }
  }
  RowSpans out;
  out.row_offsets.reserve(seq_len_ + 1);
  out.row_offsets.push_back(0);
  for (auto& row : rows) {
    std::sort(row.begin(), row.end(), [](const KeySpan& a, const KeySpan& b) { return a.begin < b.begin; });
    for (const auto& span : row) {
      const bool extends = out.spans.size() > out.row_offsets.back() && out.spans.back().end == span.begin;
      if (extends) {
        out.spans.back().end = span.end;
      } else {
        out.spans.push_back(span);
      }
    }
    out.row_offsets.push_back(out.spans.size());
  }
  return out;
}

namespace {

struct KeyRun {
  std::size_t begin, end;
  std::size_t segment;
  bool image;
  bool sink;
};

std::vector<KeyRun> key_runs(const TokenLayout& layout, const SinkSpec& sinks) {
  std::vector<KeyRun> runs;
  const auto segs = layout.segments();
  for (std::size_t i = 0; i < segs.size(); ++i) {
    const auto& seg = segs[i];
    if (!seg.is_image()) {
      runs.push_back({seg.start, seg.end, i, false, false});
      continue;
    }
    const auto region = sink_region(seg, sinks);
    std::size_t cursor = seg.start;
    std::size_t r = 0;
    while (cursor < seg.end) {
      if (r < region.tokens.size() && region.tokens[r] == cursor) {
        std::size_t stop = cursor;
        while (r < region.tokens.size() && region.tokens[r] == stop) {
          ++stop;
          ++r;
        }
        runs.push_back({cursor, stop, i, true, true});
        cursor = stop;
      } else {
        const std::size_t stop = r < region.tokens.size() ? region.tokens[r] : seg.end;
        runs.push_back({cursor, stop, i, true, false});
        cursor = stop;
      }
    }
  }
  return runs;
}

bool rule_allows(MaskType type, bool query_image, std::size_t query_segment, const KeyRun& key) {
  const bool document = !(query_image && key.image && key.segment != query_segment);
  const bool sink = !key.image || key.sink;
  switch (type) {
    case MaskType::kDense: return true;
    case MaskType::kDocument: return document;
    case MaskType::kSink: return sink;
    case MaskType::kDocumentSink: return document || sink;
  }
  return true;
}

}  // namespace

AttentionMask build_mask(const TokenLayout& layout, MaskType type, const SinkSpec& sinks,
                         BaseVisibility base) {
  const auto runs = key_runs(layout, sinks);
  const auto segs = layout.segments();
  std::vector<Block> blocks;
  for (std::size_t qi = 0; qi < segs.size(); ++qi) {
    const auto& qseg = segs[qi];
    const bool bidir = base == BaseVisibility::kCausalWithBidirectionalImages && qseg.is_image();
    for (const auto& run : runs) {
      if (run.begin >= qseg.end && run.segment != qi) break;  // strictly after the band
      const bool same_segment = run.segment == qi;
      const bool allowed = rule_allows(type, qseg.is_image(), qi, run);
      if (!same_segment) {
        if (allowed) blocks.push_back({qseg.start, qseg.end, run.begin, run.end, BlockShape::kRect});
        continue;
      }
      if (allowed) {
        if (bidir) {
          blocks.push_back({qseg.start, qseg.end, run.begin, run.end, BlockShape::kRect});
        } else {
          blocks.push_back({run.begin, qseg.end, run.begin, run.end, BlockShape::kLower});
        }
      } else {
        blocks.push_back({run.begin, run.end, run.begin, run.end, BlockShape::kDiagonal});
      }
    }
  }
  return AttentionMask(layout.seq_len(), base, type, std::move(blocks));
}

std::uint64_t allowed_cell_count(const AttentionMask& mask) {
  std::uint64_t total = 0;
  for (const auto& b : mask.blocks()) total += b.cell_count();
  return total;
}

BitMatrix::BitMatrix(std::size_t n) : n_(n), stride_((n + 63) / 64), words_(n * ((n + 63) / 64), 0) {}

void BitMatrix::set_range(std::size_t r, std::size_t begin, std::size_t end) {
  if (end <= begin) return;
  std::uint64_t* row = words_.data() + r * stride_;
  std::size_t wb = begin / 64, we = (end - 1) / 64;
  const std::uint64_t head = ~std::uint64_t{0} << (begin % 64);
  const std::uint64_t tail = ~std::uint64_t{0} >> (63 - (end - 1) % 64);
  if (wb == we) {
    row[wb] |= head & tail;
    return;
  }
  row[wb] |= head;
  for (std::size_t w = wb + 1; w < we; ++w) row[w] = ~std::uint64_t{0};
  row[we] |= tail;
}

std::uint64_t BitMatrix::popcount() const {
  std::uint64_t total = 0;
  for (auto w : words_) total += static_cast<std::uint64_t>(std::popcount(w));
  return total;
}

bool BitMatrix::is_subset_of(const BitMatrix& other) const {
  if (other.n_ != n_) return false;
  for (std::size_t i = 0; i < words_.size(); ++i) {
    if (words_[i] & ~other.words_[i]) return false;
  }
  return true;
}

BitMatrix BitMatrix::operator|(const BitMatrix& other) const {
  if (other.n_ != n_) throw Error(ErrorCode::kShapeMismatch, "bit matrix size mismatch");
  BitMatrix out = *this;
  for (std::size_t i = 0; i < words_.size(); ++i) out.words_[i] |= other.words_[i];
  return out;
}

BitMatrix materialize(const AttentionMask& mask, std::size_t cap) {
  if (mask.seq_len() > cap) {
    throw Error(ErrorCode::kSizeCap, "cannot materialize a " + std::to_string(mask.seq_len()) +
                                         "-token mask (cap " + std::to_string(cap) + ")");
  }
  BitMatrix bits(mask.seq_len());
  for (const auto& b : mask.blocks()) {
    for (std::size_t q = b.q_begin; q < b.q_end; ++q) {
      switch (b.shape) {
        case BlockShape::kRect: bits.set_range(q, b.k_begin, b.k_end); break;
        case BlockShape::kLower:
          if (q >= b.k_begin) bits.set_range(q, b.k_begin, std::min(b.k_end, q + 1));
          break;
        case BlockShape::kDiagonal: bits.set(q, q); break;
      }
    }
  }
  return bits;
}

std::string to_pbm(const BitMatrix& bits) {
  const std::size_t n = bits.size();
  std::string out = "P4\n" + std::to_string(n) + " " + std::to_string(n) + "\n";
  const std::size_t row_bytes = (n + 7) / 8;
  for (std::size_t r = 0; r < n; ++r) {
    std::string row(row_bytes, '\0');
    for (std::size_t c = 0; c < n; ++c) {
      if (bits.get(r, c)) row[c / 8] = static_cast<char>(row[c / 8] | (0x80 >> (c % 8)));
    }
    out += row;
  }
  return out;
}

nlohmann::json mask_to_json(const AttentionMask& mask) {
  nlohmann::json blocks = nlohmann::json::array();
  for (const auto& b : mask.blocks()) {
    const char* shape = b.shape == BlockShape::kRect ? "rect" : b.shape == BlockShape::kLower ? "lower" : "diagonal";
    blocks.push_back({{"q", {b.q_begin, b.q_end}}, {"k", {b.k_begin, b.k_end}}, {"shape", shape}});
  }
  return {{"seq_len", mask.seq_len()},
          {"mask_type", to_string(mask.type())},
          {"base", to_string(mask.base())},
          {"diag_fallback", true},
          {"allowed_cells", allowed_cell_count(mask)},
          {"blocks", std::move(blocks)}};
}

}  // namespace blindsight
