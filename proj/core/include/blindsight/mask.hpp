// Copyright 2026 The blindsight Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <span>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "blindsight/layout.hpp"

namespace blindsight {

enum class MaskType { kDense, kSink, kDocument, kDocumentSink };

inline constexpr std::array<MaskType, 4> kAllMaskTypes = {
    MaskType::kDense, MaskType::kSink, MaskType::kDocument, MaskType::kDocumentSink};
inline constexpr std::array<MaskType, 3> kSparseMaskTypes = {
    MaskType::kSink, MaskType::kDocument, MaskType::kDocumentSink};

/// "dense", "sink", "document", "document_sink".
std::string_view to_string(MaskType type);
/// Accepts the canonical names plus hyphenated spellings ("document-sink").
MaskType mask_type_from_string(std::string_view name);
inline std::size_t index_of(MaskType t) { return static_cast<std::size_t>(t); }

enum class BaseVisibility {
  kCausal,
  /// Causal, plus full bidirectional attention inside each image (Gemma-style).
  kCausalWithBidirectionalImages,
};

std::string_view to_string(BaseVisibility base);
BaseVisibility base_visibility_from_string(std::string_view name);

enum class BlockShape {
  kRect,      ///< every cell
  kLower,     ///< cells with key <= query
  kDiagonal,  ///< cells with key == query; requires identical ranges
};

struct Block {
  std::size_t q_begin = 0, q_end = 0;
  std::size_t k_begin = 0, k_end = 0;
  BlockShape shape = BlockShape::kRect;

  std::uint64_t cell_count() const;
  bool contains(std::size_t q, std::size_t k) const;
  friend bool operator==(const Block&, const Block&) = default;
};

/// Half-open key range allowed for one query row.
struct KeySpan {
  std::size_t begin = 0, end = 0;
  friend bool operator==(const KeySpan&, const KeySpan&) = default;
};

/// Allowed keys of every query row, stored CSR-style.
struct RowSpans {
  std::vector<std::size_t> row_offsets;  // size seq_len + 1
  std::vector<KeySpan> spans;

  std::span<const KeySpan> row(std::size_t q) const {
    return {spans.data() + row_offsets[q], row_offsets[q + 1] - row_offsets[q]};
  }
};

/// Block-structured allowed region over (query, key) space.
///
/// Blocks are sorted by (q_begin, k_begin) and pairwise disjoint. Every query
/// row owns its diagonal cell, either inside an allowed block or through an
/// explicit diagonal block, so no softmax row is ever empty.
class AttentionMask {
 public:
  AttentionMask(std::size_t seq_len, BaseVisibility base, MaskType type, std::vector<Block> blocks);

  std::size_t seq_len() const { return seq_len_; }
  BaseVisibility base() const { return base_; }
  MaskType type() const { return type_; }
  bool diag_fallback() const { return true; }
  const std::vector<Block>& blocks() const { return blocks_; }

  bool allows(std::size_t q, std::size_t k) const;
  RowSpans row_spans() const;

 private:
  std::size_t seq_len_;
  BaseVisibility base_;
  MaskType type_;
  std::vector<Block> blocks_;
};

AttentionMask build_mask(const TokenLayout& layout, MaskType type, const SinkSpec& sinks,
                         BaseVisibility base);

/// Exact allowed-cell count from block geometry.
std::uint64_t allowed_cell_count(const AttentionMask& mask);

/// Dense row-major bit matrix used for inspection and cell-exact tests.
class BitMatrix {
 public:
  explicit BitMatrix(std::size_t n = 0);

  std::size_t size() const { return n_; }
  bool get(std::size_t r, std::size_t c) const {
    return (words_[r * stride_ + c / 64] >> (c % 64)) & 1u;
  }
  void set(std::size_t r, std::size_t c) { words_[r * stride_ + c / 64] |= std::uint64_t{1} << (c % 64); }
  /// Sets columns [begin, end) of row r.
  void set_range(std::size_t r, std::size_t begin, std::size_t end);

  std::uint64_t popcount() const;
  bool is_subset_of(const BitMatrix& other) const;
  BitMatrix operator|(const BitMatrix& other) const;
  friend bool operator==(const BitMatrix&, const BitMatrix&) = default;

 private:
  std::size_t n_ = 0;
  std::size_t stride_ = 0;
  std::vector<std::uint64_t> words_;
};

inline constexpr std::size_t kDefaultMaterializeCap = 8192;

/// Throws Error(kSizeCap) when seq_len exceeds `cap`.
BitMatrix materialize(const AttentionMask& mask, std::size_t cap = kDefaultMaterializeCap);

/// Binary PBM (P4); allowed cells are black.
std::string to_pbm(const BitMatrix& bits);

nlohmann::json mask_to_json(const AttentionMask& mask);

}  // namespace blindsight
