// Copyright 2026 The blindsight Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "blindsight/mask.hpp"

namespace blindsight {

/// Read-only row-major view of one head's S x d_h projection.
struct HeadView {
  std::span<const float> data;
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::span<const float> row(std::size_t r) const { return data.subspan(r * cols, cols); }
};

/// Owning S x d_h matrix for one head (Q, K or V).
struct HeadTensor {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float> data;

  HeadTensor() = default;
  HeadTensor(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0f) {}

  float& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  float at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  HeadView view() const { return {data, rows, cols}; }
};

/// Attention output, accumulated and stored in double precision.
struct AttentionOutput {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  AttentionOutput() = default;
  AttentionOutput(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

/// softmax(Q K^T / sqrt(d_h) restricted to allowed keys) V, row by row with
/// the row maximum subtracted before exponentiation.
///
/// Throws Error(kShapeMismatch) for non-conformant inputs and
/// Error(kNonFinite) if any input entry is NaN or infinite.
AttentionOutput masked_attention(const HeadView& q, const HeadView& k, const HeadView& v,
                                 const AttentionMask& mask);

/// Full S x S post-softmax probability matrix (row-major, zeros on disallowed
/// cells). Only meant for analysis of moderate sequence lengths.
std::vector<double> attention_probabilities(const HeadView& q, const HeadView& k,
                                            const AttentionMask& mask);

/// ||candidate - reference||_F^2 / ||reference||_F^2.
/// Throws Error(kDegenerateReference) when the reference has zero norm.
double nmse(const AttentionOutput& candidate, const AttentionOutput& reference);

}  // namespace blindsight
