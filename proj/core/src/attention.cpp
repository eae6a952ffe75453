// Copyright 2026 The blindsight Authors
// SPDX-License-Identifier: Apache-2.0

#include "blindsight/attention.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "blindsight/error.hpp"

namespace blindsight {

namespace {

void check_inputs(const HeadView& q, const HeadView& k, const HeadView* v, const AttentionMask& mask) {
  const auto shape = [](const HeadView& h) {
    return "[" + std::to_string(h.rows) + "x" + std::to_string(h.cols) + "]";
  };
  if (q.rows != k.rows || q.cols != k.cols || (v && v->rows != q.rows) || q.cols == 0 ||
      q.rows != mask.seq_len()) {
    throw Error(ErrorCode::kShapeMismatch, "attention shapes disagree: Q" + shape(q) + " K" + shape(k) +
                                               (v ? " V" + shape(*v) : std::string{}) + " mask S=" +
                                               std::to_string(mask.seq_len()));
  }
  for (const HeadView* h : {&q, &k, v}) {
    if (!h) continue;
    if (h->data.size() != h->rows * h->cols) {
      throw Error(ErrorCode::kShapeMismatch, "tensor buffer does not match its shape");
    }
    if (!std::all_of(h->data.begin(), h->data.end(), [](float x) { return std::isfinite(x); })) {
      throw Error(ErrorCode::kNonFinite, "attention input contains NaN or Inf");
    }
  }
}

double dot(std::span<const float> a, std::span<const float> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += static_cast<double>(a[i]) * b[i];
  return acc;
}

// Softmax over the allowed keys of `row`, written to `weights` in span order.
void row_softmax(const HeadView& q, const HeadView& k, std::size_t row, std::span<const KeySpan> spans,
                 double scale, std::vector<double>& weights) {
  weights.clear();
  const auto qrow = q.row(row);
  double max_logit = -std::numeric_limits<double>::infinity();
  for (const auto& s : spans) {
    for (std::size_t key = s.begin; key < s.end; ++key) {
      const double logit = dot(qrow, k.row(key)) * scale;
      weights.push_back(logit);
      max_logit = std::max(max_logit, logit);
    }
  }
  double denom = 0.0;
  for (auto& w : weights) {
    w = std::exp(w - max_logit);
    denom += w;
  }
  for (auto& w : weights) w /= denom;
}

}  // namespace

AttentionOutput masked_attention(const HeadView& q, const HeadView& k, const HeadView& v,
                                 const AttentionMask& mask) {
  check_inputs(q, k, &v, mask);
  const std::size_t s = q.rows;
  const double scale = 1.0 / std::sqrt(static_cast<double>(q.cols));
  const RowSpans spans = mask.row_spans();
  AttentionOutput out(s, v.cols);
  std::vector<double> weights;
  weights.reserve(s);
  for (std::size_t row = 0; row < s; ++row) {
    const auto row_spans = spans.row(row);
    row_softmax(q, k, row, row_spans, scale, weights);
    double* dst = out.data.data() + row * v.cols;
    std::size_t w = 0;
    for (const auto& span : row_spans) {
      for (std::size_t key = span.begin; key < span.end; ++key, ++w) {
        const auto vrow = v.row(key);
        const double p = weights[w];
        for (std::size_t c = 0; c < v.cols; ++c) dst[c] += p * vrow[c];
      }
    }
  }
  return out;
}

std::vector<double> attention_probabilities(const HeadView& q, const HeadView& k, const AttentionMask& mask) {
  check_inputs(q, k, nullptr, mask);
  const std::size_t s = q.rows;
  const double scale = 1.0 / std::sqrt(static_cast<double>(q.cols));
  const RowSpans spans = mask.row_spans();
  std::vector<double> probs(s * s, 0.0);
  std::vector<double> weights;
  for (std::size_t row = 0; row < s; ++row) {
    const auto row_spans = spans.row(row);
    row_softmax(q, k, row, row_spans, scale, weights);
    std::size_t w = 0;
    for (const auto& span : row_spans) {
      for (std::size_t key = span.begin; key < span.end; ++key) probs[row * s + key] = weights[w++];
    }
  }
  return probs;
}

double nmse(const AttentionOutput& candidate, const AttentionOutput& reference) {
  if (candidate.rows != reference.rows || candidate.cols != reference.cols) {
    throw Error(ErrorCode::kShapeMismatch, "nmse operands have different shapes");
  }
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < reference.data.size(); ++i) {
    const double d = candidate.data[i] - reference.data[i];
    num += d * d;
    den += reference.data[i] * reference.data[i];
  }
  if (!(den > 0.0)) {
    throw Error(ErrorCode::kDegenerateReference, "reference attention output has zero norm");
  }
  return num / den;
}

}  // namespace blindsight
