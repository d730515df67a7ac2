// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "ctta/tensor.hpp"

namespace ctta::ad {

// Linear algebra and elementwise arithmetic.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
/// a[B x n] + row[n] broadcast over rows (bias add).
Tensor add_rowwise(const Tensor& a, const Tensor& row);
/// a[B x n] * col[B] broadcast over columns (per-row weighting).
Tensor mul_rows(const Tensor& a, const Tensor& col);

// Elementwise nonlinearities.
Tensor softplus(const Tensor& x);
Tensor gelu(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
/// x ln x with 0 ln 0 := 0; the derivative at 0 is taken as 0.
Tensor xlogx(const Tensor& x);

// Normalization. `mask` (same numel as x, nonzero = keep) is optional.
Tensor softmax_rows(const Tensor& x, std::span<const std::uint8_t> mask = {});
/// Softmax of a single vector; alias of softmax_rows on a rank-1 tensor.
Tensor softmax(const Tensor& x, std::span<const std::uint8_t> mask = {});
Tensor log_softmax_rows(const Tensor& x);

/// Shannon entropy (nats) of a probability vector -> scalar.
Tensor entropy(const Tensor& p);
/// Per-row entropy of a [B x C] probability matrix -> [B].
Tensor entropy_rows(const Tensor& p);

// Reductions.
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// axis 0 sums over rows -> [cols]; axis 1 sums over columns -> [rows].
Tensor sum_axis(const Tensor& a, int axis);

// Indexing and layout.
Tensor gather_rows(const Tensor& a, std::span<const std::size_t> rows);
/// out[b] = a[b, index[b]].
Tensor pick(const Tensor& a, std::span<const std::size_t> index);
Tensor column(const Tensor& a, std::size_t j);
Tensor concat(std::span<const Tensor> parts, int axis);
Tensor reshape(const Tensor& a, Shape shape);
/// Per-row argmax; ties resolve to the lowest index. Not differentiable.
std::vector<std::size_t> argmax_rows(const Tensor& a);
Tensor stop_gradient(const Tensor& a);

/// Mean cross-entropy of integer labels under row logits.
Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> labels);

}  // namespace ctta::ad
