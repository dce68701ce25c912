#pragma once

#include <span>

#include "synthrad/tape.hpp"
#include "synthrad/tensor.hpp"

namespace synthrad::ops {

// All operators compute in f32 with f64 accumulation inside reductions,
// record a node on `tape` when one is given (pass nullptr for inference),
// and throw ShapeError/DomainError with the op name and offending dims.

// Elementwise, same shape.
Tensor add(const Tensor& a, const Tensor& b, Tape* tape);
Tensor mul(const Tensor& a, const Tensor& b, Tape* tape);
// y = (1-alpha)*a + alpha*b; exact endpoints (alpha 0 or 1 return a copy).
Tensor lerp(const Tensor& a, const Tensor& b, float alpha, Tape* tape);
Tensor scale(const Tensor& x, float factor, Tape* tape);
// Clamp with pass-through gradient strictly inside (lo, hi).
Tensor clamp(const Tensor& x, float lo, float hi, Tape* tape);

// Activations.
Tensor leaky_relu(const Tensor& x, float negative_slope, Tape* tape);
Tensor silu(const Tensor& x, Tape* tape);
Tensor sigmoid(const Tensor& x, Tape* tape);

// (N,K) x (K,M) -> (N,M).
Tensor matmul(const Tensor& a, const Tensor& b, Tape* tape);

// x: (N,Ci,H,W), w: (Co,Ci,k,k) with odd k; stride 1, symmetric zero
// padding k/2, so the output is (N,Co,H,W).
Tensor conv2d(const Tensor& x, const Tensor& w, Tape* tape);

// x: (N,C,H,W) -> (N,C,2H,2W) / (N,C,H/2,W/2); pool requires even H,W.
Tensor upsample_nearest2(const Tensor& x, Tape* tape);
Tensor avg_pool2(const Tensor& x, Tape* tape);

// Bias adds: (N,F)+(F) row-wise, or (N,C,H,W)+(C) channel-wise.
Tensor add_bias(const Tensor& x, const Tensor& b, Tape* tape);
// (N,C,H,W) + per-example channel vector (N,C), broadcast over H,W.
Tensor add_channel_vector(const Tensor& x, const Tensor& v, Tape* tape);

// Concatenation along channels (NCHW) and along rows (2-D).
Tensor concat_channels(const Tensor& a, const Tensor& b, Tape* tape);
Tensor concat_rows(std::span<const Tensor> parts, Tape* tape);
// (R,D) -> (1,D) column sums.
Tensor sum_rows(const Tensor& x, Tape* tape);

// Normalization over channel groups of an NCHW tensor; gamma/beta are (C).
Tensor group_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, int groups,
                  Tape* tape, float eps = 1e-5f);

// table: (V,D); ids index rows -> (n,D). Gradient scatters into the table.
Tensor embedding_lookup(const Tensor& table, std::span<const int> ids, Tape* tape);

// Copying reshape (same numel) and spatial mean (N,C,H,W) -> (N,C).
Tensor reshape(const Tensor& x, Shape shape, Tape* tape);
Tensor spatial_mean(const Tensor& x, Tape* tape);

// Reductions to a scalar (shape {1}).
Tensor sum(const Tensor& x, Tape* tape);
Tensor mse(const Tensor& a, const Tensor& b, Tape* tape);
// Mean binary cross-entropy; every p must lie strictly in (0,1).
Tensor bce(const Tensor& p, const Tensor& target, Tape* tape);

// Row-wise softmax over (N,K) logits, and mean cross-entropy against
// integer labels.
Tensor softmax(const Tensor& logits, Tape* tape);
Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> labels, Tape* tape);

}  // namespace synthrad::ops
