#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "vitals/tape.hpp"
#include "vitals/tensor.hpp"

// Differentiable ops over a Tape. All matrices are rank-2 row-major
// (frames x channels); there is no broadcasting beyond add_bias.
namespace vitals::ops {

// Temporal convolutions always use three taps at offsets -d, 0, +d.
inline constexpr std::size_t kConvTaps = 3;

// Probabilities are clamped to this floor before taking logs.
inline constexpr double kProbFloor = 1e-8;

template <typename T>
Var add(Tape<T>& tape, Var a, Var b);

// x[n x c] + bias[c] on every row.
template <typename T>
Var add_bias(Tape<T>& tape, Var x, Var bias);

// Elementwise product.
template <typename T>
Var mul(Tape<T>& tape, Var a, Var b);

template <typename T>
Var scale(Tape<T>& tape, Var x, T factor);

// Sum of all elements, shape {1}.
template <typename T>
Var sum(Tape<T>& tape, Var x);

template <typename T>
Var matmul(Tape<T>& tape, Var a, Var b);

// y[t,o] = sum_{j=-1..1} sum_i x[t + j*dilation, i] * kernel[j+1, i, o] with
// zeros outside [0, n). kernel has shape {3, c_in, c_out}.
template <typename T>
Var dilated_conv1d(Tape<T>& tape, Var x, Var kernel, std::size_t dilation);

template <typename T>
Var relu(Tape<T>& tape, Var x);

// Inverted dropout. The mask is a pure function of `seed`; in inference mode
// (or with rate 0) the input node is returned unchanged.
template <typename T>
Var dropout(Tape<T>& tape, Var x, double rate, std::uint64_t seed,
            bool training);

template <typename T>
Var softmax_rows(Tape<T>& tape, Var x);

// Feature-wise concatenation of equally long matrices.
template <typename T>
Var concat_cols(Tape<T>& tape, const std::vector<Var>& parts);

// Scaled dot-product attention restricted to consecutive chunks of `window`
// frames; the last chunk may be shorter. Scale is 1/sqrt(head width).
template <typename T>
Var chunked_attention(Tape<T>& tape, Var query, Var key, Var value,
                      std::size_t window);

// Class-weighted mean of -log softmax(logits)[t, labels[t]].
template <typename T>
Var cross_entropy(Tape<T>& tape, Var logits, std::span<const int> labels,
                  std::span<const double> class_weights);

// Mean over t >= 1 and classes of min(|lp[t,k] - anchor[t-1,k]|, tau)^2 with
// lp = log_softmax(logits). The anchor is a constant; when absent it is the
// current log-probabilities, so no gradient flows into frame t-1 through the
// frame-t term.
template <typename T>
Var smoothing_loss(Tape<T>& tape, Var logits, double tau,
                   const Tensor<T>* anchor = nullptr);

// Plain (non-recorded) helpers.
template <typename T>
Tensor<T> softmax_rows_value(const Tensor<T>& x);

template <typename T>
Tensor<T> log_softmax_rows_value(const Tensor<T>& x);

std::vector<int> argmax_rows(const Tensor<float>& x);

}  // namespace vitals::ops
