#pragma once

#include <cstddef>

// Row-level numeric kernels shared by the batched tape forward and the
// incremental decoder. Each output element has a fixed accumulation order
// that does not depend on batch composition, so both paths agree bit-for-bit.
namespace tabby::kernels {

inline constexpr double kLayerNormEps = 1e-5;

// y = x W + b, W stored row-major [in, out]; bias may be null.
template <typename T>
void linear_row(const T* x, const T* weight, const T* bias, std::size_t in, std::size_t out, T* y);

// dx += dy W^T using a pre-transposed weight wt [out, in]; dW += x^T dy; db += dy.
template <typename T>
void linear_row_backward(const T* x, const T* wt, const T* dy, std::size_t in, std::size_t out, T* dx, T* dweight,
                         T* dbias);

template <typename T>
void transpose(const T* src, std::size_t rows, std::size_t cols, T* dst);

// Writes normalized output plus the saved mean and reciprocal std.
template <typename T>
void layer_norm_row(const T* x, const T* gain, const T* bias, std::size_t dim, T* y, T* mean, T* rstd);

template <typename T>
void layer_norm_row_backward(const T* x, const T* gain, T mean, T rstd, const T* dy, std::size_t dim, T* dx,
                             T* dgain, T* dbias);

template <typename T>
T gelu(T x);
template <typename T>
T gelu_grad(T x);

// Single-query causal attention over n_keys cached keys/values.
// probs receives the softmax weights (length n_keys).
template <typename T>
void attention_query(const T* q, const T* keys, std::size_t key_stride, const T* values, std::size_t value_stride,
                     std::size_t n_keys, std::size_t head_dim, T* probs, T* out);

template <typename T>
void attention_query_backward(const T* q, const T* keys, std::size_t key_stride, const T* values,
                              std::size_t value_stride, std::size_t n_keys, std::size_t head_dim, const T* probs,
                              const T* dout, T* dq, T* dkeys, T* dvalues, T* scratch);

// log-softmax of one logit row evaluated at `target`; also writes softmax probabilities.
template <typename T>
double softmax_nll(const T* logits, std::size_t n, std::size_t target, T* probs);

}  // namespace tabby::kernels
