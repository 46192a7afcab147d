#include "tabby/kernels.hpp"

#include <cmath>

namespace tabby::kernels {

template <typename T>
void linear_row(const T* __restrict x, const T* __restrict weight, const T* __restrict bias, std::size_t in,
                std::size_t out, T* __restrict y) {
  for (std::size_t j = 0; j < out; ++j) y[j] = bias != nullptr ? bias[j] : T(0);
  for (std::size_t k = 0; k < in; ++k) {
    const T xk = x[k];
    const T* __restrict w = weight + k * out;
    for (std::size_t j = 0; j < out; ++j) y[j] += xk * w[j];
  }
}

template <typename T>
void linear_row_backward(const T* __restrict x, const T* __restrict wt, const T* __restrict dy, std::size_t in,
                         std::size_t out, T* __restrict dx, T* __restrict dweight, T* __restrict dbias) {
  if (dx != nullptr) {
    for (std::size_t j = 0; j < out; ++j) {
      const T g = dy[j];
      const T* __restrict w = wt + j * in;
      for (std::size_t k = 0; k < in; ++k) dx[k] += g * w[k];
    }
  }
  for (std::size_t k = 0; k < in; ++k) {
    const T xk = x[k];
    T* __restrict dw = dweight + k * out;
    for (std::size_t j = 0; j < out; ++j) dw[j] += xk * dy[j];
  }
  if (dbias != nullptr) {
    for (std::size_t j = 0; j < out; ++j) dbias[j] += dy[j];
  }
}

template <typename T>
void transpose(const T* src, std::size_t rows, std::size_t cols, T* dst) {
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) dst[c * rows + r] = src[r * cols + c];
  }
}

template <typename T>
void layer_norm_row(const T* x, const T* gain, const T* bias, std::size_t dim, T* y, T* mean_out, T* rstd_out) {
  T mean = 0;
  for (std::size_t i = 0; i < dim; ++i) mean += x[i];
  mean /= static_cast<T>(dim);
  T var = 0;
  for (std::size_t i = 0; i < dim; ++i) {
    const T d = x[i] - mean;
    var += d * d;
  }
  var /= static_cast<T>(dim);
  const T rstd = T(1) / std::sqrt(var + static_cast<T>(kLayerNormEps));
  for (std::size_t i = 0; i < dim; ++i) y[i] = (x[i] - mean) * rstd * gain[i] + bias[i];
  if (mean_out != nullptr) *mean_out = mean;
  if (rstd_out != nullptr) *rstd_out = rstd;
}

template <typename T>
void layer_norm_row_backward(const T* x, const T* gain, T mean, T rstd, const T* dy, std::size_t dim, T* dx,
                             T* dgain, T* dbias) {
  T sum_dnorm = 0;
  T sum_dnorm_xhat = 0;
  for (std::size_t i = 0; i < dim; ++i) {
    const T xhat = (x[i] - mean) * rstd;
    const T dnorm = dy[i] * gain[i];
    sum_dnorm += dnorm;
    sum_dnorm_xhat += dnorm * xhat;
    dgain[i] += dy[i] * xhat;
    dbias[i] += dy[i];
  }
  const T inv_n = T(1) / static_cast<T>(dim);
  for (std::size_t i = 0; i < dim; ++i) {
    const T xhat = (x[i] - mean) * rstd;
    const T dnorm = dy[i] * gain[i];
    dx[i] += rstd * (dnorm - inv_n * sum_dnorm - xhat * inv_n * sum_dnorm_xhat);
  }
}

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;
}  // namespace

template <typename T>
T gelu(T x) {
  const T c = static_cast<T>(kGeluC);
  const T a = static_cast<T>(kGeluA);
  return T(0.5) * x * (T(1) + std::tanh(c * (x + a * x * x * x)));
}

template <typename T>
T gelu_grad(T x) {
  const T c = static_cast<T>(kGeluC);
  const T a = static_cast<T>(kGeluA);
  const T u = c * (x + a * x * x * x);
  const T th = std::tanh(u);
  const T sech2 = T(1) - th * th;
  return T(0.5) * (T(1) + th) + T(0.5) * x * sech2 * c * (T(1) + T(3) * a * x * x);
}

template <typename T>
void attention_query(const T* q, const T* keys, std::size_t key_stride, const T* values, std::size_t value_stride,
                     std::size_t n_keys, std::size_t head_dim, T* probs, T* out) {
  const T scale = T(1) / std::sqrt(static_cast<T>(head_dim));
  T max_score = -INFINITY;
  for (std::size_t j = 0; j < n_keys; ++j) {
    const T* k = keys + j * key_stride;
    T s = 0;
    for (std::size_t i = 0; i < head_dim; ++i) s += q[i] * k[i];
    s *= scale;
    probs[j] = s;
    if (s > max_score) max_score = s;
  }
  T total = 0;
  for (std::size_t j = 0; j < n_keys; ++j) {
    probs[j] = std::exp(probs[j] - max_score);
    total += probs[j];
  }
  const T inv = T(1) / total;
  for (std::size_t j = 0; j < n_keys; ++j) probs[j] *= inv;
  for (std::size_t i = 0; i < head_dim; ++i) out[i] = 0;
  for (std::size_t j = 0; j < n_keys; ++j) {
    const T p = probs[j];
    const T* v = values + j * value_stride;
    for (std::size_t i = 0; i < head_dim; ++i) out[i] += p * v[i];
  }
}

template <typename T>
void attention_query_backward(const T* q, const T* keys, std::size_t key_stride, const T* values,
                              std::size_t value_stride, std::size_t n_keys, std::size_t head_dim, const T* probs,
                              const T* dout, T* dq, T* dkeys, T* dvalues, T* scratch) {
  const T scale = T(1) / std::sqrt(static_cast<T>(head_dim));
  // scratch[j] = dL/dp_j
  T weighted = 0;
  for (std::size_t j = 0; j < n_keys; ++j) {
    const T* v = values + j * value_stride;
    T* dv = dvalues + j * value_stride;
    T dp = 0;
    for (std::size_t i = 0; i < head_dim; ++i) {
      dp += dout[i] * v[i];
      dv[i] += probs[j] * dout[i];
    }
    scratch[j] = dp;
    weighted += probs[j] * dp;
  }
  for (std::size_t j = 0; j < n_keys; ++j) {
    const T ds = probs[j] * (scratch[j] - weighted) * scale;
    const T* k = keys + j * key_stride;
    T* dk = dkeys + j * key_stride;
    for (std::size_t i = 0; i < head_dim; ++i) {
      dq[i] += ds * k[i];
      dk[i] += ds * q[i];
    }
  }
}

template <typename T>
double softmax_nll(const T* logits, std::size_t n, std::size_t target, T* probs) {
  T max_logit = logits[0];
  for (std::size_t i = 1; i < n; ++i) max_logit = logits[i] > max_logit ? logits[i] : max_logit;
  T total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    probs[i] = std::exp(logits[i] - max_logit);
    total += probs[i];
  }
  const T inv = T(1) / total;
  for (std::size_t i = 0; i < n; ++i) probs[i] *= inv;
  return -(static_cast<double>(logits[target] - max_logit) - std::log(static_cast<double>(total)));
}

#define TABBY_INSTANTIATE_KERNELS(T)                                                                          \
  template void linear_row<T>(const T*, const T*, const T*, std::size_t, std::size_t, T*);                    \
  template void linear_row_backward<T>(const T*, const T*, const T*, std::size_t, std::size_t, T*, T*, T*);   \
  template void transpose<T>(const T*, std::size_t, std::size_t, T*);                                         \
  template void layer_norm_row<T>(const T*, const T*, const T*, std::size_t, T*, T*, T*);                     \
  template void layer_norm_row_backward<T>(const T*, const T*, T, T, const T*, std::size_t, T*, T*, T*);      \
  template T gelu<T>(T);                                                                                      \
  template T gelu_grad<T>(T);                                                                                 \
  template void attention_query<T>(const T*, const T*, std::size_t, const T*, std::size_t, std::size_t,       \
                                   std::size_t, T*, T*);                                                      \
  template void attention_query_backward<T>(const T*, const T*, std::size_t, const T*, std::size_t,           \
                                            std::size_t, std::size_t, const T*, const T*, T*, T*, T*, T*);    \
  template double softmax_nll<T>(const T*, std::size_t, std::size_t, T*);

TABBY_INSTANTIATE_KERNELS(float)
TABBY_INSTANTIATE_KERNELS(double)

#undef TABBY_INSTANTIATE_KERNELS

}  // namespace tabby::kernels
