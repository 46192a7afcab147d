#include "tabby/autograd.hpp"

#include <algorithm>
#include <cmath>

#include "tabby/error.hpp"
#include "tabby/kernels.hpp"

namespace tabby {

namespace {

std::uint32_t expert_of(std::span<const std::uint32_t> route, std::size_t n_experts, std::size_t row) {
  return n_experts == 1 ? 0U : route[row];
}

void check_route(std::span<const std::uint32_t> route, std::size_t n_experts, std::size_t rows) {
  if (n_experts == 1) return;
  require(route.size() == rows, ErrorKind::kModel, "routing vector does not match row count");
  for (auto r : route) require(r < n_experts, ErrorKind::kModel, "column id out of range");
}

}  // namespace

template <typename T>
typename Tape<T>::Var Tape<T>::push(std::size_t rows, std::size_t cols) {
  Node n;
  n.rows = rows;
  n.cols = cols;
  n.value.assign(rows * cols, T(0));
  nodes_.push_back(std::move(n));
  return nodes_.size() - 1;
}

template <typename T>
std::vector<T>& Tape<T>::grad(Var v) {
  auto& g = nodes_[v].grad;
  if (g.empty()) g.assign(nodes_[v].value.size(), T(0));
  return g;
}

template <typename T>
typename Tape<T>::Var Tape<T>::input(std::size_t rows, std::size_t cols, std::vector<T> data) {
  require(data.size() == rows * cols, ErrorKind::kModel, "input size mismatch");
  const Var v = push(rows, cols);
  nodes_[v].value = std::move(data);
  return v;
}

template <typename T>
typename Tape<T>::Var Tape<T>::embed(std::span<const int> tokens, std::span<const std::size_t> positions,
                                     Parameter<T>& token_table, Parameter<T>& position_table) {
  const std::size_t n = tokens.size();
  const std::size_t d = token_table.cols;
  const Var out = push(n, d);
  auto& y = nodes_[out].value;
  for (std::size_t r = 0; r < n; ++r) {
    require(tokens[r] >= 0 && static_cast<std::size_t>(tokens[r]) < token_table.rows, ErrorKind::kModel,
            "token id out of range");
    require(positions[r] < position_table.rows, ErrorKind::kModel, "sequence longer than context length");
    const T* te = token_table.value.data() + static_cast<std::size_t>(tokens[r]) * d;
    const T* pe = position_table.value.data() + positions[r] * d;
    for (std::size_t i = 0; i < d; ++i) y[r * d + i] = te[i] + pe[i];
  }
  std::vector<int> tok(tokens.begin(), tokens.end());
  std::vector<std::size_t> pos(positions.begin(), positions.end());
  on_backward([this, out, tok = std::move(tok), pos = std::move(pos), &token_table, &position_table, d] {
    const auto& g = grad(out);
    for (std::size_t r = 0; r < tok.size(); ++r) {
      T* dte = token_table.grad.data() + static_cast<std::size_t>(tok[r]) * d;
      T* dpe = position_table.grad.data() + pos[r] * d;
      for (std::size_t i = 0; i < d; ++i) {
        dte[i] += g[r * d + i];
        dpe[i] += g[r * d + i];
      }
    }
  });
  return out;
}

template <typename T>
typename Tape<T>::Var Tape<T>::layer_norm(Var x, std::span<Parameter<T>* const> gains,
                                          std::span<Parameter<T>* const> biases,
                                          std::span<const std::uint32_t> route) {
  const std::size_t n = nodes_[x].rows;
  const std::size_t d = nodes_[x].cols;
  const std::size_t experts = gains.size();
  require(experts > 0 && biases.size() == experts, ErrorKind::kModel, "layer norm expert mismatch");
  check_route(route, experts, n);
  const Var out = push(n, d);
  std::vector<T> stats(2 * n);
  const auto& xv = nodes_[x].value;
  auto& y = nodes_[out].value;

  if (residency_ == Residency::kOneExpert && experts > 1) {
    std::vector<T> gain(d), bias(d);
    for (std::size_t e = 0; e < experts; ++e) {
      bool loaded = false;
      for (std::size_t r = 0; r < n; ++r) {
        if (route[r] != e) continue;
        if (!loaded) {
          std::copy(gains[e]->value.begin(), gains[e]->value.end(), gain.begin());
          std::copy(biases[e]->value.begin(), biases[e]->value.end(), bias.begin());
          loaded = true;
        }
        kernels::layer_norm_row(xv.data() + r * d, gain.data(), bias.data(), d, y.data() + r * d, &stats[2 * r],
                                &stats[2 * r + 1]);
      }
    }
  } else {
    for (std::size_t r = 0; r < n; ++r) {
      const auto e = expert_of(route, experts, r);
      kernels::layer_norm_row(xv.data() + r * d, gains[e]->value.data(), biases[e]->value.data(), d,
                              y.data() + r * d, &stats[2 * r], &stats[2 * r + 1]);
    }
  }

  std::vector<Parameter<T>*> g(gains.begin(), gains.end());
  std::vector<Parameter<T>*> b(biases.begin(), biases.end());
  std::vector<std::uint32_t> rt(route.begin(), route.end());
  on_backward([this, x, out, n, d, g = std::move(g), b = std::move(b), rt = std::move(rt),
               stats = std::move(stats)] {
    const auto& dy = grad(out);
    auto& dx = grad(x);
    const auto& xv = nodes_[x].value;
    for (std::size_t r = 0; r < n; ++r) {
      const auto e = expert_of(rt, g.size(), r);
      kernels::layer_norm_row_backward(xv.data() + r * d, g[e]->value.data(), stats[2 * r], stats[2 * r + 1],
                                       dy.data() + r * d, d, dx.data() + r * d, g[e]->grad.data(),
                                       b[e]->grad.data());
    }
  });
  return out;
}

template <typename T>
typename Tape<T>::Var Tape<T>::linear(Var x, std::span<Parameter<T>* const> weights,
                                      std::span<Parameter<T>* const> biases, std::span<const std::uint32_t> route) {
  const std::size_t n = nodes_[x].rows;
  const std::size_t in = nodes_[x].cols;
  const std::size_t experts = weights.size();
  require(experts > 0 && (biases.empty() || biases.size() == experts), ErrorKind::kModel, "linear expert mismatch");
  require(weights[0]->rows == in, ErrorKind::kModel, "linear input width mismatch");
  const std::size_t out_dim = weights[0]->cols;
  check_route(route, experts, n);
  const Var out = push(n, out_dim);
  const auto& xv = nodes_[x].value;
  auto& y = nodes_[out].value;
  const bool has_bias = !biases.empty();

  if (residency_ == Residency::kOneExpert && experts > 1) {
    std::vector<T> w(in * out_dim), bias(has_bias ? out_dim : 0);
    for (std::size_t e = 0; e < experts; ++e) {
      bool loaded = false;
      for (std::size_t r = 0; r < n; ++r) {
        if (route[r] != e) continue;
        if (!loaded) {
          std::copy(weights[e]->value.begin(), weights[e]->value.end(), w.begin());
          if (has_bias) std::copy(biases[e]->value.begin(), biases[e]->value.end(), bias.begin());
          loaded = true;
        }
        kernels::linear_row(xv.data() + r * in, w.data(), has_bias ? bias.data() : nullptr, in, out_dim,
                            y.data() + r * out_dim);
      }
    }
  } else {
    for (std::size_t r = 0; r < n; ++r) {
      const auto e = expert_of(route, experts, r);
      kernels::linear_row(xv.data() + r * in, weights[e]->value.data(),
                          has_bias ? biases[e]->value.data() : nullptr, in, out_dim, y.data() + r * out_dim);
    }
  }

  std::vector<Parameter<T>*> w(weights.begin(), weights.end());
  std::vector<Parameter<T>*> b(biases.begin(), biases.end());
  std::vector<std::uint32_t> rt(route.begin(), route.end());
  on_backward([this, x, out, n, in, out_dim, w = std::move(w), b = std::move(b), rt = std::move(rt)] {
    const auto& dy = grad(out);
    auto& dx = grad(x);
    const auto& xv = nodes_[x].value;
    std::vector<std::vector<T>> wt(w.size());
    for (std::size_t r = 0; r < n; ++r) {
      const auto e = expert_of(rt, w.size(), r);
      if (wt[e].empty()) {
        wt[e].resize(in * out_dim);
        kernels::transpose(w[e]->value.data(), in, out_dim, wt[e].data());
      }
      kernels::linear_row_backward(xv.data() + r * in, wt[e].data(), dy.data() + r * out_dim, in, out_dim,
                                   dx.data() + r * in, w[e]->grad.data(), b.empty() ? nullptr : b[e]->grad.data());
    }
  });
  return out;
}

template <typename T>
typename Tape<T>::Var Tape<T>::gelu(Var x) {
  const Var out = push(nodes_[x].rows, nodes_[x].cols);
  const auto& xv = nodes_[x].value;
  auto& y = nodes_[out].value;
  for (std::size_t i = 0; i < xv.size(); ++i) y[i] = kernels::gelu(xv[i]);
  on_backward([this, x, out] {
    const auto& dy = grad(out);
    auto& dx = grad(x);
    const auto& xv = nodes_[x].value;
    for (std::size_t i = 0; i < xv.size(); ++i) dx[i] += dy[i] * kernels::gelu_grad(xv[i]);
  });
  return out;
}

template <typename T>
typename Tape<T>::Var Tape<T>::add(Var a, Var b) {
  require(nodes_[a].value.size() == nodes_[b].value.size(), ErrorKind::kModel, "add shape mismatch");
  const Var out = push(nodes_[a].rows, nodes_[a].cols);
  const auto& av = nodes_[a].value;
  const auto& bv = nodes_[b].value;
  auto& y = nodes_[out].value;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] + bv[i];
  on_backward([this, a, b, out] {
    const auto& dy = grad(out);
    auto& da = grad(a);
    for (std::size_t i = 0; i < dy.size(); ++i) da[i] += dy[i];
    auto& db = grad(b);
    for (std::size_t i = 0; i < dy.size(); ++i) db[i] += dy[i];
  });
  return out;
}

template <typename T>
typename Tape<T>::Var Tape<T>::causal_attention(Var qkv, std::size_t batch, std::size_t seq,
                                                std::span<const std::size_t> lengths, std::size_t n_heads) {
  const std::size_t width = nodes_[qkv].cols;
  const std::size_t d = width / 3;
  require(width == 3 * d && d % n_heads == 0, ErrorKind::kModel, "attention width mismatch");
  require(nodes_[qkv].rows == batch * seq && lengths.size() == batch, ErrorKind::kModel, "attention batch mismatch");
  const std::size_t hd = d / n_heads;
  const Var out = push(batch * seq, d);
  const auto& in = nodes_[qkv].value;
  auto& y = nodes_[out].value;
  // probs[(b, h, t)] holds keys 0..min(t, len-1)
  std::vector<T> probs(batch * n_heads * seq * seq, T(0));
  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t len = std::max<std::size_t>(lengths[b], 1);
    for (std::size_t t = 0; t < seq; ++t) {
      const std::size_t n_keys = std::min(t + 1, len);
      const std::size_t row = b * seq + t;
      for (std::size_t h = 0; h < n_heads; ++h) {
        kernels::attention_query(in.data() + row * width + h * hd, in.data() + b * seq * width + d + h * hd, width,
                                 in.data() + b * seq * width + 2 * d + h * hd, width, n_keys, hd,
                                 probs.data() + ((b * n_heads + h) * seq + t) * seq, y.data() + row * d + h * hd);
      }
    }
  }
  std::vector<std::size_t> lens(lengths.begin(), lengths.end());
  on_backward([this, qkv, out, batch, seq, n_heads, d, hd, width, lens = std::move(lens), probs = std::move(probs)] {
    const auto& dy = grad(out);
    auto& din = grad(qkv);
    const auto& in = nodes_[qkv].value;
    std::vector<T> scratch(seq);
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t len = std::max<std::size_t>(lens[b], 1);
      for (std::size_t t = 0; t < seq; ++t) {
        const std::size_t n_keys = std::min(t + 1, len);
        const std::size_t row = b * seq + t;
        for (std::size_t h = 0; h < n_heads; ++h) {
          const std::size_t base = b * seq * width;
          kernels::attention_query_backward(in.data() + row * width + h * hd, in.data() + base + d + h * hd, width,
                                            in.data() + base + 2 * d + h * hd, width, n_keys, hd,
                                            probs.data() + ((b * n_heads + h) * seq + t) * seq,
                                            dy.data() + row * d + h * hd, din.data() + row * width + h * hd,
                                            din.data() + base + d + h * hd, din.data() + base + 2 * d + h * hd,
                                            scratch.data());
        }
      }
    }
  });
  return out;
}

template <typename T>
typename Tape<T>::Var Tape<T>::cross_entropy(Var logits, std::span<const int> targets,
                                             std::span<const std::uint8_t> mask,
                                             std::span<const std::uint32_t> target_columns, std::size_t n_columns,
                                             CrossEntropyStats& stats) {
  const std::size_t n = nodes_[logits].rows;
  const std::size_t vocab = nodes_[logits].cols;
  require(targets.size() == n && mask.size() == n && target_columns.size() == n, ErrorKind::kModel,
          "cross entropy size mismatch");
  stats = CrossEntropyStats{};
  stats.column_loss_sum.assign(n_columns, 0.0);
  stats.column_count.assign(n_columns, 0);
  std::vector<T> probs(n * vocab, T(0));
  const auto& lv = nodes_[logits].value;
  for (std::size_t r = 0; r < n; ++r) {
    if (!mask[r]) continue;
    require(targets[r] >= 0 && static_cast<std::size_t>(targets[r]) < vocab, ErrorKind::kModel,
            "target id out of range");
    require(target_columns[r] < n_columns, ErrorKind::kModel, "column id out of range");
    const double nll = kernels::softmax_nll(lv.data() + r * vocab, vocab, static_cast<std::size_t>(targets[r]),
                                            probs.data() + r * vocab);
    stats.loss_sum += nll;
    stats.count += 1;
    stats.column_loss_sum[target_columns[r]] += nll;
    stats.column_count[target_columns[r]] += 1;
  }
  require(stats.count > 0, ErrorKind::kTraining, "no supervised tokens");
  const Var out = push(1, 1);
  nodes_[out].value[0] = static_cast<T>(stats.mean());
  const std::size_t count = stats.count;
  std::vector<int> tg(targets.begin(), targets.end());
  std::vector<std::uint8_t> mk(mask.begin(), mask.end());
  on_backward([this, logits, out, n, vocab, count, tg = std::move(tg), mk = std::move(mk),
               probs = std::move(probs)] {
    const T scale = grad(out)[0] / static_cast<T>(count);
    auto& dl = grad(logits);
    for (std::size_t r = 0; r < n; ++r) {
      if (!mk[r]) continue;
      for (std::size_t i = 0; i < vocab; ++i) dl[r * vocab + i] += scale * probs[r * vocab + i];
      dl[r * vocab + static_cast<std::size_t>(tg[r])] -= scale;
    }
  });
  return out;
}

template <typename T>
void Tape<T>::backward(Var scalar) {
  require(record_, ErrorKind::kModel, "backward on a tape that did not record");
  require(nodes_[scalar].value.size() == 1, ErrorKind::kModel, "backward needs a scalar");
  grad(scalar)[0] = T(1);
  for (auto it = backward_.rbegin(); it != backward_.rend(); ++it) (*it)();
  backward_.clear();
}

template class Tape<float>;
template class Tape<double>;

}  // namespace tabby
