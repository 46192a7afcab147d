#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace tabby {

// A trainable tensor. Experts that share a sub-tensor hold the same
// Parameter object, so gradients from every expert land in one buffer.
template <typename T>
struct Parameter {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<T> value;
  std::vector<T> grad;

  Parameter(std::string n, std::size_t r, std::size_t c)
      : name(std::move(n)), rows(r), cols(c), value(r * c, T(0)), grad(r * c, T(0)) {}
  std::size_t numel() const { return value.size(); }
  void zero_grad() { std::fill(grad.begin(), grad.end(), T(0)); }
};

template <typename T>
using ParamPtr = std::shared_ptr<Parameter<T>>;

// Inference may keep a single expert of an MoE site materialized at a time.
enum class Residency { kAllExperts, kOneExpert };

struct CrossEntropyStats {
  double loss_sum = 0.0;
  std::size_t count = 0;
  std::vector<double> column_loss_sum;
  std::vector<std::size_t> column_count;

  double mean() const { return count == 0 ? 0.0 : loss_sum / static_cast<double>(count); }
};

// Reverse-mode tape of coarse tensor operations over row-major [rows, cols]
// matrices. Routed operations pick, per row, which expert's parameters apply.
template <typename T>
class Tape {
 public:
  using Var = std::size_t;

  explicit Tape(bool record = true, Residency residency = Residency::kAllExperts)
      : record_(record), residency_(residency) {}

  Var input(std::size_t rows, std::size_t cols, std::vector<T> data);
  Var embed(std::span<const int> tokens, std::span<const std::size_t> positions, Parameter<T>& token_table,
            Parameter<T>& position_table);
  Var layer_norm(Var x, std::span<Parameter<T>* const> gains, std::span<Parameter<T>* const> biases,
                 std::span<const std::uint32_t> route);
  // biases may be empty for a bias-free projection.
  Var linear(Var x, std::span<Parameter<T>* const> weights, std::span<Parameter<T>* const> biases,
             std::span<const std::uint32_t> route);
  Var gelu(Var x);
  Var add(Var a, Var b);
  // qkv rows are [q | k | v]; sequence b has valid length lengths[b].
  Var causal_attention(Var qkv, std::size_t batch, std::size_t seq, std::span<const std::size_t> lengths,
                       std::size_t n_heads);
  // Mean negative log-likelihood over masked rows; fills per-column statistics.
  Var cross_entropy(Var logits, std::span<const int> targets, std::span<const std::uint8_t> mask,
                    std::span<const std::uint32_t> target_columns, std::size_t n_columns, CrossEntropyStats& stats);

  void backward(Var scalar);

  const std::vector<T>& value(Var v) const { return nodes_[v].value; }
  std::size_t rows(Var v) const { return nodes_[v].rows; }
  std::size_t cols(Var v) const { return nodes_[v].cols; }

 private:
  struct Node {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<T> value;
    std::vector<T> grad;
  };

  Var push(std::size_t rows, std::size_t cols);
  std::vector<T>& grad(Var v);
  void on_backward(std::function<void()> fn) {
    if (record_) backward_.push_back(std::move(fn));
  }

  bool record_;
  Residency residency_;
  std::vector<Node> nodes_;
  std::vector<std::function<void()>> backward_;
};

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace tabby
