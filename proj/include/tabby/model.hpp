#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tabby/autograd.hpp"

namespace tabby {

struct ModelConfig {
  std::size_t vocab_size = 0;
  std::size_t context_length = 256;
  std::size_t d_model = 64;
  std::size_t n_layers = 2;
  std::size_t n_heads = 4;
  std::size_t d_ff = 256;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& doc);
};

enum class MoeSite { kLmHead, kMlp, kAttention };

std::string_view to_string(MoeSite site);
MoeSite parse_moe_site(std::string_view text);

// sites {lm_head} = MH, {mlp} = MMLP, {mlp, lm_head} = MMLP+MH, {attention} = MA.
struct MoeSpec {
  std::set<MoeSite> sites;
  std::size_t n_experts = 1;
  // Sites whose layer norm and input projection are one tensor shared by all
  // experts; only the output projection stays per-expert.
  std::set<MoeSite> shared;

  bool empty() const { return sites.empty(); }
  std::string label() const;
  nlohmann::json to_json() const;
  static MoeSpec from_json(const nlohmann::json& doc);
  static MoeSpec parse(std::string_view variant, std::size_t n_experts);
};

template <typename T>
struct NormParams {
  ParamPtr<T> gain;
  ParamPtr<T> bias;
};

template <typename T>
struct AttentionBlock {
  NormParams<T> norm;
  ParamPtr<T> qkv_weight, qkv_bias;
  ParamPtr<T> proj_weight, proj_bias;
};

template <typename T>
struct MlpBlock {
  NormParams<T> norm;
  ParamPtr<T> fc_weight, fc_bias;
  ParamPtr<T> proj_weight, proj_bias;
};

template <typename T>
struct HeadBlock {
  ParamPtr<T> weight;  // [d_model, vocab], no bias
};

// Each site holds one block, or one block per column after tabbify.
template <typename T>
struct TransformerLayer {
  std::vector<AttentionBlock<T>> attention;
  std::vector<MlpBlock<T>> mlp;
};

// Padded mini-batch of next-token examples. Row b, position t predicts
// targets[b, t] from inputs[b, 0..t]; columns[b, t] routes position t to an
// expert and labels the target for per-column losses.
struct Batch {
  std::size_t batch = 0;
  std::size_t seq = 0;
  std::size_t n_columns = 1;
  std::vector<int> inputs;
  std::vector<int> targets;
  std::vector<std::uint32_t> columns;
  std::vector<std::uint8_t> mask;
  std::vector<std::size_t> lengths;
};

struct Sequence {
  std::vector<int> tokens;            // <BOS> ... <EOS>
  std::vector<std::size_t> columns;   // per input position, tokens.size() entries
  std::vector<std::uint8_t> supervised;  // per target token (tokens[1..]); empty = all
};

Batch make_batch(const std::vector<Sequence>& sequences, std::size_t n_columns, int pad_token);

struct LossResult {
  double loss = 0.0;
  std::vector<double> column_loss;          // mean per column (0 where no tokens)
  std::vector<std::size_t> column_tokens;
  std::size_t tokens = 0;
};

template <typename T>
class DecodeSession;

template <typename T>
class Model {
 public:
  Model() = default;

  const ModelConfig& config() const { return config_; }
  const MoeSpec& moe() const { return moe_; }
  bool tabbified() const { return !moe_.empty(); }
  // Number of experts per MoE site (1 for a base model).
  std::size_t n_experts() const { return moe_.n_experts; }

  // logits [batch * seq, vocab]
  std::vector<T> forward(const Batch& batch, Residency residency = Residency::kAllExperts) const;
  // Loss plus gradients accumulated into every parameter's grad buffer (zeroed first).
  LossResult loss_and_grads(const Batch& batch);
  LossResult loss(const Batch& batch) const;

  // Unique parameter tensors in a stable order (shared tensors appear once).
  std::vector<ParamPtr<T>> parameters() const;
  std::size_t parameter_count() const;
  void zero_grad();

  DecodeSession<T> decoder() const;

  template <typename U>
  Model<U> cast() const;

  // Structural access for tests and checkpoints.
  ParamPtr<T>& token_embedding() { return wte_; }
  ParamPtr<T>& position_embedding() { return wpe_; }
  std::vector<TransformerLayer<T>>& layers() { return layers_; }
  const std::vector<TransformerLayer<T>>& layers() const { return layers_; }
  NormParams<T>& final_norm() { return ln_f_; }
  std::vector<HeadBlock<T>>& heads() { return heads_; }
  const std::vector<HeadBlock<T>>& heads() const { return heads_; }

 private:
  template <typename U>
  friend class Model;
  friend class DecodeSession<T>;
  template <typename U>
  friend Model<U> build_base_lm(const ModelConfig& config);
  template <typename U>
  friend Model<U> tabbify(const Model<U>& model, const MoeSpec& spec);

  LossResult run(const Batch& batch, bool grads, std::vector<T>* logits, Residency residency) const;
  std::vector<std::uint32_t> routes_for(const Batch& batch) const;

  ModelConfig config_;
  MoeSpec moe_;
  ParamPtr<T> wte_, wpe_;
  std::vector<TransformerLayer<T>> layers_;
  NormParams<T> ln_f_;
  std::vector<HeadBlock<T>> heads_;
};

// Token + learned position embeddings, pre-norm attention/GELU-MLP blocks,
// final norm and an untied output head; deterministic from config.seed.
template <typename T>
Model<T> build_base_lm(const ModelConfig& config);

// Replaces each requested site with n_experts deep copies of its block.
template <typename T>
Model<T> tabbify(const Model<T>& model, const MoeSpec& spec);

// Incremental decoding with cached keys/values; logits match Model::forward bit-for-bit.
template <typename T>
class DecodeSession {
 public:
  explicit DecodeSession(const Model<T>& model);

  // Feeds one token routed to `column`; returns next-token logits.
  const std::vector<T>& step(int token, std::size_t column);
  std::size_t position() const { return position_; }

 private:
  const Model<T>* model_;
  std::size_t position_ = 0;
  std::vector<std::vector<T>> keys_;    // per layer [ctx, d]
  std::vector<std::vector<T>> values_;  // per layer [ctx, d]
  std::vector<T> x_, h_, qkv_, attn_, proj_, ff_, probs_, logits_;
};

extern template class Model<float>;
extern template class Model<double>;
extern template class DecodeSession<float>;
extern template class DecodeSession<double>;

}  // namespace tabby
