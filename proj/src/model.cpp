#include "tabby/model.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <unordered_set>

#include "tabby/error.hpp"
#include "tabby/kernels.hpp"

namespace tabby {

void ModelConfig::validate() const {
  require(vocab_size > 0, ErrorKind::kModel, "vocab_size must be positive");
  require(context_length > 1, ErrorKind::kModel, "context_length must exceed 1");
  require(d_model > 0 && n_heads > 0 && d_model % n_heads == 0, ErrorKind::kModel,
          "d_model must be divisible by n_heads");
  require(n_layers > 0, ErrorKind::kModel, "n_layers must be positive");
  require(d_ff > 0, ErrorKind::kModel, "d_ff must be positive");
}

nlohmann::json ModelConfig::to_json() const {
  return {{"vocab_size", vocab_size}, {"context_length", context_length}, {"d_model", d_model},
          {"n_layers", n_layers},     {"n_heads", n_heads},               {"d_ff", d_ff},
          {"seed", seed}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& doc) {
  ModelConfig c;
  c.vocab_size = doc.value("vocab_size", c.vocab_size);
  c.context_length = doc.value("context_length", c.context_length);
  c.d_model = doc.value("d_model", c.d_model);
  c.n_layers = doc.value("n_layers", c.n_layers);
  c.n_heads = doc.value("n_heads", c.n_heads);
  c.d_ff = doc.value("d_ff", c.d_ff);
  c.seed = doc.value("seed", c.seed);
  return c;
}

std::string_view to_string(MoeSite site) {
  switch (site) {
    case MoeSite::kLmHead: return "lm_head";
    case MoeSite::kMlp: return "mlp";
    case MoeSite::kAttention: return "attention";
  }
  return "?";
}

MoeSite parse_moe_site(std::string_view text) {
  if (text == "lm_head") return MoeSite::kLmHead;
  if (text == "mlp") return MoeSite::kMlp;
  if (text == "attention") return MoeSite::kAttention;
  fail(ErrorKind::kInvalidArgument, "unknown MoE site '" + std::string(text) + "'");
}

std::string MoeSpec::label() const {
  if (sites.empty()) return "base";
  const bool head = sites.count(MoeSite::kLmHead) > 0;
  const bool mlp = sites.count(MoeSite::kMlp) > 0;
  const bool attn = sites.count(MoeSite::kAttention) > 0;
  if (head && mlp && !attn) return "MMLP+MH";
  if (head && !mlp && !attn) return "MH";
  if (mlp && !head && !attn) return "MMLP";
  if (attn && !head && !mlp) return "MA";
  std::string out;
  for (auto s : sites) out += (out.empty() ? "" : "+") + std::string(to_string(s));
  return out;
}

nlohmann::json MoeSpec::to_json() const {
  std::vector<std::string> s, sh;
  for (auto x : sites) s.emplace_back(to_string(x));
  for (auto x : shared) sh.emplace_back(to_string(x));
  return {{"sites", s}, {"n_experts", n_experts}, {"shared", sh}};
}

MoeSpec MoeSpec::from_json(const nlohmann::json& doc) {
  MoeSpec spec;
  for (const auto& s : doc.value("sites", std::vector<std::string>{})) spec.sites.insert(parse_moe_site(s));
  for (const auto& s : doc.value("shared", std::vector<std::string>{})) spec.shared.insert(parse_moe_site(s));
  spec.n_experts = doc.value("n_experts", std::size_t{1});
  return spec;
}

MoeSpec MoeSpec::parse(std::string_view variant, std::size_t n_experts) {
  MoeSpec spec;
  spec.n_experts = n_experts;
  if (variant == "base" || variant == "none" || variant.empty()) {
    spec.n_experts = 1;
  } else if (variant == "MH" || variant == "mh") {
    spec.sites = {MoeSite::kLmHead};
  } else if (variant == "MMLP" || variant == "mmlp") {
    spec.sites = {MoeSite::kMlp};
  } else if (variant == "MMLP+MH" || variant == "mmlp+mh") {
    spec.sites = {MoeSite::kMlp, MoeSite::kLmHead};
  } else if (variant == "MA" || variant == "ma") {
    spec.sites = {MoeSite::kAttention};
  } else {
    fail(ErrorKind::kInvalidArgument, "unknown Tabby variant '" + std::string(variant) + "'");
  }
  return spec;
}

Batch make_batch(const std::vector<Sequence>& sequences, std::size_t n_columns, int pad_token) {
  require(!sequences.empty(), ErrorKind::kTraining, "empty batch");
  Batch b;
  b.batch = sequences.size();
  b.n_columns = n_columns;
  for (const auto& s : sequences) {
    require(s.tokens.size() >= 2, ErrorKind::kTraining, "sequence shorter than two tokens");
    require(s.columns.size() == s.tokens.size(), ErrorKind::kTraining, "column labels do not match tokens");
    require(s.supervised.empty() || s.supervised.size() + 1 == s.tokens.size(), ErrorKind::kTraining,
            "supervision mask does not match tokens");
    b.seq = std::max(b.seq, s.tokens.size() - 1);
  }
  const std::size_t n = b.batch * b.seq;
  b.inputs.assign(n, pad_token);
  b.targets.assign(n, pad_token);
  b.columns.assign(n, 0);
  b.mask.assign(n, 0);
  for (std::size_t r = 0; r < b.batch; ++r) {
    const auto& s = sequences[r];
    const std::size_t len = s.tokens.size() - 1;
    b.lengths.push_back(len);
    for (std::size_t t = 0; t < len; ++t) {
      const std::size_t i = r * b.seq + t;
      b.inputs[i] = s.tokens[t];
      b.targets[i] = s.tokens[t + 1];
      require(s.columns[t] < n_columns, ErrorKind::kTraining, "column label out of range");
      b.columns[i] = static_cast<std::uint32_t>(s.columns[t]);
      b.mask[i] = s.supervised.empty() ? 1 : s.supervised[t];
    }
  }
  return b;
}

namespace {

template <typename T>
ParamPtr<T> make_param(const std::string& name, std::size_t rows, std::size_t cols) {
  return std::make_shared<Parameter<T>>(name, rows, cols);
}

template <typename T>
void fill_normal(Parameter<T>& p, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (auto& v : p.value) v = static_cast<T>(dist(rng));
}

template <typename T>
ParamPtr<T> clone(const ParamPtr<T>& p, const std::string& name) {
  auto out = std::make_shared<Parameter<T>>(*p);
  out->name = name;
  out->zero_grad();
  return out;
}

template <typename T>
std::vector<Parameter<T>*> raw(const std::vector<ParamPtr<T>>& v) {
  std::vector<Parameter<T>*> out;
  out.reserve(v.size());
  for (const auto& p : v) out.push_back(p.get());
  return out;
}

template <typename Block, typename F>
auto collect(const std::vector<Block>& blocks, F f) {
  std::vector<decltype(f(blocks[0]))> out;
  out.reserve(blocks.size());
  for (const auto& b : blocks) out.push_back(f(b));
  return out;
}

}  // namespace

template <typename T>
Model<T> build_base_lm(const ModelConfig& config) {
  config.validate();
  Model<T> m;
  m.config_ = config;
  m.moe_ = MoeSpec{};
  std::mt19937_64 rng(config.seed);
  const std::size_t d = config.d_model;
  const double proj_std = 0.02 / std::sqrt(2.0 * static_cast<double>(config.n_layers));

  m.wte_ = make_param<T>("wte", config.vocab_size, d);
  fill_normal(*m.wte_, 0.02, rng);
  m.wpe_ = make_param<T>("wpe", config.context_length, d);
  fill_normal(*m.wpe_, 0.01, rng);

  auto norm = [&](const std::string& prefix) {
    NormParams<T> n{make_param<T>(prefix + ".gain", 1, d), make_param<T>(prefix + ".bias", 1, d)};
    std::fill(n.gain->value.begin(), n.gain->value.end(), T(1));
    return n;
  };
  for (std::size_t l = 0; l < config.n_layers; ++l) {
    const std::string p = "layers." + std::to_string(l);
    AttentionBlock<T> a;
    a.norm = norm(p + ".attention.0.norm");
    a.qkv_weight = make_param<T>(p + ".attention.0.qkv_weight", d, 3 * d);
    fill_normal(*a.qkv_weight, 0.02, rng);
    a.qkv_bias = make_param<T>(p + ".attention.0.qkv_bias", 1, 3 * d);
    a.proj_weight = make_param<T>(p + ".attention.0.proj_weight", d, d);
    fill_normal(*a.proj_weight, proj_std, rng);
    a.proj_bias = make_param<T>(p + ".attention.0.proj_bias", 1, d);

    MlpBlock<T> f;
    f.norm = norm(p + ".mlp.0.norm");
    f.fc_weight = make_param<T>(p + ".mlp.0.fc_weight", d, config.d_ff);
    fill_normal(*f.fc_weight, 0.02, rng);
    f.fc_bias = make_param<T>(p + ".mlp.0.fc_bias", 1, config.d_ff);
    f.proj_weight = make_param<T>(p + ".mlp.0.proj_weight", config.d_ff, d);
    fill_normal(*f.proj_weight, proj_std, rng);
    f.proj_bias = make_param<T>(p + ".mlp.0.proj_bias", 1, d);

    TransformerLayer<T> layer;
    layer.attention.push_back(std::move(a));
    layer.mlp.push_back(std::move(f));
    m.layers_.push_back(std::move(layer));
  }
  m.ln_f_ = norm("final_norm");
  HeadBlock<T> head{make_param<T>("lm_head.0.weight", d, config.vocab_size)};
  fill_normal(*head.weight, 0.02, rng);
  m.heads_.push_back(std::move(head));
  return m;
}

template <typename T>
Model<T> tabbify(const Model<T>& model, const MoeSpec& spec) {
  require(!model.tabbified(), ErrorKind::kModel, "model is already tabbified");
  require(!spec.sites.empty(), ErrorKind::kModel, "MoE spec names no sites");
  require(spec.n_experts >= 1, ErrorKind::kModel, "n_experts must be at least 1");
  require(spec.shared.count(MoeSite::kLmHead) == 0, ErrorKind::kModel, "the LM head has no shareable sub-tensor");
  for (auto s : spec.shared) {
    require(spec.sites.count(s) > 0, ErrorKind::kModel, "shared site is not an MoE site");
  }
  // Deep copy first so the result shares no storage with the input.
  Model<T> m = model.template cast<T>();
  m.moe_ = spec;
  const std::size_t V = spec.n_experts;
  auto expert_name = [](const std::string& name, const std::string& tag) {
    // "layers.0.mlp.0.fc_weight" -> "layers.0.mlp.<tag>.fc_weight"
    const auto at = name.rfind(".0.");
    return name.substr(0, at) + "." + tag + name.substr(at + 2);
  };
  auto expand = [&](const ParamPtr<T>& p, std::size_t e, bool share, ParamPtr<T>& shared_copy) {
    if (share) {
      if (!shared_copy) shared_copy = clone(p, expert_name(p->name, "shared"));
      return shared_copy;
    }
    return clone(p, expert_name(p->name, std::to_string(e)));
  };

  for (auto& layer : m.layers_) {
    if (spec.sites.count(MoeSite::kAttention)) {
      const bool share = spec.shared.count(MoeSite::kAttention) > 0;
      const AttentionBlock<T> base = layer.attention.front();
      ParamPtr<T> g, b, w, wb;
      layer.attention.clear();
      for (std::size_t e = 0; e < V; ++e) {
        AttentionBlock<T> a;
        a.norm.gain = expand(base.norm.gain, e, share, g);
        a.norm.bias = expand(base.norm.bias, e, share, b);
        a.qkv_weight = expand(base.qkv_weight, e, share, w);
        a.qkv_bias = expand(base.qkv_bias, e, share, wb);
        ParamPtr<T> unused;
        a.proj_weight = expand(base.proj_weight, e, false, unused);
        a.proj_bias = expand(base.proj_bias, e, false, unused);
        layer.attention.push_back(std::move(a));
      }
    }
    if (spec.sites.count(MoeSite::kMlp)) {
      const bool share = spec.shared.count(MoeSite::kMlp) > 0;
      const MlpBlock<T> base = layer.mlp.front();
      ParamPtr<T> g, b, w, wb;
      layer.mlp.clear();
      for (std::size_t e = 0; e < V; ++e) {
        MlpBlock<T> f;
        f.norm.gain = expand(base.norm.gain, e, share, g);
        f.norm.bias = expand(base.norm.bias, e, share, b);
        f.fc_weight = expand(base.fc_weight, e, share, w);
        f.fc_bias = expand(base.fc_bias, e, share, wb);
        ParamPtr<T> unused;
        f.proj_weight = expand(base.proj_weight, e, false, unused);
        f.proj_bias = expand(base.proj_bias, e, false, unused);
        layer.mlp.push_back(std::move(f));
      }
    }
  }
  if (spec.sites.count(MoeSite::kLmHead)) {
    const HeadBlock<T> base = m.heads_.front();
    m.heads_.clear();
    for (std::size_t e = 0; e < V; ++e) {
      ParamPtr<T> unused;
      m.heads_.push_back(HeadBlock<T>{expand(base.weight, e, false, unused)});
    }
  }
  return m;
}

template <typename T>
template <typename U>
Model<U> Model<T>::cast() const {
  Model<U> out;
  out.config_ = config_;
  out.moe_ = moe_;
  std::map<const Parameter<T>*, ParamPtr<U>> seen;
  auto conv = [&](const ParamPtr<T>& p) -> ParamPtr<U> {
    if (auto it = seen.find(p.get()); it != seen.end()) return it->second;
    auto q = std::make_shared<Parameter<U>>(p->name, p->rows, p->cols);
    for (std::size_t i = 0; i < p->value.size(); ++i) q->value[i] = static_cast<U>(p->value[i]);
    seen.emplace(p.get(), q);
    return q;
  };
  out.wte_ = conv(wte_);
  out.wpe_ = conv(wpe_);
  for (const auto& layer : layers_) {
    TransformerLayer<U> l;
    for (const auto& a : layer.attention) {
      l.attention.push_back(AttentionBlock<U>{{conv(a.norm.gain), conv(a.norm.bias)},
                                              conv(a.qkv_weight),
                                              conv(a.qkv_bias),
                                              conv(a.proj_weight),
                                              conv(a.proj_bias)});
    }
    for (const auto& f : layer.mlp) {
      l.mlp.push_back(MlpBlock<U>{{conv(f.norm.gain), conv(f.norm.bias)},
                                  conv(f.fc_weight),
                                  conv(f.fc_bias),
                                  conv(f.proj_weight),
                                  conv(f.proj_bias)});
    }
    out.layers_.push_back(std::move(l));
  }
  out.ln_f_ = NormParams<U>{conv(ln_f_.gain), conv(ln_f_.bias)};
  for (const auto& h : heads_) out.heads_.push_back(HeadBlock<U>{conv(h.weight)});
  return out;
}

template <typename T>
std::vector<ParamPtr<T>> Model<T>::parameters() const {
  std::vector<ParamPtr<T>> out;
  std::unordered_set<const Parameter<T>*> seen;
  auto add = [&](const ParamPtr<T>& p) {
    if (seen.insert(p.get()).second) out.push_back(p);
  };
  add(wte_);
  add(wpe_);
  for (const auto& layer : layers_) {
    for (const auto& a : layer.attention) {
      for (const auto* p : {&a.norm.gain, &a.norm.bias, &a.qkv_weight, &a.qkv_bias, &a.proj_weight, &a.proj_bias}) {
        add(*p);
      }
    }
    for (const auto& f : layer.mlp) {
      for (const auto* p : {&f.norm.gain, &f.norm.bias, &f.fc_weight, &f.fc_bias, &f.proj_weight, &f.proj_bias}) {
        add(*p);
      }
    }
  }
  add(ln_f_.gain);
  add(ln_f_.bias);
  for (const auto& h : heads_) add(h.weight);
  return out;
}

template <typename T>
std::size_t Model<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p->numel();
  return n;
}

template <typename T>
void Model<T>::zero_grad() {
  for (auto& p : parameters()) p->zero_grad();
}

template <typename T>
std::vector<std::uint32_t> Model<T>::routes_for(const Batch& batch) const {
  if (!tabbified() || moe_.n_experts == 1) return std::vector<std::uint32_t>(batch.columns.size(), 0U);
  for (auto c : batch.columns) {
    require(c < moe_.n_experts, ErrorKind::kModel, "column id " + std::to_string(c) + " out of range");
  }
  return batch.columns;
}

template <typename T>
LossResult Model<T>::run(const Batch& batch, bool grads, std::vector<T>* logits_out, Residency residency) const {
  const std::size_t n = batch.batch * batch.seq;
  require(batch.inputs.size() == n && batch.columns.size() == n && batch.lengths.size() == batch.batch,
          ErrorKind::kModel, "malformed batch");
  require(batch.seq <= config_.context_length, ErrorKind::kModel,
          "sequence length " + std::to_string(batch.seq) + " exceeds context length");
  const auto route = routes_for(batch);
  Tape<T> tape(grads, residency);
  std::vector<std::size_t> positions(n);
  for (std::size_t r = 0; r < n; ++r) positions[r] = r % batch.seq;

  auto x = tape.embed(batch.inputs, positions, *wte_, *wpe_);
  for (const auto& layer : layers_) {
    {
      const auto& blocks = layer.attention;
      auto gains = collect(blocks, [](const auto& b) { return b.norm.gain.get(); });
      auto biases = collect(blocks, [](const auto& b) { return b.norm.bias.get(); });
      auto qw = collect(blocks, [](const auto& b) { return b.qkv_weight.get(); });
      auto qb = collect(blocks, [](const auto& b) { return b.qkv_bias.get(); });
      auto pw = collect(blocks, [](const auto& b) { return b.proj_weight.get(); });
      auto pb = collect(blocks, [](const auto& b) { return b.proj_bias.get(); });
      auto h = tape.layer_norm(x, gains, biases, route);
      auto qkv = tape.linear(h, qw, qb, route);
      auto a = tape.causal_attention(qkv, batch.batch, batch.seq, batch.lengths, config_.n_heads);
      a = tape.linear(a, pw, pb, route);
      x = tape.add(x, a);
    }
    {
      const auto& blocks = layer.mlp;
      auto gains = collect(blocks, [](const auto& b) { return b.norm.gain.get(); });
      auto biases = collect(blocks, [](const auto& b) { return b.norm.bias.get(); });
      auto fw = collect(blocks, [](const auto& b) { return b.fc_weight.get(); });
      auto fb = collect(blocks, [](const auto& b) { return b.fc_bias.get(); });
      auto pw = collect(blocks, [](const auto& b) { return b.proj_weight.get(); });
      auto pb = collect(blocks, [](const auto& b) { return b.proj_bias.get(); });
      auto h = tape.layer_norm(x, gains, biases, route);
      auto f = tape.linear(h, fw, fb, route);
      f = tape.gelu(f);
      f = tape.linear(f, pw, pb, route);
      x = tape.add(x, f);
    }
  }
  std::vector<Parameter<T>*> fg{ln_f_.gain.get()}, fb{ln_f_.bias.get()};
  x = tape.layer_norm(x, fg, fb, route);
  auto hw = collect(heads_, [](const auto& h) { return h.weight.get(); });
  const auto logits = tape.linear(x, hw, std::span<Parameter<T>* const>{}, route);
  if (logits_out != nullptr) *logits_out = tape.value(logits);

  LossResult result;
  if (logits_out != nullptr && !grads) return result;
  CrossEntropyStats stats;
  const auto loss = tape.cross_entropy(logits, batch.targets, batch.mask, batch.columns, batch.n_columns, stats);
  if (grads) tape.backward(loss);
  result.loss = stats.mean();
  result.tokens = stats.count;
  result.column_tokens = stats.column_count;
  result.column_loss.resize(batch.n_columns, 0.0);
  for (std::size_t c = 0; c < batch.n_columns; ++c) {
    if (stats.column_count[c] > 0) {
      result.column_loss[c] = stats.column_loss_sum[c] / static_cast<double>(stats.column_count[c]);
    }
  }
  return result;
}

template <typename T>
std::vector<T> Model<T>::forward(const Batch& batch, Residency residency) const {
  std::vector<T> logits;
  run(batch, false, &logits, residency);
  return logits;
}

template <typename T>
LossResult Model<T>::loss_and_grads(const Batch& batch) {
  zero_grad();
  return run(batch, true, nullptr, Residency::kAllExperts);
}

template <typename T>
LossResult Model<T>::loss(const Batch& batch) const {
  return run(batch, false, nullptr, Residency::kAllExperts);
}

template <typename T>
DecodeSession<T> Model<T>::decoder() const {
  return DecodeSession<T>(*this);
}

template <typename T>
DecodeSession<T>::DecodeSession(const Model<T>& model) : model_(&model) {
  const auto& c = model.config();
  keys_.assign(c.n_layers, std::vector<T>(c.context_length * c.d_model));
  values_.assign(c.n_layers, std::vector<T>(c.context_length * c.d_model));
  x_.resize(c.d_model);
  h_.resize(c.d_model);
  qkv_.resize(3 * c.d_model);
  attn_.resize(c.d_model);
  proj_.resize(c.d_model);
  ff_.resize(c.d_ff);
  probs_.resize(c.context_length);
  logits_.resize(c.vocab_size);
}

template <typename T>
const std::vector<T>& DecodeSession<T>::step(int token, std::size_t column) {
  const Model<T>& m = *model_;
  const auto& c = m.config();
  const std::size_t d = c.d_model;
  const std::size_t hd = d / c.n_heads;
  require(position_ < c.context_length, ErrorKind::kModel, "decoder reached the context length");
  require(token >= 0 && static_cast<std::size_t>(token) < c.vocab_size, ErrorKind::kModel, "token id out of range");
  if (m.tabbified()) require(column < m.n_experts(), ErrorKind::kModel, "column id out of range");
  auto pick = [column](std::size_t experts) { return experts == 1 ? std::size_t{0} : column; };

  const T* te = m.wte_->value.data() + static_cast<std::size_t>(token) * d;
  const T* pe = m.wpe_->value.data() + position_ * d;
  for (std::size_t i = 0; i < d; ++i) x_[i] = te[i] + pe[i];

  for (std::size_t l = 0; l < m.layers_.size(); ++l) {
    const auto& layer = m.layers_[l];
    const auto& a = layer.attention[pick(layer.attention.size())];
    kernels::layer_norm_row(x_.data(), a.norm.gain->value.data(), a.norm.bias->value.data(), d, h_.data(),
                            static_cast<T*>(nullptr), static_cast<T*>(nullptr));
    kernels::linear_row(h_.data(), a.qkv_weight->value.data(), a.qkv_bias->value.data(), d, 3 * d, qkv_.data());
    std::copy(qkv_.begin() + static_cast<long>(d), qkv_.begin() + static_cast<long>(2 * d),
              keys_[l].begin() + static_cast<long>(position_ * d));
    std::copy(qkv_.begin() + static_cast<long>(2 * d), qkv_.end(),
              values_[l].begin() + static_cast<long>(position_ * d));
    for (std::size_t h = 0; h < c.n_heads; ++h) {
      kernels::attention_query(qkv_.data() + h * hd, keys_[l].data() + h * hd, d, values_[l].data() + h * hd, d,
                               position_ + 1, hd, probs_.data(), attn_.data() + h * hd);
    }
    kernels::linear_row(attn_.data(), a.proj_weight->value.data(), a.proj_bias->value.data(), d, d, proj_.data());
    for (std::size_t i = 0; i < d; ++i) x_[i] = x_[i] + proj_[i];

    const auto& f = layer.mlp[pick(layer.mlp.size())];
    kernels::layer_norm_row(x_.data(), f.norm.gain->value.data(), f.norm.bias->value.data(), d, h_.data(),
                            static_cast<T*>(nullptr), static_cast<T*>(nullptr));
    kernels::linear_row(h_.data(), f.fc_weight->value.data(), f.fc_bias->value.data(), d, c.d_ff, ff_.data());
    for (auto& v : ff_) v = kernels::gelu(v);
    kernels::linear_row(ff_.data(), f.proj_weight->value.data(), f.proj_bias->value.data(), c.d_ff, d,
                        proj_.data());
    for (std::size_t i = 0; i < d; ++i) x_[i] = x_[i] + proj_[i];
  }
  kernels::layer_norm_row(x_.data(), m.ln_f_.gain->value.data(), m.ln_f_.bias->value.data(), d, h_.data(),
                          static_cast<T*>(nullptr), static_cast<T*>(nullptr));
  const auto& head = m.heads_[pick(m.heads_.size())];
  kernels::linear_row(h_.data(), head.weight->value.data(), static_cast<const T*>(nullptr), d, c.vocab_size,
                      logits_.data());
  ++position_;
  return logits_;
}

template class Model<float>;
template class Model<double>;
template class DecodeSession<float>;
template class DecodeSession<double>;
template Model<float> build_base_lm<float>(const ModelConfig&);
template Model<double> build_base_lm<double>(const ModelConfig&);
template Model<float> tabbify<float>(const Model<float>&, const MoeSpec&);
template Model<double> tabbify<double>(const Model<double>&, const MoeSpec&);
template Model<double> Model<float>::cast<double>() const;
template Model<float> Model<double>::cast<float>() const;
template Model<float> Model<float>::cast<float>() const;
template Model<double> Model<double>::cast<double>() const;

}  // namespace tabby
