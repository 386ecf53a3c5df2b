#pragma once

// Transformer building blocks shared by the seq2seq LM, the context encoder and
// the irrelevance classifier. Pre-LN residual blocks; every parameter is a leaf
// Tensor owned by value, so copying a module copies handles, not weights.

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "gtee/numeric/serialize.hpp"
#include "gtee/numeric/tensor.hpp"
#include "gtee/rng.hpp"

namespace gtee::nn {

using num::NamedTensor;
using num::Tensor;
using ParamList = std::vector<NamedTensor>;

Tensor xavier(std::size_t in, std::size_t out, Rng& rng);

// Inverted dropout that is active only while a DropoutScope lives on the
// calling thread; elsewhere dropout(x) returns x unchanged.
class DropoutScope {
   public:
    DropoutScope(double rate, Rng& rng);
    ~DropoutScope();
    DropoutScope(const DropoutScope&) = delete;
    DropoutScope& operator=(const DropoutScope&) = delete;

   private:
    const DropoutScope* outer_;
    double rate_;
    Rng* rng_;
    friend Tensor dropout(const Tensor& x);
};
Tensor dropout(const Tensor& x);
Tensor normal_init(num::Shape shape, double stddev, Rng& rng);
// [n, d] sine/cosine position table scaled by `scale` (trainable leaf).
Tensor sinusoidal_init(std::size_t n, std::size_t d, double scale);

struct Linear {
    Tensor weight;  // [in, out]
    Tensor bias;    // [out]

    Linear() = default;
    Linear(std::size_t in, std::size_t out, Rng& rng);
    Tensor operator()(const Tensor& x) const;
    void collect(const std::string& prefix, ParamList& out) const;
};

struct LayerNorm {
    Tensor gain;
    Tensor bias;

    LayerNorm() = default;
    explicit LayerNorm(std::size_t d);
    Tensor operator()(const Tensor& x) const;
    void collect(const std::string& prefix, ParamList& out) const;
};

// Key/value rows virtually prepended to an attention layer's own keys and values.
struct KVPrefix {
    Tensor keys;    // [L, d_model]
    Tensor values;  // [L, d_model]
    std::size_t length() const { return keys.defined() ? keys.dim(0) : 0; }
};

struct AttentionResult {
    Tensor output;                // [n, d_model]
    Tensor keys;                  // [L + m, d_model], prefix rows first
    Tensor values;                // [L + m, d_model]
    std::vector<Tensor> weights;  // per head [n, L + m]; filled when requested
};

struct MultiHeadAttention {
    Linear query, key, value, out;
    std::size_t heads = 1;

    MultiHeadAttention() = default;
    MultiHeadAttention(std::size_t d_model, std::size_t heads, Rng& rng);

    // `mask` is an additive [n, L + m] constant (0 or -inf) or undefined.
    AttentionResult operator()(const Tensor& x_query, const Tensor& x_kv, const Tensor& mask,
                               const KVPrefix* prefix, bool keep_weights = false) const;
    void collect(const std::string& prefix, ParamList& out) const;
};

struct FeedForward {
    Linear up, down;

    FeedForward() = default;
    FeedForward(std::size_t d_model, std::size_t d_ff, Rng& rng);
    Tensor operator()(const Tensor& x) const;
    void collect(const std::string& prefix, ParamList& out) const;
};

// Additive causal mask for n queries over L prefix slots followed by n tokens.
Tensor causal_mask(std::size_t n, std::size_t prefix_len);

struct EncoderLayer {
    LayerNorm ln_attn, ln_ff;
    MultiHeadAttention attn;
    FeedForward ff;

    EncoderLayer() = default;
    EncoderLayer(std::size_t d_model, std::size_t heads, std::size_t d_ff, Rng& rng);
    // Returns the new hidden states; `kv` receives the self-attention keys/values.
    Tensor operator()(const Tensor& x, const KVPrefix* prefix, AttentionResult* kv = nullptr,
                      bool keep_weights = false) const;
    void collect(const std::string& prefix, ParamList& out) const;
};

struct EncoderConfig {
    std::size_t vocab_size = 0;
    std::size_t d_model = 64;
    std::size_t n_layers = 2;
    std::size_t n_heads = 4;
    std::size_t d_ff = 128;
    std::size_t max_len = 128;
};

// Small transformer encoder over [pool ; tokens]; the pooled vector is the
// final hidden state at the pool slot.
struct PooledEncoder {
    EncoderConfig config;
    Tensor tok_emb;  // [V, d]
    Tensor pos_emb;  // [max_len + 1, d]
    Tensor pool;     // [1, d]
    std::vector<EncoderLayer> layers;
    LayerNorm final_ln;

    PooledEncoder() = default;
    PooledEncoder(const EncoderConfig& config, Rng& rng);
    Tensor encode(std::span<const int> ids) const;  // [1 + n, d]
    Tensor pooled(std::span<const int> ids) const;  // [1, d]
    void collect(const std::string& prefix, ParamList& out) const;
};

// Copies values of `src` into same-named tensors of `dst`; missing or
// mis-shaped entries are reported as DataError.
void load_params(const ParamList& dst, const std::vector<NamedTensor>& src, const std::string& only_prefix = "");
std::size_t param_count(const ParamList& params);

}  // namespace gtee::nn
