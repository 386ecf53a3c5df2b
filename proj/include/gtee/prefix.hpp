#pragma once

// Type-specific prefixes and the context-conditioned dynamic prefix.
//
// Each stack (encoder, decoder) owns a small table P' of |E|*L rows of width
// D', an MLP lifting rows to D = 2*n_layers*d_model, and a multi-head attention
// that mixes the per-type rows at each prefix position using a context vector
// as the query.

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "gtee/nn.hpp"
#include "gtee/seq2seq.hpp"

namespace gtee {

struct PrefixConfig {
    std::size_t n_types = 1;
    std::size_t length = 8;    // L
    std::size_t d_prime = 32;  // D'
    std::size_t dyn_heads = 4;
    bool reparametrize = true;  // false: P = P' (requires D' == D)
    nn::EncoderConfig context;  // vocab_size filled in by the owner

    void validate(std::size_t n_layers, std::size_t d_model) const;
};

struct PrefixMLP {
    nn::Linear hidden;  // D' -> D'
    nn::Linear out;     // D' -> D

    PrefixMLP() = default;
    PrefixMLP(std::size_t d_prime, std::size_t d, Rng& rng);
    Tensor operator()(const Tensor& x) const;
    void collect(const std::string& prefix, nn::ParamList& params) const;
};

struct DynPrefixAttn {
    nn::Linear ctx_proj;  // d_ctx -> D
    nn::Linear query, key, value, out;
    std::size_t heads = 4;

    DynPrefixAttn() = default;
    DynPrefixAttn(std::size_t d_ctx, std::size_t d, std::size_t heads, Rng& rng);
    void collect(const std::string& prefix, nn::ParamList& params) const;
};

enum class Stack { Encoder = 0, Decoder = 1 };

struct DynamicPrefix {
    ActivationHistory history;
    // Attention over types, [L, |E|] per head; index [stack][head]. Filled on request.
    std::vector<std::vector<Tensor>> weights;
};

class PrefixModule {
   public:
    PrefixModule() = default;
    PrefixModule(const PrefixConfig& config, std::size_t n_layers, std::size_t d_model, Rng& rng);

    const PrefixConfig& config() const { return config_; }
    std::size_t width() const { return width_; }  // D
    std::size_t n_layers() const { return n_layers_; }
    std::size_t d_model() const { return d_model_; }

    // P for one stack: [|E|*L, D], row e*L + t.
    Tensor prefix_table(Stack s) const;
    // P[e]: [L, D], computed from P'[e] only.
    Tensor type_rows(Stack s, std::size_t e) const;

    // sp_e / sp'_e reshaped into per-layer key/value histories.
    ActivationHistory static_prefix(std::size_t e) const;

    // [1, d_ctx] pooled encoding of the context token ids.
    Tensor context_vector(std::span<const int> context_ids) const;

    // `mask`: allowed type indices (nonempty) or nullopt for all types. A
    // one-type mask is computed as out(value(P[e])), which is what the general
    // path reduces to; `force_general` disables that shortcut.
    DynamicPrefix dynamic_prefix(const Tensor& c, const std::optional<std::vector<std::size_t>>& mask,
                                 bool keep_weights = false, bool force_general = false) const;

    void collect(const std::string& prefix, nn::ParamList& out) const;
    nn::ParamList parameters() const;

    Tensor p_prime[2];  // [|E|*L, D'] per stack
    PrefixMLP mlp[2];
    DynPrefixAttn attn[2];
    nn::PooledEncoder ctx_encoder;

   private:
    Tensor lift(Stack s, const Tensor& rows) const;
    Tensor mix(Stack s, const Tensor& c, const std::vector<std::size_t>& types, bool keep_weights,
               std::vector<Tensor>* weights) const;

    PrefixConfig config_;
    std::size_t n_layers_ = 0;
    std::size_t d_model_ = 0;
    std::size_t width_ = 0;
};

}  // namespace gtee
