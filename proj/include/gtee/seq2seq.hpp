#pragma once

// Word-level encoder-decoder transformer. Prefix key/value rows can be injected
// into every encoder self-attention layer and every decoder self-attention
// layer (and, behind a flag, into cross-attention).

#include <atomic>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "gtee/nn.hpp"

namespace gtee {

using num::Tensor;

class Vocab {
   public:
    static constexpr int kPad = 0;
    static constexpr int kBos = 1;
    static constexpr int kEos = 2;
    static constexpr int kUnk = 3;
    static constexpr int kSep = 4;
    static constexpr int kTrg = 5;
    static constexpr int kArg = 6;
    static constexpr int kInSep = 7;
    static constexpr int kOutSep = 8;
    static constexpr int kReserved = 9;

    Vocab();  // reserved tokens only

    // Reserved tokens first, then words in order of first appearance.
    static Vocab build(const std::vector<std::string>& texts);
    // Throws DataError unless the first kReserved entries are the reserved tokens.
    static Vocab from_tokens(std::vector<std::string> tokens);

    int add(const std::string& word);
    int id(std::string_view word) const;
    const std::string& token(int id) const;
    std::size_t size() const { return tokens_.size(); }
    const std::vector<std::string>& tokens() const { return tokens_; }

    std::vector<int> tokenize(std::string_view text) const;
    // Stops at <eos>; skips <bos> and <pad>.
    std::string detokenize(std::span<const int> ids) const;

    static const std::vector<std::string>& reserved_tokens();

   private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> index_;
};

struct ModelConfig {
    std::size_t vocab_size = 0;
    std::size_t d_model = 48;
    std::size_t n_layers = 2;
    std::size_t n_heads = 4;
    std::size_t d_ff = 128;
    std::size_t max_len = 96;
    bool cross_attention_prefix = false;
    bool tie_embeddings = true;  // output projection reuses tok_emb; head keeps only its bias

    void validate() const;
};

// Per-layer key/value rows for the encoder and decoder self-attention stacks.
struct ActivationHistory {
    std::vector<nn::KVPrefix> enc;
    std::vector<nn::KVPrefix> dec;

    std::size_t length() const { return enc.empty() ? 0 : enc.front().length(); }
};

// Row layout shared with the prefix store: a [L, 2*n_layers*d] tensor whose
// columns for layer l are keys [2l*d, (2l+1)*d) then values [(2l+1)*d, (2l+2)*d).
std::vector<nn::KVPrefix> split_history_rows(const Tensor& rows, std::size_t n_layers, std::size_t d_model);
Tensor join_history_rows(const std::vector<nn::KVPrefix>& stack);

struct DecoderLayer {
    nn::LayerNorm ln_self, ln_cross, ln_ff;
    nn::MultiHeadAttention self_attn, cross_attn;
    nn::FeedForward ff;

    DecoderLayer() = default;
    DecoderLayer(std::size_t d_model, std::size_t heads, std::size_t d_ff, Rng& rng);
    void collect(const std::string& prefix, nn::ParamList& out) const;
};

struct BeamResult {
    std::vector<int> ids;  // without <bos>/<eos>
    double score = 0.0;    // summed log-probs, including <eos> when finished
    bool finished = false;
};

class Seq2SeqModel {
   public:
    Seq2SeqModel() = default;
    Seq2SeqModel(const ModelConfig& config, Rng& rng);

    const ModelConfig& config() const { return config_; }

    // [n, d] encoder states; inputs longer than max_len are truncated and counted.
    Tensor encode(std::span<const int> x_ids, const ActivationHistory* prefix = nullptr) const;

    // [m, V] logits for every position of the decoder input `y_in` (starting with <bos>).
    // `self_kv`, when given, receives each decoder layer's self-attention keys/values.
    Tensor decoder_logits(std::span<const int> y_in, const Tensor& enc, const ActivationHistory* prefix = nullptr,
                          std::vector<nn::AttentionResult>* self_kv = nullptr) const;

    // [1, V] log-probabilities of the token after `y_prefix`.
    Tensor next_token_logprobs(std::span<const int> y_prefix, const Tensor& enc,
                               const ActivationHistory* prefix = nullptr) const;

    // Teacher forcing: decoder input [<bos>; y], targets [y; <eos>]. Mean token NLL.
    Tensor sequence_nll(std::span<const int> x_ids, std::span<const int> y,
                        const ActivationHistory* prefix = nullptr) const;
    // Summed log-probability of y followed by <eos>.
    double sequence_logprob(std::span<const int> x_ids, std::span<const int> y,
                            const ActivationHistory* prefix = nullptr) const;

    std::vector<int> greedy_decode(std::span<const int> x_ids, const ActivationHistory* prefix,
                                   std::size_t max_steps) const;
    BeamResult beam_search(std::span<const int> x_ids, const ActivationHistory* prefix, std::size_t beam,
                           std::size_t max_steps) const;

    // History vector h_i as one [1, 2*n_layers*d] row: positions below the
    // prefix length read the decoder prefix, later ones are the decoder's own
    // self-attention keys/values for token i - L of [<bos>; y].
    Tensor activation_sequence(std::span<const int> x_ids, std::span<const int> y, const ActivationHistory* prefix,
                               std::size_t i) const;

    void collect(const std::string& prefix, nn::ParamList& out) const;
    nn::ParamList parameters() const;

    std::size_t truncations() const { return truncations_->load(); }

    Tensor tok_emb, enc_pos, dec_pos;
    std::vector<nn::EncoderLayer> enc_layers;
    std::vector<DecoderLayer> dec_layers;
    nn::LayerNorm enc_ln, dec_ln;
    nn::Linear head;

   private:
    // Incremental decoding: per-layer self-attention keys/values so far
    // (prefix rows first) and the cross-attention keys/values of the encoder.
    struct DecodeState {
        std::vector<Tensor> self_k, self_v;
        std::size_t length = 0;  // tokens consumed
    };
    struct CrossCache {
        std::vector<Tensor> k, v;
    };

    Tensor embed(std::span<const int> ids, const Tensor& pos) const;
    Tensor project(const Tensor& h) const;  // [m, d] -> [m, V]
    CrossCache cross_cache(const Tensor& enc, const ActivationHistory* prefix) const;
    DecodeState initial_state(const ActivationHistory* prefix) const;
    // Feeds one token and returns [1, V] log-probabilities for the next one.
    Tensor step(DecodeState& state, int token, const CrossCache& cross) const;

    ModelConfig config_;
    std::shared_ptr<std::atomic<std::size_t>> truncations_ = std::make_shared<std::atomic<std::size_t>>(0);
};

}  // namespace gtee
