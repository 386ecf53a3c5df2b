#include "gtee/seq2seq.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "gtee/error.hpp"
#include "gtee/log.hpp"
#include "gtee/records.hpp"

namespace gtee {

// ---- vocabulary ----------------------------------------------------------------

const std::vector<std::string>& Vocab::reserved_tokens() {
    static const std::vector<std::string> r = {"<pad>", "<bos>", "<eos>",    "<unk>",    "[SEP]",
                                               "<trg>", "<arg>", "<IN_SEP>", "<OUT_SEP>"};
    return r;
}

Vocab::Vocab() {
    for (const auto& t : reserved_tokens()) add(t);
}

Vocab Vocab::build(const std::vector<std::string>& texts) {
    Vocab v;
    for (const auto& text : texts)
        for (const auto& w : split_whitespace(text)) v.add(w);
    return v;
}

Vocab Vocab::from_tokens(std::vector<std::string> tokens) {
    const auto& r = reserved_tokens();
    if (tokens.size() < r.size() || !std::equal(r.begin(), r.end(), tokens.begin())) {
        throw DataError("vocabulary does not start with the reserved tokens");
    }
    Vocab v;
    for (std::size_t i = r.size(); i < tokens.size(); ++i) {
        if (v.index_.count(tokens[i])) throw DataError("duplicate vocabulary entry '" + tokens[i] + "'");
        v.add(tokens[i]);
    }
    return v;
}

int Vocab::add(const std::string& word) {
    auto [it, inserted] = index_.emplace(word, static_cast<int>(tokens_.size()));
    if (inserted) tokens_.push_back(word);
    return it->second;
}

int Vocab::id(std::string_view word) const {
    auto it = index_.find(std::string(word));
    return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocab::token(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
        throw ContractError("token id " + std::to_string(id) + " outside vocabulary");
    }
    return tokens_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocab::tokenize(std::string_view text) const {
    std::vector<int> ids;
    for (const auto& w : split_whitespace(std::string(text))) ids.push_back(id(w));
    return ids;
}

std::string Vocab::detokenize(std::span<const int> ids) const {
    std::string out;
    for (int t : ids) {
        if (t == kEos) break;
        if (t == kBos || t == kPad) continue;
        if (!out.empty()) out += ' ';
        out += token(t);
    }
    return out;
}

// ---- config / history layout ---------------------------------------------------------

void ModelConfig::validate() const {
    if (vocab_size == 0 || d_model == 0 || n_layers == 0 || n_heads == 0 || d_ff == 0 || max_len == 0) {
        throw ContractError("ModelConfig: all sizes must be positive");
    }
    if (d_model % n_heads != 0) throw ContractError("ModelConfig: d_model must be divisible by n_heads");
}

std::vector<nn::KVPrefix> split_history_rows(const Tensor& rows, std::size_t n_layers, std::size_t d_model) {
    if (rows.ndim() != 2 || rows.dim(1) != 2 * n_layers * d_model) {
        throw DimensionError("split_history_rows: expected [L, " + std::to_string(2 * n_layers * d_model) + "], got " +
                             num::to_string(rows.shape()));
    }
    std::vector<nn::KVPrefix> stack(n_layers);
    for (std::size_t l = 0; l < n_layers; ++l) {
        stack[l].keys = num::slice(rows, 1, 2 * l * d_model, (2 * l + 1) * d_model);
        stack[l].values = num::slice(rows, 1, (2 * l + 1) * d_model, (2 * l + 2) * d_model);
    }
    return stack;
}

Tensor join_history_rows(const std::vector<nn::KVPrefix>& stack) {
    std::vector<Tensor> parts;
    for (const auto& kv : stack) {
        parts.push_back(kv.keys);
        parts.push_back(kv.values);
    }
    return num::concat(parts, 1);
}

// ---- model -----------------------------------------------------------------------------

DecoderLayer::DecoderLayer(std::size_t d_model, std::size_t heads, std::size_t d_ff, Rng& rng)
    : ln_self(d_model),
      ln_cross(d_model),
      ln_ff(d_model),
      self_attn(d_model, heads, rng),
      cross_attn(d_model, heads, rng),
      ff(d_model, d_ff, rng) {}

void DecoderLayer::collect(const std::string& prefix, nn::ParamList& out) const {
    ln_self.collect(prefix + "ln_self/", out);
    self_attn.collect(prefix + "self_attn/", out);
    ln_cross.collect(prefix + "ln_cross/", out);
    cross_attn.collect(prefix + "cross_attn/", out);
    ln_ff.collect(prefix + "ln_ff/", out);
    ff.collect(prefix + "ff/", out);
}

Seq2SeqModel::Seq2SeqModel(const ModelConfig& config, Rng& rng) : config_(config) {
    config.validate();
    const auto d = config.d_model;
    tok_emb = nn::normal_init({config.vocab_size, d}, 0.1, rng);
    enc_pos = nn::sinusoidal_init(config.max_len, d, 0.1);
    dec_pos = nn::sinusoidal_init(config.max_len, d, 0.1);
    for (std::size_t i = 0; i < config.n_layers; ++i) enc_layers.emplace_back(d, config.n_heads, config.d_ff, rng);
    for (std::size_t i = 0; i < config.n_layers; ++i) dec_layers.emplace_back(d, config.n_heads, config.d_ff, rng);
    enc_ln = nn::LayerNorm(d);
    dec_ln = nn::LayerNorm(d);
    head = nn::Linear(d, config.vocab_size, rng);
    if (config.tie_embeddings) head.weight = Tensor{};
}

Tensor Seq2SeqModel::project(const Tensor& h) const {
    if (config_.tie_embeddings) return num::add(num::matmul_nt(h, tok_emb), head.bias);
    return head(h);
}

Tensor Seq2SeqModel::embed(std::span<const int> ids, const Tensor& pos) const {
    std::vector<int> positions(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) positions[i] = static_cast<int>(i);
    return num::add(num::embedding(tok_emb, ids), num::embedding(pos, positions));
}

namespace {

void check_prefix(const ActivationHistory* prefix, std::size_t n_layers) {
    if (!prefix || prefix->length() == 0) return;
    if (prefix->enc.size() != n_layers || prefix->dec.size() != n_layers) {
        throw DimensionError("prefix has " + std::to_string(prefix->enc.size()) + "/" +
                             std::to_string(prefix->dec.size()) + " layers, model has " + std::to_string(n_layers));
    }
    const std::size_t L = prefix->length();
    for (std::size_t l = 0; l < n_layers; ++l) {
        if (prefix->enc[l].length() != L || prefix->dec[l].length() != L) {
            throw DimensionError("prefix layers disagree on length");
        }
    }
}

const nn::KVPrefix* layer_prefix(const ActivationHistory* prefix, bool decoder, std::size_t l) {
    if (!prefix || prefix->length() == 0) return nullptr;
    return decoder ? &prefix->dec[l] : &prefix->enc[l];
}

}  // namespace

Tensor Seq2SeqModel::encode(std::span<const int> x_ids, const ActivationHistory* prefix) const {
    check_prefix(prefix, config_.n_layers);
    if (x_ids.size() > config_.max_len) {
        ++*truncations_;
        log_warn("input of " + std::to_string(x_ids.size()) + " tokens truncated to " + std::to_string(config_.max_len));
        x_ids = x_ids.first(config_.max_len);
    }
    if (x_ids.empty()) throw ContractError("encode: empty input");
    Tensor x = nn::dropout(embed(x_ids, enc_pos));
    for (std::size_t l = 0; l < enc_layers.size(); ++l) x = enc_layers[l](x, layer_prefix(prefix, false, l));
    return enc_ln(x);
}

Tensor Seq2SeqModel::decoder_logits(std::span<const int> y_in, const Tensor& enc, const ActivationHistory* prefix,
                                    std::vector<nn::AttentionResult>* self_kv) const {
    check_prefix(prefix, config_.n_layers);
    if (y_in.empty()) throw ContractError("decoder_logits: empty decoder input");
    if (y_in.size() > config_.max_len) {
        throw ContractError("decoder input of " + std::to_string(y_in.size()) + " tokens exceeds max_len");
    }
    const std::size_t L = prefix ? prefix->length() : 0;
    const Tensor mask = nn::causal_mask(y_in.size(), L);
    Tensor h = nn::dropout(embed(y_in, dec_pos));
    if (self_kv) self_kv->clear();
    for (std::size_t l = 0; l < dec_layers.size(); ++l) {
        const auto& layer = dec_layers[l];
        const Tensor a = layer.ln_self(h);
        nn::AttentionResult sa = layer.self_attn(a, a, mask, layer_prefix(prefix, true, l));
        h = num::add(h, nn::dropout(sa.output));
        if (self_kv) self_kv->push_back(std::move(sa));
        const Tensor b = layer.ln_cross(h);
        const nn::KVPrefix* cross = config_.cross_attention_prefix ? layer_prefix(prefix, false, l) : nullptr;
        h = num::add(h, nn::dropout(layer.cross_attn(b, enc, Tensor{}, cross).output));
        h = num::add(h, nn::dropout(layer.ff(layer.ln_ff(h))));
    }
    return project(dec_ln(h));
}

Tensor Seq2SeqModel::next_token_logprobs(std::span<const int> y_prefix, const Tensor& enc,
                                         const ActivationHistory* prefix) const {
    if (y_prefix.empty()) throw ContractError("next_token_logprobs: decoder prefix must start with <bos>");
    const Tensor logits = decoder_logits(y_prefix, enc, prefix);
    return num::log_softmax(num::slice(logits, 0, logits.dim(0) - 1, logits.dim(0)));
}

namespace {

void teacher_forcing(std::span<const int> y, std::vector<int>& y_in, std::vector<int>& targets) {
    y_in.assign(1, Vocab::kBos);
    y_in.insert(y_in.end(), y.begin(), y.end());
    targets.assign(y.begin(), y.end());
    targets.push_back(Vocab::kEos);
}

}  // namespace

Tensor Seq2SeqModel::sequence_nll(std::span<const int> x_ids, std::span<const int> y,
                                  const ActivationHistory* prefix) const {
    std::vector<int> y_in, targets;
    teacher_forcing(y, y_in, targets);
    const Tensor enc = encode(x_ids, prefix);
    return num::cross_entropy(decoder_logits(y_in, enc, prefix), targets);
}

double Seq2SeqModel::sequence_logprob(std::span<const int> x_ids, std::span<const int> y,
                                      const ActivationHistory* prefix) const {
    num::NoGradGuard guard;
    std::vector<int> y_in, targets;
    teacher_forcing(y, y_in, targets);
    const Tensor enc = encode(x_ids, prefix);
    const Tensor lp = num::log_softmax(decoder_logits(y_in, enc, prefix));
    double s = 0.0;
    for (std::size_t i = 0; i < targets.size(); ++i) s += lp.at(i, static_cast<std::size_t>(targets[i]));
    return s;
}

namespace {

// Multi-head attention of queries `q` over precomputed keys/values.
Tensor attend(const nn::MultiHeadAttention& m, const Tensor& q, const Tensor& k, const Tensor& v) {
    const std::size_t d = q.dim(1), dh = d / m.heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<Tensor> outs;
    outs.reserve(m.heads);
    for (std::size_t h = 0; h < m.heads; ++h) {
        const Tensor qh = m.heads == 1 ? q : num::slice(q, 1, h * dh, (h + 1) * dh);
        const Tensor kh = m.heads == 1 ? k : num::slice(k, 1, h * dh, (h + 1) * dh);
        const Tensor vh = m.heads == 1 ? v : num::slice(v, 1, h * dh, (h + 1) * dh);
        outs.push_back(num::matmul(num::softmax(num::scale(num::matmul_nt(qh, kh), inv_sqrt)), vh));
    }
    return m.out(m.heads == 1 ? outs[0] : num::concat(outs, 1));
}

Tensor append_row(const Tensor& cache, const Tensor& row) {
    if (!cache.defined()) return row;
    const Tensor parts[] = {cache, row};
    return num::concat(parts, 0);
}

}  // namespace

Seq2SeqModel::CrossCache Seq2SeqModel::cross_cache(const Tensor& enc, const ActivationHistory* prefix) const {
    CrossCache c;
    for (std::size_t l = 0; l < dec_layers.size(); ++l) {
        const auto& a = dec_layers[l].cross_attn;
        Tensor k = a.key(enc), v = a.value(enc);
        const nn::KVPrefix* p = config_.cross_attention_prefix ? layer_prefix(prefix, false, l) : nullptr;
        if (p) {
            const Tensor ks[] = {p->keys, k};
            const Tensor vs[] = {p->values, v};
            k = num::concat(ks, 0);
            v = num::concat(vs, 0);
        }
        c.k.push_back(std::move(k));
        c.v.push_back(std::move(v));
    }
    return c;
}

Seq2SeqModel::DecodeState Seq2SeqModel::initial_state(const ActivationHistory* prefix) const {
    DecodeState st;
    st.self_k.resize(dec_layers.size());
    st.self_v.resize(dec_layers.size());
    for (std::size_t l = 0; l < dec_layers.size(); ++l) {
        if (const nn::KVPrefix* p = layer_prefix(prefix, true, l)) {
            st.self_k[l] = p->keys;
            st.self_v[l] = p->values;
        }
    }
    return st;
}

Tensor Seq2SeqModel::step(DecodeState& st, int token, const CrossCache& cross) const {
    if (st.length >= config_.max_len) throw ContractError("decoder state exceeds max_len");
    const int pos = static_cast<int>(st.length);
    Tensor h = num::add(num::embedding(tok_emb, std::span<const int>(&token, 1)),
                        num::embedding(dec_pos, std::span<const int>(&pos, 1)));
    for (std::size_t l = 0; l < dec_layers.size(); ++l) {
        const auto& layer = dec_layers[l];
        const Tensor a = layer.ln_self(h);
        st.self_k[l] = append_row(st.self_k[l], layer.self_attn.key(a));
        st.self_v[l] = append_row(st.self_v[l], layer.self_attn.value(a));
        h = num::add(h, attend(layer.self_attn, layer.self_attn.query(a), st.self_k[l], st.self_v[l]));
        const Tensor b = layer.ln_cross(h);
        h = num::add(h, attend(layer.cross_attn, layer.cross_attn.query(b), cross.k[l], cross.v[l]));
        h = num::add(h, layer.ff(layer.ln_ff(h)));
    }
    ++st.length;
    return num::log_softmax(project(dec_ln(h)));
}

std::vector<int> Seq2SeqModel::greedy_decode(std::span<const int> x_ids, const ActivationHistory* prefix,
                                             std::size_t max_steps) const {
    if (max_steps == 0) throw ContractError("greedy_decode: max_steps must be at least 1");
    num::NoGradGuard guard;
    max_steps = std::min(max_steps, config_.max_len - 1);
    const Tensor enc = encode(x_ids, prefix);
    const CrossCache cross = cross_cache(enc, prefix);
    DecodeState st = initial_state(prefix);
    std::vector<int> out;
    int token = Vocab::kBos;
    for (std::size_t s = 0; s < max_steps; ++s) {
        const Tensor next = step(st, token, cross);
        const auto lp = next.data();
        // max_element returns the first maximum, i.e. the lowest id on ties
        token = static_cast<int>(std::max_element(lp.begin(), lp.end()) - lp.begin());
        if (token == Vocab::kEos) break;
        out.push_back(token);
    }
    return out;
}

namespace {

struct Hyp {
    std::vector<int> ids;  // generated tokens, <eos> included once finished
    double score = 0.0;
};

bool ranks_before(const Hyp& a, const Hyp& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.ids < b.ids;
}

}  // namespace

BeamResult Seq2SeqModel::beam_search(std::span<const int> x_ids, const ActivationHistory* prefix, std::size_t beam,
                                     std::size_t max_steps) const {
    if (beam == 0) throw ContractError("beam_search: beam must be at least 1");
    if (max_steps == 0) throw ContractError("beam_search: max_steps must be at least 1");
    num::NoGradGuard guard;
    max_steps = std::min(max_steps, config_.max_len - 1);
    const Tensor enc = encode(x_ids, prefix);
    const CrossCache cross = cross_cache(enc, prefix);
    const std::size_t V = config_.vocab_size;

    struct Live {
        Hyp hyp;
        DecodeState state;
        Tensor next;  // log-probs of the following token
    };
    std::vector<Live> alive(1);
    alive[0].state = initial_state(prefix);
    alive[0].next = step(alive[0].state, Vocab::kBos, cross);
    std::vector<Hyp> finished;

    struct Cand {
        std::size_t parent;
        int token;
        double score;
    };
    std::vector<Cand> cands;
    for (std::size_t s = 0; s < max_steps && !alive.empty(); ++s) {
        cands.clear();
        for (std::size_t h = 0; h < alive.size(); ++h) {
            const auto lp = alive[h].next.data();
            for (std::size_t v = 0; v < V; ++v) cands.push_back({h, static_cast<int>(v), alive[h].hyp.score + lp[v]});
        }
        // Alive hypotheses are kept in rank order, so (parent, token) order is
        // the lexicographic order of the extended sequences.
        auto before = [&](const Cand& a, const Cand& b) {
            if (a.score != b.score) return a.score > b.score;
            if (a.parent != b.parent) return alive[a.parent].hyp.ids < alive[b.parent].hyp.ids;
            return a.token < b.token;
        };
        const std::size_t keep = std::min(beam, cands.size());
        std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep), cands.end(), before);

        std::vector<Live> next;
        for (std::size_t k = 0; k < keep; ++k) {
            const auto& parent = alive[cands[k].parent];
            Hyp hyp{parent.hyp.ids, cands[k].score};
            hyp.ids.push_back(cands[k].token);
            if (cands[k].token == Vocab::kEos) {
                finished.push_back(std::move(hyp));
            } else {
                next.push_back({std::move(hyp), parent.state, Tensor{}});
            }
        }
        alive = std::move(next);
        if (!finished.empty() && !alive.empty()) {
            // Log-probs are <= 0, so no alive hypothesis can overtake the best finished one.
            const auto best = std::min_element(finished.begin(), finished.end(), ranks_before);
            if (best->score >= alive.front().hyp.score) break;
        }
        if (s + 1 < max_steps)
            for (auto& live : alive) live.next = step(live.state, live.hyp.ids.back(), cross);
    }

    BeamResult res;
    if (!finished.empty()) {
        const auto best = std::min_element(finished.begin(), finished.end(), ranks_before);
        res.ids.assign(best->ids.begin(), best->ids.end() - 1);
        res.score = best->score;
        res.finished = true;
    } else if (!alive.empty()) {
        res.ids = alive.front().hyp.ids;
        res.score = alive.front().hyp.score;
    }
    return res;
}

Tensor Seq2SeqModel::activation_sequence(std::span<const int> x_ids, std::span<const int> y,
                                         const ActivationHistory* prefix, std::size_t i) const {
    const Tensor enc = encode(x_ids, prefix);
    std::vector<int> y_in = {Vocab::kBos};
    y_in.insert(y_in.end(), y.begin(), y.end());
    std::vector<nn::AttentionResult> kv;
    decoder_logits(y_in, enc, prefix, &kv);
    const std::size_t total = kv.front().keys.dim(0);
    if (i >= total) {
        throw ContractError("activation_sequence: position " + std::to_string(i) + " beyond " + std::to_string(total));
    }
    std::vector<Tensor> parts;
    for (const auto& layer : kv) {
        parts.push_back(num::slice(layer.keys, 0, i, i + 1));
        parts.push_back(num::slice(layer.values, 0, i, i + 1));
    }
    return num::concat(parts, 1);
}

void Seq2SeqModel::collect(const std::string& prefix, nn::ParamList& out) const {
    out.push_back({prefix + "tok_emb", tok_emb});
    out.push_back({prefix + "enc_pos", enc_pos});
    out.push_back({prefix + "dec_pos", dec_pos});
    for (std::size_t i = 0; i < enc_layers.size(); ++i) enc_layers[i].collect(prefix + "enc/layer" + std::to_string(i) + "/", out);
    for (std::size_t i = 0; i < dec_layers.size(); ++i) dec_layers[i].collect(prefix + "dec/layer" + std::to_string(i) + "/", out);
    enc_ln.collect(prefix + "enc_ln/", out);
    dec_ln.collect(prefix + "dec_ln/", out);
    if (config_.tie_embeddings) {
        out.push_back({prefix + "head/bias", head.bias});
    } else {
        head.collect(prefix + "head/", out);
    }
}

nn::ParamList Seq2SeqModel::parameters() const {
    nn::ParamList out;
    collect("phi/", out);
    return out;
}

}  // namespace gtee
