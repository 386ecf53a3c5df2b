#include "gtee/nn.hpp"

#include <cmath>
#include <limits>
#include <unordered_map>

#include "gtee/error.hpp"

namespace gtee::nn {

using num::Shape;

Tensor xavier(std::size_t in, std::size_t out, Rng& rng) {
    const double a = std::sqrt(6.0 / static_cast<double>(in + out));
    std::vector<double> v(in * out);
    for (auto& x : v) x = rng.uniform(-a, a);
    return Tensor::from({in, out}, std::move(v), true);
}

Tensor normal_init(Shape shape, double stddev, Rng& rng) {
    std::vector<double> v(num::numel(shape));
    for (auto& x : v) x = stddev * rng.normal();
    return Tensor::from(std::move(shape), std::move(v), true);
}

Linear::Linear(std::size_t in, std::size_t out, Rng& rng)
    : weight(xavier(in, out, rng)), bias(Tensor::zeros({out}, true)) {}

Tensor Linear::operator()(const Tensor& x) const { return num::add(num::matmul(x, weight), bias); }

void Linear::collect(const std::string& prefix, ParamList& out) const {
    out.push_back({prefix + "weight", weight});
    out.push_back({prefix + "bias", bias});
}

LayerNorm::LayerNorm(std::size_t d) : gain(Tensor::full({d}, 1.0, true)), bias(Tensor::zeros({d}, true)) {}

Tensor LayerNorm::operator()(const Tensor& x) const { return num::layernorm(x, gain, bias); }

void LayerNorm::collect(const std::string& prefix, ParamList& out) const {
    out.push_back({prefix + "gain", gain});
    out.push_back({prefix + "bias", bias});
}

MultiHeadAttention::MultiHeadAttention(std::size_t d_model, std::size_t heads, Rng& rng)
    : query(d_model, d_model, rng),
      key(d_model, d_model, rng),
      value(d_model, d_model, rng),
      out(d_model, d_model, rng),
      heads(heads) {
    if (heads == 0 || d_model % heads != 0) {
        throw ContractError("attention: d_model " + std::to_string(d_model) + " not divisible by " +
                            std::to_string(heads) + " heads");
    }
}

AttentionResult MultiHeadAttention::operator()(const Tensor& x_query, const Tensor& x_kv, const Tensor& mask,
                                               const KVPrefix* prefix, bool keep_weights) const {
    AttentionResult res;
    const Tensor q = query(x_query);
    Tensor k = key(x_kv);
    Tensor v = value(x_kv);
    if (prefix && prefix->length() > 0) {
        const Tensor ks[] = {prefix->keys, k};
        const Tensor vs[] = {prefix->values, v};
        k = num::concat(ks, 0);
        v = num::concat(vs, 0);
    }
    const std::size_t d = q.dim(1), dh = d / heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<Tensor> outs;
    outs.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h) {
        const Tensor qh = heads == 1 ? q : num::slice(q, 1, h * dh, (h + 1) * dh);
        const Tensor kh = heads == 1 ? k : num::slice(k, 1, h * dh, (h + 1) * dh);
        const Tensor vh = heads == 1 ? v : num::slice(v, 1, h * dh, (h + 1) * dh);
        Tensor scores = num::scale(num::matmul_nt(qh, kh), inv_sqrt);
        if (mask.defined()) scores = num::add(scores, mask);
        Tensor w = num::softmax(scores);
        outs.push_back(num::matmul(w, vh));
        if (keep_weights) res.weights.push_back(w);
    }
    res.output = out(heads == 1 ? outs[0] : num::concat(outs, 1));
    res.keys = k;
    res.values = v;
    return res;
}

void MultiHeadAttention::collect(const std::string& prefix, ParamList& out_params) const {
    query.collect(prefix + "query/", out_params);
    key.collect(prefix + "key/", out_params);
    value.collect(prefix + "value/", out_params);
    out.collect(prefix + "out/", out_params);
}

FeedForward::FeedForward(std::size_t d_model, std::size_t d_ff, Rng& rng) : up(d_model, d_ff, rng), down(d_ff, d_model, rng) {}

Tensor sinusoidal_init(std::size_t n, std::size_t d, double scale) {
    std::vector<double> v(n * d);
    for (std::size_t p = 0; p < n; ++p) {
        for (std::size_t i = 0; i < d; ++i) {
            const double rate = std::pow(10000.0, -static_cast<double>(i - i % 2) / static_cast<double>(d));
            const double a = static_cast<double>(p) * rate;
            v[p * d + i] = scale * (i % 2 == 0 ? std::sin(a) : std::cos(a));
        }
    }
    return Tensor::from({n, d}, std::move(v), true);
}

namespace {
thread_local const DropoutScope* g_dropout = nullptr;
}

DropoutScope::DropoutScope(double rate, Rng& rng) : outer_(g_dropout), rate_(rate), rng_(&rng) {
    if (!(rate >= 0.0 && rate < 1.0)) throw ContractError("dropout rate outside [0, 1)");
    g_dropout = this;
}

DropoutScope::~DropoutScope() { g_dropout = outer_; }

Tensor dropout(const Tensor& x) {
    const DropoutScope* s = g_dropout;
    if (!s || s->rate_ == 0.0) return x;
    const double keep = 1.0 - s->rate_;
    std::vector<double> mask(x.numel());
    for (double& m : mask) m = s->rng_->uniform() < keep ? 1.0 / keep : 0.0;
    return num::mul(x, Tensor::from(x.shape(), std::move(mask)));
}

Tensor FeedForward::operator()(const Tensor& x) const { return down(num::gelu(up(x))); }

void FeedForward::collect(const std::string& prefix, ParamList& out) const {
    up.collect(prefix + "up/", out);
    down.collect(prefix + "down/", out);
}

Tensor causal_mask(std::size_t n, std::size_t prefix_len) {
    const std::size_t m = prefix_len + n;
    std::vector<double> v(n * m, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) v[i * m + prefix_len + j] = -std::numeric_limits<double>::infinity();
    return Tensor::from({n, m}, std::move(v));
}

EncoderLayer::EncoderLayer(std::size_t d_model, std::size_t heads, std::size_t d_ff, Rng& rng)
    : ln_attn(d_model), ln_ff(d_model), attn(d_model, heads, rng), ff(d_model, d_ff, rng) {}

Tensor EncoderLayer::operator()(const Tensor& x, const KVPrefix* prefix, AttentionResult* kv, bool keep_weights) const {
    const Tensor h = ln_attn(x);
    AttentionResult a = attn(h, h, Tensor{}, prefix, keep_weights);
    const Tensor x1 = num::add(x, dropout(a.output));
    if (kv) *kv = std::move(a);
    return num::add(x1, dropout(ff(ln_ff(x1))));
}

void EncoderLayer::collect(const std::string& prefix, ParamList& out) const {
    ln_attn.collect(prefix + "ln_attn/", out);
    attn.collect(prefix + "attn/", out);
    ln_ff.collect(prefix + "ln_ff/", out);
    ff.collect(prefix + "ff/", out);
}

PooledEncoder::PooledEncoder(const EncoderConfig& cfg, Rng& rng)
    : config(cfg),
      tok_emb(normal_init({cfg.vocab_size, cfg.d_model}, 0.1, rng)),
      pos_emb(normal_init({cfg.max_len + 1, cfg.d_model}, 0.1, rng)),
      pool(normal_init({1, cfg.d_model}, 0.1, rng)),
      final_ln(cfg.d_model) {
    for (std::size_t i = 0; i < cfg.n_layers; ++i) layers.emplace_back(cfg.d_model, cfg.n_heads, cfg.d_ff, rng);
}

Tensor PooledEncoder::encode(std::span<const int> ids) const {
    if (ids.size() > config.max_len) ids = ids.first(config.max_len);
    std::vector<int> pos(ids.size() + 1);
    for (std::size_t i = 0; i < pos.size(); ++i) pos[i] = static_cast<int>(i);
    Tensor x = pool;
    if (!ids.empty()) {
        const Tensor parts[] = {pool, num::embedding(tok_emb, ids)};
        x = num::concat(parts, 0);
    }
    x = num::add(x, num::embedding(pos_emb, pos));
    for (const auto& layer : layers) x = layer(x, nullptr);
    return final_ln(x);
}

Tensor PooledEncoder::pooled(std::span<const int> ids) const { return num::slice(encode(ids), 0, 0, 1); }

void PooledEncoder::collect(const std::string& prefix, ParamList& out) const {
    out.push_back({prefix + "tok_emb", tok_emb});
    out.push_back({prefix + "pos_emb", pos_emb});
    out.push_back({prefix + "pool", pool});
    for (std::size_t i = 0; i < layers.size(); ++i) layers[i].collect(prefix + "layer" + std::to_string(i) + "/", out);
    final_ln.collect(prefix + "final_ln/", out);
}

void load_params(const ParamList& dst, const std::vector<NamedTensor>& src, const std::string& only_prefix) {
    std::unordered_map<std::string, const Tensor*> by_name;
    for (const auto& [name, t] : src) by_name[name] = &t;
    for (const auto& [name, t] : dst) {
        if (!only_prefix.empty() && name.rfind(only_prefix, 0) != 0) continue;
        auto it = by_name.find(name);
        if (it == by_name.end()) throw DataError("checkpoint is missing tensor '" + name + "'");
        if (it->second->shape() != t.shape()) {
            throw DataError("tensor '" + name + "' has shape " + num::to_string(it->second->shape()) + ", expected " +
                            num::to_string(t.shape()));
        }
        Tensor target = t;
        auto out = target.mutable_data();
        std::copy(it->second->data().begin(), it->second->data().end(), out.begin());
    }
}

std::size_t param_count(const ParamList& params) {
    std::size_t n = 0;
    for (const auto& p : params) n += p.tensor.numel();
    return n;
}

}  // namespace gtee::nn
