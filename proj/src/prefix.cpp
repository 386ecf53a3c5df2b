#include "gtee/prefix.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "gtee/error.hpp"

namespace gtee {

void PrefixConfig::validate(std::size_t n_layers, std::size_t d_model) const {
    const std::size_t d = 2 * n_layers * d_model;
    if (n_types == 0) throw ContractError("PrefixConfig: no event types");
    if (length == 0 || d_prime == 0) throw ContractError("PrefixConfig: length and d_prime must be positive");
    if (dyn_heads == 0 || d % dyn_heads != 0) {
        throw ContractError("PrefixConfig: D = " + std::to_string(d) + " not divisible by " +
                            std::to_string(dyn_heads) + " heads");
    }
    if (!reparametrize && d_prime != d) {
        throw ContractError("PrefixConfig: without reparametrization d_prime must equal D = " + std::to_string(d));
    }
}

PrefixMLP::PrefixMLP(std::size_t d_prime, std::size_t d, Rng& rng) : hidden(d_prime, d_prime, rng), out(d_prime, d, rng) {}

Tensor PrefixMLP::operator()(const Tensor& x) const { return out(num::gelu(hidden(x))); }

void PrefixMLP::collect(const std::string& prefix, nn::ParamList& params) const {
    hidden.collect(prefix + "hidden/", params);
    out.collect(prefix + "out/", params);
}

DynPrefixAttn::DynPrefixAttn(std::size_t d_ctx, std::size_t d, std::size_t heads, Rng& rng)
    : ctx_proj(d_ctx, d, rng), query(d, d, rng), key(d, d, rng), value(d, d, rng), out(d, d, rng), heads(heads) {}

void DynPrefixAttn::collect(const std::string& prefix, nn::ParamList& params) const {
    ctx_proj.collect(prefix + "ctx_proj/", params);
    query.collect(prefix + "query/", params);
    key.collect(prefix + "key/", params);
    value.collect(prefix + "value/", params);
    out.collect(prefix + "out/", params);
}

PrefixModule::PrefixModule(const PrefixConfig& config, std::size_t n_layers, std::size_t d_model, Rng& rng)
    : config_(config), n_layers_(n_layers), d_model_(d_model), width_(2 * n_layers * d_model) {
    config.validate(n_layers, d_model);
    const std::size_t rows = config.n_types * config.length;
    for (int s = 0; s < 2; ++s) {
        p_prime[s] = nn::normal_init({rows, config.d_prime}, 1.0, rng);
        if (config.reparametrize) mlp[s] = PrefixMLP(config.d_prime, width_, rng);
        attn[s] = DynPrefixAttn(config.context.d_model, width_, config.dyn_heads, rng);
    }
    ctx_encoder = nn::PooledEncoder(config.context, rng);
}

Tensor PrefixModule::lift(Stack s, const Tensor& rows) const {
    return config_.reparametrize ? mlp[static_cast<int>(s)](rows) : rows;
}

Tensor PrefixModule::prefix_table(Stack s) const { return lift(s, p_prime[static_cast<int>(s)]); }

Tensor PrefixModule::type_rows(Stack s, std::size_t e) const {
    if (e >= config_.n_types) {
        throw ContractError("type index " + std::to_string(e) + " outside " + std::to_string(config_.n_types) + " types");
    }
    const std::size_t L = config_.length;
    return lift(s, num::slice(p_prime[static_cast<int>(s)], 0, e * L, (e + 1) * L));
}

ActivationHistory PrefixModule::static_prefix(std::size_t e) const {
    ActivationHistory h;
    h.enc = split_history_rows(type_rows(Stack::Encoder, e), n_layers_, d_model_);
    h.dec = split_history_rows(type_rows(Stack::Decoder, e), n_layers_, d_model_);
    return h;
}

Tensor PrefixModule::context_vector(std::span<const int> context_ids) const { return ctx_encoder.pooled(context_ids); }

Tensor PrefixModule::mix(Stack s, const Tensor& c, const std::vector<std::size_t>& types, bool keep_weights,
                         std::vector<Tensor>* weights) const {
    const auto& a = attn[static_cast<int>(s)];
    const std::size_t E = config_.n_types, L = config_.length, D = width_, dh = D / a.heads;

    const Tensor p_all = prefix_table(s);
    const Tensor q = a.query(a.ctx_proj(c));  // [1, D]
    const Tensor k = a.key(p_all);           // [E*L, D]
    const Tensor v = a.value(p_all);

    std::vector<double> bias(L * E, -std::numeric_limits<double>::infinity());
    for (std::size_t e : types)
        for (std::size_t t = 0; t < L; ++t) bias[t * E + e] = 0.0;
    const Tensor mask = Tensor::from({L, E}, std::move(bias));
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

    std::vector<int> gather(E);
    std::vector<Tensor> heads;
    for (std::size_t h = 0; h < a.heads; ++h) {
        const Tensor kh = num::slice(k, 1, h * dh, (h + 1) * dh);
        const Tensor vh = num::slice(v, 1, h * dh, (h + 1) * dh);
        const Tensor qh = num::slice(q, 1, h * dh, (h + 1) * dh);
        const Tensor scores = num::transpose(num::reshape(num::matmul_nt(kh, qh), {E, L}));  // [L, E]
        const Tensor w = num::softmax(num::add(num::scale(scores, inv_sqrt), mask));
        if (keep_weights && weights) weights->push_back(w);
        std::vector<Tensor> rows;
        rows.reserve(L);
        for (std::size_t t = 0; t < L; ++t) {
            for (std::size_t e = 0; e < E; ++e) gather[e] = static_cast<int>(e * L + t);
            rows.push_back(num::matmul(num::slice(w, 0, t, t + 1), num::embedding(vh, gather)));
        }
        heads.push_back(num::concat(rows, 0));
    }
    return a.out(num::concat(heads, 1));
}

DynamicPrefix PrefixModule::dynamic_prefix(const Tensor& c, const std::optional<std::vector<std::size_t>>& mask,
                                           bool keep_weights, bool force_general) const {
    std::vector<std::size_t> types;
    if (mask) {
        if (mask->empty()) throw ContractError("dynamic_prefix: empty type mask");
        for (std::size_t e : *mask) {
            if (e >= config_.n_types) throw ContractError("dynamic_prefix: mask type " + std::to_string(e) + " out of range");
        }
        types = *mask;
    } else {
        for (std::size_t e = 0; e < config_.n_types; ++e) types.push_back(e);
    }
    if (c.numel() != config_.context.d_model) {
        throw DimensionError("dynamic_prefix: context vector has " + std::to_string(c.numel()) + " entries, expected " +
                             std::to_string(config_.context.d_model));
    }

    DynamicPrefix res;
    if (keep_weights) res.weights.resize(2);
    Tensor rows[2];
    const bool single = types.size() == 1 || std::all_of(types.begin(), types.end(), [&](std::size_t e) { return e == types[0]; });
    for (int s = 0; s < 2; ++s) {
        const auto stack = static_cast<Stack>(s);
        if (single && !force_general && !keep_weights) {
            const auto& a = attn[s];
            rows[s] = a.out(a.value(type_rows(stack, types[0])));
        } else {
            rows[s] = mix(stack, c, types, keep_weights, keep_weights ? &res.weights[static_cast<std::size_t>(s)] : nullptr);
        }
    }
    res.history.enc = split_history_rows(rows[0], n_layers_, d_model_);
    res.history.dec = split_history_rows(rows[1], n_layers_, d_model_);
    return res;
}

void PrefixModule::collect(const std::string& prefix, nn::ParamList& out) const {
    static const char* names[2] = {"enc/", "dec/"};
    for (int s = 0; s < 2; ++s) {
        const std::string p = prefix + names[s];
        out.push_back({p + "p_prime", p_prime[s]});
        if (config_.reparametrize) mlp[s].collect(p + "mlp/", out);
        attn[s].collect(p + "attn/", out);
    }
    ctx_encoder.collect(prefix + "ctx/", out);
}

nn::ParamList PrefixModule::parameters() const {
    nn::ParamList out;
    collect("theta/", out);
    return out;
}

}  // namespace gtee
