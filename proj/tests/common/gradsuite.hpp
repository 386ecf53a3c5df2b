#pragma once

// Finite-difference checks over every parameter group of a small model
// (2 layers, d_model 16), shared by the unit tests and the acceptance binary.

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "gtee/irrelevance.hpp"
#include "gtee/numeric/gradcheck.hpp"
#include "gtee/prefix.hpp"
#include "gtee/seq2seq.hpp"

namespace gtee::testing {

// Initial step of the extrapolation tableau.
inline constexpr double kGradEps = 1e-2;
inline constexpr num::FdMethod kGradMethod = num::FdMethod::Ridders;
// Both gradients below this count as agreement on an identically zero gradient.
inline constexpr double kGradZeroTol = 1e-8;

struct GroupResult {
    std::string group;
    double worst = 0.0;
    std::string worst_param;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    std::size_t tensors = 0;
    std::size_t coords = 0;
};

inline GroupResult check_group(const std::string& group, const std::function<num::Tensor()>& f,
                               const nn::ParamList& params, std::size_t max_coords) {
    GroupResult g;
    g.group = group;
    for (const auto& [name, t] : params) {
        const auto r = num::finite_difference_check(f, t, kGradEps, max_coords, 0, kGradZeroTol, kGradMethod);
        ++g.tensors;
        g.coords += r.checked;
        if (g.tensors == 1 || r.max_rel_error > g.worst) {
            g.worst = r.max_rel_error;
            g.worst_param = name;
            g.worst_analytic = r.worst_analytic;
            g.worst_numeric = r.worst_numeric;
        }
    }
    return g;
}

inline nn::ParamList select(const nn::ParamList& params, const std::string& needle) {
    nn::ParamList out;
    for (const auto& p : params)
        if (p.name.find(needle) != std::string::npos) out.push_back(p);
    return out;
}

// LM, P', prefix MLPs, DynPrefixAttn, context encoder and IC, each checked
// on the loss that trains it.
inline std::vector<GroupResult> gradient_suite(std::size_t max_coords = 16) {
    constexpr std::size_t V = 14;
    Rng rng(2024);
    ModelConfig lc;
    lc.vocab_size = V;
    lc.d_model = 16;
    lc.n_layers = 2;
    lc.n_heads = 2;
    lc.d_ff = 32;
    lc.max_len = 24;
    const Seq2SeqModel lm(lc, rng);

    PrefixConfig pc;
    pc.n_types = 2;
    pc.length = 3;
    pc.d_prime = 8;
    pc.dyn_heads = 4;
    pc.context = {V, 16, 2, 2, 32, 24};
    const PrefixModule prefix(pc, lc.n_layers, lc.d_model, rng);

    const std::vector<int> x = {9, 10, 4, 11, 12};
    const std::vector<int> y = {12, 13, 9};
    auto nll_dynamic = [&] {
        const auto dp = prefix.dynamic_prefix(prefix.context_vector(x), std::nullopt);
        return lm.sequence_nll(x, y, &dp.history);
    };
    const auto sp = prefix.static_prefix(1);
    auto nll_lm = [&] { return lm.sequence_nll(x, y, &sp); };

    const auto theta = prefix.parameters();
    std::vector<GroupResult> out;
    out.push_back(check_group("LM", nll_lm, lm.parameters(), max_coords));
    out.push_back(check_group("P'", nll_dynamic, select(theta, "p_prime"), max_coords));
    out.push_back(check_group("MLPs", nll_dynamic, select(theta, "/mlp/"), max_coords));
    auto attn = select(theta, "theta/enc/attn/");
    for (const auto& p : select(theta, "theta/dec/attn/")) attn.push_back(p);
    out.push_back(check_group("DynPrefixAttn", nll_dynamic, attn, max_coords));
    out.push_back(check_group("context encoder", nll_dynamic, select(theta, "theta/ctx/"), max_coords));

    Vocab vocab;
    for (std::size_t i = Vocab::kReserved; i < V; ++i) vocab.add("w" + std::to_string(i));
    const ICModel ic = create_ic(vocab, {V, 16, 2, 2, 32, 24}, 7);
    const std::array<int, 1> target{1};
    auto ic_loss = [&] { return num::cross_entropy(ic.logits(x), target); };
    out.push_back(check_group("IC", ic_loss, ic.parameters(), max_coords));
    return out;
}

}  // namespace gtee::testing
