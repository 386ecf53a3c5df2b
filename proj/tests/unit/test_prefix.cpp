#include <cmath>

#include "gtee/error.hpp"
#include "gtee/numeric/gradcheck.hpp"
#include "gtee/prefix.hpp"
#include "../common/gradsuite.hpp"
#include "helpers.hpp"

using namespace gtee;
using namespace gtee::testing;

namespace {

constexpr std::size_t kVocab = 14;

ModelConfig lm_config() {
    ModelConfig c;
    c.vocab_size = kVocab;
    c.d_model = 16;
    c.n_layers = 2;
    c.n_heads = 2;
    c.d_ff = 32;
    c.max_len = 24;
    return c;
}

PrefixConfig prefix_config(std::size_t types, std::size_t L = 3) {
    PrefixConfig p;
    p.n_types = types;
    p.length = L;
    p.d_prime = 8;
    p.dyn_heads = 4;
    p.context = {kVocab, 16, 1, 2, 32, 24};
    return p;
}

void set_identity(nn::Linear& lin) {
    auto w = lin.weight.mutable_data();
    const std::size_t n = lin.weight.dim(1);
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = (i / n == i % n) ? 1.0 : 0.0;
    for (double& b : lin.bias.mutable_data()) b = 0.0;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    REQUIRE(a.shape() == b.shape());
    double m = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
    return m;
}

double history_diff(const ActivationHistory& a, const ActivationHistory& b) {
    return std::max(max_abs_diff(join_history_rows(a.enc), join_history_rows(b.enc)),
                    max_abs_diff(join_history_rows(a.dec), join_history_rows(b.dec)));
}

}  // namespace

TEST_SUITE("prefix") {
    TEST_CASE("width and validation") {
        Rng rng(1);
        const PrefixModule p(prefix_config(3), 2, 16, rng);
        CHECK(p.width() == 64);
        CHECK(p.prefix_table(Stack::Encoder).shape() == num::Shape{9, 64});
        auto bad = prefix_config(3);
        bad.dyn_heads = 5;
        CHECK_THROWS_AS(PrefixModule(bad, 2, 16, rng), ContractError);
        bad = prefix_config(3);
        bad.reparametrize = false;
        CHECK_THROWS_AS(PrefixModule(bad, 2, 16, rng), ContractError);
        CHECK_THROWS_AS(p.static_prefix(3), ContractError);
    }

    TEST_CASE("static prefix reshape round trip") {
        Rng rng(2);
        const PrefixModule p(prefix_config(3), 2, 16, rng);
        for (std::size_t e = 0; e < 3; ++e) {
            const auto sp = p.static_prefix(e);
            CHECK(sp.length() == 3);
            CHECK(max_abs_diff(join_history_rows(sp.enc), p.type_rows(Stack::Encoder, e)) == 0.0);
            CHECK(max_abs_diff(join_history_rows(sp.dec), p.type_rows(Stack::Decoder, e)) == 0.0);
            const Tensor table = p.prefix_table(Stack::Decoder);
            CHECK(max_abs_diff(num::slice(table, 0, e * 3, e * 3 + 3), p.type_rows(Stack::Decoder, e)) < 1e-15);
        }
    }

    TEST_CASE("types do not share rows") {
        Rng rng(3);
        PrefixModule p(prefix_config(2), 2, 16, rng);
        const Tensor before = join_history_rows(p.static_prefix(1).enc).detach();
        auto pp = p.p_prime[0].mutable_data();
        for (std::size_t i = 0; i < 3 * 8; ++i) pp[i] += 1.0;  // type 0 rows
        CHECK(max_abs_diff(join_history_rows(p.static_prefix(1).enc), before) == 0.0);
        CHECK(max_abs_diff(join_history_rows(p.static_prefix(0).enc), join_history_rows(PrefixModule(p).static_prefix(0).enc)) == 0.0);
    }

    TEST_CASE("without reparametrization the prefix is P' itself") {
        Rng rng(4);
        auto cfg = prefix_config(2);
        cfg.reparametrize = false;
        cfg.d_prime = 64;
        const PrefixModule p(cfg, 2, 16, rng);
        CHECK(max_abs_diff(p.type_rows(Stack::Encoder, 1), num::slice(p.p_prime[0], 0, 3, 6)) == 0.0);
        nn::ParamList params;
        p.collect("", params);
        for (const auto& [name, t] : params) CHECK(name.find("mlp") == std::string::npos);
    }

    TEST_CASE("context vector") {
        Rng rng(5);
        const PrefixModule p(prefix_config(2), 2, 16, rng);
        const std::vector<int> a = {9, 10, 11, 12}, b = {12, 11, 10, 9};
        const Tensor ca = p.context_vector(a);
        CHECK(ca.shape() == num::Shape{1, 16});
        CHECK(max_abs_diff(ca, p.context_vector(a)) == 0.0);
        CHECK(max_abs_diff(ca, p.context_vector(b)) > 1e-6);
        CHECK(p.context_vector(std::vector<int>{}).numel() == 16);

        Rng trials(6);
        for (int t = 0; t < 20; ++t) {
            std::vector<int> x(5);
            for (int& v : x) v = 4 + static_cast<int>(trials.below(kVocab - 4));
            std::vector<int> y = x;
            std::swap(y[0], y[4]);
            if (y == x) continue;
            CHECK(max_abs_diff(p.context_vector(x), p.context_vector(y)) > 1e-9);
        }
    }

    TEST_CASE("squared context norm gradient") {
        Rng rng(7);
        PrefixModule p(prefix_config(2), 2, 16, rng);
        // With unit gain and zero bias the final layer norm fixes ||c||.
        for (double& v : p.ctx_encoder.final_ln.gain.mutable_data()) v = rng.uniform(0.5, 1.5);
        for (double& v : p.ctx_encoder.final_ln.bias.mutable_data()) v = rng.uniform(-0.5, 0.5);
        const std::vector<int> x = {9, 10, 11};
        nn::ParamList params;
        p.ctx_encoder.collect("", params);
        double worst = 0.0;
        for (const auto& [name, t] : params) {
            const auto r = num::finite_difference_check(
                [&] {
                    const Tensor c = p.context_vector(x);
                    return num::sum(num::mul(c, c));
                },
                t, 1e-5, 24, 0, kGradZeroTol);
            worst = std::max(worst, r.max_rel_error);
        }
        CHECK(worst < 1e-5);
    }

    TEST_CASE("single type with identity projections returns the static prefix") {
        Rng rng(8);
        PrefixModule p(prefix_config(1, 4), 2, 16, rng);
        for (auto& a : p.attn) {
            set_identity(a.value);
            set_identity(a.out);
        }
        const Tensor c = p.context_vector(std::vector<int>{9, 10});
        for (bool general : {false, true}) {
            const auto dp = p.dynamic_prefix(c, std::nullopt, false, general);
            CHECK(history_diff(dp.history, p.static_prefix(0)) <= 1e-12);
        }
    }

    TEST_CASE("masking to one type equals a one-type store") {
        Rng rng(9);
        const PrefixModule p(prefix_config(3), 2, 16, rng);
        const Tensor c = p.context_vector(std::vector<int>{9, 10, 11});
        for (std::size_t e = 0; e < 3; ++e) {
            // Same parameters, but only type e's P' rows.
            PrefixModule one = p;
            auto cfg = prefix_config(1);
            one = PrefixModule(cfg, 2, 16, rng);
            for (int s = 0; s < 2; ++s) {
                one.p_prime[s] = num::slice(p.p_prime[s], 0, e * 3, e * 3 + 3).clone(true);
                one.mlp[s] = p.mlp[s];
                one.attn[s] = p.attn[s];
            }
            one.ctx_encoder = p.ctx_encoder;
            const auto reference = one.dynamic_prefix(c, std::nullopt, false, true);
            const std::vector<std::size_t> mask = {e};
            CHECK(history_diff(p.dynamic_prefix(c, mask, false, true).history, reference.history) <= 1e-12);
            CHECK(history_diff(p.dynamic_prefix(c, mask).history, reference.history) <= 1e-12);

            // Equivalently: the static prefix through the value and output projections.
            const Tensor enc_rows = p.attn[0].out(p.attn[0].value(join_history_rows(p.static_prefix(e).enc)));
            CHECK(max_abs_diff(join_history_rows(p.dynamic_prefix(c, mask, false, true).history.enc), enc_rows) <= 1e-12);
        }
    }

    TEST_CASE("attention over types is a distribution") {
        Rng rng(10);
        const PrefixModule p(prefix_config(4), 2, 16, rng);
        const Tensor c = p.context_vector(std::vector<int>{9, 10, 11});
        const std::vector<std::size_t> mask = {0, 2};
        for (const auto& m : {std::optional<std::vector<std::size_t>>{}, std::optional<std::vector<std::size_t>>{mask}}) {
            const auto dp = p.dynamic_prefix(c, m, true);
            REQUIRE(dp.weights.size() == 2);
            for (const auto& stack : dp.weights) {
                REQUIRE(stack.size() == 4);
                for (const auto& w : stack) {
                    REQUIRE(w.shape() == num::Shape{3, 4});
                    for (std::size_t t = 0; t < 3; ++t) {
                        double s = 0.0;
                        for (std::size_t e = 0; e < 4; ++e) {
                            CHECK(w.at(t, e) >= 0.0);
                            if (m && e != 0 && e != 2) CHECK(w.at(t, e) == 0.0);
                            s += w.at(t, e);
                        }
                        CHECK(std::abs(s - 1.0) < 1e-9);
                    }
                }
            }
        }
        CHECK_THROWS_AS(p.dynamic_prefix(c, std::vector<std::size_t>{}), ContractError);
        CHECK_THROWS_AS(p.dynamic_prefix(c, std::vector<std::size_t>{4}), ContractError);
    }

    TEST_CASE("zero query projection averages the type prefixes") {
        Rng rng(11);
        PrefixModule p(prefix_config(3), 2, 16, rng);
        for (auto& a : p.attn) {
            for (double& v : a.query.weight.mutable_data()) v = 0.0;
            for (double& v : a.query.bias.mutable_data()) v = 0.0;
        }
        const Tensor c1 = p.context_vector(std::vector<int>{9, 10});
        const Tensor c2 = p.context_vector(std::vector<int>{13, 12, 11, 4});
        const auto d1 = p.dynamic_prefix(c1, std::nullopt);
        CHECK(history_diff(d1.history, p.dynamic_prefix(c2, std::nullopt).history) <= 1e-12);
        CHECK(history_diff(d1.history, p.dynamic_prefix(num::scale(c1, 7.0), std::nullopt).history) <= 1e-12);
        Tensor mean_rows = num::scale(num::add(num::add(p.type_rows(Stack::Decoder, 0), p.type_rows(Stack::Decoder, 1)),
                                               p.type_rows(Stack::Decoder, 2)),
                                      1.0 / 3.0);
        const Tensor expect = p.attn[1].out(p.attn[1].value(mean_rows));
        CHECK(max_abs_diff(join_history_rows(d1.history.dec), expect) <= 1e-12);
    }

    TEST_CASE("changing an early prefix row changes the first LM history vector") {
        Rng rng(12);
        const Seq2SeqModel lm(lm_config(), rng);
        PrefixModule p(prefix_config(2), 2, 16, rng);
        const std::vector<int> x = {9, 10, 11}, y = {12, 13};
        const Tensor c = p.context_vector(x);
        const auto dp = p.dynamic_prefix(c, std::nullopt);
        const Tensor h0 = lm.activation_sequence(x, y, &dp.history, 0);
        CHECK(max_abs_diff(h0, num::slice(join_history_rows(dp.history.dec), 0, 0, 1)) == 0.0);
        const Tensor hL = lm.activation_sequence(x, y, &dp.history, 3).detach();
        for (double& v : p.p_prime[1].mutable_data()) v += 0.3;
        const auto dp2 = p.dynamic_prefix(c, std::nullopt);
        CHECK(max_abs_diff(lm.activation_sequence(x, y, &dp2.history, 3), hL) > 1e-9);
    }

    TEST_CASE("every parameter group passes finite differences") {
        for (const auto& g : gradient_suite()) {
            CAPTURE(g.group);
            CAPTURE(g.worst_param);
            CHECK(g.tensors > 0);
            CHECK(g.worst < 1e-5);
        }
    }

    TEST_CASE("P' rows through MLP, attention and LM") {
        Rng rng(13);
        const Seq2SeqModel lm(lm_config(), rng);
        const PrefixModule p(prefix_config(2), 2, 16, rng);
        const std::vector<int> x = {9, 10, 11, 12}, y = {12, 13, 9};
        auto f = [&] {
            const auto dp = p.dynamic_prefix(p.context_vector(x), std::nullopt);
            return lm.sequence_nll(x, y, &dp.history);
        };
        // Every coordinate of both P' tables, so every row is covered.
        for (const Tensor& pp : p.p_prime) CHECK(num::finite_difference_check(f, pp, 1e-5).max_rel_error < 1e-5);
    }
}
