#include <algorithm>
#include <cmath>

#include "gtee/error.hpp"
#include "gtee/numeric/gradcheck.hpp"
#include "gtee/seq2seq.hpp"
#include "helpers.hpp"

using namespace gtee;
using namespace gtee::testing;

namespace {

ModelConfig tiny_config(std::size_t vocab, std::size_t d = 16, std::size_t layers = 2) {
    ModelConfig c;
    c.vocab_size = vocab;
    c.d_model = d;
    c.n_layers = layers;
    c.n_heads = 2;
    c.d_ff = 2 * d;
    c.max_len = 24;
    return c;
}

// Random history of length L for every layer of both stacks.
ActivationHistory random_history(const ModelConfig& c, std::size_t L, Rng& rng) {
    ActivationHistory h;
    for (std::size_t l = 0; l < c.n_layers; ++l) {
        h.enc.push_back({random_tensor({L, c.d_model}, rng, -1, 1, false), random_tensor({L, c.d_model}, rng, -1, 1, false)});
        h.dec.push_back({random_tensor({L, c.d_model}, rng, -1, 1, false), random_tensor({L, c.d_model}, rng, -1, 1, false)});
    }
    return h;
}

std::vector<int> random_ids(std::size_t n, std::size_t vocab, Rng& rng, int lo = 0) {
    std::vector<int> v(n);
    for (int& x : v) x = lo + static_cast<int>(rng.below(vocab - static_cast<std::size_t>(lo)));
    return v;
}

// Scales every weight so a tiny random model produces peaked, varied distributions.
void sharpen(Seq2SeqModel& m, double factor) {
    for (auto& [name, t] : m.parameters())
        for (double& v : t.mutable_data()) v *= factor;
}

}  // namespace

TEST_SUITE("seq2seq") {
    TEST_CASE("vocabulary and tokenization") {
        const Vocab v = Vocab::build({"Trigger <trg> met", "Ann met Bob"});
        const auto& reserved = Vocab::reserved_tokens();
        REQUIRE(reserved.size() == 9);
        const std::vector<std::string> expect = {"<pad>", "<bos>", "<eos>", "<unk>", "[SEP]", "<trg>", "<arg>", "<IN_SEP>", "<OUT_SEP>"};
        CHECK(reserved == expect);
        for (int i = 0; i < 9; ++i) CHECK(v.id(reserved[static_cast<std::size_t>(i)]) == i);
        CHECK(v.tokenize("Trigger <trg>") == std::vector<int>{v.id("Trigger"), Vocab::kTrg});
        CHECK(v.tokenize("").empty());
        CHECK(v.tokenize("zebra") == std::vector<int>{Vocab::kUnk});
        CHECK(v.id("Trigger") == 9);
        CHECK(v.id("Bob") == 12);
        const std::vector<int> ids = {Vocab::kBos, v.id("Ann"), v.id("met"), Vocab::kEos, v.id("Bob")};
        CHECK(v.detokenize(ids) == "Ann met");
        CHECK_THROWS_AS(Vocab::from_tokens({"a", "b"}), DataError);
        CHECK(Vocab::from_tokens(v.tokens()).tokens() == v.tokens());
    }

    TEST_CASE("config validation") {
        auto c = tiny_config(12);
        c.n_heads = 3;
        CHECK_THROWS_AS(c.validate(), ContractError);
    }

    TEST_CASE("zero-length prefix is bit-identical to no prefix") {
        Rng rng(1);
        const auto c = tiny_config(15);
        const Seq2SeqModel m(c, rng);
        ActivationHistory empty;
        for (std::size_t l = 0; l < c.n_layers; ++l) {
            empty.enc.push_back({Tensor::zeros({0, c.d_model}), Tensor::zeros({0, c.d_model})});
            empty.dec.push_back({Tensor::zeros({0, c.d_model}), Tensor::zeros({0, c.d_model})});
        }
        const auto x = random_ids(7, 15, rng, 3);
        const auto y = random_ids(4, 15, rng, 3);
        const Tensor a = m.encode(x), b = m.encode(x, &empty);
        REQUIRE(a.shape() == b.shape());
        for (std::size_t i = 0; i < a.numel(); ++i) CHECK(a.data()[i] == b.data()[i]);
        CHECK(m.sequence_logprob(x, y) == m.sequence_logprob(x, y, &empty));
    }

    TEST_CASE("prefix changes only key/value lengths") {
        Rng rng(2);
        const auto c = tiny_config(15);
        const Seq2SeqModel m(c, rng);
        const auto h = random_history(c, 5, rng);
        const auto x = random_ids(6, 15, rng, 3);
        const Tensor plain = m.encode(x), pref = m.encode(x, &h);
        CHECK(plain.shape() == pref.shape());
        const std::vector<int> y_in = {Vocab::kBos, 5, 6};
        CHECK(m.decoder_logits(y_in, plain).shape() == m.decoder_logits(y_in, pref, &h).shape());

        // Self-attention rows span L + n keys and are distributions.
        const Tensor emb = num::embedding(m.tok_emb, x);
        nn::AttentionResult kv;
        m.enc_layers[0](emb, &h.enc[0], &kv, true);
        REQUIRE(!kv.weights.empty());
        for (const auto& w : kv.weights) {
            REQUIRE(w.cols() == 5 + x.size());
            for (std::size_t r = 0; r < w.rows(); ++r) {
                double s = 0.0;
                for (std::size_t k = 0; k < w.cols(); ++k) s += w.at(r, k);
                CHECK(std::abs(s - 1.0) < 1e-12);
            }
        }
    }

    TEST_CASE("encoding is deterministic under a seed") {
        Rng r1(3), r2(3);
        const auto c = tiny_config(15);
        const Seq2SeqModel a(c, r1), b(c, r2);
        const std::vector<int> x = {4, 9, 10, 11};
        const Tensor ea = a.encode(x), eb = b.encode(x);
        for (std::size_t i = 0; i < ea.numel(); ++i) CHECK(ea.data()[i] == eb.data()[i]);
    }

    TEST_CASE("overlong input is truncated and counted") {
        Rng rng(4);
        const auto c = tiny_config(15);
        const Seq2SeqModel m(c, rng);
        const auto x = random_ids(c.max_len + 5, 15, rng, 3);
        CHECK(m.encode(x).dim(0) == c.max_len);
        CHECK(m.truncations() == 1);
    }

    TEST_CASE("next-token distribution is normalized") {
        Rng rng(5);
        const auto c = tiny_config(15);
        const Seq2SeqModel m(c, rng);
        const auto h = random_history(c, 3, rng);
        for (int trial = 0; trial < 20; ++trial) {
            const auto x = random_ids(5, 15, rng, 3);
            const Tensor enc = m.encode(x, &h);
            std::vector<int> y = {Vocab::kBos};
            const auto more = random_ids(static_cast<std::size_t>(trial % 4), 15, rng, 3);
            y.insert(y.end(), more.begin(), more.end());
            const Tensor lp = m.next_token_logprobs(y, enc, &h);
            double s = 0.0;
            for (double v : lp.data()) s += std::exp(v);
            CHECK(std::abs(s - 1.0) < 1e-9);
        }
    }

    TEST_CASE("zeroed output head gives a uniform distribution") {
        Rng rng(6);
        auto c = tiny_config(15);
        c.tie_embeddings = false;
        Seq2SeqModel m(c, rng);
        for (double& v : m.head.weight.mutable_data()) v = 0.0;
        for (double& v : m.head.bias.mutable_data()) v = 0.0;
        const std::vector<int> x = {4, 9, 10};
        const std::vector<int> y = {Vocab::kBos, 9};
        const Tensor lp = m.next_token_logprobs(y, m.encode(x));
        for (double v : lp.data()) CHECK(v == doctest::Approx(-std::log(15.0)).epsilon(1e-12));
    }

    TEST_CASE("sequence log-probability follows the chain rule") {
        Rng rng(7);
        const auto c = tiny_config(15);
        const Seq2SeqModel m(c, rng);
        const auto h = random_history(c, 4, rng);
        for (int trial = 0; trial < 20; ++trial) {
            const auto x = random_ids(6, 15, rng, 3);
            const auto y = random_ids(1 + static_cast<std::size_t>(trial % 5), 15, rng, 3);
            const Tensor enc = m.encode(x, &h);
            std::vector<int> prefix = {Vocab::kBos};
            double total = 0.0;
            for (std::size_t i = 0; i <= y.size(); ++i) {
                const int next = i < y.size() ? y[i] : Vocab::kEos;
                total += m.next_token_logprobs(prefix, enc, &h).data()[static_cast<std::size_t>(next)];
                prefix.push_back(next);
            }
            CHECK(m.sequence_logprob(x, y, &h) == doctest::Approx(total).epsilon(1e-12));
            const double nll = m.sequence_nll(x, y, &h).item();
            CHECK(nll == doctest::Approx(-total / static_cast<double>(y.size() + 1)).epsilon(1e-12));
        }
    }

    TEST_CASE("model emitting eos first decodes to nothing") {
        Rng rng(8);
        auto c = tiny_config(15);
        c.tie_embeddings = false;
        Seq2SeqModel m(c, rng);
        for (double& v : m.head.weight.mutable_data()) v = 0.0;
        auto b = m.head.bias.mutable_data();
        std::fill(b.begin(), b.end(), 0.0);
        b[Vocab::kEos] = 5.0;
        const std::vector<int> x = {4, 9, 10};
        CHECK(m.greedy_decode(x, nullptr, 10).empty());
        CHECK(m.beam_search(x, nullptr, 4, 10).ids.empty());
        CHECK_THROWS_AS(m.greedy_decode(x, nullptr, 0), ContractError);
        CHECK_THROWS_AS(m.beam_search(x, nullptr, 0, 5), ContractError);
    }

    TEST_CASE("greedy ties go to the lowest id") {
        Rng rng(9);
        auto c = tiny_config(15);
        c.tie_embeddings = false;
        Seq2SeqModel m(c, rng);
        for (double& v : m.head.weight.mutable_data()) v = 0.0;
        auto b = m.head.bias.mutable_data();
        std::fill(b.begin(), b.end(), 0.0);
        b[11] = b[7] = 3.0;
        const std::vector<int> x = {4};
        CHECK(m.greedy_decode(x, nullptr, 3) == std::vector<int>{7, 7, 7});
    }

    TEST_CASE("beam 1 equals greedy on 50 random models") {
        for (std::uint64_t seed = 0; seed < 50; ++seed) {
            Rng rng(100 + seed);
            const auto c = tiny_config(8 + seed % 7, 8, 1 + seed % 2);
            Seq2SeqModel m(c, rng);
            sharpen(m, 3.0);
            const auto h = random_history(c, seed % 3, rng);
            const auto x = random_ids(3 + seed % 5, c.vocab_size, rng, 3);
            const auto* p = seed % 3 ? &h : nullptr;
            const auto greedy = m.greedy_decode(x, p, 8);
            const auto beam = m.beam_search(x, p, 1, 8);
            CHECK(beam.ids == greedy);
            CHECK(m.greedy_decode(x, p, 8) == greedy);
        }
    }

    TEST_CASE("exhaustive beam matches brute-force search") {
        const std::size_t V = 5, max_steps = 4;
        std::size_t nontrivial = 0;
        for (std::uint64_t seed = 0; seed < 30; ++seed) {
            Rng rng(200 + seed);
            auto c = tiny_config(V, 8, 1);
            Seq2SeqModel m(c, rng);
            sharpen(m, 2.0);
            const auto x = random_ids(3, V, rng);
            // Every sequence of up to max_steps - 1 non-eos tokens, closed by eos.
            std::vector<std::vector<int>> all = {{}};
            std::vector<std::vector<int>> frontier = {{}};
            for (std::size_t len = 1; len < max_steps; ++len) {
                std::vector<std::vector<int>> next;
                for (const auto& s : frontier)
                    for (int t = 0; t < static_cast<int>(V); ++t) {
                        if (t == Vocab::kEos) continue;
                        auto e = s;
                        e.push_back(t);
                        next.push_back(e);
                    }
                all.insert(all.end(), next.begin(), next.end());
                frontier = std::move(next);
            }
            std::vector<std::pair<double, std::vector<int>>> scored;
            for (const auto& s : all) scored.push_back({m.sequence_logprob(x, s), s});
            std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
                if (a.first != b.first) return a.first > b.first;
                auto ea = a.second, eb = b.second;
                ea.push_back(Vocab::kEos);
                eb.push_back(Vocab::kEos);
                return ea < eb;
            });
            if (scored[0].first - scored[1].first < 1e-9) continue;  // float-level tie
            ++nontrivial;
            const auto r = m.beam_search(x, nullptr, 1000, max_steps);
            CHECK(r.finished);
            CHECK(r.ids == scored[0].second);
            CHECK(r.score == doctest::Approx(scored[0].first).epsilon(1e-10));

            // Finished hypotheses never beat the optimum; beam 6 never does worse than beam 1.
            for (std::size_t b = 1; b <= 8; ++b) {
                const auto rb = m.beam_search(x, nullptr, b, max_steps);
                if (rb.finished) CHECK(rb.score <= scored[0].first + 1e-10);
            }
            const auto b1 = m.beam_search(x, nullptr, 1, max_steps), b6 = m.beam_search(x, nullptr, 6, max_steps);
            if (b1.finished) {
                CHECK(b6.finished);
                CHECK(b6.score >= b1.score - 1e-12);
            }
        }
        CHECK(nontrivial >= 20);
    }

    TEST_CASE("activation sequence reads the prefix then the decoder") {
        Rng rng(10);
        const auto c = tiny_config(15);
        const Seq2SeqModel m(c, rng);
        auto h = random_history(c, 3, rng);
        const std::vector<int> x = {4, 9, 10, 11};
        const std::vector<int> y = {12, 13};
        const Tensor h0 = m.activation_sequence(x, y, &h, 0);
        CHECK(h0.numel() == 2 * c.n_layers * c.d_model);
        const Tensor rows = join_history_rows(h.dec);
        for (std::size_t k = 0; k < h0.numel(); ++k) CHECK(h0.data()[k] == rows.at(0, k));

        // Without a prefix, position 0 is the decoder's own state for <bos>.
        const Tensor own = m.activation_sequence(x, y, nullptr, 0);
        CHECK(own.numel() == h0.numel());

        // Perturbing a prefix row changes the first LM-computed history vector.
        const Tensor before = m.activation_sequence(x, y, &h, 3);
        for (double& v : h.dec[0].values.mutable_data()) v += 0.5;
        const Tensor after = m.activation_sequence(x, y, &h, 4);
        const Tensor after3 = m.activation_sequence(x, y, &h, 3);
        bool changed = false;
        for (std::size_t k = c.d_model * 2; k < before.numel(); ++k) changed |= before.data()[k] != after3.data()[k];
        CHECK(changed);
        CHECK(after.numel() == before.numel());
        CHECK_THROWS_AS(m.activation_sequence(x, y, &h, 6), ContractError);
    }

    TEST_CASE("history rows split and join") {
        Rng rng(11);
        const Tensor rows = random_tensor({4, 2 * 3 * 5}, rng, -1, 1, false);
        const auto stack = split_history_rows(rows, 3, 5);
        REQUIRE(stack.size() == 3);
        CHECK(stack[1].keys.at(2, 0) == rows.at(2, 10));
        CHECK(stack[1].values.at(2, 0) == rows.at(2, 15));
        const Tensor back = join_history_rows(stack);
        for (std::size_t i = 0; i < rows.numel(); ++i) CHECK(back.data()[i] == rows.data()[i]);
    }

    TEST_CASE("LM gradients pass finite differences") {
        Rng rng(12);
        const auto c = tiny_config(14);
        Seq2SeqModel m(c, rng);
        const auto h = random_history(c, 2, rng);
        const std::vector<int> x = {4, 9, 10, 11, 12};
        const std::vector<int> y = {9, 13, 12};
        double worst = 0.0;
        std::string worst_name;
        for (const auto& [name, t] : m.parameters()) {
            const auto r = num::finite_difference_check([&] { return m.sequence_nll(x, y, &h); }, t, 1e-5, 24);
            if (r.max_rel_error > worst) {
                worst = r.max_rel_error;
                worst_name = name;
            }
        }
        CAPTURE(worst_name);
        CHECK(worst < 1e-5);
    }
}
