#include <cmath>

#include "gtee/corpus.hpp"
#include "gtee/error.hpp"
#include "gtee/irrelevance.hpp"
#include "gtee/promptgen.hpp"
#include "helpers.hpp"

using namespace gtee;
using namespace gtee::testing;

namespace {

using Mat = std::vector<std::vector<double>>;

Mat to_mat(const Tensor& t) {
    Mat m(t.dim(0), std::vector<double>(t.dim(1)));
    for (std::size_t i = 0; i < t.dim(0); ++i)
        for (std::size_t j = 0; j < t.dim(1); ++j) m[i][j] = t.at(i, j);
    return m;
}

Mat linear(const Mat& x, const nn::Linear& l) {
    const Mat w = to_mat(l.weight);
    Mat y(x.size(), std::vector<double>(w[0].size()));
    for (std::size_t i = 0; i < x.size(); ++i)
        for (std::size_t j = 0; j < w[0].size(); ++j) {
            double s = l.bias.data()[j];
            for (std::size_t k = 0; k < w.size(); ++k) s += x[i][k] * w[k][j];
            y[i][j] = s;
        }
    return y;
}

Mat layer_norm(const Mat& x, const nn::LayerNorm& ln) {
    Mat y = x;
    for (auto& row : y) {
        double mu = 0.0, var = 0.0;
        for (double v : row) mu += v;
        mu /= static_cast<double>(row.size());
        for (double v : row) var += (v - mu) * (v - mu);
        var /= static_cast<double>(row.size());
        for (std::size_t j = 0; j < row.size(); ++j)
            row[j] = (row[j] - mu) / std::sqrt(var + 1e-5) * ln.gain.data()[j] + ln.bias.data()[j];
    }
    return y;
}

Mat gelu(Mat x) {
    for (auto& row : x)
        for (double& v : row) v = 0.5 * v * (1.0 + std::tanh(std::sqrt(2.0 / M_PI) * (v + 0.044715 * v * v * v)));
    return x;
}

Mat add(Mat a, const Mat& b) {
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < a[i].size(); ++j) a[i][j] += b[i][j];
    return a;
}

Mat attention(const Mat& h, const nn::MultiHeadAttention& a) {
    const Mat q = linear(h, a.query), k = linear(h, a.key), v = linear(h, a.value);
    const std::size_t n = h.size(), d = q[0].size(), dh = d / a.heads;
    Mat ctx(n, std::vector<double>(d, 0.0));
    for (std::size_t hd = 0; hd < a.heads; ++hd)
        for (std::size_t i = 0; i < n; ++i) {
            std::vector<double> s(n);
            double mx = -1e300, z = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                double dot = 0.0;
                for (std::size_t c = hd * dh; c < (hd + 1) * dh; ++c) dot += q[i][c] * k[j][c];
                s[j] = dot / std::sqrt(static_cast<double>(dh));
                mx = std::max(mx, s[j]);
            }
            for (double& x : s) z += (x = std::exp(x - mx));
            for (std::size_t j = 0; j < n; ++j)
                for (std::size_t c = hd * dh; c < (hd + 1) * dh; ++c) ctx[i][c] += s[j] / z * v[j][c];
        }
    return linear(ctx, a.out);
}

// Independent forward pass over plain vectors.
std::array<double, 2> oracle_logits(const ICModel& m, const std::vector<int>& ids) {
    const auto& e = m.encoder;
    const Mat tok = to_mat(e.tok_emb), pos = to_mat(e.pos_emb);
    Mat x{std::vector<double>(e.pool.data().begin(), e.pool.data().end())};
    for (int id : ids) x.push_back(tok[static_cast<std::size_t>(id)]);
    for (std::size_t i = 0; i < x.size(); ++i)
        for (std::size_t j = 0; j < x[i].size(); ++j) x[i][j] += pos[i][j];
    for (const auto& layer : e.layers) {
        x = add(x, attention(layer_norm(x, layer.ln_attn), layer.attn));
        x = add(x, linear(gelu(linear(layer_norm(x, layer.ln_ff), layer.ff.up)), layer.ff.down));
    }
    const Mat pooled{layer_norm(x, e.final_ln)[0]};
    const Mat out = linear(gelu(linear(pooled, m.hidden)), m.out);
    return {out[0][0], out[0][1]};
}

Dataset synthetic(std::size_t n, std::uint64_t seed, const std::string& prefix) {
    SyntheticOptions so;
    so.n_sents = n;
    so.irrelevant_rate = 0.5;
    so.seed = seed;
    so.id_prefix = prefix;
    return generate_synthetic(toy_ontology(), so);
}

ICModel small_ic(const Dataset& data, std::uint64_t seed, nn::EncoderConfig config = {0, 16, 1, 2, 32, 64}) {
    Vocab vocab;
    for (const auto& s : data)
        for (const auto& t : s.tokens) vocab.add(t);
    return create_ic(std::move(vocab), config, seed);
}

}  // namespace

TEST_SUITE("irrelevance") {
    TEST_CASE("labels come from gold records") {
        SentenceInstance s{"d", "s", {"a", "b"}, {}};
        CHECK_FALSE(is_relevant(s));
        s.events.push_back({"Life:Be-Born", {0, 1}, "a", {}});
        CHECK(is_relevant(s));
    }

    TEST_CASE("forward pass agrees with a plain re-implementation") {
        const auto data = synthetic(20, 1, "f");
        Vocab vocab;
        for (const auto& s : data)
            for (const auto& t : s.tokens) vocab.add(t);
        const ICModel m = create_ic(vocab, {0, 16, 2, 4, 32, 64}, 9);
        for (const auto& s : data) {
            const auto ids = m.vocab.tokenize(join_tokens(s.tokens));
            const Tensor l = m.logits(ids);
            const auto o = oracle_logits(m, ids);
            CHECK(l.at(0, 0) == doctest::Approx(o[0]).epsilon(1e-12));
            CHECK(l.at(0, 1) == doctest::Approx(o[1]).epsilon(1e-12));
            const Tensor p = m.probabilities(ids);
            CHECK(p.at(0, 0) + p.at(0, 1) == doctest::Approx(1.0).epsilon(1e-14));
            CHECK(classify(m, s) == (o[1] >= o[0]));
            CHECK(classify(m, s) == classify(m, s));
        }
    }

    TEST_CASE("tied logits are relevant") {
        const auto data = synthetic(4, 2, "t");
        ICModel m = small_ic(data, 3);
        for (double& v : m.out.weight.mutable_data()) v = 0.0;
        for (double& v : m.out.bias.mutable_data()) v = 0.7;
        for (const auto& s : data) CHECK(classify(m, s));
        m.out.bias.mutable_data()[0] = 0.8;
        for (const auto& s : data) CHECK_FALSE(classify(m, s));
    }

    TEST_CASE("separable synthetic contexts reach high dev accuracy") {
        const auto train = synthetic(300, 4, "tr");
        const auto dev = synthetic(100, 5, "dv");
        // The cue-word indicator alone is a perfect linear separator.
        const auto& cues = irrelevance_cues();
        for (const Dataset* d : {&train, &dev})
            for (const auto& s : *d) {
                const bool cue = std::any_of(s.tokens.begin(), s.tokens.end(),
                                             [&](const std::string& t) { return std::count(cues.begin(), cues.end(), t) > 0; });
                CHECK(cue != is_relevant(s));
            }
        ICModel m = small_ic(train, 6, {0, 32, 2, 4, 64, 128});
        const auto r = train_ic(m, train, dev, ic_desk_config());
        CHECK(r.log.size() == ic_desk_config().epochs);
        CHECK(r.best_dev_accuracy >= 0.95);
        CHECK(accuracy(m, dev) == doctest::Approx(r.best_dev_accuracy));
        CHECK(r.log[r.best_epoch - 1].dev_accuracy == r.best_dev_accuracy);
    }

    TEST_CASE("single-class training data is rejected") {
        auto data = synthetic(10, 7, "s");
        ICModel m = small_ic(data, 1);
        Dataset only;
        for (const auto& s : data)
            if (!is_relevant(s)) only.push_back(s);
        REQUIRE_FALSE(only.empty());
        CHECK_THROWS_AS(train_ic(m, only, only, ic_desk_config()), DataError);
    }

    TEST_CASE("context filters") {
        const auto data = synthetic(30, 8, "c");
        Dataset contexts = data;
        for (auto& s : contexts) s.events.clear();
        const ICModel m = small_ic(data, 2);

        const auto none = filter_contexts(ICMode::None, contexts, nullptr, nullptr);
        CHECK(std::count(none.begin(), none.end(), 1) == 30);

        const auto gold = filter_contexts(ICMode::Gold, contexts, nullptr, &data);
        for (std::size_t i = 0; i < data.size(); ++i) CHECK(static_cast<bool>(gold[i]) == is_relevant(data[i]));

        Dataset all_relevant;
        for (const auto& s : data)
            if (is_relevant(s)) all_relevant.push_back(s);
        const auto id = filter_contexts(ICMode::Gold, all_relevant, nullptr, &all_relevant);
        CHECK(std::count(id.begin(), id.end(), 1) == static_cast<long>(all_relevant.size()));

        const auto trained = filter_contexts(ICMode::Trained, contexts, &m, nullptr);
        for (std::size_t i = 0; i < contexts.size(); ++i) CHECK(static_cast<bool>(trained[i]) == classify(m, contexts[i]));

        CHECK_THROWS_AS(filter_contexts(ICMode::Trained, contexts, nullptr, nullptr), ContractError);
        CHECK_THROWS_AS(filter_contexts(ICMode::Gold, contexts, nullptr, nullptr), ContractError);
        Dataset shorter(data.begin(), data.end() - 1);
        CHECK_THROWS_AS(filter_contexts(ICMode::Gold, contexts, nullptr, &shorter), DataError);

        CHECK(parse_ic_mode("gold") == ICMode::Gold);
        CHECK(to_string(parse_ic_mode("trained")) == "trained");
        CHECK_THROWS_AS(parse_ic_mode("oracle"), ContractError);
    }

    TEST_CASE("save and load") {
        const auto data = synthetic(10, 9, "l");
        const ICModel m = small_ic(data, 4);
        TempDir dir("ic");
        save_ic(dir.path(), m);
        const ICModel back = load_ic(dir.path());
        CHECK(back.vocab.tokens() == m.vocab.tokens());
        const auto a = m.parameters(), b = back.parameters();
        REQUIRE(a.size() == b.size());
        for (std::size_t i = 0; i < a.size(); ++i) {
            CHECK(a[i].name == b[i].name);
            CHECK(std::equal(a[i].tensor.data().begin(), a[i].tensor.data().end(), b[i].tensor.data().begin()));
        }
        for (const auto& s : data) CHECK(classify(m, s) == classify(back, s));
        CHECK_THROWS_AS(load_ic(dir.path() / "missing"), DataError);
    }
}
