#include <array>
#include <cstring>
#include <functional>

#include "gtee/error.hpp"
#include "gtee/numeric/gradcheck.hpp"
#include "gtee/numeric/serialize.hpp"
#include "helpers.hpp"

using namespace gtee;
using namespace gtee::num;
using gtee::testing::random_tensor;

namespace {

struct OpCase {
    const char* name;
    std::vector<Shape> inputs;
    std::function<Tensor(const std::vector<Tensor>&)> apply;
};

std::vector<OpCase> op_cases() {
    using V = const std::vector<Tensor>&;
    static const std::array<int, 4> ids{4, 0, 4, 2};
    static const std::array<int, 4> targets{1, -1, 4, 0};
    return {
        {"matmul", {{3, 4}, {4, 2}}, [](V x) { return matmul(x[0], x[1]); }},
        {"matmul_nt", {{3, 4}, {5, 4}}, [](V x) { return matmul_nt(x[0], x[1]); }},
        {"add", {{3, 4}, {3, 4}}, [](V x) { return add(x[0], x[1]); }},
        {"add_bias", {{3, 4}, {4}}, [](V x) { return add(x[0], x[1]); }},
        {"sub", {{2, 3}, {2, 3}}, [](V x) { return sub(x[0], x[1]); }},
        {"mul", {{2, 3}, {2, 3}}, [](V x) { return mul(x[0], x[1]); }},
        {"scale", {{2, 3}}, [](V x) { return scale(x[0], -1.7); }},
        {"softmax", {{3, 5}}, [](V x) { return softmax(x[0]); }},
        {"log_softmax", {{3, 5}}, [](V x) { return log_softmax(x[0]); }},
        {"layernorm", {{3, 6}, {6}, {6}}, [](V x) { return layernorm(x[0], x[1], x[2]); }},
        {"gelu", {{3, 4}}, [](V x) { return gelu(x[0]); }},
        {"relu", {{3, 4}}, [](V x) { return relu(x[0]); }},
        {"embedding", {{5, 3}}, [](V x) { return embedding(x[0], ids); }},
        {"concat0", {{2, 3}, {1, 3}}, [](V x) { return concat(std::span<const Tensor>(x), 0); }},
        {"concat1", {{2, 3}, {2, 2}}, [](V x) { return concat(std::span<const Tensor>(x), 1); }},
        {"slice", {{4, 5}}, [](V x) { return slice(slice(x[0], 0, 1, 3), 1, 2, 5); }},
        {"reshape_transpose", {{2, 6}}, [](V x) { return transpose(reshape(x[0], {3, 4})); }},
        {"sum", {{3, 3}}, [](V x) { return sum(mul(x[0], x[0])); }},
        {"mean", {{3, 3}}, [](V x) { return mean(mul(x[0], x[0])); }},
        {"cross_entropy", {{4, 5}}, [](V x) { return cross_entropy(x[0], targets, -1); }},
    };
}

}  // namespace

TEST_SUITE("numeric") {
    TEST_CASE("matmul by identity returns the other operand") {
        Rng rng(1);
        Tensor a = random_tensor({3, 3}, rng);
        Tensor eye = Tensor::from({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
        const Tensor out = matmul(eye, a);
        for (std::size_t i = 0; i < 9; ++i) CHECK(out.data()[i] == a.data()[i]);
    }

    TEST_CASE("softmax of equal logits is uniform") {
        const Tensor p = softmax(Tensor::from({3}, {0, 0, 0}));
        for (double v : p.data()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    }

    TEST_CASE("cross entropy of a confident correct prediction is zero") {
        const std::array<int, 1> t{2};
        const Tensor logits = Tensor::from({1, 3}, {-1e4, -1e4, 0.0});
        CHECK(cross_entropy(logits, t).item() == doctest::Approx(0.0).epsilon(1e-12));
    }

    TEST_CASE("product rule") {
        Tensor x = Tensor::scalar(2.0, true), y = Tensor::scalar(3.0, true);
        mul(x, y).backward();
        CHECK(x.grad()[0] == 3.0);
        CHECK(y.grad()[0] == 2.0);
    }

    TEST_CASE("softmax cross entropy gradient is p minus one-hot") {
        Rng rng(2);
        Tensor z = random_tensor({1, 6}, rng);
        const std::array<int, 1> t{4};
        cross_entropy(z, t).backward();
        const Tensor p = softmax(z.detach());
        for (std::size_t i = 0; i < 6; ++i) {
            CHECK(z.grad()[i] == doctest::Approx(p.data()[i] - (i == 4 ? 1.0 : 0.0)).epsilon(1e-12));
        }
        const auto r = finite_difference_check([&] { return cross_entropy(z, t); }, z, 1e-6);
        CHECK(r.max_rel_error < 1e-6);
    }

    TEST_CASE("layernorm gradient on constant rows") {
        Tensor x = Tensor::full({2, 5}, 0.7, true);
        const Tensor g = Tensor::from({5}, {1.0, -0.5, 2.0, 0.3, 1.1});
        const Tensor b = Tensor::zeros({5});
        const Tensor w = Tensor::from({2, 5}, {0.3, -1, 0.2, 0.9, -0.4, 1, 0.5, -0.6, 0.1, 0.8});
        auto f = [&] { return sum(mul(layernorm(x, g, b), w)); };
        const auto r = finite_difference_check(f, x, 1e-6);
        CHECK(r.max_rel_error < 1e-6);
    }

    TEST_CASE("finite difference check on simple functions") {
        Tensor x = Tensor::from({2}, {1.0, 2.0}, true);
        CHECK(finite_difference_check([](const Tensor& t) { return sum(mul(t, t)); }, x, 1e-6) < 1e-8);
        CHECK(finite_difference_check([](const Tensor&) { return Tensor::scalar(4.0); }, x, 1e-6) == 0.0);
        CHECK_THROWS_AS(finite_difference_check([](const Tensor& t) { return sum(t); }, x, 0.0), ContractError);
    }

    TEST_CASE("extrapolated differences resolve a tiny gradient") {
        // d/dz3 of the cross entropy is softmax(z)_3, about 1.5e-7 here.
        Tensor z = Tensor::from({1, 3}, {0.0, 0.0, -15.0}, true);
        const std::array<int, 1> t{0};
        auto f = [&] { return cross_entropy(z, t); };
        const auto plain = finite_difference_check(f, z, 1e-5);
        const auto ridders = finite_difference_check(f, z, 1e-2, 0, 0, 0.0, FdMethod::Ridders);
        CHECK(plain.max_rel_error > 1e-6);
        CHECK(ridders.max_rel_error < 1e-6);
        CHECK(ridders.checked == 3);
    }

    TEST_CASE("every op passes 100 random gradient checks") {
        Rng rng(3);
        for (const auto& c : op_cases()) {
            CAPTURE(c.name);
            double worst = 0.0;
            for (int trial = 0; trial < 100; ++trial) {
                std::vector<Tensor> xs;
                for (const auto& s : c.inputs) xs.push_back(random_tensor(s, rng));
                const Tensor probe = c.apply(xs);
                // Fixed random readout so every output coordinate carries gradient.
                const Tensor w = random_tensor(probe.shape(), rng, -1.0, 1.0, false);
                auto f = [&] { return probe.numel() == 1 ? c.apply(xs) : sum(mul(c.apply(xs), w)); };
                for (const Tensor& x : xs) worst = std::max(worst, finite_difference_check(f, x, 1e-6).max_rel_error);
            }
            CHECK(worst < 1e-5);
        }
    }

    TEST_CASE("softmax rows are distributions") {
        Rng rng(4);
        for (int trial = 0; trial < 100; ++trial) {
            const Tensor p = softmax(random_tensor({4, 7}, rng, -30.0, 30.0, false));
            for (std::size_t i = 0; i < 4; ++i) {
                double s = 0.0;
                for (std::size_t j = 0; j < 7; ++j) {
                    CHECK(p.at(i, j) >= 0.0);
                    s += p.at(i, j);
                }
                CHECK(std::abs(s - 1.0) < 1e-9);
            }
        }
    }

    TEST_CASE("shape errors name the op") {
        Tensor a = Tensor::zeros({2, 3}), b = Tensor::zeros({2, 3});
        try {
            matmul(a, b);
            FAIL("expected DimensionError");
        } catch (const DimensionError& e) {
            CHECK(std::string(e.what()).find("matmul") != std::string::npos);
        }
        CHECK_THROWS_AS(add(a, Tensor::zeros({3, 2})), DimensionError);
    }

    TEST_CASE("backward needs a scalar") {
        Tensor a = Tensor::zeros({2, 2}, true);
        CHECK_THROWS_AS(scale(a, 2.0).backward(), ContractError);
    }

    TEST_CASE("forward is deterministic") {
        Rng r1(9), r2(9);
        const Tensor a = softmax(matmul(random_tensor({3, 4}, r1), random_tensor({4, 4}, r1)));
        const Tensor b = softmax(matmul(random_tensor({3, 4}, r2), random_tensor({4, 4}, r2)));
        for (std::size_t i = 0; i < a.numel(); ++i) CHECK(a.data()[i] == b.data()[i]);
    }

    TEST_CASE("tensor file layout") {
        const std::vector<NamedTensor> ts = {{"ab", Tensor::from({1, 2}, {1.0, -2.5})}};
        const auto bytes = encode_tensors(ts);
        REQUIRE(bytes.size() == 4 + 4 + 4 + 4 + 2 + 4 + 16 + 1 + 16);
        CHECK(std::memcmp(bytes.data(), "GTEE", 4) == 0);
        CHECK(bytes[4] == 1);
        CHECK(bytes[8] == 1);
        CHECK(bytes[12] == 2);
        CHECK(bytes[16] == 'a');
        CHECK(bytes[18] == 2);
        CHECK(bytes[22] == 1);
        CHECK(bytes[30] == 2);
        CHECK(bytes[38] == kDtypeF64);
        double v;
        std::memcpy(&v, bytes.data() + 47, 8);
        CHECK(v == -2.5);
        const auto back = decode_tensors(bytes);
        REQUIRE(back.size() == 1);
        CHECK(back[0].name == "ab");
        CHECK(back[0].tensor.shape() == Shape{1, 2});
        CHECK(back[0].tensor.data()[1] == -2.5);

        auto bad = bytes;
        bad[0] = 'X';
        CHECK_THROWS_AS(decode_tensors(bad), DataError);
        bad = bytes;
        bad.pop_back();
        CHECK_THROWS_AS(decode_tensors(bad), DataError);
    }
}
