#include <doctest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "helpers.hpp"
#include "tlbench/errors.hpp"
#include "tlbench/gradcheck.hpp"
#include "tlbench/models.hpp"

using namespace tlbench;
using testing::random_tensor;

TEST_CASE("ProbSparse budget and key sample") {
    CHECK(probsparse_budget(96, 5.0) == 23);  // ceil(5 * ln 96) = ceil(22.82)
    CHECK(probsparse_budget(4, 5.0) == 4);
    CHECK(probsparse_budget(1, 5.0) == 1);

    const auto small = probsparse_key_sample(50, 10, 3);
    const auto large = probsparse_key_sample(50, 20, 3);
    CHECK(small.size() == 10);
    CHECK(std::is_sorted(small.begin(), small.end()));
    CHECK(std::set<std::size_t>(small.begin(), small.end()).size() == 10);
    for (auto k : small) CHECK(std::find(large.begin(), large.end(), k) != large.end());
    CHECK(probsparse_key_sample(50, 10, 3) == small);
}

TEST_CASE("ProbSparse with u = L reduces to full attention") {
    Rng rng(21, RngStream::Init);
    for (int trial = 0; trial < 5; ++trial) {
        const Tensor q = random_tensor({2, 12, 4}, rng), k = random_tensor({2, 12, 4}, rng), v = random_tensor({2, 12, 4}, rng);
        const Tensor full = scaled_dot_attention(q, k, v);
        const Tensor sparse = prob_sparse_attention(q, k, v, 1000.0, trial);
        for (std::size_t i = 0; i < full.numel(); ++i) CHECK(sparse.data()[i] == doctest::Approx(full.data()[i]).epsilon(1e-12));
    }
}

TEST_CASE("lazy ProbSparse rows output the mean of V") {
    Rng rng(8, RngStream::Init);
    const Tensor q = random_tensor({16, 4}, rng), k = random_tensor({16, 4}, rng), v = random_tensor({16, 4}, rng);
    const Tensor out = prob_sparse_attention(q, k, v, 1.0, 0);  // u = ceil(ln 16) = 3
    const Tensor full = scaled_dot_attention(q, k, v);
    std::size_t lazy = 0, active = 0;
    for (std::size_t r = 0; r < 16; ++r) {
        bool is_mean = true, is_full = true;
        for (std::size_t c = 0; c < 4; ++c) {
            double mu = 0.0;
            for (std::size_t j = 0; j < 16; ++j) mu += v.at({j, c}) / 16.0;
            is_mean = is_mean && std::abs(out.at({r, c}) - mu) < 1e-12;
            is_full = is_full && std::abs(out.at({r, c}) - full.at({r, c})) < 1e-12;
        }
        lazy += is_mean;
        active += is_full && !is_mean;
    }
    CHECK(active == 3);
    CHECK(lazy == 13);
}

TEST_CASE("forward shapes for every architecture") {
    for (auto arch : {Architecture::Vanilla, Architecture::Informer, Architecture::PatchTST}) {
        CAPTURE(architecture_name(arch));
        ModelConfig c = toy_config(arch);
        Forecaster model(c, 1);
        Rng rng(2, RngStream::Init);
        const Tensor x = random_tensor({3, c.lookback, c.input_width}, rng);
        const Tensor y = model.forward(x, false);
        CHECK(y.shape() == Shape{3, c.horizon});
        for (double v : y.data()) CHECK(std::isfinite(v));
        CHECK_THROWS_AS(model.forward(random_tensor({3, c.lookback + 1, c.input_width}, rng), false), DimensionError);
    }
}

TEST_CASE("model config validation") {
    ModelConfig c;
    c.horizon = 48;
    CHECK_THROWS_AS(validate(c), ConfigError);
    c.horizon = 96;
    CHECK_NOTHROW(validate(c));
    c.n_heads = 5;  // 32 not divisible by 5
    CHECK_THROWS_AS(validate(c), ConfigError);
    CHECK(parse_architecture("PatchTST") == Architecture::PatchTST);
    CHECK_THROWS_AS(parse_architecture("tft"), ConfigError);
}

TEST_CASE("Vanilla and Informer share parameter names") {
    Forecaster a(toy_config(Architecture::Vanilla), 4), b(toy_config(Architecture::Informer), 4);
    REQUIRE(a.parameters().size() == b.parameters().size());
    for (std::size_t i = 0; i < a.parameters().size(); ++i) CHECK(a.parameters()[i].name == b.parameters()[i].name);
}

TEST_CASE("checkpoint round trip and clone independence") {
    for (auto arch : {Architecture::Vanilla, Architecture::Informer, Architecture::PatchTST}) {
        Forecaster model(toy_config(arch), 9);
        std::stringstream buf;
        write_checkpoint(buf, model);
        const Forecaster back = read_checkpoint(buf);
        CHECK(back.config() == model.config());
        Rng rng(1, RngStream::Init);
        const Tensor x = random_tensor({2, 16, 3}, rng);
        const auto y1 = model.forward(x, false), y2 = back.forward(x, false);
        for (std::size_t i = 0; i < y1.numel(); ++i) CHECK(y1.data()[i] == y2.data()[i]);

        Forecaster copy = model.clone();
        Tensor first = copy.parameters().front().value;
        first.mutable_data()[0] += 1.0;
        CHECK(model.parameters().front().value.data()[0] != copy.parameters().front().value.data()[0]);
    }
    std::stringstream junk("not a checkpoint");
    CHECK_THROWS_AS(read_checkpoint(junk), FormatError);
}

TEST_CASE("initialisation depends only on the seed") {
    Forecaster a(toy_config(Architecture::Vanilla), 5), b(toy_config(Architecture::Vanilla), 5),
        c(toy_config(Architecture::Vanilla), 6);
    const auto pa = a.parameters().front().value.data();
    CHECK(std::equal(pa.begin(), pa.end(), b.parameters().front().value.data().begin()));
    CHECK_FALSE(std::equal(pa.begin(), pa.end(), c.parameters().front().value.data().begin()));
}

TEST_CASE("toy models pass the gradient check; faulted rules do not") {
    for (auto arch : {Architecture::Vanilla, Architecture::Informer, Architecture::PatchTST}) {
        CAPTURE(architecture_name(arch));
        const ModelGradCheck ok = check_model_gradients(arch);
        CHECK(ok.entries > 500);
        CHECK(ok.worst < 1e-4);
    }
    for (auto fault : {GradientFault::Gelu, GradientFault::Softmax, GradientFault::Matmul}) {
        set_gradient_fault(fault);
        const ModelGradCheck bad = check_model_gradients(Architecture::Vanilla);
        set_gradient_fault(GradientFault::None);
        CHECK(bad.worst > 1e-2);
    }
}
