#include <doctest.h>

#include <cmath>
#include <functional>

#include "vred/errors.hpp"
#include "vred/layers.hpp"
#include "vred/rng.hpp"

using namespace vred;
using ad::Tape;
using ad::Var;

namespace {

Tensor random_vec(std::size_t n, Rng& rng) {
    Tensor t = Tensor::zeros({n});
    for (double& v : t.data) v = 2.0 * rng.uniform() - 1.0;
    return t;
}

/// FD check over every tensor a binder registers while building `loss`.
void check_all_params(const std::function<Var(nn::ParamBinder&)>& loss, double tol = 1e-4) {
    Tape t;
    nn::ParamBinder b(t);
    t.backward(loss(b));
    for (const auto& item : b.items()) {
        auto objective = [&]() {
            Tape t2;
            nn::ParamBinder b2(t2);
            return t2.value(loss(b2)).data[0];
        };
        CHECK(ad::finite_difference_check(objective, *item.tensor, t.grad(item.var)) < tol);
    }
}

}  // namespace

TEST_SUITE("layers") {

TEST_CASE("dense_forward identity and constant") {
    Tape t;
    nn::DenseParams p;
    p.weight = Tensor({2, 2}, {1, 0, 0, 1});
    p.bias = Tensor::zeros({2});
    nn::ParamBinder b(t);
    nn::DenseVars v = nn::bind_dense(b, "d", p);
    Var x = t.constant(Tensor::from_vector({3.0, -1.0}));
    CHECK(t.value(nn::dense_forward(t, v, x)).data == std::vector<double>{3.0, -1.0});

    nn::DenseParams q;
    q.weight = Tensor::zeros({2, 2});
    q.bias = Tensor::from_vector({0.5, -0.5});
    nn::DenseVars vq = nn::bind_dense(b, "q", q);
    CHECK(t.value(nn::dense_forward(t, vq, x)).data == std::vector<double>{0.5, -0.5});
}

TEST_CASE("dense gradient check") {
    Rng rng(3);
    nn::DenseParams p = nn::make_dense(3, 4, rng);
    const Tensor x = random_vec(4, rng);
    check_all_params([&](nn::ParamBinder& b) {
        Tape& t = b.tape();
        nn::DenseVars v = nn::bind_dense(b, "d", p);
        return t.sum(t.square(nn::dense_forward(t, v, t.constant(x))));
    });
}

TEST_CASE("mlp_forward zero params") {
    Rng rng(1);
    nn::MlpParams p = nn::make_mlp(3, 4, 5, rng);
    for (auto& l : p.layers) {
        l.weight = Tensor::zeros(l.weight.shape);
        l.bias = Tensor::zeros(l.bias.shape);
    }
    Tape t;
    nn::ParamBinder b(t);
    nn::MlpVars v = nn::bind_mlp(b, "m", p);
    Var x = t.constant(Tensor::from_vector({1, 2, 3, 4, 5}));
    CHECK(t.value(nn::mlp_forward(t, v, x, nn::OutputActivation::Sigmoid)).data ==
          std::vector<double>(3, 0.5));
    CHECK(t.value(nn::mlp_forward(t, v, x, nn::OutputActivation::Identity)).data ==
          std::vector<double>(3, 0.0));
}

TEST_CASE("mlp sigmoid output strictly in (0,1) and gradient check") {
    Rng rng(7);
    nn::MlpParams p = nn::make_mlp(3, 4, 5, rng);
    const Tensor x = random_vec(5, rng);
    Tape t;
    nn::ParamBinder b(t);
    nn::MlpVars v = nn::bind_mlp(b, "m", p);
    const Tensor& y = t.value(nn::mlp_forward(t, v, t.constant(x), nn::OutputActivation::Sigmoid));
    for (double e : y.data) {
        CHECK(e > 0.0);
        CHECK(e < 1.0);
    }
    check_all_params([&](nn::ParamBinder& b2) {
        Tape& t2 = b2.tape();
        nn::MlpVars v2 = nn::bind_mlp(b2, "m", p);
        return t2.sum(t2.square(
            nn::mlp_forward(t2, v2, t2.constant(x), nn::OutputActivation::Sigmoid)));
    });
}

TEST_CASE("lstm_step zero params") {
    Rng rng(1);
    nn::LstmParams p = nn::make_lstm(3, 2, rng);
    for (auto& g : p.gates) {
        g.weight = Tensor::zeros(g.weight.shape);
        g.bias = Tensor::zeros(g.bias.shape);
    }
    Tape t;
    nn::ParamBinder b(t);
    nn::LstmVars v = nn::bind_lstm(b, "l", p);
    Var x = t.constant(Tensor::from_vector({1.0, -1.0}));

    SUBCASE("zero state stays zero") {
        nn::LstmStateVars s{t.constant(Tensor::zeros({3})), t.constant(Tensor::zeros({3}))};
        nn::LstmStateVars s2 = nn::lstm_step(t, v, x, s);
        CHECK(t.value(s2.h).data == std::vector<double>(3, 0.0));
        CHECK(t.value(s2.c).data == std::vector<double>(3, 0.0));
    }
    SUBCASE("c=2 halves through the 0.5 forget gate") {
        nn::LstmStateVars s{t.constant(Tensor::zeros({3})), t.constant(Tensor::full({3}, 2.0))};
        nn::LstmStateVars s2 = nn::lstm_step(t, v, x, s);
        for (double c : t.value(s2.c).data) CHECK(c == doctest::Approx(1.0).epsilon(1e-15));
    }
}

TEST_CASE("lstm output h strictly bounded by 1") {
    Rng rng(9);
    nn::LstmParams p = nn::make_lstm(4, 3, rng);
    for (auto& g : p.gates) {
        for (double& w : g.weight.data) w *= 50.0;  // drive gates toward saturation
    }
    Tape t;
    nn::ParamBinder b(t);
    nn::LstmVars v = nn::bind_lstm(b, "l", p);
    nn::LstmStateVars s{t.constant(Tensor::zeros({4})), t.constant(Tensor::full({4}, 10.0))};
    nn::LstmStateVars s2 = nn::lstm_step(t, v, t.constant(Tensor::full({3}, 5.0)), s);
    for (double h : t.value(s2.h).data) CHECK(std::abs(h) < 1.0);
}

TEST_CASE("gradient through 5 chained LSTM steps (BPTT)") {
    Rng rng(13);
    nn::LstmParams p = nn::make_lstm(3, 2, rng);
    std::vector<Tensor> xs;
    for (int i = 0; i < 5; ++i) xs.push_back(random_vec(2, rng));
    check_all_params([&](nn::ParamBinder& b) {
        Tape& t = b.tape();
        nn::LstmVars v = nn::bind_lstm(b, "l", p);
        nn::LstmStateVars s{t.constant(Tensor::zeros({3})), t.constant(Tensor::zeros({3}))};
        for (const auto& x : xs) s = nn::lstm_step(t, v, t.constant(x), s);
        return t.sum(t.square(s.h));
    });
}

TEST_CASE("conv codec shapes") {
    Rng rng(2);
    nn::ConvCodecParams p = nn::make_conv_codec(32, 88, 44, false, rng);
    Tape t;
    nn::ParamBinder b(t);
    nn::ConvCodecVars v = nn::bind_conv_codec(b, "conv", p);

    SUBCASE("L=880 -> 32x20 and back") {
        Var x = t.constant(Tensor::zeros({1, 880}));
        Var f = nn::conv_encode(t, v, x);
        CHECK(t.value(f).shape == std::vector<std::size_t>{32, 20});
        CHECK(t.value(nn::conv_decode(t, v, f)).shape == std::vector<std::size_t>{1, 880});
    }
    SUBCASE("L=44 -> one frame") {
        Var f = nn::conv_encode(t, v, t.constant(Tensor::zeros({1, 44})));
        CHECK(t.value(f).shape == std::vector<std::size_t>{32, 1});
    }
    SUBCASE("zero kernels -> zero features, zero decode") {
        nn::ConvCodecParams z = p;
        z.enc_kernels = Tensor::zeros(z.enc_kernels.shape);
        z.dec_kernels = Tensor::zeros(z.dec_kernels.shape);
        nn::ParamBinder b2(t);
        nn::ConvCodecVars vz = nn::bind_conv_codec(b2, "z", z);
        Var f = nn::conv_encode(t, vz, t.constant(Tensor::full({1, 88}, 0.7)));
        for (double e : t.value(f).data) CHECK(e == 0.0);
        Var y = nn::conv_decode(t, vz, f);
        for (double e : t.value(y).data) CHECK(e == 0.0);
    }
    SUBCASE("indivisible length rejected") {
        CHECK_THROWS_AS((void)nn::conv_encode(t, v, t.constant(Tensor::zeros({1, 45}))),
                        ConfigError);
    }
}

TEST_CASE("conv codec round-trip shape holds for odd K-S padding split") {
    Rng rng(4);
    nn::ConvCodecParams p = nn::make_conv_codec(8, 21, 10, false, rng);  // pad 5+6
    Tape t;
    nn::ParamBinder b(t);
    nn::ConvCodecVars v = nn::bind_conv_codec(b, "conv", p);
    Var f = nn::conv_encode(t, v, t.constant(Tensor::zeros({1, 200})));
    CHECK(t.value(f).shape == std::vector<std::size_t>{8, 20});
    CHECK(t.value(nn::conv_decode(t, v, f)).shape == std::vector<std::size_t>{1, 200});
}

TEST_CASE("conv codec gradient check, with and without bias") {
    Rng rng(6);
    for (bool bias : {false, true}) {
        nn::ConvCodecParams p = nn::make_conv_codec(3, 6, 2, bias, rng);
        Tensor x = Tensor::zeros({1, 16});
        for (double& e : x.data) e = 2.0 * rng.uniform() - 1.0;
        check_all_params([&](nn::ParamBinder& b) {
            Tape& t = b.tape();
            nn::ConvCodecVars v = nn::bind_conv_codec(b, "c", p);
            return t.sum(t.square(nn::conv_decode(t, v, nn::conv_encode(t, v, t.constant(x)))));
        });
    }
}

TEST_CASE("conv codec invariants") {
    Rng rng(1);
    CHECK_THROWS_AS((void)nn::make_conv_codec(4, 4, 4, false, rng), ConfigError);  // K <= S
    nn::ConvCodecParams p = nn::make_conv_codec(4, 9, 4, false, rng);
    CHECK(p.pad_left() == 2);
    CHECK(p.pad_right() == 3);
}

}  // TEST_SUITE
