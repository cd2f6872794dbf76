#include <benchmark/benchmark.h>

#include "vred/checkpoint.hpp"
#include "vred/codec.hpp"
#include "vred/layers.hpp"
#include "vred/vred.hpp"

using namespace vred;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (double& v : t.data) v = 2.0 * rng.uniform() - 1.0;
    return t;
}

void bm_conv1d(benchmark::State& state) {
    Rng rng(1);
    const Tensor x = random_tensor({1, 44088}, rng);  // one second, trimmed to the stride
    const Tensor k = random_tensor({32, 1, 88}, rng);
    for (auto _ : state) {
        ad::Tape t;
        benchmark::DoNotOptimize(
            t.value(t.conv1d(t.constant(x), t.constant(k), 44, 22, 22)).data.data());
    }
}
BENCHMARK(bm_conv1d);

void bm_lstm_step(benchmark::State& state) {
    Rng rng(2);
    nn::LstmParams p = nn::make_lstm(128, 256, rng);
    const Tensor x = random_tensor({256}, rng);
    for (auto _ : state) {
        ad::Tape t;
        nn::ParamBinder b(t);
        nn::LstmVars v = nn::bind_lstm(b, "l", p);
        nn::LstmStateVars s{t.constant(Tensor::zeros({128})), t.constant(Tensor::zeros({128}))};
        s = nn::lstm_step(t, v, t.constant(x), s);
        benchmark::DoNotOptimize(t.value(s.h).data.data());
    }
}
BENCHMARK(bm_lstm_step);

void bm_elbo_step_backward(benchmark::State& state) {
    model::VredConfig cfg;  // default 128/128/32/32
    Rng rng(3);
    model::VredParams params = model::make_vred_params(cfg, rng);
    Tensor x = Tensor::zeros({cfg.window_dim()});
    for (double& v : x.data) v = 0.1 + 0.8 * rng.uniform();
    for (auto _ : state) {
        ad::Tape t;
        nn::ParamBinder b(t);
        model::VredVars v = model::bind_vred(b, params);
        const std::vector<ad::Var> xw = {t.constant(x)};
        Rng noise(7);
        model::ElboResult r = model::elbo_loss(t, v, cfg, xw, &noise);
        t.backward(r.loss);
        benchmark::DoNotOptimize(t.grad(b.items()[0].var).data.data());
    }
}
BENCHMARK(bm_elbo_step_backward);

void bm_encode_audio(benchmark::State& state) {
    model::VredConfig cfg;
    Rng rng(4);
    Checkpoint ckpt = make_checkpoint(cfg, 32, 88, 44, false, 44100, rng);
    ckpt.norm.feature_min = -1.0;
    ckpt.norm.feature_max = 1.0;
    const audio::AudioSignal sig = audio::synth_signal(audio::SynthKind::SineMix, 1.0,
                                                       44100, 5);
    for (auto _ : state) {
        codec::EncodedStream s = codec::encode_audio(ckpt, sig);
        benchmark::DoNotOptimize(s.payload.data());
    }
}
BENCHMARK(bm_encode_audio);

}  // namespace

BENCHMARK_MAIN();
