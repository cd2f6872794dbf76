#include "vred/layers.hpp"

#include <cmath>

#include "vred/errors.hpp"

namespace vred::nn {

namespace {

Tensor uniform_init(std::vector<std::size_t> shape, std::size_t fan_in, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Tensor t = Tensor::zeros(std::move(shape));
    for (double& v : t.data) v = rng.uniform(-bound, bound);
    return t;
}

}  // namespace

DenseParams make_dense(std::size_t out, std::size_t in, Rng& rng) {
    DenseParams p;
    p.weight = uniform_init({out, in}, in, rng);
    p.bias = uniform_init({out}, in, rng);
    return p;
}

MlpParams make_mlp(std::size_t out, std::size_t hidden, std::size_t in, Rng& rng) {
    MlpParams p;
    p.layers[0] = make_dense(hidden, in, rng);
    p.layers[1] = make_dense(hidden, hidden, rng);
    p.layers[2] = make_dense(out, hidden, rng);
    return p;
}

LstmParams make_lstm(std::size_t hidden, std::size_t input, Rng& rng) {
    LstmParams p;
    for (auto& g : p.gates) g = make_dense(hidden, input + hidden, rng);
    return p;
}

LstmState LstmState::zero(std::size_t hidden) {
    return LstmState{Tensor::zeros({hidden}), Tensor::zeros({hidden})};
}

void ConvCodecParams::validate() const {
    if (kernel <= stride) {
        throw ConfigError("conv codec: kernel " + std::to_string(kernel) +
                          " must exceed stride " + std::to_string(stride));
    }
}

ConvCodecParams make_conv_codec(std::size_t channels, std::size_t kernel,
                                std::size_t stride, bool use_bias, Rng& rng) {
    ConvCodecParams p;
    p.channels = channels;
    p.kernel = kernel;
    p.stride = stride;
    p.use_bias = use_bias;
    p.validate();
    p.enc_kernels = uniform_init({channels, 1, kernel}, kernel, rng);
    p.dec_kernels = uniform_init({channels, 1, kernel}, channels * kernel, rng);
    p.enc_bias = Tensor::zeros({channels});
    p.dec_bias = Tensor::zeros({1});
    return p;
}

ad::Var ParamBinder::bind(const std::string& name, Tensor& t) {
    ad::Var v = tape_->leaf(t);
    items_.push_back(BoundTensor{name, &t, v});
    return v;
}

DenseVars bind_dense(ParamBinder& b, const std::string& prefix, DenseParams& p) {
    return DenseVars{b.bind(prefix + ".weight", p.weight), b.bind(prefix + ".bias", p.bias)};
}

MlpVars bind_mlp(ParamBinder& b, const std::string& prefix, MlpParams& p) {
    MlpVars v;
    for (std::size_t i = 0; i < 3; ++i) {
        v.layers[i] = bind_dense(b, prefix + ".l" + std::to_string(i), p.layers[i]);
    }
    return v;
}

LstmVars bind_lstm(ParamBinder& b, const std::string& prefix, LstmParams& p) {
    static const char* names[4] = {"i", "f", "o", "g"};
    LstmVars v;
    for (std::size_t i = 0; i < 4; ++i) {
        v.gates[i] = bind_dense(b, prefix + "." + names[i], p.gates[i]);
    }
    return v;
}

ConvCodecVars bind_conv_codec(ParamBinder& b, const std::string& prefix,
                              ConvCodecParams& p) {
    ConvCodecVars v;
    v.enc_kernels = b.bind(prefix + ".enc_kernels", p.enc_kernels);
    v.dec_kernels = b.bind(prefix + ".dec_kernels", p.dec_kernels);
    if (p.use_bias) {
        v.enc_bias = b.bind(prefix + ".enc_bias", p.enc_bias);
        v.dec_bias = b.bind(prefix + ".dec_bias", p.dec_bias);
    }
    v.cfg = &p;
    return v;
}

ad::Var dense_forward(ad::Tape& t, const DenseVars& p, ad::Var x) {
    return t.add(t.matmul(p.weight, x), p.bias);
}

ad::Var mlp_forward(ad::Tape& t, const MlpVars& p, ad::Var x, OutputActivation out_act) {
    ad::Var h = t.tanh(dense_forward(t, p.layers[0], x));
    h = t.tanh(dense_forward(t, p.layers[1], h));
    h = dense_forward(t, p.layers[2], h);
    return out_act == OutputActivation::Sigmoid ? t.sigmoid(h) : h;
}

LstmStateVars lstm_step(ad::Tape& t, const LstmVars& p, ad::Var x, LstmStateVars s) {
    ad::Var xh = t.concat(x, s.h);
    ad::Var ig = t.sigmoid(dense_forward(t, p.gates[0], xh));
    ad::Var fg = t.sigmoid(dense_forward(t, p.gates[1], xh));
    ad::Var og = t.sigmoid(dense_forward(t, p.gates[2], xh));
    ad::Var cand = t.tanh(dense_forward(t, p.gates[3], xh));
    ad::Var c = t.add(t.mul(fg, s.c), t.mul(ig, cand));
    ad::Var h = t.mul(og, t.tanh(c));
    return LstmStateVars{h, c};
}

ad::Var conv_encode(ad::Tape& t, const ConvCodecVars& p, ad::Var audio) {
    const ConvCodecParams& cfg = *p.cfg;
    const Tensor& a = t.value(audio);
    if (a.shape.size() != 2 || a.shape[0] != 1) {
        throw DimensionError("conv_encode: expected [1 x L] input, got " +
                             shape_str(a.shape));
    }
    if (a.shape[1] % cfg.stride != 0) {
        throw ConfigError("conv_encode: length " + std::to_string(a.shape[1]) +
                          " not divisible by stride " + std::to_string(cfg.stride));
    }
    ad::Var f = t.conv1d(audio, p.enc_kernels, cfg.stride, cfg.pad_left(), cfg.pad_right());
    if (cfg.use_bias) f = t.bias_add(f, p.enc_bias);
    return f;
}

ad::Var conv_decode(ad::Tape& t, const ConvCodecVars& p, ad::Var features) {
    const ConvCodecParams& cfg = *p.cfg;
    ad::Var y = t.conv1d_transposed(features, p.dec_kernels, cfg.stride, cfg.pad_left(),
                                    cfg.pad_right());
    if (cfg.use_bias) y = t.bias_add(y, p.dec_bias);
    return y;
}

}  // namespace vred::nn
