#include "vred/vred.hpp"

#include <cmath>
#include <string>

#include "vred/errors.hpp"

namespace vred::model {

namespace {
constexpr double kLog2Pi = 1.8378770664093453;
}

void VredConfig::validate() const {
    if (latent_dim == 0 || hidden == 0 || feature_channels == 0 || window_frames == 0) {
        throw ConfigError("vred config: all dimensions must be positive");
    }
    if (latent_dim > window_dim()) {
        throw ConfigError("vred config: latent_dim " + std::to_string(latent_dim) +
                          " exceeds window dimension " + std::to_string(window_dim()) +
                          " (no compression)");
    }
    if (sigma2_min <= 0.0 || prob_eps <= 0.0 || prob_eps >= 0.5) {
        throw ConfigError("vred config: bad sigma2_min / prob_eps");
    }
}

VredParams make_vred_params(const VredConfig& cfg, Rng& rng) {
    cfg.validate();
    const std::size_t d = cfg.latent_dim;
    const std::size_t h = cfg.hidden;
    const std::size_t w = cfg.window_dim();
    VredParams p;
    p.phi_x = nn::make_dense(h, w, rng);
    p.phi_z = nn::make_dense(h, d, rng);
    p.phi_dec = nn::make_dense(h, w, rng);
    p.prior1 = nn::make_dense(h, h, rng);
    p.prior2 = nn::make_dense(d, h, rng);
    p.enc_mlp = nn::make_mlp(d, h, 2 * h, rng);
    p.dec_mlp = nn::make_mlp(w, h, 2 * h, rng);
    p.lstm = nn::make_lstm(h, 2 * h, rng);
    return p;
}

VredVars bind_vred(nn::ParamBinder& b, VredParams& p) {
    VredVars v;
    v.phi_x = bind_dense(b, "vred.phi_x", p.phi_x);
    v.phi_z = bind_dense(b, "vred.phi_z", p.phi_z);
    v.phi_dec = bind_dense(b, "vred.phi_dec", p.phi_dec);
    v.prior1 = bind_dense(b, "vred.prior1", p.prior1);
    v.prior2 = bind_dense(b, "vred.prior2", p.prior2);
    v.enc_mlp = bind_mlp(b, "vred.enc_mlp", p.enc_mlp);
    v.dec_mlp = bind_mlp(b, "vred.dec_mlp", p.dec_mlp);
    v.lstm = bind_lstm(b, "vred.lstm", p.lstm);
    return v;
}

VredVars bind_vred_const(ad::Tape& t, const VredParams& p) {
    auto cdense = [&](const nn::DenseParams& d) {
        return nn::DenseVars{t.constant(d.weight), t.constant(d.bias)};
    };
    auto cmlp = [&](const nn::MlpParams& m) {
        nn::MlpVars v;
        for (std::size_t i = 0; i < 3; ++i) v.layers[i] = cdense(m.layers[i]);
        return v;
    };
    VredVars v;
    v.phi_x = cdense(p.phi_x);
    v.phi_z = cdense(p.phi_z);
    v.phi_dec = cdense(p.phi_dec);
    v.prior1 = cdense(p.prior1);
    v.prior2 = cdense(p.prior2);
    v.enc_mlp = cmlp(p.enc_mlp);
    v.dec_mlp = cmlp(p.dec_mlp);
    for (std::size_t i = 0; i < 4; ++i) v.lstm.gates[i] = cdense(p.lstm.gates[i]);
    return v;
}

ad::Var prior_step(ad::Tape& t, const VredVars& v, ad::Var h_prev, const VredConfig& cfg) {
    ad::Var hid = t.tanh(dense_forward(t, v.prior1, h_prev));
    ad::Var p = t.sigmoid(dense_forward(t, v.prior2, hid));
    return t.clamp(p, cfg.prob_eps, 1.0 - cfg.prob_eps);
}

ad::Var posterior_step(ad::Tape& t, const VredVars& v, ad::Var x_t, ad::Var h_prev,
                       const VredConfig& cfg) {
    ad::Var fx = t.tanh(dense_forward(t, v.phi_x, x_t));
    ad::Var p = mlp_forward(t, v.enc_mlp, t.concat(fx, h_prev), nn::OutputActivation::Sigmoid);
    return t.clamp(p, cfg.prob_eps, 1.0 - cfg.prob_eps);
}

ReparamSample sample_reparam(ad::Tape& t, ad::Var p, Rng& rng) {
    const Tensor& pv = t.value(p);
    ReparamSample s;
    s.bits.resize(pv.numel());
    s.noise_c = Tensor::zeros(pv.shape);
    for (std::size_t i = 0; i < pv.numel(); ++i) {
        const bool bit = rng.bernoulli(pv[i]);
        s.bits[i] = bit ? 1 : 0;
        // c = t(1-p) - (1-t)p = t - p
        s.noise_c[i] = (bit ? 1.0 : 0.0) - pv[i];
    }
    s.value = t.add_detached(p, s.noise_c);
    return s;
}

ad::Var reparam_with_noise(ad::Tape& t, ad::Var p, Tensor c) {
    return t.add_detached(p, std::move(c));
}

std::vector<std::uint8_t> threshold_latent(const Tensor& p) {
    std::vector<std::uint8_t> bits(p.numel());
    for (std::size_t i = 0; i < p.numel(); ++i) bits[i] = p[i] >= 0.5 ? 1 : 0;
    return bits;
}

GenerateOut generate_step(ad::Tape& t, const VredVars& v, ad::Var z_value, ad::Var h_prev,
                          const VredConfig& cfg) {
    ad::Var fz = t.tanh(dense_forward(t, v.phi_z, z_value));
    ad::Var p_x =
        mlp_forward(t, v.dec_mlp, t.concat(fz, h_prev), nn::OutputActivation::Sigmoid);
    ad::Var one_minus = t.affine(p_x, -1.0, 1.0);
    ad::Var sigma2 = t.max_scalar(t.mul(p_x, one_minus), cfg.sigma2_min);
    return GenerateOut{p_x, sigma2};
}

nn::LstmStateVars recurrence_step(ad::Tape& t, const VredVars& v, ad::Var p_x,
                                  ad::Var z_value, nn::LstmStateVars s) {
    ad::Var fd = t.tanh(dense_forward(t, v.phi_dec, p_x));
    ad::Var fz = t.tanh(dense_forward(t, v.phi_z, z_value));
    return lstm_step(t, v.lstm, t.concat(fd, fz), s);
}

ad::Var bernoulli_kl(ad::Tape& t, ad::Var q, ad::Var p) {
    ad::Var lq = t.log(q);
    ad::Var lp = t.log(p);
    ad::Var q1 = t.affine(q, -1.0, 1.0);
    ad::Var p1 = t.affine(p, -1.0, 1.0);
    ad::Var lq1 = t.log(q1);
    ad::Var lp1 = t.log(p1);
    ad::Var pos = t.mul(q, t.sub(lq, lp));
    ad::Var neg = t.mul(q1, t.sub(lq1, lp1));
    return t.sum(t.add(pos, neg));
}

ad::Var gaussian_log_likelihood(ad::Tape& t, ad::Var x, ad::Var p_x, ad::Var sigma2) {
    ad::Var norm = t.affine(t.log(sigma2), -0.5, -0.5 * kLog2Pi);
    ad::Var quad = t.div(t.square(t.sub(x, p_x)), t.affine(sigma2, 2.0, 0.0));
    return t.sum(t.sub(norm, quad));
}

ElboResult elbo_loss(ad::Tape& t, const VredVars& v, const VredConfig& cfg,
                     std::span<const ad::Var> x_windows, Rng* rng,
                     const std::vector<Tensor>* frozen_noise) {
    if (x_windows.empty()) throw Error("elbo_loss: empty sequence");
    if (frozen_noise == nullptr && rng == nullptr) {
        throw InternalError("elbo_loss: need either an rng or frozen noise");
    }
    nn::LstmStateVars state{t.constant(Tensor::zeros({cfg.hidden})),
                            t.constant(Tensor::zeros({cfg.hidden}))};
    ElboResult res;
    ad::Var loss;
    for (std::size_t step = 0; step < x_windows.size(); ++step) {
        ad::Var prior_p = prior_step(t, v, state.h, cfg);
        ad::Var post_p = posterior_step(t, v, x_windows[step], state.h, cfg);
        ad::Var z_value;
        if (frozen_noise) {
            z_value = reparam_with_noise(t, post_p, (*frozen_noise)[step]);
            res.noise_c.push_back((*frozen_noise)[step]);
        } else {
            ReparamSample s = sample_reparam(t, post_p, *rng);
            z_value = s.value;
            res.noise_c.push_back(std::move(s.noise_c));
        }
        GenerateOut gen = generate_step(t, v, z_value, state.h, cfg);
        state = recurrence_step(t, v, gen.p_x, z_value, state);
        ad::Var kl = bernoulli_kl(t, post_p, prior_p);
        ad::Var ll = gaussian_log_likelihood(t, x_windows[step], gen.p_x, gen.sigma2);
        res.kl.push_back(t.value(kl)[0]);
        res.loglik.push_back(t.value(ll)[0]);
        ad::Var term = t.sub(kl, ll);
        loss = loss.valid() ? t.add(loss, term) : term;
    }
    res.loss = loss;
    return res;
}

EncodeResult encode_sequence(const VredParams& p, const VredConfig& cfg,
                             const std::vector<Tensor>& x_seq, CodingMode mode,
                             std::uint64_t seed) {
    ad::Tape t;
    VredVars v = bind_vred_const(t, p);
    Rng rng(seed);
    nn::LstmStateVars state{t.constant(Tensor::zeros({cfg.hidden})),
                            t.constant(Tensor::zeros({cfg.hidden}))};
    EncodeResult res;
    for (const Tensor& x : x_seq) {
        if (x.numel() != cfg.window_dim()) {
            throw DimensionError("encode_sequence: window size " +
                                 std::to_string(x.numel()) + " != " +
                                 std::to_string(cfg.window_dim()));
        }
        ad::Var xv = t.constant(x);
        ad::Var prior_p = prior_step(t, v, state.h, cfg);
        ad::Var post_p = posterior_step(t, v, xv, state.h, cfg);
        LatentStep step;
        step.prior_p = t.value(prior_p);
        step.post_p = t.value(post_p);
        ad::Var z_value;
        if (mode == CodingMode::Threshold) {
            step.bits = threshold_latent(step.post_p);
            Tensor zt = Tensor::zeros({cfg.latent_dim});
            for (std::size_t i = 0; i < step.bits.size(); ++i) zt[i] = step.bits[i];
            z_value = t.constant(zt);
        } else {
            ReparamSample s = sample_reparam(t, post_p, rng);
            step.bits = s.bits;
            z_value = s.value;
        }
        step.reparam_value = t.value(z_value);
        GenerateOut gen = generate_step(t, v, z_value, state.h, cfg);
        state = recurrence_step(t, v, gen.p_x, z_value, state);
        res.recon.push_back(t.value(gen.p_x));
        res.steps.push_back(std::move(step));
    }
    return res;
}

std::vector<Tensor> decode_sequence(const VredParams& p, const VredConfig& cfg,
                                    const std::vector<std::vector<std::uint8_t>>& bits) {
    ad::Tape t;
    VredVars v = bind_vred_const(t, p);
    nn::LstmStateVars state{t.constant(Tensor::zeros({cfg.hidden})),
                            t.constant(Tensor::zeros({cfg.hidden}))};
    std::vector<Tensor> out;
    for (const auto& step_bits : bits) {
        if (step_bits.size() != cfg.latent_dim) {
            throw FormatError("decode_sequence: latent dimension " +
                              std::to_string(step_bits.size()) + " != " +
                              std::to_string(cfg.latent_dim));
        }
        Tensor zt = Tensor::zeros({cfg.latent_dim});
        for (std::size_t i = 0; i < step_bits.size(); ++i) zt[i] = step_bits[i];
        ad::Var z_value = t.constant(zt);
        GenerateOut gen = generate_step(t, v, z_value, state.h, cfg);
        state = recurrence_step(t, v, gen.p_x, z_value, state);
        out.push_back(t.value(gen.p_x));
    }
    return out;
}

}  // namespace vred::model
