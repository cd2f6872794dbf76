#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "vred/layers.hpp"
#include "vred/rng.hpp"
#include "vred/tape.hpp"
#include "vred/tensor.hpp"

namespace vred::model {

struct VredConfig {
    std::size_t latent_dim = 128;        // D
    std::size_t hidden = 128;            // H
    std::size_t feature_channels = 32;   // C
    std::size_t window_frames = 32;      // feature frames per timestep
    double sigma2_min = 1e-4;
    double prob_eps = 1e-6;

    std::size_t window_dim() const { return feature_channels * window_frames; }
    void validate() const;
};

/// All learnable VRED parameters. The feature maps phi_x, phi_z and phi_dec
/// are single dense layers of width `hidden` followed by tanh; the prior is
/// two dense layers; encoder and decoder are 3-layer MLPs with sigmoid output.
struct VredParams {
    nn::DenseParams phi_x;     // window_dim -> hidden
    nn::DenseParams phi_z;     // latent_dim -> hidden
    nn::DenseParams phi_dec;   // window_dim -> hidden
    nn::DenseParams prior1;    // hidden -> hidden
    nn::DenseParams prior2;    // hidden -> latent_dim
    nn::MlpParams enc_mlp;     // 2*hidden -> latent_dim
    nn::MlpParams dec_mlp;     // 2*hidden -> window_dim
    nn::LstmParams lstm;       // input 2*hidden, hidden H
};

VredParams make_vred_params(const VredConfig& cfg, Rng& rng);

struct VredVars {
    nn::DenseVars phi_x, phi_z, phi_dec, prior1, prior2;
    nn::MlpVars enc_mlp, dec_mlp;
    nn::LstmVars lstm;
};

VredVars bind_vred(nn::ParamBinder& b, VredParams& p);
/// Forward-only binding for inference paths; parameters enter the tape as
/// untracked constants.
VredVars bind_vred_const(ad::Tape& t, const VredParams& p);

// ---- per-step operations ----------------------------------------------

/// p_t = clamp(sigmoid(prior2(tanh(prior1(h_prev)))))
ad::Var prior_step(ad::Tape& t, const VredVars& v, ad::Var h_prev, const VredConfig& cfg);

/// p_{z,t} = clamp(enc_mlp([tanh(phi_x x_t); h_prev]))
ad::Var posterior_step(ad::Tape& t, const VredVars& v, ad::Var x_t, ad::Var h_prev,
                       const VredConfig& cfg);

struct ReparamSample {
    std::vector<std::uint8_t> bits;
    Tensor noise_c;   // detached c = t(1-p) - (1-t)p
    ad::Var value;    // p + c, equal to the sampled bit exactly
};

/// Bernoulli draw per coordinate; forward value equals the bit, gradient
/// w.r.t. p is the identity.
ReparamSample sample_reparam(ad::Tape& t, ad::Var p, Rng& rng);

/// Reparameterized value with a pre-drawn detached offset. Smooth in p, used
/// by the finite-difference harness and by deterministic replays.
ad::Var reparam_with_noise(ad::Tape& t, ad::Var p, Tensor c);

/// bit_i = 1 iff p_i >= 0.5 (tie goes to 1).
std::vector<std::uint8_t> threshold_latent(const Tensor& p);

struct GenerateOut {
    ad::Var p_x;     // (0,1), window_dim
    ad::Var sigma2;  // max(p_x (1 - p_x), sigma2_min)
};

GenerateOut generate_step(ad::Tape& t, const VredVars& v, ad::Var z_value, ad::Var h_prev,
                          const VredConfig& cfg);

/// LSTM update on [tanh(phi_dec p_x); tanh(phi_z z)]. Consumes only
/// decoder-side quantities, so encoder and decoder can keep identical state
/// from the bits alone.
nn::LstmStateVars recurrence_step(ad::Tape& t, const VredVars& v, ad::Var p_x,
                                  ad::Var z_value, nn::LstmStateVars s);

/// Sum_i q log(q/p) + (1-q) log((1-q)/(1-p)); inputs must be clamped away
/// from 0 and 1.
ad::Var bernoulli_kl(ad::Tape& t, ad::Var q, ad::Var p);

/// Sum_i [ -0.5 log(2 pi sigma2_i) - (x_i - p_i)^2 / (2 sigma2_i) ]
ad::Var gaussian_log_likelihood(ad::Tape& t, ad::Var x, ad::Var p_x, ad::Var sigma2);

// ---- sequence operations ------------------------------------------------

struct ElboResult {
    ad::Var loss;                   // scalar: sum_t KL_t - loglik_t
    std::vector<double> kl;         // per step
    std::vector<double> loglik;     // per step
    std::vector<Tensor> noise_c;    // per step, for frozen replays
};

/// Negative sequential ELBO over x windows already on the tape. When
/// frozen_noise is given the Bernoulli offsets are reused instead of drawn,
/// making the result a smooth function of the parameters.
ElboResult elbo_loss(ad::Tape& t, const VredVars& v, const VredConfig& cfg,
                     std::span<const ad::Var> x_windows, Rng* rng,
                     const std::vector<Tensor>* frozen_noise = nullptr);

enum class CodingMode { Sample, Threshold };

struct LatentStep {
    Tensor prior_p;
    Tensor post_p;
    std::vector<std::uint8_t> bits;
    Tensor reparam_value;
};

struct EncodeResult {
    std::vector<LatentStep> steps;
    std::vector<Tensor> recon;  // the encoder's internal p_x per step
};

/// Forward pass over normalized feature windows; threshold mode is fully
/// deterministic. recon replicates exactly what decode_sequence will compute
/// from the bits.
EncodeResult encode_sequence(const VredParams& p, const VredConfig& cfg,
                             const std::vector<Tensor>& x_seq, CodingMode mode,
                             std::uint64_t seed = 0);

/// bits -> p_x windows. Never touches x; deterministic.
std::vector<Tensor> decode_sequence(const VredParams& p, const VredConfig& cfg,
                                    const std::vector<std::vector<std::uint8_t>>& bits);

}  // namespace vred::model
