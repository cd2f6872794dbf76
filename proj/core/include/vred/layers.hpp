#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "vred/rng.hpp"
#include "vred/tape.hpp"
#include "vred/tensor.hpp"

namespace vred::nn {

struct DenseParams {
    Tensor weight;  // [out x in]
    Tensor bias;    // [out]
};

DenseParams make_dense(std::size_t out, std::size_t in, Rng& rng);

enum class OutputActivation { Sigmoid, Identity };

/// Three dense layers, tanh on the two hidden ones.
struct MlpParams {
    std::array<DenseParams, 3> layers;
};

MlpParams make_mlp(std::size_t out, std::size_t hidden, std::size_t in, Rng& rng);

/// Gate order: input, forget, output, candidate. Each weight is
/// [hidden x (input + hidden)] applied to the concatenation [x; h].
struct LstmParams {
    std::array<DenseParams, 4> gates;
    std::size_t input_dim() const { return gates[0].weight.shape[1] - hidden_dim(); }
    std::size_t hidden_dim() const { return gates[0].weight.shape[0]; }
};

LstmParams make_lstm(std::size_t hidden, std::size_t input, Rng& rng);

struct LstmState {
    Tensor h;
    Tensor c;
    static LstmState zero(std::size_t hidden);
};

/// Learnable conv/deconv feature codec. Kernels are stored in the layout the
/// corresponding tape op consumes: enc [C x 1 x K], dec [C x 1 x K].
/// Total padding is K - S, split floor/ceil when odd.
struct ConvCodecParams {
    Tensor enc_kernels;
    Tensor dec_kernels;
    std::size_t channels = 32;
    std::size_t kernel = 88;
    std::size_t stride = 44;
    bool use_bias = false;
    Tensor enc_bias;  // [C]
    Tensor dec_bias;  // [1]

    std::size_t pad_left() const { return (kernel - stride) / 2; }
    std::size_t pad_right() const { return kernel - stride - pad_left(); }
    void validate() const;
};

ConvCodecParams make_conv_codec(std::size_t channels, std::size_t kernel,
                                std::size_t stride, bool use_bias, Rng& rng);

// ---- graph bindings -------------------------------------------------------

/// Records (name, parameter tensor, tape leaf) triples so the optimizer and
/// the finite-difference harness can walk all trainable tensors in a fixed
/// order.
struct BoundTensor {
    std::string name;
    Tensor* tensor;
    ad::Var var;
};

class ParamBinder {
   public:
    explicit ParamBinder(ad::Tape& tape) : tape_(&tape) {}
    ad::Var bind(const std::string& name, Tensor& t);
    const std::vector<BoundTensor>& items() const { return items_; }
    ad::Tape& tape() { return *tape_; }

   private:
    ad::Tape* tape_;
    std::vector<BoundTensor> items_;
};

struct DenseVars {
    ad::Var weight, bias;
};
struct MlpVars {
    std::array<DenseVars, 3> layers;
};
struct LstmVars {
    std::array<DenseVars, 4> gates;
};
struct LstmStateVars {
    ad::Var h, c;
};
struct ConvCodecVars {
    ad::Var enc_kernels, dec_kernels, enc_bias, dec_bias;
    const ConvCodecParams* cfg = nullptr;
};

DenseVars bind_dense(ParamBinder& b, const std::string& prefix, DenseParams& p);
MlpVars bind_mlp(ParamBinder& b, const std::string& prefix, MlpParams& p);
LstmVars bind_lstm(ParamBinder& b, const std::string& prefix, LstmParams& p);
ConvCodecVars bind_conv_codec(ParamBinder& b, const std::string& prefix,
                              ConvCodecParams& p);

// ---- forward passes -------------------------------------------------------

ad::Var dense_forward(ad::Tape& t, const DenseVars& p, ad::Var x);

ad::Var mlp_forward(ad::Tape& t, const MlpVars& p, ad::Var x, OutputActivation out_act);

LstmStateVars lstm_step(ad::Tape& t, const LstmVars& p, ad::Var x, LstmStateVars s);

/// audio [1 x L] -> features [C x L/S]; L must be divisible by the stride.
ad::Var conv_encode(ad::Tape& t, const ConvCodecVars& p, ad::Var audio);

/// features [C x F] -> audio [1 x F*S]. No clamping here; the codec clamps
/// only at final emission.
ad::Var conv_decode(ad::Tape& t, const ConvCodecVars& p, ad::Var features);

}  // namespace vred::nn
