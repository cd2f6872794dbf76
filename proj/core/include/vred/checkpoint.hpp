#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "vred/adam.hpp"
#include "vred/digest.hpp"
#include "vred/layers.hpp"
#include "vred/norm.hpp"
#include "vred/vred.hpp"

namespace vred {

/// Versioned container binding encoder and decoder: configuration,
/// normalization statistics and every parameter tensor (little-endian f64).
/// The trailing SHA-256 also serves as the model digest carried by
/// bitstream headers.
struct Checkpoint {
    static constexpr std::uint16_t kVersion = 1;

    std::uint32_t sample_rate = 44100;
    model::VredConfig cfg;
    nn::ConvCodecParams conv;
    model::VredParams vred;
    codec::NormStats norm;
    std::optional<train::AdamState> adam;
    Digest log_digest{};  // digest of the training metrics CSV, zeros if none

    /// Set by save/load; identifies this exact parameter set.
    Digest digest{};
};

/// Fresh checkpoint with seeded parameter init.
Checkpoint make_checkpoint(const model::VredConfig& cfg, std::size_t conv_channels,
                           std::size_t conv_kernel, std::size_t conv_stride,
                           bool conv_bias, std::uint32_t sample_rate, Rng& rng);

Digest save_checkpoint(Checkpoint& c, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Walks every parameter tensor in serialization order.
template <typename F>
void visit_model_tensors(Checkpoint& c, F&& f) {
    f("conv.enc_kernels", c.conv.enc_kernels);
    f("conv.dec_kernels", c.conv.dec_kernels);
    f("conv.enc_bias", c.conv.enc_bias);
    f("conv.dec_bias", c.conv.dec_bias);
    auto dense = [&](const std::string& p, nn::DenseParams& d) {
        f(p + ".weight", d.weight);
        f(p + ".bias", d.bias);
    };
    auto mlp = [&](const std::string& p, nn::MlpParams& m) {
        for (std::size_t i = 0; i < 3; ++i) dense(p + ".l" + std::to_string(i), m.layers[i]);
    };
    dense("vred.phi_x", c.vred.phi_x);
    dense("vred.phi_z", c.vred.phi_z);
    dense("vred.phi_dec", c.vred.phi_dec);
    dense("vred.prior1", c.vred.prior1);
    dense("vred.prior2", c.vred.prior2);
    mlp("vred.enc_mlp", c.vred.enc_mlp);
    mlp("vred.dec_mlp", c.vred.dec_mlp);
    static const char* gates[4] = {"i", "f", "o", "g"};
    for (std::size_t i = 0; i < 4; ++i) {
        dense(std::string("vred.lstm.") + gates[i], c.vred.lstm.gates[i]);
    }
}

}  // namespace vred
