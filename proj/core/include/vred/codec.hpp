#pragma once

#include <cstdint>
#include <filesystem>
#include <numeric>
#include <vector>

#include "vred/audio.hpp"
#include "vred/checkpoint.hpp"
#include "vred/norm.hpp"
#include "vred/vred.hpp"

namespace vred::codec {

/// Fixed little-endian header of a .vred stream. Decoding refuses a
/// model_digest mismatch unless explicitly overridden.
struct StreamHeader {
    static constexpr char kMagic[4] = {'V', 'R', 'E', 'D'};
    static constexpr std::uint16_t kVersion = 1;

    std::uint16_t format_version = kVersion;
    Digest model_digest{};
    std::uint32_t sample_rate = 0;
    std::uint16_t stride = 0;
    std::uint16_t kernel = 0;
    std::uint16_t channels = 0;
    std::uint16_t window_frames = 0;
    std::uint16_t latent_dim = 0;
    std::uint64_t num_steps = 0;
    std::uint64_t original_length_samples = 0;
};

struct EncodedStream {
    StreamHeader header;
    std::vector<std::uint8_t> payload;  // ceil(D/8) * T bytes, LSB-first
};

std::vector<std::uint8_t> serialize_stream(const EncodedStream& s);
EncodedStream parse_stream(const std::vector<std::uint8_t>& bytes);
void write_stream(const EncodedStream& s, const std::filesystem::path& path);
EncodedStream read_stream(const std::filesystem::path& path);

/// LSB-first within each byte, coordinate 0 first. All vectors must share
/// the same length D.
std::vector<std::uint8_t> pack_bits(const std::vector<std::vector<std::uint8_t>>& bits);
std::vector<std::vector<std::uint8_t>> unpack_bits(const std::vector<std::uint8_t>& payload,
                                                   std::size_t latent_dim,
                                                   std::size_t num_steps);

/// Full encoder: conv features -> normalize -> windows -> latent bits.
/// Input beyond a multiple of S*W is zero-padded; the original length is
/// recorded in the header.
EncodedStream encode_audio(const Checkpoint& ckpt, const audio::AudioSignal& signal,
                           model::CodingMode mode = model::CodingMode::Threshold,
                           std::uint64_t seed = 0);

/// Full decoder from checkpoint + stream alone. Output clamped to [-1, 1]
/// and trimmed to the original length.
audio::AudioSignal decode_audio(const Checkpoint& ckpt, const EncodedStream& stream,
                                bool force_digest_mismatch = false);

struct Ratio {
    std::uint64_t num = 0;
    std::uint64_t den = 1;
    double value() const { return static_cast<double>(num) / static_cast<double>(den); }
};

struct CompressionReport {
    Ratio dimension_ratio;  // (C/S) * (D/(C*W))
    Ratio bit_ratio;        // D bits per S*W samples at the source bit depth
};

CompressionReport compression_ratio(const model::VredConfig& cfg, std::size_t stride,
                                    unsigned source_bit_depth = 16);

/// Feature extraction used by the codec and trainer: [1 x L] audio to
/// [C x L/S] features, forward only.
Tensor conv_features(const Checkpoint& ckpt, const std::vector<double>& samples);

/// Splits a [C x F] feature matrix into T = F/W flattened window vectors.
std::vector<Tensor> feature_windows(const Tensor& features, std::size_t window_frames);

/// Inverse of feature_windows.
Tensor windows_to_features(const std::vector<Tensor>& windows, std::size_t channels,
                           std::size_t window_frames);

}  // namespace vred::codec
