#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vred/rng.hpp"

namespace vred::audio {

struct AudioSignal {
    std::vector<double> samples;  // mono, in [-1, 1]
    std::uint32_t sample_rate = 44100;
};

/// PCM 16-bit or IEEE float 32-bit RIFF, 1-2 channels. Stereo is averaged to
/// mono; samples are clamped to [-1, 1] on load. No resampling: a rate
/// mismatch against the model is the caller's warning to issue.
AudioSignal load_wav(const std::filesystem::path& path);

/// 16-bit PCM mono. Input must already be in [-1, 1].
void write_wav(const AudioSignal& s, const std::filesystem::path& path);

/// Non-overlapping excerpts of exactly excerpt_samples, shuffled by seed;
/// the remainder is dropped. Shorter signals yield an empty list.
std::vector<AudioSignal> slice_excerpts(const AudioSignal& s, std::size_t excerpt_samples,
                                        std::uint64_t seed);

/// 10 log10(||s||^2 / ||e - s||^2) in dB; +inf when the estimate is exact.
double sdr(const AudioSignal& target, const AudioSignal& estimate);

// ---- synthetic corpus ----------------------------------------------------

enum class SynthKind { SineMix, Chirp, AmNoiseBurst };

AudioSignal synth_signal(SynthKind kind, double seconds, std::uint32_t sample_rate,
                         std::uint64_t seed);

/// Writes `num_files` WAVs (cycling through the synth kinds) into dir.
std::vector<std::filesystem::path> gen_corpus(const std::filesystem::path& dir,
                                              std::size_t num_files, double seconds,
                                              std::uint32_t sample_rate,
                                              std::uint64_t seed);

}  // namespace vred::audio
