#include "vred/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>

#include "vred/errors.hpp"
#include "vred/io.hpp"

namespace vred::audio {

namespace {

struct FmtChunk {
    std::uint16_t format = 0;
    std::uint16_t channels = 0;
    std::uint32_t sample_rate = 0;
    std::uint16_t bits = 0;
};

constexpr std::uint16_t kPcm = 1;
constexpr std::uint16_t kIeeeFloat = 3;

double clamp1(double v) { return std::min(1.0, std::max(-1.0, v)); }

}  // namespace

AudioSignal load_wav(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) {
        throw Error("wav: file not found: " + path.string());
    }
    const std::vector<std::uint8_t> buf = io::read_file(path);
    if (buf.size() < 12 || std::memcmp(buf.data(), "RIFF", 4) != 0 ||
        std::memcmp(buf.data() + 8, "WAVE", 4) != 0) {
        throw FormatError("wav: not a RIFF/WAVE file: " + path.string());
    }
    FmtChunk fmt;
    bool have_fmt = false;
    std::size_t data_off = 0, data_len = 0;
    std::size_t pos = 12;
    while (pos + 8 <= buf.size()) {
        char id[4];
        std::memcpy(id, buf.data() + pos, 4);
        std::uint32_t len;
        std::memcpy(&len, buf.data() + pos + 4, 4);
        pos += 8;
        if (pos + len > buf.size()) {
            throw FormatError("wav: truncated chunk '" + std::string(id, 4) + "' in " +
                              path.string());
        }
        if (std::memcmp(id, "fmt ", 4) == 0) {
            if (len < 16) throw FormatError("wav: fmt chunk too short");
            std::memcpy(&fmt.format, buf.data() + pos, 2);
            std::memcpy(&fmt.channels, buf.data() + pos + 2, 2);
            std::memcpy(&fmt.sample_rate, buf.data() + pos + 4, 4);
            std::memcpy(&fmt.bits, buf.data() + pos + 14, 2);
            have_fmt = true;
        } else if (std::memcmp(id, "data", 4) == 0) {
            data_off = pos;
            data_len = len;
        }
        pos += len + (len & 1);  // chunks are word-aligned
    }
    if (!have_fmt || data_off == 0) {
        throw FormatError("wav: missing fmt/data chunk in " + path.string());
    }
    if (fmt.channels < 1 || fmt.channels > 2) {
        throw FormatError("wav: unsupported channel count " + std::to_string(fmt.channels));
    }
    const bool pcm16 = fmt.format == kPcm && fmt.bits == 16;
    const bool f32 = fmt.format == kIeeeFloat && fmt.bits == 32;
    if (!pcm16 && !f32) {
        throw FormatError("wav: unsupported encoding (format " + std::to_string(fmt.format) +
                          ", " + std::to_string(fmt.bits) + " bit) in " + path.string());
    }
    const std::size_t bytes_per = (pcm16 ? 2u : 4u) * fmt.channels;
    const std::size_t frames = data_len / bytes_per;
    AudioSignal out;
    out.sample_rate = fmt.sample_rate;
    out.samples.resize(frames);
    for (std::size_t i = 0; i < frames; ++i) {
        double acc = 0.0;
        for (std::uint16_t ch = 0; ch < fmt.channels; ++ch) {
            const std::size_t off = data_off + (i * fmt.channels + ch) * (pcm16 ? 2 : 4);
            if (pcm16) {
                std::int16_t v;
                std::memcpy(&v, buf.data() + off, 2);
                acc += static_cast<double>(v) / 32768.0;
            } else {
                float v;
                std::memcpy(&v, buf.data() + off, 4);
                acc += static_cast<double>(v);
            }
        }
        out.samples[i] = clamp1(acc / fmt.channels);
    }
    return out;
}

void write_wav(const AudioSignal& s, const std::filesystem::path& path) {
    for (double v : s.samples) {
        if (!(v >= -1.0 && v <= 1.0)) {
            throw DomainError("wav: sample out of [-1,1]: " + std::to_string(v));
        }
    }
    io::Writer w;
    const std::uint32_t data_len = static_cast<std::uint32_t>(s.samples.size() * 2);
    w.put_bytes(reinterpret_cast<const std::uint8_t*>("RIFF"), 4);
    w.put<std::uint32_t>(36 + data_len);
    w.put_bytes(reinterpret_cast<const std::uint8_t*>("WAVE"), 4);
    w.put_bytes(reinterpret_cast<const std::uint8_t*>("fmt "), 4);
    w.put<std::uint32_t>(16);
    w.put<std::uint16_t>(kPcm);
    w.put<std::uint16_t>(1);
    w.put<std::uint32_t>(s.sample_rate);
    w.put<std::uint32_t>(s.sample_rate * 2);
    w.put<std::uint16_t>(2);
    w.put<std::uint16_t>(16);
    w.put_bytes(reinterpret_cast<const std::uint8_t*>("data"), 4);
    w.put<std::uint32_t>(data_len);
    for (double v : s.samples) {
        double q = std::round(v * 32768.0);
        q = std::min(32767.0, std::max(-32768.0, q));
        w.put<std::int16_t>(static_cast<std::int16_t>(q));
    }
    io::write_file(path, w.bytes());
}

std::vector<AudioSignal> slice_excerpts(const AudioSignal& s, std::size_t excerpt_samples,
                                        std::uint64_t seed) {
    std::vector<AudioSignal> out;
    if (excerpt_samples == 0 || s.samples.size() < excerpt_samples) return out;
    const std::size_t n = s.samples.size() / excerpt_samples;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        AudioSignal e;
        e.sample_rate = s.sample_rate;
        e.samples.assign(s.samples.begin() + static_cast<std::ptrdiff_t>(i * excerpt_samples),
                         s.samples.begin() +
                             static_cast<std::ptrdiff_t>((i + 1) * excerpt_samples));
        out.push_back(std::move(e));
    }
    Rng rng(seed);
    // Fisher-Yates with our own uniforms, for cross-platform stable order
    for (std::size_t i = out.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng.next_u64() % i);
        std::swap(out[i - 1], out[j]);
    }
    return out;
}

double sdr(const AudioSignal& target, const AudioSignal& estimate) {
    if (target.samples.size() != estimate.samples.size()) {
        throw DimensionError("sdr: length mismatch " + std::to_string(target.samples.size()) +
                             " vs " + std::to_string(estimate.samples.size()));
    }
    double sig = 0.0, err = 0.0;
    for (std::size_t i = 0; i < target.samples.size(); ++i) {
        sig += target.samples[i] * target.samples[i];
        const double d = estimate.samples[i] - target.samples[i];
        err += d * d;
    }
    if (sig == 0.0) throw DomainError("sdr: all-zero target");
    if (err == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(sig / err);
}

AudioSignal synth_signal(SynthKind kind, double seconds, std::uint32_t sample_rate,
                         std::uint64_t seed) {
    Rng rng(seed);
    const std::size_t n = static_cast<std::size_t>(seconds * sample_rate);
    AudioSignal s;
    s.sample_rate = sample_rate;
    s.samples.resize(n);
    const double tau = 6.283185307179586;
    switch (kind) {
        case SynthKind::SineMix: {
            const int voices = 3;
            std::vector<double> freq(voices), amp(voices), phase(voices);
            for (int v = 0; v < voices; ++v) {
                freq[v] = rng.uniform(80.0, 2000.0);
                amp[v] = rng.uniform(0.1, 0.3);
                phase[v] = rng.uniform(0.0, tau);
            }
            for (std::size_t i = 0; i < n; ++i) {
                double acc = 0.0;
                const double t = static_cast<double>(i) / sample_rate;
                for (int v = 0; v < voices; ++v) acc += amp[v] * std::sin(tau * freq[v] * t + phase[v]);
                s.samples[i] = clamp1(acc);
            }
            break;
        }
        case SynthKind::Chirp: {
            const double f0 = rng.uniform(100.0, 500.0);
            const double f1 = rng.uniform(1000.0, 4000.0);
            const double amp = rng.uniform(0.3, 0.7);
            for (std::size_t i = 0; i < n; ++i) {
                const double t = static_cast<double>(i) / sample_rate;
                const double frac = seconds > 0 ? t / seconds : 0.0;
                const double f = f0 + (f1 - f0) * frac * 0.5;
                s.samples[i] = clamp1(amp * std::sin(tau * f * t));
            }
            break;
        }
        case SynthKind::AmNoiseBurst: {
            const double carrier = rng.uniform(300.0, 1500.0);
            const double mod = rng.uniform(1.0, 6.0);
            for (std::size_t i = 0; i < n; ++i) {
                const double t = static_cast<double>(i) / sample_rate;
                const double env = 0.5 * (1.0 + std::sin(tau * mod * t));
                const double noise = rng.uniform(-0.2, 0.2);
                s.samples[i] = clamp1(env * (0.4 * std::sin(tau * carrier * t) + noise));
            }
            break;
        }
    }
    return s;
}

std::vector<std::filesystem::path> gen_corpus(const std::filesystem::path& dir,
                                              std::size_t num_files, double seconds,
                                              std::uint32_t sample_rate,
                                              std::uint64_t seed) {
    std::filesystem::create_directories(dir);
    std::vector<std::filesystem::path> paths;
    static const SynthKind kinds[3] = {SynthKind::SineMix, SynthKind::Chirp,
                                       SynthKind::AmNoiseBurst};
    for (std::size_t i = 0; i < num_files; ++i) {
        const AudioSignal s = synth_signal(kinds[i % 3], seconds, sample_rate, seed + i);
        char name[32];
        std::snprintf(name, sizeof(name), "synth_%03zu.wav", i);
        const std::filesystem::path p = dir / name;
        write_wav(s, p);
        paths.push_back(p);
    }
    return paths;
}

}  // namespace vred::audio
