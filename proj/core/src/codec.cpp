#include "vred/codec.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include "vred/errors.hpp"
#include "vred/io.hpp"

namespace vred::codec {

NormStats fit_normalization(std::span<const Tensor> features, double margin) {
    bool any = false;
    double lo = 0.0, hi = 0.0;
    for (const Tensor& f : features) {
        for (double v : f.data) {
            if (!any) {
                lo = hi = v;
                any = true;
            } else {
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
        }
    }
    if (!any) throw CorpusError("fit_normalization: empty corpus");
    if (hi == lo) {
        throw CorpusError("fit_normalization: degenerate corpus (constant features)");
    }
    const double range = hi - lo;
    return NormStats{lo - margin * range, hi + margin * range, margin};
}

Tensor normalize(const Tensor& f, const NormStats& n, double prob_eps) {
    if (n.feature_max <= n.feature_min) throw ConfigError("normalize: bad stats");
    const double scale = 1.0 / (n.feature_max - n.feature_min);
    Tensor out = f;
    for (double& v : out.data) {
        v = (v - n.feature_min) * scale;
        v = std::min(1.0 - prob_eps, std::max(prob_eps, v));
    }
    return out;
}

Tensor denormalize(const Tensor& f, const NormStats& n) {
    Tensor out = f;
    for (double& v : out.data) v = v * (n.feature_max - n.feature_min) + n.feature_min;
    return out;
}

ad::Var normalize(ad::Tape& t, ad::Var f, const NormStats& n, double prob_eps) {
    if (n.feature_max <= n.feature_min) throw ConfigError("normalize: bad stats");
    const double scale = 1.0 / (n.feature_max - n.feature_min);
    ad::Var affined = t.affine(f, scale, -n.feature_min * scale);
    return t.clamp(affined, prob_eps, 1.0 - prob_eps);
}

std::vector<std::uint8_t> pack_bits(const std::vector<std::vector<std::uint8_t>>& bits) {
    if (bits.empty()) return {};
    const std::size_t d = bits[0].size();
    const std::size_t bytes_per = (d + 7) / 8;
    std::vector<std::uint8_t> out(bytes_per * bits.size(), 0);
    for (std::size_t t = 0; t < bits.size(); ++t) {
        if (bits[t].size() != d) {
            throw DimensionError("pack_bits: inconsistent latent dimension");
        }
        for (std::size_t i = 0; i < d; ++i) {
            if (bits[t][i]) out[t * bytes_per + i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
        }
    }
    return out;
}

std::vector<std::vector<std::uint8_t>> unpack_bits(const std::vector<std::uint8_t>& payload,
                                                   std::size_t latent_dim,
                                                   std::size_t num_steps) {
    const std::size_t bytes_per = (latent_dim + 7) / 8;
    if (payload.size() != bytes_per * num_steps) {
        throw FormatError("unpack_bits: payload length " + std::to_string(payload.size()) +
                          ", expected " + std::to_string(bytes_per * num_steps));
    }
    std::vector<std::vector<std::uint8_t>> out(num_steps);
    for (std::size_t t = 0; t < num_steps; ++t) {
        out[t].resize(latent_dim);
        for (std::size_t i = 0; i < latent_dim; ++i) {
            out[t][i] = (payload[t * bytes_per + i / 8] >> (i % 8)) & 1u;
        }
    }
    return out;
}

std::vector<std::uint8_t> serialize_stream(const EncodedStream& s) {
    io::Writer w;
    w.put_bytes(reinterpret_cast<const std::uint8_t*>(StreamHeader::kMagic), 4);
    w.put<std::uint16_t>(s.header.format_version);
    w.put_bytes(s.header.model_digest.data(), s.header.model_digest.size());
    w.put<std::uint32_t>(s.header.sample_rate);
    w.put<std::uint16_t>(s.header.stride);
    w.put<std::uint16_t>(s.header.kernel);
    w.put<std::uint16_t>(s.header.channels);
    w.put<std::uint16_t>(s.header.window_frames);
    w.put<std::uint16_t>(s.header.latent_dim);
    w.put<std::uint64_t>(s.header.num_steps);
    w.put<std::uint64_t>(s.header.original_length_samples);
    w.put_bytes(s.payload.data(), s.payload.size());
    return std::move(w.bytes());
}

EncodedStream parse_stream(const std::vector<std::uint8_t>& bytes) {
    io::Reader r(bytes);
    char magic[4];
    r.get_bytes(reinterpret_cast<std::uint8_t*>(magic), 4);
    if (std::memcmp(magic, StreamHeader::kMagic, 4) != 0) {
        throw FormatError("stream: bad magic");
    }
    EncodedStream s;
    s.header.format_version = r.get<std::uint16_t>();
    if (s.header.format_version != StreamHeader::kVersion) {
        throw FormatError("stream: unsupported format version " +
                          std::to_string(s.header.format_version));
    }
    r.get_bytes(s.header.model_digest.data(), s.header.model_digest.size());
    s.header.sample_rate = r.get<std::uint32_t>();
    s.header.stride = r.get<std::uint16_t>();
    s.header.kernel = r.get<std::uint16_t>();
    s.header.channels = r.get<std::uint16_t>();
    s.header.window_frames = r.get<std::uint16_t>();
    s.header.latent_dim = r.get<std::uint16_t>();
    s.header.num_steps = r.get<std::uint64_t>();
    s.header.original_length_samples = r.get<std::uint64_t>();
    const std::size_t expect =
        ((s.header.latent_dim + 7) / 8) * static_cast<std::size_t>(s.header.num_steps);
    if (r.remaining() != expect) {
        throw FormatError("stream: payload length " + std::to_string(r.remaining()) +
                          ", expected " + std::to_string(expect));
    }
    s.payload.resize(expect);
    r.get_bytes(s.payload.data(), expect);
    return s;
}

void write_stream(const EncodedStream& s, const std::filesystem::path& path) {
    io::write_file(path, serialize_stream(s));
}

EncodedStream read_stream(const std::filesystem::path& path) {
    return parse_stream(io::read_file(path));
}

Tensor conv_features(const Checkpoint& ckpt, const std::vector<double>& samples) {
    ad::Tape t;
    nn::ConvCodecVars cv;
    cv.enc_kernels = t.constant(ckpt.conv.enc_kernels);
    cv.dec_kernels = t.constant(ckpt.conv.dec_kernels);
    if (ckpt.conv.use_bias) {
        cv.enc_bias = t.constant(ckpt.conv.enc_bias);
        cv.dec_bias = t.constant(ckpt.conv.dec_bias);
    }
    cv.cfg = &ckpt.conv;
    Tensor x({1, samples.size()}, samples);
    ad::Var f = conv_encode(t, cv, t.constant(std::move(x)));
    return t.value(f);
}

std::vector<Tensor> feature_windows(const Tensor& features, std::size_t window_frames) {
    if (features.shape.size() != 2) {
        throw DimensionError("feature_windows: expected [C x F]");
    }
    const std::size_t c = features.shape[0];
    const std::size_t f = features.shape[1];
    if (window_frames == 0 || f % window_frames != 0) {
        throw ConfigError("feature_windows: " + std::to_string(f) +
                          " frames not divisible by window " + std::to_string(window_frames));
    }
    const std::size_t steps = f / window_frames;
    std::vector<Tensor> out;
    out.reserve(steps);
    for (std::size_t s = 0; s < steps; ++s) {
        Tensor w = Tensor::zeros({c * window_frames});
        for (std::size_t ch = 0; ch < c; ++ch) {
            for (std::size_t i = 0; i < window_frames; ++i) {
                w[ch * window_frames + i] = features[ch * f + s * window_frames + i];
            }
        }
        out.push_back(std::move(w));
    }
    return out;
}

Tensor windows_to_features(const std::vector<Tensor>& windows, std::size_t channels,
                           std::size_t window_frames) {
    const std::size_t steps = windows.size();
    const std::size_t f = steps * window_frames;
    Tensor out = Tensor::zeros({channels, f});
    for (std::size_t s = 0; s < steps; ++s) {
        if (windows[s].numel() != channels * window_frames) {
            throw DimensionError("windows_to_features: bad window size");
        }
        for (std::size_t ch = 0; ch < channels; ++ch) {
            for (std::size_t i = 0; i < window_frames; ++i) {
                out[ch * f + s * window_frames + i] = windows[s][ch * window_frames + i];
            }
        }
    }
    return out;
}

EncodedStream encode_audio(const Checkpoint& ckpt, const audio::AudioSignal& signal,
                           model::CodingMode mode, std::uint64_t seed) {
    const std::size_t block = ckpt.conv.stride * ckpt.cfg.window_frames;
    if (signal.samples.size() < block) {
        throw Error("encode: signal too short (" + std::to_string(signal.samples.size()) +
                    " samples, need at least " + std::to_string(block) + ")");
    }
    const std::size_t orig = signal.samples.size();
    const std::size_t padded = (orig + block - 1) / block * block;
    std::vector<double> samples = signal.samples;
    samples.resize(padded, 0.0);

    const Tensor features = conv_features(ckpt, samples);
    const Tensor normed = normalize(features, ckpt.norm, ckpt.cfg.prob_eps);
    const std::vector<Tensor> windows = feature_windows(normed, ckpt.cfg.window_frames);
    const model::EncodeResult enc =
        model::encode_sequence(ckpt.vred, ckpt.cfg, windows, mode, seed);

    std::vector<std::vector<std::uint8_t>> bits;
    bits.reserve(enc.steps.size());
    for (const auto& st : enc.steps) bits.push_back(st.bits);

    EncodedStream s;
    s.header.model_digest = ckpt.digest;
    s.header.sample_rate = signal.sample_rate;
    s.header.stride = static_cast<std::uint16_t>(ckpt.conv.stride);
    s.header.kernel = static_cast<std::uint16_t>(ckpt.conv.kernel);
    s.header.channels = static_cast<std::uint16_t>(ckpt.conv.channels);
    s.header.window_frames = static_cast<std::uint16_t>(ckpt.cfg.window_frames);
    s.header.latent_dim = static_cast<std::uint16_t>(ckpt.cfg.latent_dim);
    s.header.num_steps = bits.size();
    s.header.original_length_samples = orig;
    s.payload = pack_bits(bits);
    return s;
}

audio::AudioSignal decode_audio(const Checkpoint& ckpt, const EncodedStream& stream,
                                bool force_digest_mismatch) {
    const StreamHeader& h = stream.header;
    if (h.model_digest != ckpt.digest && !force_digest_mismatch) {
        throw FormatError("decode: stream was encoded with a different model (digest " +
                          digest_hex(h.model_digest) + " vs checkpoint " +
                          digest_hex(ckpt.digest) + ")");
    }
    if (h.stride != ckpt.conv.stride || h.kernel != ckpt.conv.kernel ||
        h.channels != ckpt.conv.channels || h.window_frames != ckpt.cfg.window_frames ||
        h.latent_dim != ckpt.cfg.latent_dim) {
        throw FormatError("decode: stream geometry does not match the checkpoint");
    }
    const auto bits = unpack_bits(stream.payload, h.latent_dim, h.num_steps);
    const std::vector<Tensor> p_x = model::decode_sequence(ckpt.vred, ckpt.cfg, bits);
    const Tensor normed =
        windows_to_features(p_x, ckpt.cfg.feature_channels, ckpt.cfg.window_frames);
    const Tensor features = denormalize(normed, ckpt.norm);

    ad::Tape t;
    nn::ConvCodecVars cv;
    cv.enc_kernels = t.constant(ckpt.conv.enc_kernels);
    cv.dec_kernels = t.constant(ckpt.conv.dec_kernels);
    if (ckpt.conv.use_bias) {
        cv.enc_bias = t.constant(ckpt.conv.enc_bias);
        cv.dec_bias = t.constant(ckpt.conv.dec_bias);
    }
    cv.cfg = &ckpt.conv;
    ad::Var y = conv_decode(t, cv, t.constant(features));
    const Tensor& out = t.value(y);

    audio::AudioSignal sig;
    sig.sample_rate = h.sample_rate;
    const std::size_t produced = out.numel();
    if (h.original_length_samples > produced) {
        throw FormatError("decode: original length exceeds reconstructable length");
    }
    sig.samples.assign(out.data.begin(),
                       out.data.begin() + static_cast<std::ptrdiff_t>(h.original_length_samples));
    for (double& v : sig.samples) v = std::min(1.0, std::max(-1.0, v));
    return sig;
}

CompressionReport compression_ratio(const model::VredConfig& cfg, std::size_t stride,
                                    unsigned source_bit_depth) {
    cfg.validate();
    if (stride == 0 || source_bit_depth == 0) throw ConfigError("compression_ratio: bad config");
    auto reduce = [](std::uint64_t n, std::uint64_t d) {
        const std::uint64_t g = std::gcd(n, d);
        return Ratio{n / g, d / g};
    };
    CompressionReport r;
    // (C/S) * (D / (C*W)) = D / (S*W)
    r.dimension_ratio = reduce(cfg.latent_dim, stride * cfg.window_frames);
    r.bit_ratio = reduce(cfg.latent_dim, stride * cfg.window_frames * source_bit_depth);
    return r;
}

}  // namespace vred::codec
