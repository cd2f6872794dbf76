#include "vred/checkpoint.hpp"

#include <cstring>

#include "vred/errors.hpp"
#include "vred/io.hpp"

namespace vred {

namespace {

constexpr char kMagic[4] = {'V', 'R', 'C', 'K'};

void put_tensor(io::Writer& w, const std::string& name, const Tensor& t) {
    w.put_string(name);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(t.shape.size()));
    for (std::size_t d : t.shape) w.put<std::uint64_t>(d);
    for (double v : t.data) w.put_f64(v);
}

Tensor get_tensor(io::Reader& r, const std::string& expect_name) {
    const std::string name = r.get_string();
    if (name != expect_name) {
        throw FormatError("checkpoint: expected tensor '" + expect_name + "', found '" +
                          name + "'");
    }
    const std::uint8_t ndim = r.get<std::uint8_t>();
    std::vector<std::size_t> shape(ndim);
    for (auto& d : shape) d = static_cast<std::size_t>(r.get<std::uint64_t>());
    Tensor t = Tensor::zeros(std::move(shape));
    for (double& v : t.data) v = r.get<double>();
    return t;
}

std::vector<std::uint8_t> serialize_body(Checkpoint& c) {
    io::Writer w;
    w.put_bytes(reinterpret_cast<const std::uint8_t*>(kMagic), 4);
    w.put<std::uint16_t>(Checkpoint::kVersion);
    w.put<std::uint32_t>(c.sample_rate);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(c.cfg.latent_dim));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(c.cfg.hidden));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(c.cfg.feature_channels));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(c.cfg.window_frames));
    w.put_f64(c.cfg.sigma2_min);
    w.put_f64(c.cfg.prob_eps);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(c.conv.channels));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(c.conv.kernel));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(c.conv.stride));
    w.put<std::uint8_t>(c.conv.use_bias ? 1 : 0);
    w.put_f64(c.norm.feature_min);
    w.put_f64(c.norm.feature_max);
    w.put_f64(c.norm.margin);
    w.put_bytes(c.log_digest.data(), c.log_digest.size());

    std::uint32_t count = 0;
    visit_model_tensors(c, [&](const std::string&, Tensor&) { ++count; });
    w.put<std::uint32_t>(count);
    visit_model_tensors(c, [&](const std::string& name, Tensor& t) { put_tensor(w, name, t); });

    w.put<std::uint8_t>(c.adam.has_value() ? 1 : 0);
    if (c.adam) {
        w.put<std::uint64_t>(c.adam->step_count);
        w.put_f64(c.adam->beta1);
        w.put_f64(c.adam->beta2);
        w.put_f64(c.adam->eps);
        w.put<std::uint32_t>(static_cast<std::uint32_t>(c.adam->entries.size()));
        for (auto& e : c.adam->entries) {
            put_tensor(w, e.name + ".m", e.m);
            put_tensor(w, e.name + ".v", e.v);
        }
    }
    return std::move(w.bytes());
}

}  // namespace

Checkpoint make_checkpoint(const model::VredConfig& cfg, std::size_t conv_channels,
                           std::size_t conv_kernel, std::size_t conv_stride,
                           bool conv_bias, std::uint32_t sample_rate, Rng& rng) {
    cfg.validate();
    if (conv_channels != cfg.feature_channels) {
        throw ConfigError("checkpoint: conv channels must equal cfg.feature_channels");
    }
    Checkpoint c;
    c.sample_rate = sample_rate;
    c.cfg = cfg;
    c.conv = nn::make_conv_codec(conv_channels, conv_kernel, conv_stride, conv_bias, rng);
    c.vred = model::make_vred_params(cfg, rng);
    return c;
}

Digest save_checkpoint(Checkpoint& c, const std::filesystem::path& path) {
    std::vector<std::uint8_t> body = serialize_body(c);
    const Digest d = sha256(body);
    body.insert(body.end(), d.begin(), d.end());
    io::write_file(path, body);
    c.digest = d;
    return d;
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    const std::vector<std::uint8_t> buf = io::read_file(path);
    if (buf.size() < 4 + 2 + 32) throw FormatError("checkpoint: file too small");
    io::Reader r(buf);
    char magic[4];
    r.get_bytes(reinterpret_cast<std::uint8_t*>(magic), 4);
    if (std::memcmp(magic, kMagic, 4) != 0) {
        throw FormatError("checkpoint: bad magic in " + path.string());
    }
    const std::uint16_t version = r.get<std::uint16_t>();
    if (version != Checkpoint::kVersion) {
        throw FormatError("checkpoint: unsupported version " + std::to_string(version));
    }
    // trailing 32 bytes are the digest of everything before them
    std::vector<std::uint8_t> body(buf.begin(), buf.end() - 32);
    const Digest computed = sha256(body);
    Digest stored{};
    std::memcpy(stored.data(), buf.data() + buf.size() - 32, 32);
    if (computed != stored) {
        throw FormatError("checkpoint: digest mismatch, file corrupted: " + path.string());
    }

    Checkpoint c;
    c.sample_rate = r.get<std::uint32_t>();
    c.cfg.latent_dim = r.get<std::uint32_t>();
    c.cfg.hidden = r.get<std::uint32_t>();
    c.cfg.feature_channels = r.get<std::uint32_t>();
    c.cfg.window_frames = r.get<std::uint32_t>();
    c.cfg.sigma2_min = r.get<double>();
    c.cfg.prob_eps = r.get<double>();
    c.conv.channels = r.get<std::uint32_t>();
    c.conv.kernel = r.get<std::uint32_t>();
    c.conv.stride = r.get<std::uint32_t>();
    c.conv.use_bias = r.get<std::uint8_t>() != 0;
    c.norm.feature_min = r.get<double>();
    c.norm.feature_max = r.get<double>();
    c.norm.margin = r.get<double>();
    r.get_bytes(c.log_digest.data(), c.log_digest.size());

    const std::uint32_t count = r.get<std::uint32_t>();
    std::uint32_t expected = 0;
    visit_model_tensors(c, [&](const std::string&, Tensor&) { ++expected; });
    if (count != expected) {
        throw FormatError("checkpoint: tensor count " + std::to_string(count) +
                          ", expected " + std::to_string(expected));
    }
    visit_model_tensors(c, [&](const std::string& name, Tensor& t) { t = get_tensor(r, name); });

    if (r.get<std::uint8_t>() != 0) {
        train::AdamState a;
        a.step_count = r.get<std::uint64_t>();
        a.beta1 = r.get<double>();
        a.beta2 = r.get<double>();
        a.eps = r.get<double>();
        const std::uint32_t n = r.get<std::uint32_t>();
        for (std::uint32_t i = 0; i < n; ++i) {
            // names carry .m/.v suffixes; strip from the first
            const std::string mname = r.get_string();
            // re-read via a small detour: reconstruct tensor after the name
            const std::uint8_t ndim = r.get<std::uint8_t>();
            std::vector<std::size_t> shape(ndim);
            for (auto& d : shape) d = static_cast<std::size_t>(r.get<std::uint64_t>());
            Tensor m = Tensor::zeros(shape);
            for (double& v : m.data) v = r.get<double>();
            if (mname.size() < 2 || mname.substr(mname.size() - 2) != ".m") {
                throw FormatError("checkpoint: bad adam entry name '" + mname + "'");
            }
            train::AdamState::Entry e;
            e.name = mname.substr(0, mname.size() - 2);
            e.m = std::move(m);
            e.v = get_tensor(r, e.name + ".v");
            a.entries.push_back(std::move(e));
        }
        c.adam = std::move(a);
    }
    if (r.remaining() != 32) {
        throw FormatError("checkpoint: trailing bytes after parameters");
    }
    c.cfg.validate();
    c.conv.validate();
    c.digest = stored;
    return c;
}

}  // namespace vred
