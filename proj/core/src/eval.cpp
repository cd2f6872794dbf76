#include "vred/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <future>
#include <sstream>

#include "vred/errors.hpp"
#include "vred/io.hpp"

namespace vred::eval {

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

/// SDR of the conv codec roundtrip alone (no VRED), over the usable prefix.
double conv_roundtrip_sdr(const Checkpoint& ckpt, const audio::AudioSignal& sig) {
    const std::size_t usable = sig.samples.size() / ckpt.conv.stride * ckpt.conv.stride;
    if (usable == 0) throw Error("signal shorter than one stride");
    std::vector<double> s(sig.samples.begin(),
                          sig.samples.begin() + static_cast<std::ptrdiff_t>(usable));
    ad::Tape t;
    nn::ConvCodecVars cv;
    cv.enc_kernels = t.constant(ckpt.conv.enc_kernels);
    cv.dec_kernels = t.constant(ckpt.conv.dec_kernels);
    if (ckpt.conv.use_bias) {
        cv.enc_bias = t.constant(ckpt.conv.enc_bias);
        cv.dec_bias = t.constant(ckpt.conv.dec_bias);
    }
    cv.cfg = &ckpt.conv;
    Tensor x({1, s.size()}, s);
    ad::Var y = conv_decode(t, cv, conv_encode(t, cv, t.constant(std::move(x))));
    audio::AudioSignal target{std::move(s), sig.sample_rate};
    audio::AudioSignal est{t.value(y).data, sig.sample_rate};
    for (double& v : est.samples) v = std::min(1.0, std::max(-1.0, v));
    return audio::sdr(target, est);
}

SweepRow run_sweep_row(const SweepConfig& sc, const std::vector<audio::AudioSignal>& train,
                       const std::vector<audio::AudioSignal>& test,
                       const model::VredConfig& cfg, const train::TrainPlan& plan,
                       std::size_t epochs) {
    SweepRow row;
    row.config = sc;
    const auto t0 = std::chrono::steady_clock::now();
    try {
        model::VredConfig cfg2 = cfg;
        cfg2.feature_channels = sc.channels;
        cfg2.validate();
        train::TrainPlan p = plan;
        p.stage = 1;
        p.epochs = epochs;
        Checkpoint ckpt = train::pretrain_feature_codec(train, cfg2, sc.kernel, sc.stride,
                                                        false, 44100, p);
        double tr = 0.0, te = 0.0;
        for (const auto& s : train) tr += conv_roundtrip_sdr(ckpt, s);
        for (const auto& s : test) te += conv_roundtrip_sdr(ckpt, s);
        row.train_sdr = tr / static_cast<double>(train.size());
        row.test_sdr = te / static_cast<double>(test.size());
        row.ok = true;
    } catch (const std::exception& e) {
        row.ok = false;
        row.error = e.what();
    }
    row.wall_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return row;
}

}  // namespace

std::string SdrReport::csv() const {
    std::ostringstream os;
    os << "file,sdr_db\n";
    for (const auto& e : per_file) os << e.file << ',' << fmt(e.sdr_db) << '\n';
    return os.str();
}

SdrReport evaluate_corpus(const Checkpoint& ckpt,
                          const std::vector<std::filesystem::path>& files) {
    SdrReport rep;
    double acc = 0.0;
    std::size_t finite = 0;
    for (const auto& path : files) {
        try {
            const audio::AudioSignal sig = audio::load_wav(path);
            const codec::EncodedStream stream = codec::encode_audio(ckpt, sig);
            const audio::AudioSignal recon = codec::decode_audio(ckpt, stream);
            const std::size_t n = std::min(sig.samples.size(), recon.samples.size());
            audio::AudioSignal a{{sig.samples.begin(), sig.samples.begin() + static_cast<std::ptrdiff_t>(n)},
                                 sig.sample_rate};
            audio::AudioSignal b{{recon.samples.begin(), recon.samples.begin() + static_cast<std::ptrdiff_t>(n)},
                                 recon.sample_rate};
            const double v = audio::sdr(a, b);
            rep.per_file.push_back({path.filename().string(), v});
            if (std::isfinite(v)) {
                acc += v;
                ++finite;
            }
        } catch (const std::exception& e) {
            rep.files_failed.push_back(path.filename().string() + ": " + e.what());
        }
    }
    if (finite > 0) rep.mean_sdr = acc / static_cast<double>(finite);
    return rep;
}

std::vector<SweepConfig> default_sweep_configs() {
    return {
        {44, 88, 32},  {44, 88, 64},  {22, 44, 32},  {22, 44, 64},
        {4, 88, 32},   {4, 88, 64},   {10, 21, 256}, {10, 21, 128},
        {44, 100, 32}, {44, 100, 64}, {44, 80, 32},  {44, 80, 64},
    };
}

std::vector<SweepRow> sweep_configs(const std::vector<audio::AudioSignal>& corpus,
                                    const std::vector<SweepConfig>& configs,
                                    std::size_t epochs, const model::VredConfig& cfg,
                                    const train::TrainPlan& plan, bool parallel) {
    if (corpus.empty()) throw CorpusError("sweep: empty corpus");
    std::vector<audio::AudioSignal> train_set, test_set;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        if (corpus.size() >= 2 && i % 4 == 3) {
            test_set.push_back(corpus[i]);
        } else {
            train_set.push_back(corpus[i]);
        }
    }
    if (test_set.empty()) test_set = train_set;

    std::vector<SweepRow> rows(configs.size());
    if (parallel) {
        std::vector<std::future<SweepRow>> futs;
        for (const auto& sc : configs) {
            futs.push_back(std::async(std::launch::async, [&, sc] {
                return run_sweep_row(sc, train_set, test_set, cfg, plan, epochs);
            }));
        }
        for (std::size_t i = 0; i < futs.size(); ++i) rows[i] = futs[i].get();
    } else {
        for (std::size_t i = 0; i < configs.size(); ++i) {
            rows[i] = run_sweep_row(configs[i], train_set, test_set, cfg, plan, epochs);
        }
    }
    return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
    std::ostringstream os;
    os << "stride,kernel,n_kernels,train_sdr,test_sdr,wall_time_s\n";
    for (const auto& r : rows) {
        os << r.config.stride << ',' << r.config.kernel << ',' << r.config.channels << ',';
        if (r.ok) {
            os << fmt(r.train_sdr) << ',' << fmt(r.test_sdr);
        } else {
            os << "skipped:" << r.error << ',';
        }
        os << ',' << fmt(r.wall_s) << '\n';
    }
    return os.str();
}

void dump_matrix_csv(const Tensor& m, const std::filesystem::path& path) {
    if (m.shape.size() != 2) throw DimensionError("dump_matrix_csv: expected a matrix");
    std::ostringstream os;
    for (std::size_t r = 0; r < m.shape[0]; ++r) {
        for (std::size_t c = 0; c < m.shape[1]; ++c) {
            if (c) os << ',';
            char buf[40];
            std::snprintf(buf, sizeof(buf), "%.9g", m.at(r, c));
            os << buf;
        }
        os << '\n';
    }
    const std::string s = os.str();
    io::write_file(path, std::vector<std::uint8_t>(s.begin(), s.end()));
}

}  // namespace vred::eval
