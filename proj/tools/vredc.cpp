// vredc: command-line front end for the VRED audio codec.
//
// Subcommands: gen-corpus, pretrain, train-vred, finetune, encode, decode,
// eval, sweep, gradcheck. Exit codes: 0 success, 1 user error (bad arguments,
// unreadable files, malformed formats), 2 internal invariant violation.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "vred/audio.hpp"
#include "vred/checkpoint.hpp"
#include "vred/codec.hpp"
#include "vred/errors.hpp"
#include "vred/eval.hpp"
#include "vred/io.hpp"
#include "vred/trainer.hpp"
#include "vred/vred.hpp"

namespace fs = std::filesystem;
using namespace vred;

namespace {

struct Settings {
    model::VredConfig cfg;
    train::TrainPlan plan;
    std::size_t conv_channels = 32;
    std::size_t conv_kernel = 88;
    std::size_t conv_stride = 44;
    bool conv_bias = false;
    std::uint32_t sample_rate = 44100;
};

/// key=value config file; '#' starts a comment; unknown keys are rejected.
void apply_config_file(Settings& s, const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open config file: " + path.string());
    std::map<std::string, std::function<void(const std::string&)>> keys;
    auto num = [](const std::string& v) { return std::stod(v); };
    auto uns = [](const std::string& v) {
        const long long x = std::stoll(v);
        if (x < 0) throw Error("negative value where a count is required: " + v);
        return static_cast<std::size_t>(x);
    };
    keys["latent_dim"] = [&](const std::string& v) { s.cfg.latent_dim = uns(v); };
    keys["hidden"] = [&](const std::string& v) { s.cfg.hidden = uns(v); };
    keys["feature_channels"] = [&](const std::string& v) { s.cfg.feature_channels = uns(v); };
    keys["window_frames"] = [&](const std::string& v) { s.cfg.window_frames = uns(v); };
    keys["sigma2_min"] = [&](const std::string& v) { s.cfg.sigma2_min = num(v); };
    keys["prob_eps"] = [&](const std::string& v) { s.cfg.prob_eps = num(v); };
    keys["conv_channels"] = [&](const std::string& v) { s.conv_channels = uns(v); };
    keys["conv_kernel"] = [&](const std::string& v) { s.conv_kernel = uns(v); };
    keys["conv_stride"] = [&](const std::string& v) { s.conv_stride = uns(v); };
    keys["conv_bias"] = [&](const std::string& v) { s.conv_bias = (v == "1" || v == "true"); };
    keys["sample_rate"] = [&](const std::string& v) { s.sample_rate = static_cast<std::uint32_t>(uns(v)); };
    keys["epochs"] = [&](const std::string& v) { s.plan.epochs = uns(v); };
    keys["lr"] = [&](const std::string& v) { s.plan.lr = num(v); };
    keys["seed"] = [&](const std::string& v) { s.plan.seed = uns(v); };
    keys["batch"] = [&](const std::string& v) { s.plan.batch = uns(v); };
    keys["excerpt_windows"] = [&](const std::string& v) { s.plan.excerpt_windows = uns(v); };
    keys["sched_factor"] = [&](const std::string& v) { s.plan.sched_factor = num(v); };
    keys["sched_patience"] = [&](const std::string& v) { s.plan.sched_patience = static_cast<int>(uns(v)); };
    keys["lr_min"] = [&](const std::string& v) { s.plan.lr_min = num(v); };
    keys["clip_norm_enabled"] = [&](const std::string& v) { s.plan.clip_norm_enabled = (v == "1" || v == "true"); };
    keys["clip_norm"] = [&](const std::string& v) { s.plan.clip_norm = num(v); };

    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto strip = [](std::string t) {
            const auto b = t.find_first_not_of(" \t\r");
            const auto e = t.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : t.substr(b, e - b + 1);
        };
        line = strip(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw Error(path.string() + ":" + std::to_string(lineno) + ": expected key=value");
        }
        const std::string key = strip(line.substr(0, eq));
        const std::string val = strip(line.substr(eq + 1));
        const auto it = keys.find(key);
        if (it == keys.end()) {
            throw Error(path.string() + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
        }
        try {
            it->second(val);
        } catch (const std::invalid_argument&) {
            throw Error(path.string() + ":" + std::to_string(lineno) + ": bad value '" + val + "'");
        }
    }
}

std::vector<fs::path> list_wavs(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw Error("not a directory: " + dir.string());
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.is_regular_file() && e.path().extension() == ".wav") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw CorpusError("no .wav files in " + dir.string());
    return files;
}

std::vector<audio::AudioSignal> load_corpus(const fs::path& dir, std::uint32_t expect_rate) {
    std::vector<audio::AudioSignal> corpus;
    for (const auto& p : list_wavs(dir)) {
        audio::AudioSignal s = audio::load_wav(p);
        if (s.sample_rate != expect_rate) {
            std::cerr << "warning: " << p.filename().string() << " is " << s.sample_rate
                      << " Hz, model expects " << expect_rate << " Hz; using as-is\n";
        }
        corpus.push_back(std::move(s));
    }
    return corpus;
}

void write_text(const fs::path& path, const std::string& text) {
    io::write_file(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

void report_stage(const train::StageResult& r) {
    std::cerr << "final epoch loss: " << r.final_epoch_loss << " over "
              << r.step_losses.size() << " steps\n";
}

/// Finite-difference validation of the full training objective on a tiny
/// model. Returns the worst relative error across all parameters and seeds.
double run_gradcheck(std::size_t seeds, bool verbose) {
    model::VredConfig cfg;
    cfg.latent_dim = 8;
    cfg.hidden = 8;
    cfg.feature_channels = 4;
    cfg.window_frames = 4;
    const std::size_t steps = 3;

    double worst = 0.0;
    for (std::size_t seed = 0; seed < seeds; ++seed) {
        Rng init(seed * 7919 + 1);
        model::VredParams params = model::make_vred_params(cfg, init);
        std::vector<Tensor> xs;
        for (std::size_t t = 0; t < steps; ++t) {
            Tensor x = Tensor::zeros({cfg.window_dim()});
            for (double& v : x.data) v = init.uniform();
            xs.push_back(std::move(x));
        }

        // One stochastic pass to fix the Bernoulli offsets, then treat the
        // objective as the smooth frozen-noise function of the parameters.
        std::vector<Tensor> frozen;
        {
            ad::Tape t;
            nn::ParamBinder b(t);
            model::VredVars v = model::bind_vred(b, params);
            std::vector<ad::Var> xw;
            for (const auto& x : xs) xw.push_back(t.constant(x));
            Rng rng(seed + 17);
            frozen = model::elbo_loss(t, v, cfg, xw, &rng).noise_c;
        }

        auto objective = [&]() {
            ad::Tape t;
            nn::ParamBinder b(t);
            model::VredVars v = model::bind_vred(b, params);
            std::vector<ad::Var> xw;
            for (const auto& x : xs) xw.push_back(t.constant(x));
            return t.value(model::elbo_loss(t, v, cfg, xw, nullptr, &frozen).loss).data[0];
        };

        ad::Tape t;
        nn::ParamBinder b(t);
        model::VredVars v = model::bind_vred(b, params);
        std::vector<ad::Var> xw;
        for (const auto& x : xs) xw.push_back(t.constant(x));
        t.backward(model::elbo_loss(t, v, cfg, xw, nullptr, &frozen).loss);
        for (const auto& item : b.items()) {
            const double err =
                ad::finite_difference_check(objective, *item.tensor, t.grad(item.var));
            worst = std::max(worst, err);
            if (verbose) {
                std::cerr << "seed " << seed << " " << item.name << ": " << err << "\n";
            }
        }
    }
    return worst;
}

}  // namespace

int run(int argc, char** argv) {
    CLI::App app{"VRED neural audio codec"};
    app.require_subcommand(1);

    Settings st;
    std::string config_path, model_path, in_path, out_path, csv_path;
    std::uint64_t seed = 0;
    bool have_seed = false, have_epochs = false;
    std::size_t epochs = 0;

    auto add_common = [&](CLI::App* c, bool with_model) {
        c->add_option("--config", config_path, "key=value settings file");
        c->add_option_function<std::uint64_t>(
             "--seed", [&](std::uint64_t v) { seed = v; have_seed = true; },
             "seed for all randomness (default 0)");
        if (with_model) c->add_option("--model", model_path, "checkpoint file")->required();
        return c;
    };
    auto add_epochs = [&](CLI::App* c) {
        c->add_option_function<std::size_t>(
            "--epochs", [&](std::size_t v) { epochs = v; have_epochs = true; },
            "training epochs (overrides config file)");
    };

    // gen-corpus
    std::size_t gc_num = 16;
    double gc_seconds = 4.0;
    std::uint32_t gc_rate = 44100;
    auto* gen = add_common(app.add_subcommand("gen-corpus", "write a synthetic WAV corpus"), false);
    gen->add_option("--out", out_path, "output directory")->required();
    gen->add_option("--num", gc_num, "number of files (default 16)");
    gen->add_option("--seconds", gc_seconds, "duration per file (default 4.0)");
    gen->add_option("--rate", gc_rate, "sample rate (default 44100)");

    // pretrain
    auto* pre = add_common(app.add_subcommand("pretrain", "stage 1: train the conv feature codec"), false);
    pre->add_option("--in", in_path, "corpus directory")->required();
    pre->add_option("--out", out_path, "output checkpoint")->required();
    pre->add_option("--csv", csv_path, "per-epoch metrics CSV");
    add_epochs(pre);

    // train-vred / finetune
    auto* tv = add_common(app.add_subcommand("train-vred", "stage 2: train VRED, conv codec frozen"), true);
    tv->add_option("--in", in_path, "corpus directory")->required();
    tv->add_option("--out", out_path, "output checkpoint")->required();
    tv->add_option("--csv", csv_path, "per-epoch metrics CSV");
    add_epochs(tv);
    auto* ft = add_common(app.add_subcommand("finetune", "stage 3: joint fine-tune"), true);
    ft->add_option("--in", in_path, "corpus directory")->required();
    ft->add_option("--out", out_path, "output checkpoint")->required();
    ft->add_option("--csv", csv_path, "per-epoch metrics CSV");
    add_epochs(ft);

    // encode / decode
    std::string enc_mode = "threshold";
    auto* enc = add_common(app.add_subcommand("encode", "WAV -> .vred bitstream"), true);
    enc->add_option("--in", in_path, "input WAV")->required();
    enc->add_option("--out", out_path, "output .vred stream")->required();
    enc->add_option("--mode", enc_mode, "latent coding: threshold (default) or sample")
        ->check(CLI::IsMember({"threshold", "sample"}));
    bool force_digest = false;
    auto* dec = add_common(app.add_subcommand("decode", ".vred bitstream -> WAV"), true);
    dec->add_option("--in", in_path, "input .vred stream")->required();
    dec->add_option("--out", out_path, "output WAV")->required();
    dec->add_flag("--force-digest-mismatch", force_digest,
                  "decode even if the stream was made by a different model");

    // eval
    auto* ev = add_common(app.add_subcommand("eval", "per-file SDR over a corpus"), true);
    ev->add_option("--in", in_path, "corpus directory")->required();
    ev->add_option("--csv", csv_path, "write the per-file report as CSV");

    // sweep
    bool sweep_parallel = false;
    auto* sw = add_common(app.add_subcommand("sweep", "stage-1 SDR over the reference configuration grid"), false);
    sw->add_option("--in", in_path, "corpus directory")->required();
    sw->add_option("--csv", csv_path, "output CSV (default stdout)");
    sw->add_flag("--parallel", sweep_parallel, "one thread per configuration");
    add_epochs(sw);

    // gradcheck
    std::size_t gk_seeds = 5;
    bool gk_verbose = false;
    auto* gk = app.add_subcommand("gradcheck", "finite-difference check of the training objective");
    gk->add_option("--seeds", gk_seeds, "number of random models (default 5)");
    gk->add_flag("--verbose", gk_verbose, "per-parameter errors to stderr");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    if (!config_path.empty()) apply_config_file(st, config_path);
    if (have_seed) st.plan.seed = seed;
    if (have_epochs) st.plan.epochs = epochs;
    st.cfg.validate();

    if (gen->parsed()) {
        fs::create_directories(out_path);
        const auto files = audio::gen_corpus(out_path, gc_num, gc_seconds, gc_rate, st.plan.seed);
        std::cerr << "wrote " << files.size() << " files to " << out_path << "\n";
        return 0;
    }

    if (pre->parsed()) {
        const auto corpus = load_corpus(in_path, st.sample_rate);
        st.plan.stage = 1;
        train::MetricsLog log;
        train::StageResult res;
        Checkpoint ckpt = train::pretrain_feature_codec(corpus, st.cfg, st.conv_kernel,
                                                        st.conv_stride, st.conv_bias,
                                                        st.sample_rate, st.plan, &log, &res);
        if (!csv_path.empty()) log.save(csv_path);
        save_checkpoint(ckpt, out_path);
        report_stage(res);
        return 0;
    }

    if (tv->parsed() || ft->parsed()) {
        Checkpoint ckpt = load_checkpoint(model_path);
        const auto corpus = load_corpus(in_path, ckpt.sample_rate);
        st.plan.stage = tv->parsed() ? 2 : 3;
        train::MetricsLog log;
        const train::StageResult res = tv->parsed()
                                           ? train::train_vred(ckpt, corpus, st.plan, &log)
                                           : train::finetune(ckpt, corpus, st.plan, &log);
        if (!csv_path.empty()) log.save(csv_path);
        save_checkpoint(ckpt, out_path);
        report_stage(res);
        return 0;
    }

    if (enc->parsed()) {
        const Checkpoint ckpt = load_checkpoint(model_path);
        const audio::AudioSignal sig = audio::load_wav(in_path);
        const auto mode = enc_mode == "sample" ? model::CodingMode::Sample
                                               : model::CodingMode::Threshold;
        codec::write_stream(codec::encode_audio(ckpt, sig, mode, st.plan.seed), out_path);
        return 0;
    }

    if (dec->parsed()) {
        const Checkpoint ckpt = load_checkpoint(model_path);
        const codec::EncodedStream stream = codec::read_stream(in_path);
        audio::write_wav(codec::decode_audio(ckpt, stream, force_digest), out_path);
        return 0;
    }

    if (ev->parsed()) {
        const Checkpoint ckpt = load_checkpoint(model_path);
        const eval::SdrReport rep = eval::evaluate_corpus(ckpt, list_wavs(in_path));
        for (const auto& f : rep.files_failed) std::cerr << "failed: " << f << "\n";
        if (!csv_path.empty()) write_text(csv_path, rep.csv());
        std::cout << "mean SDR (dB): " << rep.mean_sdr << " over " << rep.per_file.size()
                  << " files\n";
        return 0;
    }

    if (sw->parsed()) {
        const auto corpus = load_corpus(in_path, st.sample_rate);
        if (!have_epochs) st.plan.epochs = 5;
        const auto rows = eval::sweep_configs(corpus, eval::default_sweep_configs(),
                                              st.plan.epochs, st.cfg, st.plan, sweep_parallel);
        const std::string csv = eval::sweep_csv(rows);
        if (csv_path.empty()) {
            std::cout << csv;
        } else {
            write_text(csv_path, csv);
        }
        return 0;
    }

    if (gk->parsed()) {
        const double worst = run_gradcheck(gk_seeds, gk_verbose);
        std::cout << "max relative gradient error: " << worst << "\n";
        return worst < 1e-4 ? 0 : 1;
    }

    return 1;
}

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const InternalError& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
