#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "vred/audio.hpp"
#include "vred/checkpoint.hpp"
#include "vred/errors.hpp"
#include "vred/io.hpp"
#include "vred/trainer.hpp"

using namespace vred;

namespace {

model::VredConfig small_config() {
    model::VredConfig cfg;
    cfg.latent_dim = 8;
    cfg.hidden = 8;
    cfg.feature_channels = 4;
    cfg.window_frames = 4;
    return cfg;
}

std::vector<audio::AudioSignal> small_corpus(std::size_t files = 2, double seconds = 0.05) {
    std::vector<audio::AudioSignal> c;
    for (std::size_t i = 0; i < files; ++i) {
        c.push_back(audio::synth_signal(audio::SynthKind::SineMix, seconds, 44100, 100 + i));
    }
    return c;
}

train::TrainPlan quick_plan(int stage, std::size_t epochs) {
    train::TrainPlan p;
    p.stage = stage;
    p.epochs = epochs;
    p.excerpt_windows = 2;
    p.seed = 5;
    return p;
}

}  // namespace

TEST_SUITE("trainer") {

TEST_CASE("adam_step basics") {
    train::AdamState state;
    SUBCASE("zero gradient leaves parameters unchanged, step counted") {
        Tensor p = Tensor::from_vector({1.0, -2.0});
        const Tensor g = Tensor::zeros({2});
        const std::vector<train::GradItem> items = {{"p", &p, &g}};
        train::adam_step(items, state, 1e-3);
        CHECK(p.data == std::vector<double>{1.0, -2.0});
        CHECK(state.step_count == 1);
    }
    SUBCASE("first step moves by ~ -lr regardless of gradient scale") {
        Tensor p = Tensor::from_vector({0.0});
        const Tensor g = Tensor::from_vector({2.0});
        const std::vector<train::GradItem> items = {{"p", &p, &g}};
        train::adam_step(items, state, 1e-3);
        CHECK(std::abs(p.data[0] - (-1e-3)) < 1e-6);
    }
    SUBCASE("NaN gradient aborts naming the parameter group") {
        Tensor p = Tensor::from_vector({0.0});
        const Tensor g = Tensor::from_vector({std::nan("")});
        const std::vector<train::GradItem> items = {{"bad_group", &p, &g}};
        try {
            train::adam_step(items, state, 1e-3);
            FAIL("expected an error");
        } catch (const InternalError& e) {
            CHECK(std::string(e.what()).find("bad_group") != std::string::npos);
        }
    }
    SUBCASE("determinism over 100 steps") {
        auto run = [] {
            train::AdamState s;
            Tensor p = Tensor::from_vector({0.5});
            for (int i = 0; i < 100; ++i) {
                const Tensor g = Tensor::from_vector({std::sin(0.1 * i) + p.data[0]});
                const std::vector<train::GradItem> items = {{"p", &p, &g}};
                train::adam_step(items, s, 1e-2);
            }
            return p.data[0];
        };
        CHECK(run() == run());
    }
}

TEST_CASE("plateau scheduler") {
    SUBCASE("improving losses keep the rate") {
        train::PlateauScheduler s(1e-3);
        double lr = 1e-3;
        for (int i = 0; i < 50; ++i) lr = s.step(100.0 / (i + 1));
        CHECK(lr == 1e-3);
    }
    SUBCASE("20 flat epochs halve the rate") {
        train::PlateauScheduler s(1e-3);
        double lr = 1e-3;
        lr = s.step(1.0);
        for (int i = 0; i < 20; ++i) lr = s.step(1.0);
        CHECK(lr == doctest::Approx(5e-4).epsilon(1e-12));
    }
    SUBCASE("rate never drops below the floor") {
        train::PlateauScheduler s(1e-3);
        double lr = 1e-3;
        for (int i = 0; i < 2000; ++i) lr = s.step(1.0);
        CHECK(lr == doctest::Approx(1e-5).epsilon(1e-12));
    }
}

TEST_CASE("pretrain_feature_codec") {
    const model::VredConfig cfg = small_config();
    SUBCASE("loss after training below loss at init") {
        train::StageResult res;
        (void)train::pretrain_feature_codec(small_corpus(), cfg, 8, 4, false, 44100,
                                            quick_plan(1, 10), nullptr, &res);
        REQUIRE(!res.step_losses.empty());
        CHECK(res.final_epoch_loss < res.step_losses.front());
    }
    SUBCASE("zero-signal corpus fails normalization fitting") {
        std::vector<audio::AudioSignal> zeros = {{std::vector<double>(4410, 0.0), 44100}};
        CHECK_THROWS_AS((void)train::pretrain_feature_codec(zeros, cfg, 8, 4, false, 44100,
                                                            quick_plan(1, 2)),
                        CorpusError);
    }
    SUBCASE("empty corpus rejected") {
        CHECK_THROWS_AS((void)train::pretrain_feature_codec({}, cfg, 8, 4, false, 44100,
                                                            quick_plan(1, 2)),
                        CorpusError);
    }
}

TEST_CASE("train_vred freezes the conv codec and reports KL >= 0") {
    const model::VredConfig cfg = small_config();
    Checkpoint ckpt = train::pretrain_feature_codec(small_corpus(), cfg, 8, 4, false, 44100,
                                                    quick_plan(1, 5));
    const Tensor enc_before = ckpt.conv.enc_kernels;
    const Tensor dec_before = ckpt.conv.dec_kernels;
    const Tensor vred_before = ckpt.vred.phi_x.weight;
    train::MetricsLog log;
    (void)train::train_vred(ckpt, small_corpus(), quick_plan(2, 10), &log);
    CHECK(ckpt.conv.enc_kernels.data == enc_before.data);  // bit-identical freeze
    CHECK(ckpt.conv.dec_kernels.data == dec_before.data);
    CHECK(ckpt.vred.phi_x.weight.data != vred_before.data);
    // per-epoch KL column of the metrics log is non-negative
    const std::string csv = log.csv();
    std::size_t pos = csv.find('\n') + 1;
    while (pos < csv.size()) {
        const std::size_t end = csv.find('\n', pos);
        const std::string line = csv.substr(pos, end - pos);
        std::size_t c0 = line.find(',');
        std::size_t c1 = line.find(',', c0 + 1);
        std::size_t c2 = line.find(',', c1 + 1);
        std::size_t c3 = line.find(',', c2 + 1);
        CHECK(std::stod(line.substr(c2 + 1, c3 - c2 - 1)) >= 0.0);
        pos = end + 1;
    }
}

TEST_CASE("finetune updates every parameter group and keeps loss continuity") {
    const model::VredConfig cfg = small_config();
    const auto corpus = small_corpus();
    Checkpoint ckpt = train::pretrain_feature_codec(corpus, cfg, 8, 4, false, 44100,
                                                    quick_plan(1, 5));
    train::StageResult s2 = train::train_vred(ckpt, corpus, quick_plan(2, 10));
    const Tensor conv_before = ckpt.conv.enc_kernels;
    const Tensor vred_before = ckpt.vred.phi_x.weight;
    train::StageResult s3 = train::finetune(ckpt, corpus, quick_plan(3, 2));
    CHECK(ckpt.conv.enc_kernels.data != conv_before.data);
    CHECK(ckpt.vred.phi_x.weight.data != vred_before.data);
    REQUIRE(!s3.step_losses.empty());
    // stage-3 objective continues where stage 2 left off (same data and seed)
    CHECK(std::abs(s3.step_losses.front() - s2.final_epoch_loss) <
          0.10 * std::abs(s2.final_epoch_loss));
}

TEST_CASE("full training reproducibility from the seed") {
    const model::VredConfig cfg = small_config();
    const auto corpus = small_corpus();
    auto run = [&](const std::filesystem::path& path) {
        Checkpoint c = train::pretrain_feature_codec(corpus, cfg, 8, 4, false, 44100,
                                                     quick_plan(1, 3));
        (void)train::train_vred(c, corpus, quick_plan(2, 3));
        (void)train::finetune(c, corpus, quick_plan(3, 2));
        return save_checkpoint(c, path);
    };
    const auto p1 = std::filesystem::temp_directory_path() / "trainer_repro1.ckpt";
    const auto p2 = std::filesystem::temp_directory_path() / "trainer_repro2.ckpt";
    CHECK(run(p1) == run(p2));
    CHECK(io::read_file(p1) == io::read_file(p2));
}

TEST_CASE("metrics log format and wall-clock-independent digest") {
    train::MetricsLog a, b;
    a.row(0, 1, 2.0, 0.5, -1.5, 1e-3, 0.123);
    b.row(0, 1, 2.0, 0.5, -1.5, 1e-3, 9.876);  // differs only in wall time
    CHECK(a.csv().rfind("epoch,stage,loss,kl,loglik,lr,wall_time_s\n", 0) == 0);
    CHECK(a.digest_without_wall() == b.digest_without_wall());
    CHECK(a.csv() != b.csv());
}

}  // TEST_SUITE
