#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "vred/audio.hpp"
#include "vred/checkpoint.hpp"
#include "vred/codec.hpp"
#include "vred/trainer.hpp"

namespace vred::eval {

struct SdrReport {
    struct Entry {
        std::string file;
        double sdr_db;
    };
    std::vector<Entry> per_file;
    std::vector<std::string> files_failed;
    /// Arithmetic mean over finite per-file entries; NaN when undefined.
    double mean_sdr = std::numeric_limits<double>::quiet_NaN();

    std::string csv() const;
};

/// encode -> decode -> SDR for each file; per-file failures are recorded and
/// do not abort the run.
SdrReport evaluate_corpus(const Checkpoint& ckpt,
                          const std::vector<std::filesystem::path>& files);

struct SweepConfig {
    std::size_t stride;
    std::size_t kernel;
    std::size_t channels;
};

/// The 12 (stride, kernel size, n kernels) rows of the reference
/// configuration sweep.
std::vector<SweepConfig> default_sweep_configs();

struct SweepRow {
    SweepConfig config;
    double train_sdr = 0.0;
    double test_sdr = 0.0;
    double wall_s = 0.0;
    bool ok = false;
    std::string error;
};

/// Stage-1 training per configuration; train/test split is by file (every
/// 4th file held out). Invalid configurations are skipped with a reason.
std::vector<SweepRow> sweep_configs(const std::vector<audio::AudioSignal>& corpus,
                                    const std::vector<SweepConfig>& configs,
                                    std::size_t epochs, const model::VredConfig& cfg,
                                    const train::TrainPlan& plan, bool parallel = false);

std::string sweep_csv(const std::vector<SweepRow>& rows);

/// Feature/waveform matrix dump for external plotting, one row per line.
void dump_matrix_csv(const Tensor& m, const std::filesystem::path& path);

}  // namespace vred::eval
