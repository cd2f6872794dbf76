#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vred/adam.hpp"
#include "vred/audio.hpp"
#include "vred/checkpoint.hpp"
#include "vred/digest.hpp"

namespace vred::train {

struct GradItem {
    std::string name;
    Tensor* param;
    const Tensor* grad;
};

/// Standard Adam with bias correction. Aborts with the offending parameter
/// name on a non-finite gradient.
void adam_step(std::span<const GradItem> items, AdamState& state, double lr);

/// Reduce-on-plateau: if the best loss has not improved by more than
/// rel_improve (relative) for `patience` epochs, halve the rate down to
/// lr_min.
class PlateauScheduler {
   public:
    PlateauScheduler(double lr, double factor = 0.5, int patience = 20,
                     double lr_min = 1e-5, double rel_improve = 1e-4)
        : lr_(lr), factor_(factor), patience_(patience), lr_min_(lr_min),
          rel_improve_(rel_improve) {}

    double step(double epoch_loss);
    double lr() const { return lr_; }

   private:
    double lr_;
    double factor_;
    int patience_;
    double lr_min_;
    double rel_improve_;
    double best_ = std::numeric_limits<double>::infinity();
    int bad_epochs_ = 0;
};

struct TrainPlan {
    int stage = 1;  // 1 codec pretrain, 2 frozen-codec VRED, 3 joint fine-tune
    std::size_t epochs = 500;
    double lr = 1e-3;
    std::uint64_t seed = 0;
    std::size_t batch = 1;            // excerpts per Adam step
    std::size_t excerpt_windows = 8;  // VRED timesteps per excerpt
    double sched_factor = 0.5;
    int sched_patience = 20;
    double lr_min = 1e-5;
    bool clip_norm_enabled = false;
    double clip_norm = 5.0;
};

/// Per-epoch CSV: epoch,stage,loss,kl,loglik,lr,wall_time_s. The digest used
/// for checkpoints covers everything except the wall-time column, which is
/// the only non-deterministic field.
class MetricsLog {
   public:
    void row(std::size_t epoch, int stage, double loss, double kl, double loglik,
             double lr, double wall_s);
    std::string csv() const;
    Digest digest_without_wall() const;
    void save(const std::filesystem::path& path) const;

   private:
    struct Row {
        std::size_t epoch;
        int stage;
        double loss, kl, loglik, lr, wall;
    };
    std::vector<Row> rows_;
};

struct StageResult {
    std::vector<double> step_losses;
    double final_epoch_loss = 0.0;
};

/// Stage 1: minimize waveform MSE of conv_decode(conv_encode(x)) over
/// excerpts, then fit NormStats from the trained encoder's features.
Checkpoint pretrain_feature_codec(const std::vector<audio::AudioSignal>& corpus,
                                  const model::VredConfig& cfg, std::size_t conv_kernel,
                                  std::size_t conv_stride, bool conv_bias,
                                  std::uint32_t sample_rate, const TrainPlan& plan,
                                  MetricsLog* log = nullptr, StageResult* result = nullptr);

/// Stage 2: conv codec frozen (verified bit-identical), negative ELBO over
/// feature-window sequences.
StageResult train_vred(Checkpoint& ckpt, const std::vector<audio::AudioSignal>& corpus,
                       const TrainPlan& plan, MetricsLog* log = nullptr);

/// Stage 3: everything trainable; negative sequential ELBO through the
/// conv encoder with the Gaussian likelihood on normalized features.
StageResult finetune(Checkpoint& ckpt, const std::vector<audio::AudioSignal>& corpus,
                     const TrainPlan& plan, MetricsLog* log = nullptr);

}  // namespace vred::train
