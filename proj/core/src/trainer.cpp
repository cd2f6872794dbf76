#include "vred/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <numeric>
#include <sstream>

#include "vred/codec.hpp"
#include "vred/errors.hpp"
#include "vred/io.hpp"

namespace vred::train {

namespace {

double now_s() {
    using namespace std::chrono;
    return duration<double>(steady_clock::now().time_since_epoch()).count();
}

std::string fmt_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

/// Gathers fixed-length excerpts from every corpus file and shuffles them
/// globally with the plan seed.
std::vector<audio::AudioSignal> gather_excerpts(const std::vector<audio::AudioSignal>& corpus,
                                                std::size_t excerpt_samples,
                                                std::uint64_t seed) {
    std::vector<audio::AudioSignal> all;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        auto ex = audio::slice_excerpts(corpus[i], excerpt_samples, seed + i);
        for (auto& e : ex) all.push_back(std::move(e));
    }
    if (all.empty()) {
        throw CorpusError("training corpus has no excerpt of " +
                          std::to_string(excerpt_samples) + " samples");
    }
    Rng rng(seed ^ 0x9e3779b97f4a7c15ull);
    for (std::size_t i = all.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng.next_u64() % i);
        std::swap(all[i - 1], all[j]);
    }
    return all;
}

void check_params_finite(std::span<const GradItem> items) {
    for (const GradItem& it : items) {
        if (!it.param->all_finite()) {
            throw InternalError("training produced non-finite parameters in " + it.name);
        }
    }
}

double grad_clip_scale(std::span<const GradItem> items, const TrainPlan& plan) {
    if (!plan.clip_norm_enabled) return 1.0;
    double sq = 0.0;
    for (const GradItem& it : items) {
        for (double g : it.grad->data) sq += g * g;
    }
    const double norm = std::sqrt(sq);
    return norm > plan.clip_norm ? plan.clip_norm / norm : 1.0;
}

nn::ConvCodecVars bind_conv(nn::ParamBinder& b, nn::ConvCodecParams& conv) {
    return bind_conv_codec(b, "conv", conv);
}

std::vector<GradItem> grad_items(const nn::ParamBinder& binder, const ad::Tape& tape) {
    std::vector<GradItem> items;
    items.reserve(binder.items().size());
    for (const nn::BoundTensor& bt : binder.items()) {
        items.push_back(GradItem{bt.name, bt.tensor, &tape.grad(bt.var)});
    }
    return items;
}

std::vector<Tensor> snapshot(const std::vector<const Tensor*>& ts) {
    std::vector<Tensor> out;
    for (const Tensor* t : ts) out.push_back(*t);
    return out;
}

bool bit_identical(const Tensor& a, const Tensor& b) {
    return a.shape == b.shape &&
           std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(double)) == 0;
}

}  // namespace

void adam_step(std::span<const GradItem> items, AdamState& state, double lr) {
    for (const GradItem& it : items) {
        if (!it.grad->all_finite()) {
            throw InternalError("NaN gradient in parameter group " + it.name);
        }
    }
    if (state.entries.empty()) {
        for (const GradItem& it : items) {
            state.entries.push_back(AdamState::Entry{it.name, Tensor::zeros(it.param->shape),
                                                     Tensor::zeros(it.param->shape)});
        }
    }
    if (state.entries.size() != items.size()) {
        throw InternalError("adam_step: parameter set changed under the optimizer");
    }
    state.step_count += 1;
    const double t = static_cast<double>(state.step_count);
    const double bc1 = 1.0 - std::pow(state.beta1, t);
    const double bc2 = 1.0 - std::pow(state.beta2, t);
    for (std::size_t i = 0; i < items.size(); ++i) {
        const GradItem& it = items[i];
        AdamState::Entry& e = state.entries[i];
        if (e.name != it.name) {
            throw InternalError("adam_step: parameter order changed (" + e.name + " vs " +
                                it.name + ")");
        }
        for (std::size_t k = 0; k < it.param->numel(); ++k) {
            const double g = (*it.grad)[k];
            e.m[k] = state.beta1 * e.m[k] + (1.0 - state.beta1) * g;
            e.v[k] = state.beta2 * e.v[k] + (1.0 - state.beta2) * g * g;
            const double mhat = e.m[k] / bc1;
            const double vhat = e.v[k] / bc2;
            (*it.param)[k] -= lr * mhat / (std::sqrt(vhat) + state.eps);
        }
    }
}

double PlateauScheduler::step(double epoch_loss) {
    if (!std::isfinite(epoch_loss)) {
        throw InternalError("scheduler: non-finite epoch loss");
    }
    // best_ starts at +inf, where the relative threshold would be inf - inf
    const double threshold = std::isfinite(best_)
                                 ? best_ - rel_improve_ * std::abs(best_)
                                 : std::numeric_limits<double>::infinity();
    if (epoch_loss < threshold) {
        best_ = epoch_loss;
        bad_epochs_ = 0;
    } else {
        ++bad_epochs_;
        if (bad_epochs_ >= patience_) {
            lr_ = std::max(lr_ * factor_, lr_min_);
            bad_epochs_ = 0;
        }
    }
    return lr_;
}

void MetricsLog::row(std::size_t epoch, int stage, double loss, double kl, double loglik,
                     double lr, double wall_s) {
    rows_.push_back(Row{epoch, stage, loss, kl, loglik, lr, wall_s});
}

std::string MetricsLog::csv() const {
    std::ostringstream os;
    os << "epoch,stage,loss,kl,loglik,lr,wall_time_s\n";
    for (const Row& r : rows_) {
        os << r.epoch << ',' << r.stage << ',' << fmt_g17(r.loss) << ',' << fmt_g17(r.kl)
           << ',' << fmt_g17(r.loglik) << ',' << fmt_g17(r.lr) << ',' << fmt_g17(r.wall)
           << '\n';
    }
    return os.str();
}

Digest MetricsLog::digest_without_wall() const {
    std::ostringstream os;
    for (const Row& r : rows_) {
        os << r.epoch << ',' << r.stage << ',' << fmt_g17(r.loss) << ',' << fmt_g17(r.kl)
           << ',' << fmt_g17(r.loglik) << ',' << fmt_g17(r.lr) << '\n';
    }
    const std::string s = os.str();
    return sha256(reinterpret_cast<const std::uint8_t*>(s.data()), s.size());
}

void MetricsLog::save(const std::filesystem::path& path) const {
    const std::string s = csv();
    io::write_file(path, std::vector<std::uint8_t>(s.begin(), s.end()));
}

Checkpoint pretrain_feature_codec(const std::vector<audio::AudioSignal>& corpus,
                                  const model::VredConfig& cfg, std::size_t conv_kernel,
                                  std::size_t conv_stride, bool conv_bias,
                                  std::uint32_t sample_rate, const TrainPlan& plan,
                                  MetricsLog* log, StageResult* result) {
    if (corpus.empty()) throw CorpusError("pretrain: empty corpus");
    Rng init_rng(plan.seed);
    Checkpoint ckpt = make_checkpoint(cfg, cfg.feature_channels, conv_kernel, conv_stride,
                                      conv_bias, sample_rate, init_rng);
    const std::size_t block = conv_stride * cfg.window_frames;
    const std::size_t excerpt_samples = block * plan.excerpt_windows;
    std::vector<audio::AudioSignal> excerpts =
        gather_excerpts(corpus, excerpt_samples, plan.seed);

    PlateauScheduler sched(plan.lr, plan.sched_factor, plan.sched_patience, plan.lr_min);
    AdamState adam;
    StageResult res;
    double lr = plan.lr;
    for (std::size_t epoch = 0; epoch < plan.epochs; ++epoch) {
        const double t0 = now_s();
        double epoch_loss = 0.0;
        std::size_t steps = 0;
        for (std::size_t off = 0; off < excerpts.size(); off += plan.batch) {
            const std::size_t nb = std::min(plan.batch, excerpts.size() - off);
            ad::Tape tape;
            nn::ParamBinder binder(tape);
            nn::ConvCodecVars cv = bind_conv(binder, ckpt.conv);
            ad::Var loss;
            for (std::size_t b = 0; b < nb; ++b) {
                const auto& ex = excerpts[off + b];
                Tensor x({1, ex.samples.size()}, ex.samples);
                ad::Var xv = tape.constant(std::move(x));
                ad::Var y = conv_decode(tape, cv, conv_encode(tape, cv, xv));
                ad::Var mse = tape.affine(tape.sum(tape.square(tape.sub(y, xv))),
                                          1.0 / static_cast<double>(ex.samples.size() * nb),
                                          0.0);
                loss = loss.valid() ? tape.add(loss, mse) : mse;
            }
            tape.backward(loss);
            auto items = grad_items(binder, tape);
            adam_step(items, adam, lr * grad_clip_scale(items, plan));
            check_params_finite(items);
            const double lv = tape.value(loss)[0];
            res.step_losses.push_back(lv);
            epoch_loss += lv;
            ++steps;
        }
        epoch_loss /= static_cast<double>(steps);
        lr = sched.step(epoch_loss);
        res.final_epoch_loss = epoch_loss;
        if (log) log->row(epoch, 1, epoch_loss, 0.0, 0.0, lr, now_s() - t0);
    }

    // NormStats from the trained encoder over the whole corpus
    std::vector<Tensor> feats;
    for (const auto& sig : corpus) {
        const std::size_t usable = sig.samples.size() / conv_stride * conv_stride;
        if (usable == 0) continue;
        std::vector<double> s(sig.samples.begin(),
                              sig.samples.begin() + static_cast<std::ptrdiff_t>(usable));
        feats.push_back(codec::conv_features(ckpt, s));
    }
    ckpt.norm = codec::fit_normalization(feats);
    ckpt.adam = std::move(adam);
    if (log) ckpt.log_digest = log->digest_without_wall();
    if (result) *result = res;
    return ckpt;
}

StageResult train_vred(Checkpoint& ckpt, const std::vector<audio::AudioSignal>& corpus,
                       const TrainPlan& plan, MetricsLog* log) {
    if (corpus.empty()) throw CorpusError("train_vred: empty corpus");
    const std::size_t block = ckpt.conv.stride * ckpt.cfg.window_frames;
    const std::size_t excerpt_samples = block * plan.excerpt_windows;
    std::vector<audio::AudioSignal> excerpts =
        gather_excerpts(corpus, excerpt_samples, plan.seed);

    // conv codec is frozen for the whole stage
    const std::vector<Tensor> frozen = snapshot(
        {&ckpt.conv.enc_kernels, &ckpt.conv.dec_kernels, &ckpt.conv.enc_bias,
         &ckpt.conv.dec_bias});

    // features are a pure function of the frozen codec: precompute
    std::vector<std::vector<Tensor>> sequences;
    sequences.reserve(excerpts.size());
    for (const auto& ex : excerpts) {
        const Tensor f = codec::conv_features(ckpt, ex.samples);
        const Tensor nf = codec::normalize(f, ckpt.norm, ckpt.cfg.prob_eps);
        sequences.push_back(codec::feature_windows(nf, ckpt.cfg.window_frames));
    }

    PlateauScheduler sched(plan.lr, plan.sched_factor, plan.sched_patience, plan.lr_min);
    AdamState adam;
    Rng sample_rng(plan.seed ^ 0xb5ad4eceda1ce2a9ull);
    StageResult res;
    double lr = plan.lr;
    for (std::size_t epoch = 0; epoch < plan.epochs; ++epoch) {
        const double t0 = now_s();
        double epoch_loss = 0.0, epoch_kl = 0.0, epoch_ll = 0.0;
        std::size_t steps = 0;
        for (std::size_t off = 0; off < sequences.size(); off += plan.batch) {
            const std::size_t nb = std::min(plan.batch, sequences.size() - off);
            ad::Tape tape;
            nn::ParamBinder binder(tape);
            model::VredVars vv = bind_vred(binder, ckpt.vred);
            ad::Var loss;
            double kl_sum = 0.0, ll_sum = 0.0;
            for (std::size_t b = 0; b < nb; ++b) {
                std::vector<ad::Var> xs;
                for (const Tensor& w : sequences[off + b]) xs.push_back(tape.constant(w));
                model::ElboResult er =
                    model::elbo_loss(tape, vv, ckpt.cfg, xs, &sample_rng);
                for (double k : er.kl) kl_sum += k;
                for (double l : er.loglik) ll_sum += l;
                ad::Var scaled = tape.affine(er.loss, 1.0 / static_cast<double>(nb), 0.0);
                loss = loss.valid() ? tape.add(loss, scaled) : scaled;
            }
            tape.backward(loss);
            auto items = grad_items(binder, tape);
            adam_step(items, adam, lr * grad_clip_scale(items, plan));
            check_params_finite(items);
            const double lv = tape.value(loss)[0];
            res.step_losses.push_back(lv);
            epoch_loss += lv;
            epoch_kl += kl_sum / static_cast<double>(nb);
            epoch_ll += ll_sum / static_cast<double>(nb);
            ++steps;
        }
        epoch_loss /= static_cast<double>(steps);
        lr = sched.step(epoch_loss);
        res.final_epoch_loss = epoch_loss;
        if (log) {
            log->row(epoch, 2, epoch_loss, epoch_kl / static_cast<double>(steps),
                     epoch_ll / static_cast<double>(steps), lr, now_s() - t0);
        }
    }

    const std::vector<Tensor> after = snapshot(
        {&ckpt.conv.enc_kernels, &ckpt.conv.dec_kernels, &ckpt.conv.enc_bias,
         &ckpt.conv.dec_bias});
    for (std::size_t i = 0; i < frozen.size(); ++i) {
        if (!bit_identical(frozen[i], after[i])) {
            throw InternalError("train_vred: frozen conv parameters were mutated");
        }
    }
    ckpt.adam = std::move(adam);
    if (log) ckpt.log_digest = log->digest_without_wall();
    return res;
}

StageResult finetune(Checkpoint& ckpt, const std::vector<audio::AudioSignal>& corpus,
                     const TrainPlan& plan, MetricsLog* log) {
    if (corpus.empty()) throw CorpusError("finetune: empty corpus");
    const std::size_t block = ckpt.conv.stride * ckpt.cfg.window_frames;
    const std::size_t excerpt_samples = block * plan.excerpt_windows;
    std::vector<audio::AudioSignal> excerpts =
        gather_excerpts(corpus, excerpt_samples, plan.seed);

    PlateauScheduler sched(plan.lr, plan.sched_factor, plan.sched_patience, plan.lr_min);
    AdamState adam;
    Rng sample_rng(plan.seed ^ 0xb5ad4eceda1ce2a9ull);
    StageResult res;
    const std::size_t w = ckpt.cfg.window_frames;
    double lr = plan.lr;
    for (std::size_t epoch = 0; epoch < plan.epochs; ++epoch) {
        const double t0 = now_s();
        double epoch_loss = 0.0, epoch_kl = 0.0, epoch_ll = 0.0;
        std::size_t steps = 0;
        for (std::size_t off = 0; off < excerpts.size(); off += plan.batch) {
            const std::size_t nb = std::min(plan.batch, excerpts.size() - off);
            ad::Tape tape;
            nn::ParamBinder binder(tape);
            nn::ConvCodecVars cv = bind_conv(binder, ckpt.conv);
            model::VredVars vv = bind_vred(binder, ckpt.vred);
            ad::Var loss;
            double kl_sum = 0.0, ll_sum = 0.0;
            for (std::size_t b = 0; b < nb; ++b) {
                const auto& ex = excerpts[off + b];
                Tensor x({1, ex.samples.size()}, ex.samples);
                ad::Var xv = tape.constant(std::move(x));
                ad::Var f = conv_encode(tape, cv, xv);
                ad::Var nf = codec::normalize(tape, f, ckpt.norm, ckpt.cfg.prob_eps);
                const std::size_t frames = tape.value(nf).shape[1];
                std::vector<ad::Var> xs;
                for (std::size_t s = 0; s * w < frames; ++s) {
                    ad::Var win = tape.slice_cols(nf, s * w, (s + 1) * w);
                    xs.push_back(tape.reshape(win, {ckpt.cfg.window_dim()}));
                }
                model::ElboResult er =
                    model::elbo_loss(tape, vv, ckpt.cfg, xs, &sample_rng);
                for (double k : er.kl) kl_sum += k;
                for (double l : er.loglik) ll_sum += l;
                ad::Var scaled = tape.affine(er.loss, 1.0 / static_cast<double>(nb), 0.0);
                loss = loss.valid() ? tape.add(loss, scaled) : scaled;
            }
            tape.backward(loss);
            auto items = grad_items(binder, tape);
            adam_step(items, adam, lr * grad_clip_scale(items, plan));
            check_params_finite(items);
            const double lv = tape.value(loss)[0];
            res.step_losses.push_back(lv);
            epoch_loss += lv;
            epoch_kl += kl_sum / static_cast<double>(nb);
            epoch_ll += ll_sum / static_cast<double>(nb);
            ++steps;
        }
        epoch_loss /= static_cast<double>(steps);
        lr = sched.step(epoch_loss);
        res.final_epoch_loss = epoch_loss;
        if (log) {
            log->row(epoch, 3, epoch_loss, epoch_kl / static_cast<double>(steps),
                     epoch_ll / static_cast<double>(steps), lr, now_s() - t0);
        }
    }
    ckpt.adam = std::move(adam);
    if (log) ckpt.log_digest = log->digest_without_wall();
    return res;
}

}  // namespace vred::train
