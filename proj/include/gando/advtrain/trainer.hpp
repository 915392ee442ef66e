#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gando/advtrain/adam.hpp"
#include "gando/advtrain/discriminator.hpp"
#include "gando/advtrain/scheduler.hpp"
#include "gando/advtrain/train_log.hpp"
#include "gando/core/error.hpp"
#include "gando/core/rng.hpp"
#include "gando/degrade/pool.hpp"
#include "gando/synthkit/dataset.hpp"
#include "gando/tinyssd/checkpoint.hpp"
#include "gando/tinyssd/detector.hpp"
#include "gando/tinyssd/loss.hpp"

namespace gando::advtrain {

enum class TrainMode { baseline, finetune, gando };

inline std::string to_string(TrainMode m) {
    switch (m) {
        case TrainMode::baseline: return "baseline";
        case TrainMode::finetune: return "finetune";
        case TrainMode::gando: return "gando";
    }
    return "unknown";
}

inline TrainMode parse_mode(const std::string& s) {
    if (s == "baseline") return TrainMode::baseline;
    if (s == "finetune") return TrainMode::finetune;
    if (s == "gando") return TrainMode::gando;
    throw ConfigError("unknown training mode '" + s + "' (expected baseline|finetune|gando)");
}

enum class Schedule { plateau, two_phase };

struct TrainConfig {
    double lambda = 1.0;        // magnitude; the generator uses +|lambda|
    double lr = 1e-5;           // generator / fine-tune / baseline
    double lr_d = 1e-5;         // discriminator
    double beta1 = 0.9, beta2 = 0.99;
    double beta1_d = 0.5, beta2_d = 0.99;
    double adam_eps = 1e-8;
    int patience = 4;
    double decay_factor = 10.0;
    int max_decays = 2;
    int batch_size = 16;
    int d_period = 2;           // D trains on iterations 1, 1+p, 1+2p, ...
    std::string freeze_after;   // empty: every layer trainable
    int max_epochs = 50;
    int iterations_per_epoch = 0;  // 0: one pass over the train split
    std::uint64_t seed = 0;
    Schedule schedule = Schedule::plateau;
    int two_phase_epoch = 0;    // two_phase: epoch after which the LR drops once
    double d_init_std = 0.02;
    tinyssd::LossOptions loss;

    /// Mode defaults: GAN-DO uses Adam(0.5, 0.99) and patience 10; fine-tuning and
    /// baseline training use Adam(0.9, 0.99) and patience 4.
    static TrainConfig for_mode(TrainMode m) {
        TrainConfig c;
        if (m == TrainMode::gando) {
            c.beta1 = 0.5;
            c.beta2 = 0.99;
            c.patience = 10;
        } else {
            c.beta1 = 0.9;
            c.beta2 = 0.99;
            c.patience = 4;
        }
        return c;
    }

    void validate() const {
        if (!(lambda > 0)) throw ConfigError("lambda magnitude must be > 0");
        if (patience < 1) throw ConfigError("patience must be >= 1");
        if (batch_size < 2 || batch_size % 2 != 0) throw ConfigError("batch size must be even and >= 2");
        if (d_period < 1) throw ConfigError("discriminator update period must be >= 1");
        if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
        if (decay_factor <= 1) throw ConfigError("decay factor must be > 1");
        if (lr < 0 || lr_d < 0) throw ConfigError("learning rates must be non-negative");
    }
};

/// Loss value and parameter gradients of a mini-batch (frozen tensors carry exact zeros).
template <class T>
struct LossGradients {
    tinyssd::LossValue loss;
    ParamSet<T> grads;
};

template <class T>
LossGradients<T> loss_gradients(const tinyssd::Detector<T>& det, std::span<const Sample> batch,
                                std::span<const tinyssd::EncodedTargets> targets, const tinyssd::LossOptions& opt,
                                const TrainMask& mask = {}, std::uint64_t batch_seed = 0) {
    std::vector<typename tinyssd::Detector<T>::Cache> caches(batch.size());
    std::vector<tinyssd::DetectionOutput<T>> outs;
    outs.reserve(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) outs.push_back(det.forward(batch[i].image, &caches[i]));
    std::vector<tinyssd::DetectionOutput<T>> douts;
    LossGradients<T> r;
    r.loss = tinyssd::detection_loss<T>(outs, targets, opt, &douts);
    if (!std::isfinite(r.loss.l_od)) throw NumericError("non-finite detection loss (batch seed " + std::to_string(batch_seed) + ")");
    r.grads = det.params.zeros_like();
    for (std::size_t i = 0; i < batch.size(); ++i) det.backward(caches[i], douts[i], r.grads);
    for (std::size_t t = 0; t < mask.size(); ++t)
        if (!mask[t]) std::fill(r.grads[t].data.begin(), r.grads[t].data.end(), T(0));
    return r;
}

struct DStats {
    double loss = 0;
    double acc_real = 0;
    double acc_fake = 0;
};

/// One discriminator update on (real, fake) outputs.
template <class T>
DStats discriminator_update(Discriminator<T>& d, Adam<T>& opt, std::span<const tinyssd::DetectionOutput<T>> real,
                            std::span<const tinyssd::DetectionOutput<T>> fake, double lr_multiplier) {
    DStats s;
    std::vector<double> pr, pf;
    for (const auto& o : real) pr.push_back(discriminator_forward(d, o));
    for (const auto& o : fake) pf.push_back(discriminator_forward(d, o));
    s.loss = gan_loss_d(pr, pf);
    for (double p : pr) s.acc_real += p > 0.5 ? 1.0 : 0.0;
    for (double p : pf) s.acc_fake += p < 0.5 ? 1.0 : 0.0;
    s.acc_real /= static_cast<double>(pr.size());
    s.acc_fake /= static_cast<double>(pf.size());
    const ParamSet<T> g = gan_loss_d_gradient(d, real, fake);
    opt.step(d.params, g, {}, lr_multiplier);
    return s;
}

struct CheckpointEvent {
    std::string reason;  // "lr_decay" or "final"
    int epoch = 0;
};

using CheckpointSink = std::function<void(const CheckpointEvent&, const ParamSet<float>&)>;

struct TrainResult {
    tinyssd::Detector<float> model;
    TrainLog log;
    std::optional<Discriminator<float>> discriminator;  // kept for inspection; not part of the deployed model
};

/// Shared driver for baseline, fine-tuning and GAN-DO training.
class Trainer {
public:
    Trainer(TrainMode mode, TrainConfig cfg, const synthkit::DatasetManifest& data, degrade::DistortionPool pool)
        : mode_(mode), cfg_(std::move(cfg)), data_(data), pool_(std::move(pool)) {
        cfg_.validate();
        train_ = data_.split(synthkit::Split::train);
        val_ = data_.split(synthkit::Split::val);
        if (train_.size() < static_cast<std::size_t>(cfg_.batch_size))
            throw ConfigError("train split smaller than one mini-batch");
    }

    /// `init` seeds the trainable model; `baseline` is the frozen reference (GAN-DO only).
    TrainResult run(const tinyssd::Detector<float>& init, const tinyssd::Detector<float>* baseline = nullptr,
                    const CheckpointSink& sink = {}) {
        if (mode_ == TrainMode::gando && !baseline) throw ConfigError("GAN-DO training needs a baseline model");
        const auto t0 = std::chrono::steady_clock::now();
        TrainResult res{init, {}, std::nullopt};
        res.log.mode = to_string(mode_);
        auto& g = res.model;
        anchors_ = g.config.anchors();
        const TrainMask mask = tinyssd::freeze_after(g.params, cfg_.freeze_after);

        Adam<float> opt_g(g.params, {cfg_.lr, cfg_.beta1, cfg_.beta2, cfg_.adam_eps});
        Discriminator<float> d;
        Adam<float> opt_d;
        if (mode_ == TrainMode::gando) {
            d = Discriminator<float>::normal_init(static_cast<std::size_t>(g.num_anchors()) * (g.config.num_scores() + 4),
                                                  substream(cfg_.seed, {0xd}), cfg_.d_init_std);
            opt_d = Adam<float>(d.params, {cfg_.lr_d, cfg_.beta1_d, cfg_.beta2_d, cfg_.adam_eps});
        }

        build_validation_set();
        PlateauState sched;
        sched.patience = cfg_.patience;
        sched.factor = cfg_.decay_factor;
        sched.max_decays = cfg_.max_decays;
        std::vector<double> history{validation_loss(g)};
        lr_plateau_step(history, sched);
        res.log.epochs.push_back({0, history.back(), 1.0});

        const int S = cfg_.batch_size;
        const std::size_t per_epoch = cfg_.iterations_per_epoch > 0 ? static_cast<std::size_t>(cfg_.iterations_per_epoch)
                                                                    : train_.size() / static_cast<std::size_t>(S);
        long it = 0;
        double mult = 1.0;
        for (int epoch = 1; epoch <= cfg_.max_epochs; ++epoch) {
            const std::vector<std::size_t> perm = permutation(epoch);
            for (std::size_t b = 0; b < per_epoch; ++b) {
                ++it;
                const std::uint64_t batch_seed = substream(cfg_.seed, {static_cast<std::uint64_t>(epoch), b});
                std::vector<Sample> clean;
                std::vector<tinyssd::EncodedTargets> targets;
                for (int s = 0; s < S; ++s) {
                    const auto* rec = train_[perm[(b * static_cast<std::size_t>(S) + static_cast<std::size_t>(s)) % perm.size()]];
                    clean.push_back(synthkit::render_record(*rec));
                    targets.push_back(tinyssd::encode_targets(rec->labels, anchors_));
                }
                const std::vector<Sample> batch =
                    mode_ == TrainMode::baseline ? clean : degrade::augment_minibatch(clean, pool_, batch_seed);

                IterationRecord rec;
                rec.iteration = it;
                rec.epoch = epoch;
                rec.lr = cfg_.lr * mult;

                std::vector<tinyssd::Detector<float>::Cache> caches(batch.size());
                std::vector<tinyssd::DetectionOutput<float>> outs;
                for (std::size_t i = 0; i < batch.size(); ++i) outs.push_back(g.forward(batch[i].image, &caches[i]));

                if (mode_ == TrainMode::gando && (it - 1) % cfg_.d_period == 0) {
                    std::vector<tinyssd::DetectionOutput<float>> real;
                    for (const auto& c : clean) real.push_back(baseline->forward(c.image));
                    const DStats ds = discriminator_update<float>(d, opt_d, real, outs, mult);
                    rec.d_loss = ds.loss;
                    rec.d_acc_real = ds.acc_real;
                    rec.d_acc_fake = ds.acc_fake;
                }

                std::vector<tinyssd::DetectionOutput<float>> douts;
                const tinyssd::LossValue lv = tinyssd::detection_loss<float>(outs, targets, cfg_.loss, &douts);
                rec.l_od = lv.l_od;
                rec.l_class = lv.l_class;
                rec.l_bb = lv.l_bb;
                double total = lv.l_od;
                if (mode_ == TrainMode::gando) {
                    std::vector<double> pf;
                    for (const auto& o : outs) pf.push_back(discriminator_forward(d, o));
                    const double lg = gan_loss_g(pf);
                    rec.l_gan = lg;
                    total = total_loss(lv.l_od, lg, +cfg_.lambda);
                    const auto gg = gan_loss_g_output_gradient<float>(d, outs, cfg_.lambda);
                    for (std::size_t i = 0; i < douts.size(); ++i) {
                        for (std::size_t k = 0; k < douts[i].logits.size(); ++k) douts[i].logits[k] += gg[i].logits[k];
                        for (std::size_t k = 0; k < douts[i].offsets.size(); ++k) douts[i].offsets[k] += gg[i].offsets[k];
                    }
                }
                if (!std::isfinite(total))
                    throw NumericError("non-finite loss at iteration " + std::to_string(it) + " (seed " +
                                       std::to_string(cfg_.seed) + ", batch seed " + std::to_string(batch_seed) + ")");

                ParamSet<float> grads = g.params.zeros_like();
                for (std::size_t i = 0; i < batch.size(); ++i) g.backward(caches[i], douts[i], grads);
                opt_g.step(g.params, grads, mask, mult);
                res.log.iterations.push_back(rec);
            }

            history.push_back(validation_loss(g));
            bool terminate = false;
            bool decayed = false;
            if (cfg_.schedule == Schedule::plateau) {
                const PlateauStep st = lr_plateau_step(history, sched);
                decayed = st.decayed;
                terminate = st.terminate;
                mult = st.multiplier;
            } else if (epoch == cfg_.two_phase_epoch) {
                mult /= cfg_.decay_factor;
                decayed = true;
            }
            res.log.epochs.push_back({epoch, history.back(), mult});
            if (decayed) {
                res.log.lr_events.push_back({epoch, mult});
                if (sink) sink({"lr_decay", epoch}, g.params);
            }
            if (terminate) {
                res.log.terminated_by_scheduler = true;
                break;
            }
        }
        res.log.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (sink) sink({"final", res.log.epochs.back().epoch}, g.params);
        if (mode_ == TrainMode::gando) res.discriminator = std::move(d);
        return res;
    }

    /// Generator L_OD on the fixed validation set (augmented unless training the baseline).
    double validation_loss(const tinyssd::Detector<float>& g) const {
        std::vector<tinyssd::DetectionOutput<float>> outs;
        outs.reserve(val_batch_.size());
        for (const auto& s : val_batch_) outs.push_back(g.forward(s.image));
        return tinyssd::detection_loss<float>(outs, val_targets_, cfg_.loss).l_od;
    }

private:
    std::vector<std::size_t> permutation(int epoch) const {
        std::vector<std::size_t> p(train_.size());
        std::iota(p.begin(), p.end(), std::size_t{0});
        Rng rng = make_rng(cfg_.seed, {0x9e, static_cast<std::uint64_t>(epoch)});
        for (std::size_t i = p.size(); i > 1; --i) std::swap(p[i - 1], p[uniform_index(rng, i)]);
        return p;
    }

    void build_validation_set() {
        val_batch_.clear();
        val_targets_.clear();
        const std::size_t S = static_cast<std::size_t>(cfg_.batch_size);
        for (std::size_t start = 0; start < val_.size(); start += S) {
            std::vector<Sample> chunk;
            for (std::size_t i = start; i < std::min(val_.size(), start + S); ++i) chunk.push_back(synthkit::render_record(*val_[i]));
            if (mode_ != TrainMode::baseline) {
                // an odd tail keeps its last item clean
                std::optional<Sample> tail;
                if (chunk.size() % 2) {
                    tail = std::move(chunk.back());
                    chunk.pop_back();
                }
                chunk = degrade::augment_minibatch(chunk, pool_, substream(cfg_.seed, {0x7a1, start}));
                if (tail) chunk.push_back(std::move(*tail));
            }
            for (auto& s : chunk) {
                val_targets_.push_back(tinyssd::encode_targets(s.labels, anchors_));
                val_batch_.push_back(std::move(s));
            }
        }
    }

    TrainMode mode_;
    TrainConfig cfg_;
    const synthkit::DatasetManifest& data_;
    degrade::DistortionPool pool_;
    std::vector<const synthkit::ManifestRecord*> train_, val_;
    tinyssd::AnchorSet anchors_;
    std::vector<Sample> val_batch_;
    std::vector<tinyssd::EncodedTargets> val_targets_;
};

/// Baseline detector trained from scratch on clean batches with L_OD only.
inline TrainResult train_baseline(const TrainConfig& cfg, const tinyssd::DetectorConfig& arch,
                                  const synthkit::DatasetManifest& data, const CheckpointSink& sink = {}) {
    Trainer t(TrainMode::baseline, cfg, data, degrade::single_kernel_pool(degrade::Kernel::identity()));
    return t.run(tinyssd::Detector<float>::create(arch), nullptr, sink);
}

/// Fine-tuning: half-clean, half-degraded batches, L_OD only, starting from the baseline.
inline TrainResult train_finetune(const TrainConfig& cfg, const tinyssd::Detector<float>& baseline,
                                  const synthkit::DatasetManifest& data, const degrade::DistortionPool& pool,
                                  const CheckpointSink& sink = {}) {
    Trainer t(TrainMode::finetune, cfg, data, pool);
    return t.run(baseline, nullptr, sink);
}

/// GAN-DO: generator initialized from the baseline, baseline frozen as the "real" source for D.
inline TrainResult train_gando(const TrainConfig& cfg, const tinyssd::Detector<float>& baseline,
                               const synthkit::DatasetManifest& data, const degrade::DistortionPool& pool,
                               const CheckpointSink& sink = {}) {
    Trainer t(TrainMode::gando, cfg, data, pool);
    return t.run(baseline, &baseline, sink);
}

inline TrainResult train_gando(const TrainConfig& cfg, const tinyssd::Checkpoint& baseline, const tinyssd::DetectorConfig& arch,
                               const synthkit::DatasetManifest& data, const degrade::DistortionPool& pool,
                               const CheckpointSink& sink = {}) {
    return train_gando(cfg, tinyssd::detector_from_checkpoint<float>(baseline, arch), data, pool, sink);
}

inline TrainResult train_finetune(const TrainConfig& cfg, const tinyssd::Checkpoint& baseline,
                                  const tinyssd::DetectorConfig& arch, const synthkit::DatasetManifest& data,
                                  const degrade::DistortionPool& pool, const CheckpointSink& sink = {}) {
    return train_finetune(cfg, tinyssd::detector_from_checkpoint<float>(baseline, arch), data, pool, sink);
}

} // namespace gando::advtrain
