#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace gando::advtrain {

struct IterationRecord {
    long iteration = 0;  // 1-based, monotone across epochs
    int epoch = 0;
    double l_od = 0;
    double l_class = 0;
    double l_bb = 0;
    double lr = 0;
    std::optional<double> l_gan;       // generator adversarial term
    std::optional<double> d_loss;      // only on discriminator-update iterations
    std::optional<double> d_acc_real;
    std::optional<double> d_acc_fake;
};

struct EpochRecord {
    int epoch = 0;  // 0 is the pre-training reference
    double val_loss = 0;
    double lr_multiplier = 1.0;
};

struct LrEvent {
    int epoch = 0;
    double multiplier = 1.0;
};

struct TrainLog {
    std::string mode;
    std::vector<IterationRecord> iterations;
    std::vector<EpochRecord> epochs;
    std::vector<LrEvent> lr_events;
    bool terminated_by_scheduler = false;
    double wall_clock_seconds = 0;

    bool has_adversarial_entries() const {
        for (const auto& r : iterations)
            if (r.l_gan || r.d_loss) return true;
        return false;
    }

    /// Line-delimited JSON: one record per iteration, epoch and LR event, then a summary.
    std::string to_jsonl() const {
        std::string s;
        for (const auto& r : iterations) {
            nlohmann::json j{{"type", "iteration"}, {"iteration", r.iteration}, {"epoch", r.epoch}, {"l_od", r.l_od},
                             {"l_class", r.l_class},   {"l_bb", r.l_bb},           {"lr", r.lr}};
            if (r.l_gan) j["l_gan"] = *r.l_gan;
            if (r.d_loss) j["d_loss"] = *r.d_loss;
            if (r.d_acc_real) j["d_acc_real"] = *r.d_acc_real;
            if (r.d_acc_fake) j["d_acc_fake"] = *r.d_acc_fake;
            s += j.dump() + "\n";
        }
        for (const auto& e : epochs)
            s += nlohmann::json{{"type", "epoch"}, {"epoch", e.epoch}, {"val_loss", e.val_loss}, {"lr_multiplier", e.lr_multiplier}}
                     .dump() +
                 "\n";
        for (const auto& e : lr_events)
            s += nlohmann::json{{"type", "lr_change"}, {"epoch", e.epoch}, {"multiplier", e.multiplier}}.dump() + "\n";
        s += nlohmann::json{{"type", "summary"},
                            {"mode", mode},
                            {"iterations", iterations.size()},
                            {"epochs", epochs.empty() ? 0 : epochs.back().epoch},
                            {"terminated_by_scheduler", terminated_by_scheduler},
                            {"wall_clock_seconds", wall_clock_seconds}}
                 .dump() +
             "\n";
        return s;
    }
};

} // namespace gando::advtrain
