#pragma once

#include <cstddef>
#include <limits>
#include <span>

namespace gando::advtrain {

/// Reduce-on-plateau state. The first history entry is the pre-training reference loss;
/// entry e >= 1 is the validation loss after epoch e.
struct PlateauState {
    int patience = 4;
    double factor = 10.0;
    int max_decays = 2;

    double best = std::numeric_limits<double>::infinity();
    int bad_epochs = 0;
    int decays = 0;
    double multiplier = 1.0;
    bool terminated = false;
    std::size_t consumed = 0;
};

struct PlateauStep {
    double multiplier = 1.0;
    bool terminate = false;
    bool decayed = false;
};

/// Consumes any history entries not yet seen. After `patience` consecutive epochs without a
/// strict improvement the multiplier is divided by `factor`; once `max_decays` decays have
/// happened, the next exhausted patience window terminates training.
inline PlateauStep lr_plateau_step(std::span<const double> history, PlateauState& s) {
    PlateauStep r;
    for (; s.consumed < history.size(); ++s.consumed) {
        const double loss = history[s.consumed];
        if (s.terminated) break;
        if (loss < s.best) {
            s.best = loss;
            if (s.consumed > 0) s.bad_epochs = 0;
            continue;
        }
        if (++s.bad_epochs < s.patience) continue;
        s.bad_epochs = 0;
        if (s.decays < s.max_decays) {
            ++s.decays;
            s.multiplier /= s.factor;
            r.decayed = true;
        } else {
            s.terminated = true;
        }
    }
    r.multiplier = s.multiplier;
    r.terminate = s.terminated;
    return r;
}

} // namespace gando::advtrain
