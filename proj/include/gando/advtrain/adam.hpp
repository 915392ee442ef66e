#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "gando/core/tensor.hpp"

namespace gando::advtrain {

struct AdamConfig {
    double lr = 1e-5;
    double beta1 = 0.9;
    double beta2 = 0.99;
    double eps = 1e-8;
};

/// Adam with bias correction. Masked-out tensors are never touched.
template <class T>
class Adam {
public:
    Adam() = default;
    Adam(const ParamSet<T>& like, AdamConfig cfg) : cfg_(cfg), m_(like.zeros_like()), v_(like.zeros_like()) {}

    const AdamConfig& config() const noexcept { return cfg_; }
    long steps() const noexcept { return t_; }

    void step(ParamSet<T>& params, const ParamSet<T>& grads, const TrainMask& mask, double lr_multiplier = 1.0) {
        ++t_;
        const double lr = cfg_.lr * lr_multiplier;
        const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        for (std::size_t i = 0; i < params.size(); ++i) {
            if (!mask.empty() && !mask[i]) continue;
            auto& p = params[i].data;
            auto& m = m_[i].data;
            auto& v = v_[i].data;
            const auto& g = grads[i].data;
            for (std::size_t k = 0; k < p.size(); ++k) {
                const double gk = static_cast<double>(g[k]);
                m[k] = static_cast<T>(cfg_.beta1 * static_cast<double>(m[k]) + (1 - cfg_.beta1) * gk);
                v[k] = static_cast<T>(cfg_.beta2 * static_cast<double>(v[k]) + (1 - cfg_.beta2) * gk * gk);
                const double mh = static_cast<double>(m[k]) / c1, vh = static_cast<double>(v[k]) / c2;
                p[k] = static_cast<T>(static_cast<double>(p[k]) - lr * mh / (std::sqrt(vh) + cfg_.eps));
            }
        }
    }

private:
    AdamConfig cfg_;
    ParamSet<T> m_, v_;
    long t_ = 0;
};

} // namespace gando::advtrain
