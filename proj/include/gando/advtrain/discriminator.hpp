#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "gando/core/error.hpp"
#include "gando/core/rng.hpp"
#include "gando/core/tensor.hpp"
#include "gando/tinyssd/detector.hpp"

namespace gando::advtrain {

/// Pre-activation magnitude cap; keeps D(.) strictly inside (0,1).
inline constexpr double kLogitCap = 30.0;

/// Single fully connected layer over the flattened detector output, then a sigmoid.
template <class T>
struct Discriminator {
    ParamSet<T> params;  // "disc.weight" [1, input_size], "disc.bias" [1]

    static Discriminator zeros(std::size_t input_size) {
        Discriminator d;
        d.params.tensors.push_back({"disc.weight", {1, static_cast<int>(input_size)}, std::vector<T>(input_size, T(0)), 1});
        d.params.tensors.push_back({"disc.bias", {1}, std::vector<T>(1, T(0)), 1});
        return d;
    }

    /// Weights ~ Normal(0, stddev) from `seed`, zero bias.
    static Discriminator normal_init(std::size_t input_size, std::uint64_t seed, double stddev = 0.02) {
        Discriminator d = zeros(input_size);
        Rng rng = make_rng(seed, {0xd15c});
        for (auto& w : d.params[0].data) w = static_cast<T>(stddev * standard_normal(rng));
        return d;
    }

    std::size_t input_size() const { return params[0].size(); }
    const std::vector<T>& weight() const { return params[0].data; }
    T bias() const { return params[1].data[0]; }

    /// Unclamped pre-activation w.x + b.
    double logit(const tinyssd::DetectionOutput<T>& out) const {
        if (out.flat_size() != input_size())
            throw ShapeError("discriminator expects input length " + std::to_string(input_size()) + ", got " +
                             std::to_string(out.flat_size()));
        const auto& w = weight();
        double z = static_cast<double>(bias());
        const std::size_t nl = out.logits.size();
        for (std::size_t i = 0; i < nl; ++i) z += static_cast<double>(w[i]) * static_cast<double>(out.logits[i]);
        for (std::size_t i = 0; i < out.offsets.size(); ++i)
            z += static_cast<double>(w[nl + i]) * static_cast<double>(out.offsets[i]);
        return z;
    }
};

inline double clamped_sigmoid(double z) {
    const double c = std::clamp(z, -kLogitCap, kLogitCap);
    return 1.0 / (1.0 + std::exp(-c));
}

/// D(out) in (0,1).
template <class T>
double discriminator_forward(const Discriminator<T>& d, const tinyssd::DetectionOutput<T>& out) {
    return clamped_sigmoid(d.logit(out));
}

/// D loss: -[log p_real + log(1 - p_fake)], averaged over pairs.
inline double gan_loss_d(std::span<const double> p_real, std::span<const double> p_fake) {
    if (p_real.size() != p_fake.size() || p_real.empty()) throw ShapeError("gan_loss_d needs equal, non-empty batches");
    double s = 0;
    for (std::size_t i = 0; i < p_real.size(); ++i) s -= std::log(p_real[i]) + std::log1p(-p_fake[i]);
    return s / static_cast<double>(p_real.size());
}

inline double gan_loss_d(double p_real, double p_fake) {
    return gan_loss_d(std::span<const double>(&p_real, 1), std::span<const double>(&p_fake, 1));
}

/// Non-saturating generator loss: -log p_fake, averaged.
inline double gan_loss_g(std::span<const double> p_fake) {
    if (p_fake.empty()) throw ShapeError("gan_loss_g needs a non-empty batch");
    double s = 0;
    for (double p : p_fake) s -= std::log(p);
    return s / static_cast<double>(p_fake.size());
}

inline double gan_loss_g(double p_fake) { return gan_loss_g(std::span<const double>(&p_fake, 1)); }

/// L_OD + lambda * L_GAN; lambda > 0 for the generator, < 0 for the discriminator.
inline double total_loss(double l_od, double l_gan, double lambda_signed) { return l_od + lambda_signed * l_gan; }


/// Gradient of gan_loss_d with respect to D's parameters.
template <class T>
ParamSet<T> gan_loss_d_gradient(const Discriminator<T>& d, std::span<const tinyssd::DetectionOutput<T>> real,
                                std::span<const tinyssd::DetectionOutput<T>> fake) {
    ParamSet<T> g = d.params.zeros_like();
    const double inv = 1.0 / static_cast<double>(real.size());
    auto accumulate = [&](const tinyssd::DetectionOutput<T>& out, bool is_real) {
        const double z = d.logit(out);
        // The cap only bounds the loss value; the gradient passes straight through it so a
        // saturated, wrong discriminator still gets pushed back.
        const double p = clamped_sigmoid(z);
        // -log p  -> -(1-p);   -log(1-p) -> p
        const double dz = (is_real ? -(1.0 - p) : p) * inv;
        auto& gw = g[0].data;
        for (std::size_t i = 0; i < gw.size(); ++i) gw[i] += static_cast<T>(dz * static_cast<double>(out.flat(i)));
        g[1].data[0] += static_cast<T>(dz);
    };
    for (const auto& o : real) accumulate(o, true);
    for (const auto& o : fake) accumulate(o, false);
    return g;
}

/// Gradient of scale * gan_loss_g with respect to each generator output (D held fixed).
template <class T>
std::vector<tinyssd::DetectionOutput<T>> gan_loss_g_output_gradient(const Discriminator<T>& d,
                                                                     std::span<const tinyssd::DetectionOutput<T>> fake,
                                                                     double scale = 1.0) {
    std::vector<tinyssd::DetectionOutput<T>> grads;
    const double inv = scale / static_cast<double>(fake.size());
    const auto& w = d.weight();
    for (const auto& out : fake) {
        const double z = d.logit(out);
        const double p = clamped_sigmoid(z);
        const double dz = -(1.0 - p) * inv;
        tinyssd::DetectionOutput<T> g(out.num_anchors, out.num_scores);
        const std::size_t nl = g.logits.size();
        for (std::size_t i = 0; i < nl; ++i) g.logits[i] = static_cast<T>(dz * static_cast<double>(w[i]));
        for (std::size_t i = 0; i < g.offsets.size(); ++i) g.offsets[i] = static_cast<T>(dz * static_cast<double>(w[nl + i]));
        grads.push_back(std::move(g));
    }
    return grads;
}

} // namespace gando::advtrain
