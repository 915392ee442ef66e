#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "gando/core/error.hpp"

namespace gando {

/// Named dense parameter tensor. `ordinal` orders layers for partial freezing.
template <class T>
struct Tensor {
    std::string name;
    std::vector<int> shape;
    std::vector<T> data;
    int ordinal = 0;

    std::size_t size() const noexcept { return data.size(); }

    static std::size_t count(const std::vector<int>& shape) {
        return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                               [](std::size_t a, int d) { return a * static_cast<std::size_t>(d); });
    }
};

/// Ordered collection of named tensors (a model's parameters or its gradients).
template <class T>
struct ParamSet {
    std::vector<Tensor<T>> tensors;

    std::size_t num_values() const {
        std::size_t n = 0;
        for (const auto& t : tensors) n += t.size();
        return n;
    }

    Tensor<T>& operator[](std::size_t i) { return tensors[i]; }
    const Tensor<T>& operator[](std::size_t i) const { return tensors[i]; }
    std::size_t size() const noexcept { return tensors.size(); }

    const Tensor<T>* find(const std::string& name) const {
        for (const auto& t : tensors)
            if (t.name == name) return &t;
        return nullptr;
    }
    Tensor<T>* find(const std::string& name) {
        for (auto& t : tensors)
            if (t.name == name) return &t;
        return nullptr;
    }

    /// Same names and shapes, zero values.
    ParamSet zeros_like() const {
        ParamSet z;
        z.tensors.reserve(tensors.size());
        for (const auto& t : tensors) z.tensors.push_back({t.name, t.shape, std::vector<T>(t.size(), T(0)), t.ordinal});
        return z;
    }

    void fill(T v) {
        for (auto& t : tensors) std::fill(t.data.begin(), t.data.end(), v);
    }

    bool all_finite() const {
        for (const auto& t : tensors)
            for (T v : t.data)
                if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    void add_scaled(const ParamSet& other, T scale) {
        for (std::size_t i = 0; i < tensors.size(); ++i)
            for (std::size_t k = 0; k < tensors[i].size(); ++k) tensors[i].data[k] += scale * other.tensors[i].data[k];
    }

    /// Flat visitor over every scalar, in tensor order.
    void for_each_value(const std::function<void(T&)>& f) {
        for (auto& t : tensors)
            for (auto& v : t.data) f(v);
    }

    template <class U>
    ParamSet<U> cast() const {
        ParamSet<U> out;
        for (const auto& t : tensors) {
            Tensor<U> c{t.name, t.shape, std::vector<U>(t.data.begin(), t.data.end()), t.ordinal};
            out.tensors.push_back(std::move(c));
        }
        return out;
    }

    friend bool operator==(const ParamSet& a, const ParamSet& b) {
        if (a.tensors.size() != b.tensors.size()) return false;
        for (std::size_t i = 0; i < a.tensors.size(); ++i) {
            const auto& x = a.tensors[i];
            const auto& y = b.tensors[i];
            if (x.name != y.name || x.shape != y.shape || x.data != y.data) return false;
        }
        return true;
    }
};

/// Per-tensor trainability, aligned with a ParamSet's tensor order.
using TrainMask = std::vector<bool>;

} // namespace gando

#include <cstring>

namespace gando {

/// Bitwise equality of every tensor (distinguishes -0/+0 and NaN payloads).
template <class T>
bool bit_identical(const ParamSet<T>& a, const ParamSet<T>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].name != b[i].name || a[i].shape != b[i].shape || a[i].size() != b[i].size()) return false;
        if (a[i].size() && std::memcmp(a[i].data.data(), b[i].data.data(), a[i].size() * sizeof(T)) != 0) return false;
    }
    return true;
}

} // namespace gando
