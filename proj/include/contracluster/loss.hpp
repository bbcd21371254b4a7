#pragma once

#include <cmath>
#include <vector>

#include "contracluster/ops.hpp"

namespace contracluster {

struct LossConfig {
    double temperature = 0.5; // contrastive tau
    double alpha = 0.1;       // reconstruction weight
};

// Epsilon-guarded cosine similarity of two equal-length vectors.
inline double cosine_sim(const float* a, const float* b, std::size_t n) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        dot += static_cast<double>(a[i]) * b[i];
        na += static_cast<double>(a[i]) * a[i];
        nb += static_cast<double>(b[i]) * b[i];
    }
    return dot / ((std::sqrt(na) + 1e-12) * (std::sqrt(nb) + 1e-12));
}

inline double cosine_sim(const std::vector<float>& a, const std::vector<float>& b) {
    if (a.size() != b.size()) throw shape_error("cosine_sim: length mismatch");
    return cosine_sim(a.data(), b.data(), a.size());
}

// NT-Xent over 2B anchors. Row i of the stacked batch is positive with row
// (i+B) mod 2B; the denominator runs over all non-self terms (the self term
// is removed with a large negative logit so B=1 evaluates to exactly zero).
template <typename T>
Tensor<T> ntxent(const Tensor<T>& z1, const Tensor<T>& z2, double tau) {
    if (tau <= 0.0) throw argument_error("ntxent: temperature must be positive");
    if (z1.shape().size() != 2 || !shape_eq(z1.shape(), z2.shape()))
        throw shape_error("ntxent: z1/z2 must be equal-shape matrices, got " +
                          shape_str(z1.shape()) + " and " + shape_str(z2.shape()));
    const std::size_t b = z1.shape()[0];
    if (b == 0) throw argument_error("ntxent: empty batch");
    const std::size_t n = 2 * b;

    auto z = ops::concat_rows(z1, z2);
    auto sims = ops::matmul_nt(ops::normalize_rows(z), ops::normalize_rows(z));
    auto logits = ops::scale(sims, 1.0 / tau);

    Array<T> mask({n, n}, T(0));
    for (std::size_t i = 0; i < n; ++i) mask.at2(i, i) = T(-1e9);
    logits = ops::add(logits, Tensor<T>::constant(std::move(mask)));

    std::vector<int> positives(n);
    for (std::size_t i = 0; i < n; ++i) positives[i] = static_cast<int>((i + b) % n);
    return ops::cross_entropy_logits(logits, positives);
}

template <typename T>
Tensor<T> mse(const Tensor<T>& x, const Tensor<T>& y) {
    ops::check_same_shape(x, y, "mse");
    auto d = ops::sub(x, y);
    return ops::mean_all(ops::mul(d, d));
}

// Total objective: ntxent(z1,z2,tau) + alpha * (mse(x1,y1) + mse(x2,y2)).
template <typename T>
Tensor<T> combined(const Tensor<T>& z1, const Tensor<T>& z2, const Tensor<T>& x1,
                   const Tensor<T>& y1, const Tensor<T>& x2, const Tensor<T>& y2,
                   const LossConfig& cfg) {
    auto contrastive = ntxent(z1, z2, cfg.temperature);
    auto recon = ops::add(mse(x1, y1), mse(x2, y2));
    return ops::add(contrastive, ops::scale(recon, cfg.alpha));
}

} // namespace contracluster
