#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "contracluster/array.hpp"
#include "contracluster/errors.hpp"
#include "contracluster/rng.hpp"

namespace contracluster {

struct TsneConfig {
    double perplexity = 30.0;
    int iters = 1000;
    std::uint64_t seed = 0;
    double learning_rate = 200.0;
    double early_exaggeration = 12.0;
    int exaggeration_iters = 250;
    double momentum_start = 0.5;
    double momentum_end = 0.8;
    int momentum_switch_iter = 250;
};

struct TsneResult {
    Array<double> coords;            // N x 2
    std::vector<double> kl_trace;    // KL(P||Q) per iteration (plain P)
    std::vector<double> entropies;   // per-point conditional entropy after the sigma search
};

// Exact (dense) t-SNE. Per-point bandwidths are binary-searched so the
// conditional distribution's entropy matches log(perplexity) in nats.
inline TsneResult tsne_embed(const Array<float>& latents, const TsneConfig& cfg = {}) {
    if (latents.ndim() != 2) throw argument_error("tsne_embed: latents must be (N,D)");
    const std::size_t n = latents.dim(0), d = latents.dim(1);
    if (static_cast<double>(n) < 3.0 * cfg.perplexity)
        throw argument_error("tsne_embed: need N >= 3*perplexity (" + std::to_string(n) +
                             " points for perplexity " + std::to_string(cfg.perplexity) + ")");

    // pairwise squared distances
    std::vector<double> dist(n * n, 0.0);
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(n); ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t c = 0; c < d; ++c) {
                const double diff =
                    static_cast<double>(latents.at2(i, c)) - latents.at2(j, c);
                acc += diff * diff;
            }
            dist[i * n + j] = acc;
        }
    }

    // conditional affinities with per-point precision search
    const double target_entropy = std::log(cfg.perplexity);
    std::vector<double> pcond(n * n, 0.0);
    std::vector<double> entropies(n, 0.0);
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(n); ++i) {
        double beta = 1.0;
        double beta_min = -std::numeric_limits<double>::infinity();
        double beta_max = std::numeric_limits<double>::infinity();
        double entropy = 0.0;
        for (int it = 0; it < 200; ++it) {
            double sum_p = 0.0, sum_dp = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                if (j == static_cast<std::size_t>(i)) continue;
                const double p = std::exp(-beta * dist[i * n + j]);
                pcond[i * n + j] = p;
                sum_p += p;
                sum_dp += dist[i * n + j] * p;
            }
            entropy = std::log(sum_p) + beta * sum_dp / sum_p;
            const double diff = entropy - target_entropy;
            if (std::abs(diff) < 1e-7) break;
            if (diff > 0) {
                beta_min = beta;
                beta = std::isinf(beta_max) ? beta * 2.0 : (beta + beta_max) / 2.0;
            } else {
                beta_max = beta;
                beta = std::isinf(beta_min) ? beta / 2.0 : (beta + beta_min) / 2.0;
            }
        }
        entropies[i] = entropy;
        double sum_p = 0.0;
        for (std::size_t j = 0; j < n; ++j) sum_p += pcond[i * n + j];
        for (std::size_t j = 0; j < n; ++j) pcond[i * n + j] /= sum_p;
    }

    // symmetrize and normalize to a joint distribution
    std::vector<double> P(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            P[i * n + j] = (pcond[i * n + j] + pcond[j * n + i]) / (2.0 * n);
    for (auto& p : P) p = std::max(p, 1e-12);

    Rng rng(cfg.seed);
    Array<double> y({n, 2});
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = rng.normal(0.0, 1e-4);

    std::vector<double> inc(n * 2, 0.0);
    std::vector<double> gains(n * 2, 1.0);
    std::vector<double> weights(n * n, 0.0);
    std::vector<double> grad(n * 2, 0.0);
    std::vector<double> row_sums(n, 0.0);
    std::vector<double> kl_rows(n, 0.0);

    TsneResult result;
    result.entropies = std::move(entropies);

    for (int iter = 0; iter < cfg.iters; ++iter) {
        const double exaggeration = iter < cfg.exaggeration_iters ? cfg.early_exaggeration : 1.0;
        const double momentum =
            iter < cfg.momentum_switch_iter ? cfg.momentum_start : cfg.momentum_end;

        // student-t weights; per-row partials summed sequentially so the
        // result is independent of the parallel schedule
#pragma omp parallel for schedule(static)
        for (std::int64_t i = 0; i < static_cast<std::int64_t>(n); ++i) {
            double row = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                if (j == static_cast<std::size_t>(i)) {
                    weights[i * n + j] = 0.0;
                    continue;
                }
                const double dy0 = y.at2(i, 0) - y.at2(j, 0);
                const double dy1 = y.at2(i, 1) - y.at2(j, 1);
                const double w = 1.0 / (1.0 + dy0 * dy0 + dy1 * dy1);
                weights[i * n + j] = w;
                row += w;
            }
            row_sums[i] = row;
        }
        double sum_w = 0.0;
        for (std::size_t i = 0; i < n; ++i) sum_w += row_sums[i];

#pragma omp parallel for schedule(static)
        for (std::int64_t i = 0; i < static_cast<std::int64_t>(n); ++i) {
            double g0 = 0.0, g1 = 0.0, kl_row = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                if (j == static_cast<std::size_t>(i)) continue;
                const double q = std::max(weights[i * n + j] / sum_w, 1e-12);
                const double p = P[i * n + j];
                const double coeff = (exaggeration * p - q) * weights[i * n + j];
                g0 += coeff * (y.at2(i, 0) - y.at2(j, 0));
                g1 += coeff * (y.at2(i, 1) - y.at2(j, 1));
                kl_row += p * std::log(p / q);
            }
            grad[i * 2 + 0] = 4.0 * g0;
            grad[i * 2 + 1] = 4.0 * g1;
            kl_rows[i] = kl_row;
        }
        double kl = 0.0;
        for (std::size_t i = 0; i < n; ++i) kl += kl_rows[i];
        result.kl_trace.push_back(kl);

        double mean0 = 0.0, mean1 = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            for (int c = 0; c < 2; ++c) {
                const std::size_t idx = i * 2 + c;
                const bool same_sign = (grad[idx] > 0.0) == (inc[idx] > 0.0);
                gains[idx] = same_sign ? gains[idx] * 0.8 : gains[idx] + 0.2;
                gains[idx] = std::max(gains[idx], 0.01);
                inc[idx] = momentum * inc[idx] - cfg.learning_rate * gains[idx] * grad[idx];
                y[idx] += inc[idx];
            }
            mean0 += y.at2(i, 0);
            mean1 += y.at2(i, 1);
        }
        mean0 /= static_cast<double>(n);
        mean1 /= static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
            y.at2(i, 0) -= mean0;
            y.at2(i, 1) -= mean1;
        }
    }

    result.coords = std::move(y);
    return result;
}

} // namespace contracluster
