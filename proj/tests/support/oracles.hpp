#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "contracluster/array.hpp"
#include "contracluster/rng.hpp"

// Independent brute-force reference implementations used only by tests.
// These deliberately share no code with the library paths they check.
namespace testsupport {

using contracluster::Array;

// Plain 4-loop convolution, no im2col.
template <typename T>
Array<T> conv2d_naive(const Array<T>& x, const Array<T>& w, const Array<T>& b,
                      std::size_t stride, std::size_t pad) {
    const std::size_t B = x.shape()[0], Cin = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
    const std::size_t Cout = w.shape()[0], K = w.shape()[2];
    const std::size_t oH = (H + 2 * pad - K) / stride + 1;
    const std::size_t oW = (W + 2 * pad - K) / stride + 1;
    Array<T> out({B, Cout, oH, oW});
    for (std::size_t bi = 0; bi < B; ++bi)
        for (std::size_t co = 0; co < Cout; ++co)
            for (std::size_t y = 0; y < oH; ++y)
                for (std::size_t xo = 0; xo < oW; ++xo) {
                    T acc = b[co];
                    for (std::size_t ci = 0; ci < Cin; ++ci)
                        for (std::size_t ky = 0; ky < K; ++ky)
                            for (std::size_t kx = 0; kx < K; ++kx) {
                                const std::ptrdiff_t sy =
                                    static_cast<std::ptrdiff_t>(y * stride + ky) -
                                    static_cast<std::ptrdiff_t>(pad);
                                const std::ptrdiff_t sx =
                                    static_cast<std::ptrdiff_t>(xo * stride + kx) -
                                    static_cast<std::ptrdiff_t>(pad);
                                if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(H) || sx < 0 ||
                                    sx >= static_cast<std::ptrdiff_t>(W))
                                    continue;
                                acc += x.at4(bi, ci, sy, sx) * w.at4(co, ci, ky, kx);
                            }
                    out.at4(bi, co, y, xo) = acc;
                }
    return out;
}

// Triple-loop dense layer.
template <typename T>
Array<T> linear_naive(const Array<T>& x, const Array<T>& w, const Array<T>& b) {
    const std::size_t B = x.shape()[0], N = x.shape()[1], M = w.shape()[0];
    Array<T> out({B, M});
    for (std::size_t bi = 0; bi < B; ++bi)
        for (std::size_t m = 0; m < M; ++m) {
            T acc = b[m];
            for (std::size_t n = 0; n < N; ++n) acc += x.at2(bi, n) * w.at2(m, n);
            out.at2(bi, m) = acc;
        }
    return out;
}

inline double cosine_naive(const std::vector<double>& a, const std::vector<double>& b) {
    double dot = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    return dot / ((std::sqrt(na) + 1e-12) * (std::sqrt(nb) + 1e-12));
}

// Term-by-term NT-Xent: 2B anchors, positive at i+B mod 2B, denominator over
// all non-self terms (including the positive).
template <typename T>
double ntxent_naive(const Array<T>& z1, const Array<T>& z2, double tau) {
    const std::size_t B = z1.shape()[0], D = z1.shape()[1];
    const std::size_t n = 2 * B;
    std::vector<std::vector<double>> z(n, std::vector<double>(D));
    for (std::size_t i = 0; i < B; ++i)
        for (std::size_t d = 0; d < D; ++d) {
            z[i][d] = z1.at2(i, d);
            z[B + i][d] = z2.at2(i, d);
        }
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t j = (i + B) % n;
        double denom = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            if (k == i) continue;
            denom += std::exp(cosine_naive(z[i], z[k]) / tau);
        }
        total += -std::log(std::exp(cosine_naive(z[i], z[j]) / tau) / denom);
    }
    return total / static_cast<double>(n);
}

template <typename T>
double mse_naive(const Array<T>& a, const Array<T>& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        acc += d * d;
    }
    return acc / static_cast<double>(a.size());
}

// Exhaustive k=2 k-means optimum for N <= 8 points: try all 2^N assignments.
inline double kmeans2_brute_force(const Array<float>& pts) {
    const std::size_t n = pts.shape()[0], d = pts.shape()[1];
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t mask = 0; mask < (1ULL << n); ++mask) {
        std::vector<double> c0(d, 0.0), c1(d, 0.0);
        std::size_t n0 = 0, n1 = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (mask & (1ULL << i)) {
                for (std::size_t j = 0; j < d; ++j) c1[j] += pts.at2(i, j);
                ++n1;
            } else {
                for (std::size_t j = 0; j < d; ++j) c0[j] += pts.at2(i, j);
                ++n0;
            }
        }
        if (n0 == 0 || n1 == 0) continue;
        for (std::size_t j = 0; j < d; ++j) {
            c0[j] /= n0;
            c1[j] /= n1;
        }
        double inertia = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const auto& c = (mask & (1ULL << i)) ? c1 : c0;
            for (std::size_t j = 0; j < d; ++j) {
                const double diff = pts.at2(i, j) - c[j];
                inertia += diff * diff;
            }
        }
        best = std::min(best, inertia);
    }
    return best;
}

// Double-loop kNN with the library's tie rules (distance ties -> lower bank
// index, label-mode ties -> smaller label), written independently.
inline std::vector<int> knn_naive(const Array<float>& bank, const std::vector<int>& bank_labels,
                                  const Array<float>& queries, std::size_t k) {
    const std::size_t m = bank.shape()[0], d = bank.shape()[1], q = queries.shape()[0];
    std::vector<int> preds(q);
    for (std::size_t qi = 0; qi < q; ++qi) {
        std::vector<std::pair<double, std::size_t>> dist(m);
        for (std::size_t i = 0; i < m; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                const double diff = queries.at2(qi, j) - bank.at2(i, j);
                acc += diff * diff;
            }
            dist[i] = {acc, i};
        }
        std::sort(dist.begin(), dist.end());
        std::map<int, std::size_t> votes;
        for (std::size_t i = 0; i < k; ++i) ++votes[bank_labels[dist[i].second]];
        int best_label = -1;
        std::size_t best_count = 0;
        for (const auto& [label, count] : votes)
            if (count > best_count) {
                best_count = count;
                best_label = label;
            }
        preds[qi] = best_label;
    }
    return preds;
}

// Independent modal-label mapping: argmax-count per cluster, ties -> smaller label.
inline std::vector<int> stat_map_naive(const std::vector<int>& cluster_ids,
                                       const std::vector<int>& true_labels, int k,
                                       int global_mode) {
    std::vector<std::map<int, std::size_t>> hist(k);
    for (std::size_t i = 0; i < cluster_ids.size(); ++i)
        ++hist[cluster_ids[i]][true_labels[i]];
    std::vector<int> mapping(k, global_mode);
    for (int c = 0; c < k; ++c) {
        std::size_t best = 0;
        for (const auto& [label, count] : hist[c])
            if (count > best) {
                best = count;
                mapping[c] = label;
            }
    }
    return mapping;
}

// Isotropic Gaussian blobs with known centers.
struct BlobSet {
    Array<float> points;
    std::vector<int> labels;
    Array<float> centers;
};

inline BlobSet make_blobs(std::size_t per_blob, std::size_t n_blobs, std::size_t dim,
                          double center_scale, double sigma, contracluster::Rng rng) {
    BlobSet out;
    out.centers = Array<float>({n_blobs, dim});
    for (std::size_t c = 0; c < n_blobs; ++c)
        for (std::size_t j = 0; j < dim; ++j)
            out.centers.at2(c, j) = static_cast<float>(rng.normal(0.0, center_scale));
    out.points = Array<float>({per_blob * n_blobs, dim});
    out.labels.resize(per_blob * n_blobs);
    std::size_t idx = 0;
    for (std::size_t c = 0; c < n_blobs; ++c)
        for (std::size_t i = 0; i < per_blob; ++i, ++idx) {
            out.labels[idx] = static_cast<int>(c);
            for (std::size_t j = 0; j < dim; ++j)
                out.points.at2(idx, j) =
                    out.centers.at2(c, j) + static_cast<float>(rng.normal(0.0, sigma));
        }
    return out;
}

} // namespace testsupport
