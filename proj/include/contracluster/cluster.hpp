#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "contracluster/array.hpp"
#include "contracluster/errors.hpp"
#include "contracluster/rng.hpp"

namespace contracluster {

// KMeans centroids in latent space; row j holds prototype j (the paper's
// column j). Assignments are temperature-scaled softmaxed cosine similarities.
struct PrototypeMatrix {
    Array<float> prototypes; // k x D
    double assignment_temperature = 0.1;

    std::size_t k() const { return prototypes.ndim() == 2 ? prototypes.dim(0) : 0; }
    std::size_t dim() const { return prototypes.ndim() == 2 ? prototypes.dim(1) : 0; }
};

struct KMeansResult {
    Array<float> centroids; // k x D
    std::vector<int> labels;
    double inertia = 0.0;
    std::vector<double> inertia_trace; // objective after each assignment step (winning restart)
    int iterations = 0;
};

namespace detail {

inline double sq_dist(const float* a, const float* b, std::size_t d) {
    double acc = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
        const double diff = static_cast<double>(a[j]) - b[j];
        acc += diff * diff;
    }
    return acc;
}

inline void kmeanspp_init(const Array<float>& pts, std::size_t k, Rng& rng,
                          std::vector<double>& centroids) {
    const std::size_t n = pts.dim(0), d = pts.dim(1);
    centroids.assign(k * d, 0.0);
    std::vector<double> mindist(n, std::numeric_limits<double>::infinity());

    std::size_t first = rng.index(n);
    for (std::size_t j = 0; j < d; ++j) centroids[j] = pts.at2(first, j);

    for (std::size_t c = 1; c < k; ++c) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                const double diff = pts.at2(i, j) - centroids[(c - 1) * d + j];
                acc += diff * diff;
            }
            mindist[i] = std::min(mindist[i], acc);
            total += mindist[i];
        }
        std::size_t chosen;
        if (total <= 0.0) {
            chosen = rng.index(n);
        } else {
            const double target = rng.uniform() * total;
            double cum = 0.0;
            chosen = n - 1;
            for (std::size_t i = 0; i < n; ++i) {
                cum += mindist[i];
                if (cum >= target) {
                    chosen = i;
                    break;
                }
            }
        }
        for (std::size_t j = 0; j < d; ++j) centroids[c * d + j] = pts.at2(chosen, j);
    }
}

struct LloydRun {
    std::vector<double> centroids;
    std::vector<int> labels;
    double inertia;
    std::vector<double> trace;
    int iterations;
};

inline LloydRun lloyd(const Array<float>& pts, std::size_t k, Rng rng, std::size_t max_iter,
                      double tol) {
    const std::size_t n = pts.dim(0), d = pts.dim(1);
    LloydRun run;
    kmeanspp_init(pts, k, rng, run.centroids);
    run.labels.assign(n, 0);
    std::vector<double> point_dist(n, 0.0);

    auto assign = [&]() {
        double inertia = 0.0;
#pragma omp parallel for schedule(static)
        for (std::int64_t i = 0; i < static_cast<std::int64_t>(n); ++i) {
            const float* p = pts.data() + i * d;
            double best = std::numeric_limits<double>::infinity();
            int best_c = 0;
            for (std::size_t c = 0; c < k; ++c) {
                double acc = 0.0;
                const double* cent = run.centroids.data() + c * d;
                for (std::size_t j = 0; j < d; ++j) {
                    const double diff = p[j] - cent[j];
                    acc += diff * diff;
                }
                if (acc < best) {
                    best = acc;
                    best_c = static_cast<int>(c);
                }
            }
            run.labels[i] = best_c;
            point_dist[i] = best;
        }
        for (std::size_t i = 0; i < n; ++i) inertia += point_dist[i];
        return inertia;
    };

    for (std::size_t it = 0; it < max_iter; ++it) {
        run.iterations = static_cast<int>(it + 1);
        run.inertia = assign();
        run.trace.push_back(run.inertia);

        std::vector<double> sums(k * d, 0.0);
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            ++counts[run.labels[i]];
            const float* p = pts.data() + i * d;
            double* srow = sums.data() + run.labels[i] * d;
            for (std::size_t j = 0; j < d; ++j) srow[j] += p[j];
        }

        std::vector<double> next(run.centroids);
        std::vector<bool> taken(n, false);
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] > 0) {
                for (std::size_t j = 0; j < d; ++j)
                    next[c * d + j] = sums[c * d + j] / static_cast<double>(counts[c]);
            } else {
                // re-seed an empty cluster at the point farthest from its centroid
                std::size_t far = 0;
                double far_d = -1.0;
                for (std::size_t i = 0; i < n; ++i) {
                    if (taken[i]) continue;
                    if (point_dist[i] > far_d) {
                        far_d = point_dist[i];
                        far = i;
                    }
                }
                taken[far] = true;
                for (std::size_t j = 0; j < d; ++j) next[c * d + j] = pts.at2(far, j);
            }
        }

        double max_shift_sq = 0.0;
        for (std::size_t c = 0; c < k; ++c) {
            double acc = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                const double diff = next[c * d + j] - run.centroids[c * d + j];
                acc += diff * diff;
            }
            max_shift_sq = std::max(max_shift_sq, acc);
        }
        run.centroids = std::move(next);
        if (std::sqrt(max_shift_sq) < tol) break;
    }

    // final assignment so labels/inertia are consistent with returned centroids
    run.inertia = assign();
    return run;
}

} // namespace detail

// Lloyd iterations from a kmeans++ start, n_init restarts, best inertia kept.
inline KMeansResult kmeans_fit(const Array<float>& points, std::size_t k, std::uint64_t seed,
                               std::size_t max_iter = 300, double tol = 1e-4,
                               std::size_t n_init = 10) {
    if (points.ndim() != 2) throw argument_error("kmeans_fit: points must be (N,D)");
    const std::size_t n = points.dim(0), d = points.dim(1);
    if (k < 1) throw argument_error("kmeans_fit: k must be >= 1");
    if (n < k)
        throw argument_error("kmeans_fit: N=" + std::to_string(n) + " < k=" + std::to_string(k));

    Rng root(seed);
    detail::LloydRun best;
    bool have = false;
    for (std::size_t r = 0; r < n_init; ++r) {
        auto run = detail::lloyd(points, k, root.split(r), max_iter, tol);
        if (!have || run.inertia < best.inertia) {
            best = std::move(run);
            have = true;
        }
    }

    KMeansResult out;
    out.centroids = Array<float>({k, d});
    for (std::size_t i = 0; i < k * d; ++i) out.centroids[i] = static_cast<float>(best.centroids[i]);
    out.labels = std::move(best.labels);
    out.inertia = best.inertia;
    out.inertia_trace = std::move(best.trace);
    out.iterations = best.iterations;
    return out;
}

struct ElbowResult {
    int selected_k = 0;
    std::vector<int> ks;
    std::vector<double> inertias;
    bool knee_found = false;
};

// Knee point: the k maximizing perpendicular distance from the chord joining
// the curve's endpoints. A flat/linear curve has no knee; k_min is returned.
inline ElbowResult knee_from_curve(const std::vector<int>& ks,
                                   const std::vector<double>& inertias) {
    if (ks.empty() || ks.size() != inertias.size())
        throw argument_error("knee_from_curve: need matching non-empty ks/inertias");
    ElbowResult out;
    out.ks = ks;
    out.inertias = inertias;
    if (ks.size() < 3) {
        out.selected_k = ks.front();
        out.knee_found = false;
        return out;
    }
    const double x1 = ks.front(), y1 = inertias.front();
    const double x2 = ks.back(), y2 = inertias.back();
    const double norm = std::sqrt((y2 - y1) * (y2 - y1) + (x2 - x1) * (x2 - x1));
    double best_dist = 0.0;
    int best_k = ks.front();
    for (std::size_t i = 0; i < ks.size(); ++i) {
        const double x = ks[i], y = inertias[i];
        const double dist = std::abs((y2 - y1) * x - (x2 - x1) * y + x2 * y1 - y2 * x1) / norm;
        if (dist > best_dist) {
            best_dist = dist;
            best_k = ks[i];
        }
    }
    const double scale = std::max({std::abs(y1), std::abs(y2), 1.0});
    out.knee_found = best_dist > 1e-9 * scale;
    out.selected_k = out.knee_found ? best_k : ks.front();
    return out;
}

inline ElbowResult elbow_select(const Array<float>& points, int k_min, int k_max,
                                std::uint64_t seed, std::size_t n_init = 10,
                                std::size_t max_iter = 300, double tol = 1e-4) {
    if (k_min < 1 || k_max < k_min) throw argument_error("elbow_select: bad k range");
    const std::size_t n = points.dim(0);
    if (static_cast<std::size_t>(k_max) > n)
        throw argument_error("elbow_select: k_max exceeds point count");
    std::vector<int> ks;
    std::vector<double> inertias;
    Rng root(seed);
    for (int k = k_min; k <= k_max; ++k) {
        auto res = kmeans_fit(points, static_cast<std::size_t>(k),
                              root.split(static_cast<std::uint64_t>(k)).seed(), max_iter, tol,
                              n_init);
        ks.push_back(k);
        inertias.push_back(res.inertia);
    }
    return knee_from_curve(ks, inertias);
}

namespace detail {
inline double cosine_to_proto(const float* h, const float* p, std::size_t d) {
    double dot = 0.0, nh = 0.0, np = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
        dot += static_cast<double>(h[j]) * p[j];
        nh += static_cast<double>(h[j]) * h[j];
        np += static_cast<double>(p[j]) * p[j];
    }
    return dot / ((std::sqrt(nh) + 1e-12) * (std::sqrt(np) + 1e-12));
}
} // namespace detail

// s_j = exp(cos(h, proto_j)/T) / sum_m exp(cos(h, proto_m)/T), rows on the simplex.
inline Array<float> soft_assign(const Array<float>& h, const PrototypeMatrix& protos) {
    if (h.ndim() != 2 || h.dim(1) != protos.dim())
        throw shape_error("soft_assign: latents " + shape_str(h.shape()) +
                          " incompatible with prototypes of dim " +
                          std::to_string(protos.dim()));
    if (protos.k() < 2) throw argument_error("soft_assign: need k >= 2 prototypes");
    const std::size_t b = h.dim(0), d = h.dim(1), k = protos.k();
    const double temp = protos.assignment_temperature;
    Array<float> out({b, k});
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(b); ++i) {
        std::vector<double> sims(k);
        double m = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < k; ++c) {
            sims[c] = detail::cosine_to_proto(h.data() + i * d,
                                              protos.prototypes.data() + c * d, d) /
                      temp;
            m = std::max(m, sims[c]);
        }
        double denom = 0.0;
        for (std::size_t c = 0; c < k; ++c) denom += std::exp(sims[c] - m);
        for (std::size_t c = 0; c < k; ++c)
            out.at2(i, c) = static_cast<float>(std::exp(sims[c] - m) / denom);
    }
    return out;
}

// Index of the most cosine-similar prototype; ties break to the lowest index.
inline int hard_label(const float* h, std::size_t d, const PrototypeMatrix& protos) {
    const std::size_t k = protos.k();
    double best = -std::numeric_limits<double>::infinity();
    int best_c = 0;
    for (std::size_t c = 0; c < k; ++c) {
        const double sim = detail::cosine_to_proto(h, protos.prototypes.data() + c * d, d);
        if (sim > best) {
            best = sim;
            best_c = static_cast<int>(c);
        }
    }
    return best_c;
}

inline std::vector<int> hard_labels(const Array<float>& h, const PrototypeMatrix& protos) {
    if (h.ndim() != 2 || h.dim(1) != protos.dim())
        throw shape_error("hard_labels: latents incompatible with prototypes");
    const std::size_t b = h.dim(0), d = h.dim(1);
    std::vector<int> out(b);
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(b); ++i)
        out[i] = hard_label(h.data() + i * d, d, protos);
    return out;
}

} // namespace contracluster
