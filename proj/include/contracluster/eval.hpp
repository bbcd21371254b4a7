#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "contracluster/cluster.hpp"
#include "contracluster/model.hpp"
#include "contracluster/optim.hpp"

namespace contracluster {

// cluster index -> modal true label, with the per-cluster label histogram kept
// for inspection. Empty clusters fall back to the global modal label.
struct ClusterLabelMap {
    std::vector<int> mapping;
    std::vector<std::vector<std::size_t>> support; // [cluster][label] counts
    std::vector<bool> empty_clusters;

    bool has_empty() const {
        return std::any_of(empty_clusters.begin(), empty_clusters.end(), [](bool b) { return b; });
    }
};

inline ClusterLabelMap fit_cluster_label_map(const Array<float>& latents,
                                             const std::vector<int>& true_labels,
                                             const PrototypeMatrix& protos) {
    if (latents.dim(0) != true_labels.size() || true_labels.empty())
        throw argument_error("fit_cluster_label_map: need matching nonempty latents/labels");
    const std::size_t k = protos.k();
    int class_count = 0;
    for (int l : true_labels) class_count = std::max(class_count, l + 1);

    ClusterLabelMap out;
    out.support.assign(k, std::vector<std::size_t>(class_count, 0));
    out.mapping.assign(k, 0);
    out.empty_clusters.assign(k, false);

    const auto assigned = hard_labels(latents, protos);
    for (std::size_t i = 0; i < assigned.size(); ++i)
        ++out.support[assigned[i]][true_labels[i]];

    std::vector<std::size_t> global(class_count, 0);
    for (int l : true_labels) ++global[l];
    const int global_mode = static_cast<int>(
        std::max_element(global.begin(), global.end()) - global.begin());

    for (std::size_t c = 0; c < k; ++c) {
        std::size_t total = 0, best = 0;
        int best_label = global_mode;
        for (int l = 0; l < class_count; ++l) {
            total += out.support[c][l];
            if (out.support[c][l] > best) { // ties keep the smaller label
                best = out.support[c][l];
                best_label = l;
            }
        }
        out.mapping[c] = best_label;
        out.empty_clusters[c] = total == 0;
    }
    return out;
}

inline std::vector<int> predict_stat(const Array<float>& latents, const PrototypeMatrix& protos,
                                     const ClusterLabelMap& map) {
    if (map.mapping.size() != protos.k())
        throw argument_error("predict_stat: map does not cover all clusters");
    const auto assigned = hard_labels(latents, protos);
    std::vector<int> preds(assigned.size());
    for (std::size_t i = 0; i < assigned.size(); ++i) preds[i] = map.mapping[assigned[i]];
    return preds;
}

// Labeled latent codes queried by kNN at evaluation time.
struct MemoryBank {
    Array<float> latents; // M x D
    std::vector<int> labels;
    std::size_t k_neighbors = 5;
};

// Euclidean kNN: modal label of the k nearest bank entries. Distance ties
// break to the lower bank index, label-count ties to the smaller label.
inline std::vector<int> knn_predict(const MemoryBank& bank, const Array<float>& queries) {
    if (bank.labels.empty()) throw argument_error("knn_predict: empty memory bank");
    if (bank.latents.dim(0) != bank.labels.size())
        throw argument_error("knn_predict: bank latents/labels disagree");
    if (bank.k_neighbors > bank.labels.size())
        throw argument_error("knn_predict: k_neighbors exceeds bank size");
    const std::size_t m = bank.latents.dim(0), d = bank.latents.dim(1);
    if (queries.dim(1) != d) throw shape_error("knn_predict: dimension mismatch");
    const std::size_t q = queries.dim(0), k = bank.k_neighbors;

    std::vector<int> preds(q);
#pragma omp parallel for schedule(static)
    for (std::int64_t qi = 0; qi < static_cast<std::int64_t>(q); ++qi) {
        std::vector<std::pair<double, std::size_t>> dist(m);
        const float* qrow = queries.data() + qi * d;
        for (std::size_t i = 0; i < m; ++i) {
            double acc = 0.0;
            const float* brow = bank.latents.data() + i * d;
            for (std::size_t j = 0; j < d; ++j) {
                const double diff = static_cast<double>(qrow[j]) - brow[j];
                acc += diff * diff;
            }
            dist[i] = {acc, i};
        }
        std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
        std::map<int, std::size_t> votes;
        for (std::size_t i = 0; i < k; ++i) ++votes[bank.labels[dist[i].second]];
        int best_label = votes.begin()->first;
        std::size_t best_count = 0;
        for (const auto& [label, count] : votes)
            if (count > best_count) { // map iteration is label-ascending: ties keep smaller
                best_count = count;
                best_label = label;
            }
        preds[qi] = best_label;
    }
    return preds;
}

struct Metrics {
    double accuracy = 0.0;
    double precision = 0.0; // macro
    double recall = 0.0;    // macro
    bool zero_division_hit = false;
};

inline Metrics compute_metrics(const std::vector<int>& pred, const std::vector<int>& truth,
                               int class_count) {
    if (pred.size() != truth.size())
        throw argument_error("compute_metrics: prediction/label lengths disagree");
    if (pred.empty()) throw argument_error("compute_metrics: empty inputs");

    std::vector<std::vector<std::size_t>> confusion(class_count,
                                                    std::vector<std::size_t>(class_count, 0));
    std::size_t correct = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (pred[i] < 0 || pred[i] >= class_count || truth[i] < 0 || truth[i] >= class_count)
            throw argument_error("compute_metrics: label outside [0, class_count)");
        ++confusion[truth[i]][pred[i]];
        if (pred[i] == truth[i]) ++correct;
    }

    Metrics m;
    m.accuracy = static_cast<double>(correct) / static_cast<double>(pred.size());
    double precision_sum = 0.0, recall_sum = 0.0;
    for (int c = 0; c < class_count; ++c) {
        std::size_t tp = confusion[c][c], pred_c = 0, true_c = 0;
        for (int o = 0; o < class_count; ++o) {
            pred_c += confusion[o][c];
            true_c += confusion[c][o];
        }
        if (pred_c == 0) {
            m.zero_division_hit = true;
        } else {
            precision_sum += static_cast<double>(tp) / static_cast<double>(pred_c);
        }
        if (true_c == 0) {
            m.zero_division_hit = true;
        } else {
            recall_sum += static_cast<double>(tp) / static_cast<double>(true_c);
        }
    }
    m.precision = precision_sum / class_count;
    m.recall = recall_sum / class_count;
    return m;
}

// A single linear layer trained with Adam + categorical cross-entropy on
// frozen representations.
struct LinearClassifier {
    Array<float> w; // C x D
    Array<float> b; // C
    std::string feature_space = "projection";

    std::vector<int> predict(const Array<float>& features) const {
        const std::size_t n = features.dim(0), d = features.dim(1), c = w.dim(0);
        if (d != w.dim(1)) throw shape_error("LinearClassifier: feature dim mismatch");
        std::vector<int> preds(n);
        for (std::size_t i = 0; i < n; ++i) {
            int best = 0;
            double best_v = -std::numeric_limits<double>::infinity();
            for (std::size_t cl = 0; cl < c; ++cl) {
                double acc = b[cl];
                for (std::size_t j = 0; j < d; ++j) acc += static_cast<double>(w.at2(cl, j)) * features.at2(i, j);
                if (acc > best_v) {
                    best_v = acc;
                    best = static_cast<int>(cl);
                }
            }
            preds[i] = best;
        }
        return preds;
    }
};

struct ProbeConfig {
    int epochs = 200;
    double lr = 3e-4;
    std::size_t batch_size = 256;
    std::uint64_t seed = 0;
};

inline LinearClassifier linear_probe(const Array<float>& features,
                                     const std::vector<int>& labels, int class_count,
                                     const ProbeConfig& cfg = {}) {
    if (features.dim(0) != labels.size() || labels.empty())
        throw argument_error("linear_probe: need matching nonempty features/labels");
    std::vector<std::size_t> hist(class_count, 0);
    for (int l : labels) {
        if (l < 0 || l >= class_count) throw argument_error("linear_probe: label out of range");
        ++hist[l];
    }
    for (int c = 0; c < class_count; ++c)
        if (hist[c] == 0)
            throw argument_error("linear_probe: class " + std::to_string(c) +
                                 " has no training samples");

    const std::size_t n = features.dim(0), d = features.dim(1);
    Rng rng(cfg.seed);
    LinearLayer<float> layer(static_cast<std::size_t>(class_count), d, rng.split("init"),
                             "probe");
    std::vector<Parameter<float>> params;
    layer.collect(params);
    AdamOptimizer<float> opt(params);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng erng = rng.split("epoch").split(static_cast<std::uint64_t>(epoch));
        auto order = erng.permutation(n);
        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            const std::size_t bsz = std::min(cfg.batch_size, n - start);
            Array<float> xb({bsz, d});
            std::vector<int> yb(bsz);
            for (std::size_t i = 0; i < bsz; ++i) {
                std::copy(features.data() + order[start + i] * d,
                          features.data() + (order[start + i] + 1) * d, xb.data() + i * d);
                yb[i] = labels[order[start + i]];
            }
            opt.zero_grad();
            auto loss = ops::cross_entropy_logits(layer(Tensor<float>::constant(xb)), yb);
            loss.backward();
            opt.step(cfg.lr);
        }
    }

    LinearClassifier clf;
    clf.w = layer.w.value();
    clf.b = layer.b.value();
    return clf;
}

} // namespace contracluster
