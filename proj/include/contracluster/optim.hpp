#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "contracluster/autodiff.hpp"

namespace contracluster {

// Warmup ramp followed by cosine annealing, evaluated per epoch.
// lr(0)=start_lr, lr(ramp_epochs)=peak_lr, lr(total_epochs)=final_lr.
struct ScheduleConfig {
    double start_lr = 0.01;
    double peak_lr = 0.25;
    double final_lr = 0.05;
    int ramp_epochs = 10;
    int total_epochs = 100;
};

inline double lr_at(int epoch, const ScheduleConfig& s) {
    if (epoch < 0 || epoch > s.total_epochs)
        throw argument_error("lr_at: epoch " + std::to_string(epoch) + " outside [0, " +
                             std::to_string(s.total_epochs) + "]");
    if (epoch == 0) return s.start_lr;
    if (epoch == s.ramp_epochs) return s.peak_lr;
    if (epoch == s.total_epochs) return s.final_lr;
    if (epoch < s.ramp_epochs)
        return s.start_lr + (s.peak_lr - s.start_lr) * static_cast<double>(epoch) / s.ramp_epochs;
    const double progress = static_cast<double>(epoch - s.ramp_epochs) /
                            static_cast<double>(s.total_epochs - s.ramp_epochs);
    return s.final_lr +
           (s.peak_lr - s.final_lr) * 0.5 * (1.0 + std::cos(3.14159265358979323846 * progress));
}

struct LarsConfig {
    double trust_coefficient = 0.001;
    double momentum = 0.9;
    double weight_decay = 1e-6;
    double eps = 1e-9;
};

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Layer-wise adaptive rate scaling with momentum. The trust ratio
// trust * ||w|| / (||g|| + wd * ||w|| + eps) rescales the global lr per
// parameter tensor; tensors with zero norm fall back to ratio 1.
template <typename T>
class LarsOptimizer {
public:
    LarsOptimizer(std::vector<Parameter<T>> params, LarsConfig cfg = {})
        : params_(std::move(params)), cfg_(cfg) {
        buffers_.reserve(params_.size());
        for (const auto& p : params_) buffers_.emplace_back(p.tensor.shape());
    }

    void step(double lr) {
        ++step_count_;
        for (std::size_t pi = 0; pi < params_.size(); ++pi) {
            Tensor<T>& t = params_[pi].tensor;
            if (!t.has_grad()) continue;
            const T* g = t.grad().data();
            T* w = t.value().data();
            T* buf = buffers_[pi].data();
            const std::size_t n = t.size();

            double wsq = 0.0, gsq = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                wsq += static_cast<double>(w[i]) * w[i];
                gsq += static_cast<double>(g[i]) * g[i];
            }
            if (!std::isfinite(gsq))
                throw training_error("LARS: non-finite gradient in " + params_[pi].full_name());
            const double wnorm = std::sqrt(wsq);
            const double gnorm = std::sqrt(gsq);
            double ratio = 1.0;
            if (wnorm > 0.0)
                ratio = cfg_.trust_coefficient * wnorm /
                        (gnorm + cfg_.weight_decay * wnorm + cfg_.eps);
            const T local_lr = static_cast<T>(lr * ratio);
            const T wd = static_cast<T>(cfg_.weight_decay);
            const T mom = static_cast<T>(cfg_.momentum);
            for (std::size_t i = 0; i < n; ++i) {
                const T upd = g[i] + wd * w[i];
                buf[i] = mom * buf[i] + local_lr * upd;
                w[i] -= buf[i];
            }
        }
    }

    void zero_grad() {
        for (auto& p : params_) p.tensor.zero_grad();
    }

    const std::vector<Parameter<T>>& params() const { return params_; }
    std::vector<Array<T>>& momentum_buffers() { return buffers_; }
    const std::vector<Array<T>>& momentum_buffers() const { return buffers_; }
    long step_count() const { return step_count_; }
    void set_step_count(long c) { step_count_ = c; }
    const LarsConfig& config() const { return cfg_; }

private:
    std::vector<Parameter<T>> params_;
    LarsConfig cfg_;
    std::vector<Array<T>> buffers_;
    long step_count_ = 0;
};

template <typename T>
class AdamOptimizer {
public:
    AdamOptimizer(std::vector<Parameter<T>> params, AdamConfig cfg = {})
        : params_(std::move(params)), cfg_(cfg) {
        m_.reserve(params_.size());
        v_.reserve(params_.size());
        for (const auto& p : params_) {
            m_.emplace_back(p.tensor.shape());
            v_.emplace_back(p.tensor.shape());
        }
    }

    void step(double lr) {
        ++step_count_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, step_count_);
        const double bc2 = 1.0 - std::pow(cfg_.beta2, step_count_);
        for (std::size_t pi = 0; pi < params_.size(); ++pi) {
            Tensor<T>& t = params_[pi].tensor;
            if (!t.has_grad()) continue;
            const T* g = t.grad().data();
            T* w = t.value().data();
            T* m = m_[pi].data();
            T* v = v_[pi].data();
            const T b1 = static_cast<T>(cfg_.beta1);
            const T b2 = static_cast<T>(cfg_.beta2);
            bool finite = true;
            for (std::size_t i = 0; i < t.size(); ++i) {
                finite = finite && std::isfinite(static_cast<double>(g[i]));
                m[i] = b1 * m[i] + (T(1) - b1) * g[i];
                v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
                const double mhat = m[i] / bc1;
                const double vhat = v[i] / bc2;
                w[i] -= static_cast<T>(lr * mhat / (std::sqrt(vhat) + cfg_.eps));
            }
            if (!finite)
                throw training_error("Adam: non-finite gradient in " + params_[pi].full_name());
        }
    }

    void zero_grad() {
        for (auto& p : params_) p.tensor.zero_grad();
    }

    const std::vector<Parameter<T>>& params() const { return params_; }
    long step_count() const { return step_count_; }

private:
    std::vector<Parameter<T>> params_;
    AdamConfig cfg_;
    std::vector<Array<T>> m_, v_;
    long step_count_ = 0;
};

} // namespace contracluster
