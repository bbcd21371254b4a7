#pragma once

#include <functional>
#include <vector>

#include "contracluster/autodiff.hpp"
#include "contracluster/rng.hpp"

namespace testsupport {

using contracluster::Array;
using contracluster::Tensor;

// Central finite differences (float64, spec step 1e-5) against reverse-mode
// gradients. The loss builder receives parameter handles and must produce a
// scalar; it is re-invoked per perturbation so each call records a fresh graph.
struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t checked = 0;
};

inline double rel_error(double analytic, double numeric) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-3});
    return std::abs(analytic - numeric) / denom;
}

inline GradCheckResult gradcheck(
    std::vector<Array<double>> inputs,
    const std::function<Tensor<double>(const std::vector<Tensor<double>>&)>& make_loss,
    double h = 1e-5) {
    std::vector<Tensor<double>> params;
    params.reserve(inputs.size());
    for (auto& a : inputs) params.push_back(Tensor<double>::parameter(a));

    Tensor<double> loss = make_loss(params);
    loss.backward();

    GradCheckResult result;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        for (std::size_t i = 0; i < params[pi].size(); ++i) {
            const double analytic = params[pi].has_grad() ? params[pi].grad()[i] : 0.0;
            const double saved = params[pi].value()[i];

            params[pi].value()[i] = saved + h;
            double up, down;
            {
                contracluster::NoGradGuard ng;
                up = make_loss(params).item();
                params[pi].value()[i] = saved - h;
                down = make_loss(params).item();
            }
            params[pi].value()[i] = saved;

            const double numeric = (up - down) / (2.0 * h);
            result.max_rel_error = std::max(result.max_rel_error, rel_error(analytic, numeric));
            ++result.checked;
        }
    }
    return result;
}

inline Array<double> random_array(contracluster::Shape shape, contracluster::Rng& rng,
                                  double lo = -1.0, double hi = 1.0) {
    Array<double> a(std::move(shape));
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = rng.uniform(lo, hi);
    return a;
}

inline Array<float> random_array_f(contracluster::Shape shape, contracluster::Rng& rng,
                                   double lo = -1.0, double hi = 1.0) {
    Array<float> a(std::move(shape));
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = static_cast<float>(rng.uniform(lo, hi));
    return a;
}

} // namespace testsupport
