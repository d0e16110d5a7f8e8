// Central finite-difference gradient checker. Forward must rebuild the graph
// from the given leaves on every call; leaves are perturbed in place.
#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "avdepth/rng.hpp"
#include "avdepth/tensor.hpp"

namespace gradcheck {

struct Options {
    double h = 1e-4;
    // keep elements this far from activation/abs kinks when generating inputs
    double kink_margin = 0.05;
    // probe at most this many elements per leaf (0 = all), seeded selection
    int max_probes_per_leaf = 0;
    uint64_t probe_seed = 12345;
};

inline double relative_error(double analytic, double numeric) {
    const double scale = std::max({1.0, std::abs(analytic), std::abs(numeric)});
    return std::abs(analytic - numeric) / scale;
}

/// Max relative error between backward() grads and central differences over
/// every element of every leaf. forward() must return a scalar tensor.
inline double max_rel_err(const std::function<avdepth::Tensor()>& forward,
                          std::vector<avdepth::Tensor> leaves, Options opt = {}) {
    using avdepth::Tensor;
    for (auto& l : leaves) l.zero_grad();
    Tensor loss = forward();
    avdepth::backward(loss);
    std::vector<std::vector<double>> analytic;
    analytic.reserve(leaves.size());
    for (auto& l : leaves) {
        if (l.grad().empty())
            analytic.emplace_back(l.values().size(), 0.0);
        else
            analytic.push_back(l.grad());
    }
    avdepth::Rng probe_rng(opt.probe_seed);
    double worst = 0.0;
    for (size_t li = 0; li < leaves.size(); ++li) {
        auto& vals = leaves[li].raw();
        std::vector<size_t> probes;
        if (opt.max_probes_per_leaf > 0 &&
            vals.size() > static_cast<size_t>(opt.max_probes_per_leaf)) {
            for (int k = 0; k < opt.max_probes_per_leaf; ++k)
                probes.push_back(static_cast<size_t>(probe_rng.below(vals.size())));
        } else {
            probes.resize(vals.size());
            for (size_t i = 0; i < vals.size(); ++i) probes[i] = i;
        }
        for (size_t i : probes) {
            const double keep = vals[i];
            vals[i] = keep + opt.h;
            const double fp = forward().values()[0];
            vals[i] = keep - opt.h;
            const double fm = forward().values()[0];
            vals[i] = keep;
            const double numeric = (fp - fm) / (2.0 * opt.h);
            worst = std::max(worst, relative_error(analytic[li][i], numeric));
        }
    }
    return worst;
}

/// Random values with |v| >= margin, suitable for kinked ops.
inline std::vector<double> away_from_kinks(avdepth::Rng& rng, size_t n, double margin) {
    std::vector<double> v(n);
    for (auto& x : v) {
        double u = rng.uniform(-1.0, 1.0);
        x = u >= 0.0 ? margin + u : -margin + u;
    }
    return v;
}

inline std::vector<double> random_values(avdepth::Rng& rng, size_t n, double lo = -1.0,
                                         double hi = 1.0) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(lo, hi);
    return v;
}

} // namespace gradcheck
