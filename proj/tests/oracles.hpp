// Independent reference implementations used to cross-check the library.
// Everything here is deliberately written as plain nested loops with no
// shared code paths with src/, so a defect cannot cancel out.
#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace oracle {

// Direct convolution, sextuple loop.
inline std::vector<double> conv2d_direct(const std::vector<double>& x, int B, int Cin, int H,
                                         int W, const std::vector<double>& w, int Cout, int kh,
                                         int kw, const std::vector<double>& bias, int sh, int sw,
                                         int ph, int pw) {
    const int OH = (H + 2 * ph - kh) / sh + 1;
    const int OW = (W + 2 * pw - kw) / sw + 1;
    std::vector<double> out(static_cast<size_t>(B) * Cout * OH * OW, 0.0);
    for (int b = 0; b < B; ++b)
        for (int oc = 0; oc < Cout; ++oc)
            for (int oh = 0; oh < OH; ++oh)
                for (int ow = 0; ow < OW; ++ow) {
                    double acc = 0.0;
                    for (int ic = 0; ic < Cin; ++ic)
                        for (int r = 0; r < kh; ++r)
                            for (int s = 0; s < kw; ++s) {
                                const int ih = oh * sh - ph + r;
                                const int iw = ow * sw - pw + s;
                                if (ih < 0 || ih >= H || iw < 0 || iw >= W) continue;
                                acc += x[((static_cast<size_t>(b) * Cin + ic) * H + ih) * W + iw] *
                                       w[((static_cast<size_t>(oc) * Cin + ic) * kh + r) * kw + s];
                            }
                    if (!bias.empty()) acc += bias[static_cast<size_t>(oc)];
                    out[((static_cast<size_t>(b) * Cout + oc) * OH + oh) * OW + ow] = acc;
                }
    return out;
}

// Direct transposed convolution via input-scatter.
inline std::vector<double> conv_transpose2d_direct(const std::vector<double>& x, int B, int Cin,
                                                   int H, int W, const std::vector<double>& w,
                                                   int Cout, int kh, int kw,
                                                   const std::vector<double>& bias, int sh,
                                                   int sw, int ph, int pw) {
    const int OH = (H - 1) * sh - 2 * ph + kh;
    const int OW = (W - 1) * sw - 2 * pw + kw;
    std::vector<double> out(static_cast<size_t>(B) * Cout * OH * OW, 0.0);
    for (int b = 0; b < B; ++b)
        for (int ic = 0; ic < Cin; ++ic)
            for (int ih = 0; ih < H; ++ih)
                for (int iw = 0; iw < W; ++iw) {
                    const double v = x[((static_cast<size_t>(b) * Cin + ic) * H + ih) * W + iw];
                    for (int oc = 0; oc < Cout; ++oc)
                        for (int r = 0; r < kh; ++r)
                            for (int s = 0; s < kw; ++s) {
                                const int oh = ih * sh - ph + r;
                                const int ow = iw * sw - pw + s;
                                if (oh < 0 || oh >= OH || ow < 0 || ow >= OW) continue;
                                out[((static_cast<size_t>(b) * Cout + oc) * OH + oh) * OW + ow] +=
                                    v * w[((static_cast<size_t>(ic) * Cout + oc) * kh + r) * kw + s];
                            }
                }
    if (!bias.empty())
        for (int b = 0; b < B; ++b)
            for (int oc = 0; oc < Cout; ++oc)
                for (int i = 0; i < OH * OW; ++i)
                    out[(static_cast<size_t>(b) * Cout + oc) * OH * OW + i] +=
                        bias[static_cast<size_t>(oc)];
    return out;
}

// O(n*m) direct linear convolution of two sequences.
inline std::vector<double> convolve_direct(const std::vector<double>& a,
                                           const std::vector<double>& b) {
    if (a.empty() || b.empty()) return {};
    std::vector<double> out(a.size() + b.size() - 1, 0.0);
    for (size_t i = 0; i < a.size(); ++i)
        for (size_t j = 0; j < b.size(); ++j) out[i + j] += a[i] * b[j];
    return out;
}

// Per-pixel scalar-loop depth metrics (valid = dgt > 0).
struct MetricsOracle {
    double rmse = 0, rel = 0, log10 = 0, d1 = 0, d2 = 0, d3 = 0;
    int64_t n_valid = 0;
};

inline MetricsOracle metrics_direct(const std::vector<double>& dhat,
                                    const std::vector<double>& dgt, double clamp_floor = 1e-3) {
    MetricsOracle m;
    double se = 0, rel = 0, lg = 0;
    int64_t c1 = 0, c2 = 0, c3 = 0;
    const double t1 = 1.25, t2 = 1.25 * 1.25, t3 = 1.25 * 1.25 * 1.25;
    for (size_t i = 0; i < dgt.size(); ++i) {
        if (!(dgt[i] > 0.0)) continue;
        ++m.n_valid;
        const double d = dgt[i];
        const double p = dhat[i];
        se += (p - d) * (p - d);
        rel += std::abs(p - d) / d;
        const double pc = p > clamp_floor ? p : clamp_floor;
        lg += std::abs(std::log10(pc) - std::log10(d));
        const double ratio = pc / d > d / pc ? pc / d : d / pc;
        if (ratio < t1) ++c1;
        if (ratio < t2) ++c2;
        if (ratio < t3) ++c3;
    }
    if (m.n_valid > 0) {
        m.rmse = std::sqrt(se / static_cast<double>(m.n_valid));
        m.rel = rel / static_cast<double>(m.n_valid);
        m.log10 = lg / static_cast<double>(m.n_valid);
        m.d1 = static_cast<double>(c1) / static_cast<double>(m.n_valid);
        m.d2 = static_cast<double>(c2) / static_cast<double>(m.n_valid);
        m.d3 = static_cast<double>(c3) / static_cast<double>(m.n_valid);
    }
    return m;
}

} // namespace oracle
