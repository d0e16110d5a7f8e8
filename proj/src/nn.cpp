#include "avdepth/nn.hpp"

#include <cmath>

namespace avdepth {

int64_t ParamMap::total_parameters() const {
    int64_t n = 0;
    for (const auto& [name, t] : params) n += t.numel();
    return n;
}

Tensor init_uniform(std::vector<int> shape, int64_t fan_in, Rng& rng) {
    int64_t n = 1;
    for (int d : shape) n *= d;
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::vector<double> v(static_cast<size_t>(n));
    for (auto& x : v) x = rng.uniform(-bound, bound);
    Tensor t = Tensor::from(std::move(shape), std::move(v));
    t.set_requires_grad(true);
    return t;
}

Conv2d::Conv2d(int in, int out, std::pair<int, int> k, std::pair<int, int> s,
               std::pair<int, int> p, Rng& rng)
    : in_ch(in), out_ch(out), kh(k.first), kw(k.second), stride(s), padding(p) {
    weight = init_uniform({out, in, kh, kw}, static_cast<int64_t>(in) * kh * kw, rng);
    bias = Tensor::zeros({out}, true);
}

Tensor Conv2d::operator()(const Tensor& x) const { return conv2d(x, weight, bias, stride, padding); }

std::pair<int, int> Conv2d::output_hw(int h, int w) const {
    return {(h + 2 * padding.first - kh) / stride.first + 1,
            (w + 2 * padding.second - kw) / stride.second + 1};
}

void Conv2d::collect(ParamMap& pm, const std::string& prefix) {
    pm.add(prefix + ".weight", weight);
    pm.add(prefix + ".bias", bias);
}

ConvTranspose2d::ConvTranspose2d(int in, int out, int k, int s, int p, Rng& rng)
    : in_ch(in), out_ch(out), kh(k), kw(k), stride({s, s}), padding({p, p}) {
    weight = init_uniform({in, out, k, k}, static_cast<int64_t>(out) * k * k, rng);
    bias = Tensor::zeros({out}, true);
}

Tensor ConvTranspose2d::operator()(const Tensor& x) const {
    return conv_transpose2d(x, weight, bias, stride, padding);
}

void ConvTranspose2d::collect(ParamMap& pm, const std::string& prefix) {
    pm.add(prefix + ".weight", weight);
    pm.add(prefix + ".bias", bias);
}

BatchNorm2d::BatchNorm2d(int channels) {
    gamma = Tensor::full({channels}, 1.0, true);
    beta = Tensor::zeros({channels}, true);
    running_mean.assign(static_cast<size_t>(channels), 0.0);
    running_var.assign(static_cast<size_t>(channels), 1.0);
}

Tensor BatchNorm2d::operator()(const Tensor& x, bool training) {
    return batch_norm(x, gamma, beta, running_mean, running_var, training, eps, momentum);
}

void BatchNorm2d::collect(ParamMap& pm, const std::string& prefix) {
    pm.add(prefix + ".gamma", gamma);
    pm.add(prefix + ".beta", beta);
    pm.add_buffer(prefix + ".running_mean", &running_mean);
    pm.add_buffer(prefix + ".running_var", &running_var);
}

} // namespace avdepth
