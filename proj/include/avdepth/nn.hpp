#pragma once

#include <string>
#include <utility>
#include <vector>

#include "avdepth/rng.hpp"
#include "avdepth/tensor.hpp"

namespace avdepth {

/// Named views of a model's learnable tensors and its running-stat buffers.
struct ParamMap {
    std::vector<std::pair<std::string, Tensor>> params;
    std::vector<std::pair<std::string, std::vector<double>*>> buffers;

    void add(const std::string& name, const Tensor& t) { params.emplace_back(name, t); }
    void add_buffer(const std::string& name, std::vector<double>* v) {
        buffers.emplace_back(name, v);
    }
    int64_t total_parameters() const;
};

/// Weights draw from uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)); biases start
/// at zero.
Tensor init_uniform(std::vector<int> shape, int64_t fan_in, Rng& rng);

struct Conv2d {
    int in_ch = 0, out_ch = 0, kh = 0, kw = 0;
    std::pair<int, int> stride{1, 1};
    std::pair<int, int> padding{0, 0};
    Tensor weight, bias;

    Conv2d() = default;
    Conv2d(int in, int out, std::pair<int, int> k, std::pair<int, int> s, std::pair<int, int> p,
           Rng& rng);
    Conv2d(int in, int out, int k, int s, int p, Rng& rng)
        : Conv2d(in, out, {k, k}, {s, s}, {p, p}, rng) {}

    Tensor operator()(const Tensor& x) const;
    std::pair<int, int> output_hw(int h, int w) const;
    void collect(ParamMap& pm, const std::string& prefix);
};

struct ConvTranspose2d {
    int in_ch = 0, out_ch = 0, kh = 0, kw = 0;
    std::pair<int, int> stride{1, 1};
    std::pair<int, int> padding{0, 0};
    Tensor weight, bias;

    ConvTranspose2d() = default;
    ConvTranspose2d(int in, int out, int k, int s, int p, Rng& rng);

    Tensor operator()(const Tensor& x) const;
    void collect(ParamMap& pm, const std::string& prefix);
};

struct BatchNorm2d {
    Tensor gamma, beta;
    std::vector<double> running_mean, running_var;
    double eps = 1e-5;
    double momentum = 0.1;

    BatchNorm2d() = default;
    explicit BatchNorm2d(int channels);

    Tensor operator()(const Tensor& x, bool training);
    void collect(ParamMap& pm, const std::string& prefix);
};

} // namespace avdepth
