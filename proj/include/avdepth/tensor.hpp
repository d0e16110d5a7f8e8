#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "avdepth/common.hpp"

namespace avdepth {

struct TensorData;

/// Dense row-major f64 array with optional reverse-mode gradient tracking.
///
/// Tensor is a cheap handle onto shared storage. Operations on tensors that
/// require grad record a backward closure and keep their inputs alive, which
/// forms the (dynamic, per-forward-pass) computation graph. A graph and the
/// tensors built on it must stay on one thread; grad-free tensors are
/// immutable values that can be shared freely.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
    static Tensor full(std::vector<int> shape, double value, bool requires_grad = false);
    static Tensor from(std::vector<int> shape, std::vector<double> values,
                       bool requires_grad = false);

    bool defined() const { return data_ != nullptr; }
    const std::vector<int>& shape() const;
    int dim(int i) const;
    int64_t numel() const;
    uint64_t node_id() const;

    const std::vector<double>& values() const;
    /// Direct element access for leaves (parameter updates, test setup).
    std::vector<double>& raw();

    bool requires_grad() const;
    void set_requires_grad(bool rg);

    /// Gradient accumulated by backward(); empty until populated.
    const std::vector<double>& grad() const;
    void zero_grad();

    std::shared_ptr<TensorData> ptr() const { return data_; }
    explicit Tensor(std::shared_ptr<TensorData> d) : data_(std::move(d)) {}

private:
    std::shared_ptr<TensorData> data_;
};

struct TensorData {
    std::vector<int> shape;
    std::vector<double> values;
    std::vector<double> grad; // sized lazily by backward
    bool requires_grad = false;
    uint64_t id = 0;
    const char* op = ""; // producing op, "" for leaves
    std::vector<std::shared_ptr<TensorData>> parents;
    std::function<void(TensorData&)> backprop;

    int64_t numel() const { return static_cast<int64_t>(values.size()); }
    void ensure_grad() {
        if (grad.empty()) grad.assign(values.size(), 0.0);
    }
};

/// Scoped switch that disables graph recording (evaluation passes).
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

bool grad_enabled();

/// One node of the taped graph as seen by diagnostics/tests.
struct GraphNode {
    const char* op;
    std::vector<uint64_t> inputs;
    uint64_t output;
};

/// Nodes reachable from root in topological order (inputs precede users).
std::vector<GraphNode> collect_graph(const Tensor& root);

/// Reverse-mode sweep from a scalar loss. Populates grad on every reachable
/// requires_grad tensor; repeated sweeps accumulate until zero_grad().
void backward(const Tensor& loss);

// ---- elementwise / reductions -------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);

enum class Activation { Relu, LeakyRelu, Sigmoid };
Tensor relu(const Tensor& x);
Tensor leaky_relu(const Tensor& x, double negative_slope = 0.2);
Tensor sigmoid(const Tensor& x);

Tensor sum(const Tensor& x);
/// dot(x, w) with constant weights; scalarizes outputs for gradient checks.
Tensor weighted_sum(const Tensor& x, const std::vector<double>& w);

// ---- structural ----------------------------------------------------------

Tensor reshape(const Tensor& x, std::vector<int> new_shape);
Tensor concat_channels(const std::vector<Tensor>& xs); // along dim 1 of [B,C,H,W]
Tensor global_avg_pool(const Tensor& x);               // [B,C,H,W] -> [B,C]
Tensor adaptive_avg_pool(const Tensor& x, int out_h, int out_w);
Tensor broadcast_spatial(const Tensor& v, int h, int w); // [B,C] -> [B,C,h,w]

// ---- conv family ----------------------------------------------------------

/// x:[B,Cin,H,W] w:[Cout,Cin,kh,kw] bias:[Cout] or undefined.
/// H' = floor((H + 2*pad - kh)/stride) + 1 (same for W').
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias,
              std::pair<int, int> stride, std::pair<int, int> padding);

/// x:[B,Cin,H,W] w:[Cin,Cout,kh,kw] bias:[Cout] or undefined.
/// H' = (H - 1)*stride - 2*pad + kh. Adjoint of conv2d in its input.
Tensor conv_transpose2d(const Tensor& x, const Tensor& w, const Tensor& bias,
                        std::pair<int, int> stride, std::pair<int, int> padding);

/// Batch normalization over [B,C,H,W]. Training mode normalizes with batch
/// statistics and updates running stats in place; eval mode reads them.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  std::vector<double>& running_mean, std::vector<double>& running_var,
                  bool training, double eps = 1e-5, double momentum = 0.1);

// ---- fusion / loss --------------------------------------------------------

/// fe:[N] a:[N,N] v:[N] -> scalar fe^T a v.
Tensor matvec_bilinear(const Tensor& fe, const Tensor& a, const Tensor& v);

/// fe:[B,N] a:[K,N,N] bias:[K] fmap:[B,N,h,w] -> [B,K,h,w],
/// out[b,j,p,q] = fe_b^T a_j fmap_b(:,p,q) + bias[j].
Tensor bilinear_fusion_map(const Tensor& fe, const Tensor& a, const Tensor& bias,
                           const Tensor& fmap);

/// fe:[B,N] fmap:[B,N,h,w] -> [B,1,h,w] per-pixel dot products.
Tensor dot_fusion_map(const Tensor& fe, const Tensor& fmap);

/// alpha*de + (1-alpha)*di, all [B,1,H,W].
Tensor combine_depth(const Tensor& alpha, const Tensor& de, const Tensor& di);

/// Mean over valid pixels of ln(1 + |dgt - dhat|). mask has one byte per
/// element of dhat; zero-mask pixels contribute nothing to value or grad.
Tensor log_l1_loss(const Tensor& dhat, const Tensor& dgt, const std::vector<uint8_t>& mask);

} // namespace avdepth
