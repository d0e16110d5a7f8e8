#include "avdepth/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "avdepth/gemm.hpp"

namespace avdepth {

namespace {

std::atomic<uint64_t> g_next_id{1};
thread_local bool g_grad_enabled = true;

std::string shape_str(const std::vector<int>& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << "]";
    return os.str();
}

int64_t shape_numel(const std::vector<int>& s) {
    int64_t n = 1;
    for (int d : s) {
        if (d <= 0) throw DimensionError("non-positive dimension in shape " + shape_str(s));
        n *= d;
    }
    return n;
}

std::shared_ptr<TensorData> alloc(std::vector<int> shape, std::vector<double> values) {
    auto d = std::make_shared<TensorData>();
    d->shape = std::move(shape);
    d->values = std::move(values);
    d->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
    return d;
}

bool any_requires_grad(std::initializer_list<const Tensor*> ts) {
    for (const Tensor* t : ts)
        if (t->defined() && t->requires_grad()) return true;
    return false;
}

// Wire the output node into the graph if grad tracking applies.
void attach(const std::shared_ptr<TensorData>& out, const char* op,
            std::initializer_list<const Tensor*> inputs,
            std::function<void(TensorData&)> backprop) {
    out->op = op;
    if (!g_grad_enabled) return;
    bool rg = false;
    for (const Tensor* t : inputs)
        if (t->defined() && t->requires_grad()) rg = true;
    if (!rg) return;
    out->requires_grad = true;
    for (const Tensor* t : inputs)
        if (t->defined()) out->parents.push_back(t->ptr());
    out->backprop = std::move(backprop);
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                             " vs " + shape_str(b.shape()));
}

// col[(c*kh+r)*kw+s][p*PW+q] = img[c][p*sh-ph+r][q*sw-pw+s], zero outside.
void im2col(const double* img, int C, int IH, int IW, int kh, int kw, int sh, int sw,
            int ph, int pw, int PH, int PW, double* col) {
    const int64_t npos = static_cast<int64_t>(PH) * PW;
    for (int c = 0; c < C; ++c) {
        const double* plane = img + static_cast<int64_t>(c) * IH * IW;
        for (int r = 0; r < kh; ++r) {
            for (int s = 0; s < kw; ++s) {
                double* row = col + ((static_cast<int64_t>(c) * kh + r) * kw + s) * npos;
                for (int p = 0; p < PH; ++p) {
                    const int ih = p * sh - ph + r;
                    double* dst = row + static_cast<int64_t>(p) * PW;
                    if (ih < 0 || ih >= IH) {
                        std::fill(dst, dst + PW, 0.0);
                        continue;
                    }
                    const double* src = plane + static_cast<int64_t>(ih) * IW;
                    for (int q = 0; q < PW; ++q) {
                        const int iw = q * sw - pw + s;
                        dst[q] = (iw < 0 || iw >= IW) ? 0.0 : src[iw];
                    }
                }
            }
        }
    }
}

// Adjoint of im2col: img[c][p*sh-ph+r][q*sw-pw+s] += col[...][p*PW+q].
void col2im_add(const double* col, int C, int IH, int IW, int kh, int kw, int sh, int sw,
                int ph, int pw, int PH, int PW, double* img) {
    const int64_t npos = static_cast<int64_t>(PH) * PW;
    for (int c = 0; c < C; ++c) {
        double* plane = img + static_cast<int64_t>(c) * IH * IW;
        for (int r = 0; r < kh; ++r) {
            for (int s = 0; s < kw; ++s) {
                const double* row = col + ((static_cast<int64_t>(c) * kh + r) * kw + s) * npos;
                for (int p = 0; p < PH; ++p) {
                    const int ih = p * sh - ph + r;
                    if (ih < 0 || ih >= IH) continue;
                    double* dst = plane + static_cast<int64_t>(ih) * IW;
                    const double* src = row + static_cast<int64_t>(p) * PW;
                    for (int q = 0; q < PW; ++q) {
                        const int iw = q * sw - pw + s;
                        if (iw >= 0 && iw < IW) dst[iw] += src[q];
                    }
                }
            }
        }
    }
}

} // namespace

// ---- Tensor ----------------------------------------------------------------

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
    const int64_t n = shape_numel(shape);
    auto d = alloc(std::move(shape), std::vector<double>(static_cast<size_t>(n), 0.0));
    d->requires_grad = requires_grad;
    return Tensor(std::move(d));
}

Tensor Tensor::full(std::vector<int> shape, double value, bool requires_grad) {
    const int64_t n = shape_numel(shape);
    auto d = alloc(std::move(shape), std::vector<double>(static_cast<size_t>(n), value));
    d->requires_grad = requires_grad;
    return Tensor(std::move(d));
}

Tensor Tensor::from(std::vector<int> shape, std::vector<double> values, bool requires_grad) {
    const int64_t n = shape_numel(shape);
    if (n != static_cast<int64_t>(values.size()))
        throw DimensionError("Tensor::from: " + std::to_string(values.size()) +
                             " values for shape " + shape_str(shape));
    auto d = alloc(std::move(shape), std::move(values));
    d->requires_grad = requires_grad;
    return Tensor(std::move(d));
}

const std::vector<int>& Tensor::shape() const { return data_->shape; }
int Tensor::dim(int i) const { return data_->shape.at(static_cast<size_t>(i)); }
int64_t Tensor::numel() const { return data_->numel(); }
uint64_t Tensor::node_id() const { return data_->id; }
const std::vector<double>& Tensor::values() const { return data_->values; }
std::vector<double>& Tensor::raw() { return data_->values; }
bool Tensor::requires_grad() const { return data_->requires_grad; }
void Tensor::set_requires_grad(bool rg) { data_->requires_grad = rg; }
const std::vector<double>& Tensor::grad() const { return data_->grad; }
void Tensor::zero_grad() { data_->grad.assign(data_->values.size(), 0.0); }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }
bool grad_enabled() { return g_grad_enabled; }

// ---- graph traversal -------------------------------------------------------

namespace {

// Post-order over parents: emits inputs before their users.
std::vector<TensorData*> topo_order(TensorData* root) {
    std::vector<TensorData*> order;
    std::unordered_set<TensorData*> visited;
    std::vector<std::pair<TensorData*, size_t>> stack;
    stack.emplace_back(root, 0);
    visited.insert(root);
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            TensorData* p = node->parents[idx++].get();
            if (visited.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    return order;
}

} // namespace

std::vector<GraphNode> collect_graph(const Tensor& root) {
    std::vector<GraphNode> nodes;
    if (!root.defined()) return nodes;
    for (TensorData* d : topo_order(root.ptr().get())) {
        GraphNode n;
        n.op = d->op;
        n.output = d->id;
        for (auto& p : d->parents) n.inputs.push_back(p->id);
        nodes.push_back(std::move(n));
    }
    return nodes;
}

void backward(const Tensor& loss) {
    if (!loss.defined()) throw ArgumentError("backward: undefined tensor");
    if (loss.numel() != 1)
        throw NumericError("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
    TensorData* root = loss.ptr().get();
    if (!root->requires_grad) return;
    auto order = topo_order(root);
    // Sweep gradients are transient; previously accumulated grads are parked
    // aside and added back afterwards, so repeated sweeps accumulate without
    // the seed compounding.
    std::vector<std::vector<double>> parked(order.size());
    for (size_t i = 0; i < order.size(); ++i) parked[i] = std::move(order[i]->grad);
    root->ensure_grad();
    root->grad[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorData* node = *it;
        if (node->backprop && !node->grad.empty()) node->backprop(*node);
    }
    for (size_t i = 0; i < order.size(); ++i) {
        if (parked[i].empty()) continue;
        TensorData* node = order[i];
        node->ensure_grad();
        for (size_t k = 0; k < parked[i].size(); ++k) node->grad[k] += parked[i][k];
    }
}

// ---- elementwise ops -------------------------------------------------------

namespace {

Tensor binary_op(const Tensor& a, const Tensor& b, const char* name,
                 double (*fwd)(double, double),
                 void (*bwd)(const TensorData&, TensorData&, TensorData&)) {
    check_same_shape(a, b, name);
    const auto& av = a.values();
    const auto& bv = b.values();
    std::vector<double> out(av.size());
    for (size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i], bv[i]);
    auto d = alloc(a.shape(), std::move(out));
    auto ap = a.ptr();
    auto bp = b.ptr();
    attach(d, name, {&a, &b}, [ap, bp, bwd](TensorData& self) { bwd(self, *ap, *bp); });
    return Tensor(std::move(d));
}

} // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    return binary_op(
        a, b, "add", [](double x, double y) { return x + y; },
        [](const TensorData& self, TensorData& pa, TensorData& pb) {
            if (pa.requires_grad) {
                pa.ensure_grad();
                for (size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += self.grad[i];
            }
            if (pb.requires_grad) {
                pb.ensure_grad();
                for (size_t i = 0; i < self.grad.size(); ++i) pb.grad[i] += self.grad[i];
            }
        });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary_op(
        a, b, "sub", [](double x, double y) { return x - y; },
        [](const TensorData& self, TensorData& pa, TensorData& pb) {
            if (pa.requires_grad) {
                pa.ensure_grad();
                for (size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += self.grad[i];
            }
            if (pb.requires_grad) {
                pb.ensure_grad();
                for (size_t i = 0; i < self.grad.size(); ++i) pb.grad[i] -= self.grad[i];
            }
        });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return binary_op(
        a, b, "mul", [](double x, double y) { return x * y; },
        [](const TensorData& self, TensorData& pa, TensorData& pb) {
            if (pa.requires_grad) {
                pa.ensure_grad();
                for (size_t i = 0; i < self.grad.size(); ++i)
                    pa.grad[i] += self.grad[i] * pb.values[i];
            }
            if (pb.requires_grad) {
                pb.ensure_grad();
                for (size_t i = 0; i < self.grad.size(); ++i)
                    pb.grad[i] += self.grad[i] * pa.values[i];
            }
        });
}

Tensor scale(const Tensor& a, double c) {
    const auto& av = a.values();
    std::vector<double> out(av.size());
    for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] * c;
    auto d = alloc(a.shape(), std::move(out));
    auto ap = a.ptr();
    attach(d, "scale", {&a}, [ap, c](TensorData& self) {
        if (!ap->requires_grad) return;
        ap->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) ap->grad[i] += self.grad[i] * c;
    });
    return Tensor(std::move(d));
}

namespace {

Tensor activation_op(const Tensor& x, Activation kind, double slope) {
    const auto& xv = x.values();
    std::vector<double> out(xv.size());
    switch (kind) {
    case Activation::Relu:
        for (size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] > 0.0 ? xv[i] : 0.0;
        break;
    case Activation::LeakyRelu:
        for (size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] > 0.0 ? xv[i] : slope * xv[i];
        break;
    case Activation::Sigmoid:
        for (size_t i = 0; i < xv.size(); ++i) {
            const double v = xv[i];
            // branch keeps exp() argument non-positive
            out[i] = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
        }
        break;
    }
    auto d = alloc(x.shape(), std::move(out));
    auto xp = x.ptr();
    const char* name = kind == Activation::Relu       ? "relu"
                       : kind == Activation::LeakyRelu ? "leaky_relu"
                                                        : "sigmoid";
    std::vector<double> saved_y;
    if (kind == Activation::Sigmoid && g_grad_enabled && x.requires_grad()) saved_y = d->values;
    attach(d, name, {&x}, [xp, kind, slope, saved_y = std::move(saved_y)](TensorData& self) {
        if (!xp->requires_grad) return;
        xp->ensure_grad();
        switch (kind) {
        case Activation::Relu:
            for (size_t i = 0; i < self.grad.size(); ++i)
                if (xp->values[i] > 0.0) xp->grad[i] += self.grad[i];
            break;
        case Activation::LeakyRelu:
            for (size_t i = 0; i < self.grad.size(); ++i)
                xp->grad[i] += self.grad[i] * (xp->values[i] > 0.0 ? 1.0 : slope);
            break;
        case Activation::Sigmoid:
            for (size_t i = 0; i < self.grad.size(); ++i) {
                const double y = saved_y[i];
                xp->grad[i] += self.grad[i] * y * (1.0 - y);
            }
            break;
        }
    });
    return Tensor(std::move(d));
}

} // namespace

Tensor relu(const Tensor& x) { return activation_op(x, Activation::Relu, 0.0); }
Tensor leaky_relu(const Tensor& x, double negative_slope) {
    return activation_op(x, Activation::LeakyRelu, negative_slope);
}
Tensor sigmoid(const Tensor& x) { return activation_op(x, Activation::Sigmoid, 0.0); }

Tensor sum(const Tensor& x) {
    double s = 0.0;
    for (double v : x.values()) s += v;
    auto d = alloc({1}, {s});
    auto xp = x.ptr();
    attach(d, "sum", {&x}, [xp](TensorData& self) {
        if (!xp->requires_grad) return;
        xp->ensure_grad();
        const double g = self.grad[0];
        for (double& gv : xp->grad) gv += g;
    });
    return Tensor(std::move(d));
}

Tensor weighted_sum(const Tensor& x, const std::vector<double>& w) {
    if (w.size() != x.values().size())
        throw DimensionError("weighted_sum: weight count mismatch");
    double s = 0.0;
    for (size_t i = 0; i < w.size(); ++i) s += x.values()[i] * w[i];
    auto d = alloc({1}, {s});
    auto xp = x.ptr();
    attach(d, "weighted_sum", {&x}, [xp, w](TensorData& self) {
        if (!xp->requires_grad) return;
        xp->ensure_grad();
        const double g = self.grad[0];
        for (size_t i = 0; i < w.size(); ++i) xp->grad[i] += g * w[i];
    });
    return Tensor(std::move(d));
}

// ---- structural ------------------------------------------------------------

Tensor reshape(const Tensor& x, std::vector<int> new_shape) {
    if (shape_numel(new_shape) != x.numel())
        throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                             shape_str(new_shape));
    auto d = alloc(std::move(new_shape), x.values());
    auto xp = x.ptr();
    attach(d, "reshape", {&x}, [xp](TensorData& self) {
        if (!xp->requires_grad) return;
        xp->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) xp->grad[i] += self.grad[i];
    });
    return Tensor(std::move(d));
}

Tensor concat_channels(const std::vector<Tensor>& xs) {
    if (xs.empty()) throw ArgumentError("concat_channels: empty input list");
    for (const auto& t : xs)
        if (t.shape().size() != 4) throw DimensionError("concat_channels: expects [B,C,H,W]");
    const int B = xs[0].dim(0), H = xs[0].dim(2), W = xs[0].dim(3);
    int C = 0;
    for (const auto& t : xs) {
        if (t.dim(0) != B || t.dim(2) != H || t.dim(3) != W)
            throw DimensionError("concat_channels: mismatched non-channel dims " +
                                 shape_str(t.shape()));
        C += t.dim(1);
    }
    std::vector<double> out(static_cast<size_t>(B) * C * H * W);
    const int64_t plane = static_cast<int64_t>(H) * W;
    for (int b = 0; b < B; ++b) {
        int64_t coff = 0;
        for (const auto& t : xs) {
            const int tc = t.dim(1);
            const double* src = t.values().data() + static_cast<int64_t>(b) * tc * plane;
            double* dst = out.data() + (static_cast<int64_t>(b) * C + coff) * plane;
            std::copy(src, src + static_cast<int64_t>(tc) * plane, dst);
            coff += tc;
        }
    }
    auto d = alloc({B, C, H, W}, std::move(out));
    std::vector<std::shared_ptr<TensorData>> parents;
    parents.reserve(xs.size());
    for (const auto& t : xs) parents.push_back(t.ptr());
    d->op = "concat";
    if (g_grad_enabled && std::any_of(xs.begin(), xs.end(),
                                      [](const Tensor& t) { return t.requires_grad(); })) {
        d->requires_grad = true;
        d->parents = parents;
        d->backprop = [parents, B, C, plane](TensorData& self) {
            for (int b = 0; b < B; ++b) {
                int64_t coff = 0;
                for (auto& p : parents) {
                    const int tc = p->shape[1];
                    if (p->requires_grad) {
                        p->ensure_grad();
                        const double* src =
                            self.grad.data() + (static_cast<int64_t>(b) * C + coff) * plane;
                        double* dst = p->grad.data() + static_cast<int64_t>(b) * tc * plane;
                        for (int64_t i = 0; i < static_cast<int64_t>(tc) * plane; ++i)
                            dst[i] += src[i];
                    }
                    coff += tc;
                }
            }
        };
    }
    return Tensor(std::move(d));
}

Tensor global_avg_pool(const Tensor& x) {
    if (x.shape().size() != 4) throw DimensionError("global_avg_pool: expects [B,C,H,W]");
    const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int64_t plane = static_cast<int64_t>(H) * W;
    std::vector<double> out(static_cast<size_t>(B) * C);
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c) {
            const double* src = x.values().data() + (static_cast<int64_t>(b) * C + c) * plane;
            double s = 0.0;
            for (int64_t i = 0; i < plane; ++i) s += src[i];
            out[static_cast<size_t>(b) * C + c] = s / static_cast<double>(plane);
        }
    auto d = alloc({B, C}, std::move(out));
    auto xp = x.ptr();
    attach(d, "global_avg_pool", {&x}, [xp, B, C, plane](TensorData& self) {
        if (!xp->requires_grad) return;
        xp->ensure_grad();
        for (int b = 0; b < B; ++b)
            for (int c = 0; c < C; ++c) {
                const double g =
                    self.grad[static_cast<size_t>(b) * C + c] / static_cast<double>(plane);
                double* dst = xp->grad.data() + (static_cast<int64_t>(b) * C + c) * plane;
                for (int64_t i = 0; i < plane; ++i) dst[i] += g;
            }
    });
    return Tensor(std::move(d));
}

Tensor adaptive_avg_pool(const Tensor& x, int out_h, int out_w) {
    if (x.shape().size() != 4) throw DimensionError("adaptive_avg_pool: expects [B,C,H,W]");
    if (out_h <= 0 || out_w <= 0) throw ArgumentError("adaptive_avg_pool: non-positive target");
    const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    auto bin = [](int i, int in, int out) {
        const int lo = (i * in) / out;
        const int hi = ((i + 1) * in + out - 1) / out; // ceil
        return std::pair<int, int>(lo, hi);
    };
    std::vector<double> out(static_cast<size_t>(B) * C * out_h * out_w);
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c) {
            const double* src = x.values().data() + (static_cast<int64_t>(b) * C + c) * H * W;
            double* dst =
                out.data() + (static_cast<int64_t>(b) * C + c) * out_h * out_w;
            for (int i = 0; i < out_h; ++i) {
                auto [y0, y1] = bin(i, H, out_h);
                for (int j = 0; j < out_w; ++j) {
                    auto [x0, x1] = bin(j, W, out_w);
                    double s = 0.0;
                    for (int y = y0; y < y1; ++y)
                        for (int xx = x0; xx < x1; ++xx) s += src[y * W + xx];
                    dst[i * out_w + j] = s / ((y1 - y0) * (x1 - x0));
                }
            }
        }
    auto d = alloc({B, C, out_h, out_w}, std::move(out));
    auto xp = x.ptr();
    attach(d, "adaptive_avg_pool", {&x}, [xp, B, C, H, W, out_h, out_w, bin](TensorData& self) {
        if (!xp->requires_grad) return;
        xp->ensure_grad();
        for (int b = 0; b < B; ++b)
            for (int c = 0; c < C; ++c) {
                double* dst = xp->grad.data() + (static_cast<int64_t>(b) * C + c) * H * W;
                const double* g =
                    self.grad.data() + (static_cast<int64_t>(b) * C + c) * out_h * out_w;
                for (int i = 0; i < out_h; ++i) {
                    auto [y0, y1] = bin(i, H, out_h);
                    for (int j = 0; j < out_w; ++j) {
                        auto [x0, x1] = bin(j, W, out_w);
                        const double gv = g[i * out_w + j] / ((y1 - y0) * (x1 - x0));
                        for (int y = y0; y < y1; ++y)
                            for (int xx = x0; xx < x1; ++xx) dst[y * W + xx] += gv;
                    }
                }
            }
    });
    return Tensor(std::move(d));
}

Tensor broadcast_spatial(const Tensor& v, int h, int w) {
    if (v.shape().size() != 2) throw DimensionError("broadcast_spatial: expects [B,C]");
    if (h <= 0 || w <= 0) throw ArgumentError("broadcast_spatial: non-positive size");
    const int B = v.dim(0), C = v.dim(1);
    const int64_t plane = static_cast<int64_t>(h) * w;
    std::vector<double> out(static_cast<size_t>(B) * C * plane);
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c) {
            const double val = v.values()[static_cast<size_t>(b) * C + c];
            double* dst = out.data() + (static_cast<int64_t>(b) * C + c) * plane;
            std::fill(dst, dst + plane, val);
        }
    auto d = alloc({B, C, h, w}, std::move(out));
    auto vp = v.ptr();
    attach(d, "broadcast_spatial", {&v}, [vp, B, C, plane](TensorData& self) {
        if (!vp->requires_grad) return;
        vp->ensure_grad();
        for (int b = 0; b < B; ++b)
            for (int c = 0; c < C; ++c) {
                const double* src = self.grad.data() + (static_cast<int64_t>(b) * C + c) * plane;
                double s = 0.0;
                for (int64_t i = 0; i < plane; ++i) s += src[i];
                vp->grad[static_cast<size_t>(b) * C + c] += s;
            }
    });
    return Tensor(std::move(d));
}

// ---- conv family ------------------------------------------------------------

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias,
              std::pair<int, int> stride, std::pair<int, int> padding) {
    if (x.shape().size() != 4) throw DimensionError("conv2d: input must be [B,Cin,H,W], got " +
                                                    shape_str(x.shape()));
    if (w.shape().size() != 4)
        throw DimensionError("conv2d: weight must be [Cout,Cin,kh,kw], got " +
                             shape_str(w.shape()));
    const int B = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int Cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    const auto [sh, sw] = stride;
    const auto [ph, pw] = padding;
    if (w.dim(1) != Cin)
        throw DimensionError("conv2d: channel mismatch, input Cin=" + std::to_string(Cin) +
                             " weight Cin=" + std::to_string(w.dim(1)));
    if (sh < 1 || sw < 1) throw ArgumentError("conv2d: stride must be >= 1");
    if (ph < 0 || pw < 0) throw ArgumentError("conv2d: negative padding");
    if (H + 2 * ph < kh || W + 2 * pw < kw)
        throw DimensionError("conv2d: kernel " + std::to_string(kh) + "x" + std::to_string(kw) +
                             " exceeds padded input " + std::to_string(H + 2 * ph) + "x" +
                             std::to_string(W + 2 * pw));
    if (bias.defined() && (bias.shape().size() != 1 || bias.dim(0) != Cout))
        throw DimensionError("conv2d: bias must be [Cout]");
    const int OH = (H + 2 * ph - kh) / sh + 1;
    const int OW = (W + 2 * pw - kw) / sw + 1;
    const int64_t K = static_cast<int64_t>(Cin) * kh * kw;
    const int64_t npos = static_cast<int64_t>(OH) * OW;
    const int64_t in_plane = static_cast<int64_t>(Cin) * H * W;
    const int64_t out_plane = static_cast<int64_t>(Cout) * npos;

    const bool track = g_grad_enabled && any_requires_grad({&x, &w, &bias});
    std::vector<double> col(static_cast<size_t>((track ? B : 1) * K * npos));
    std::vector<double> out(static_cast<size_t>(B) * out_plane);
    for (int b = 0; b < B; ++b) {
        double* col_b = col.data() + (track ? static_cast<int64_t>(b) * K * npos : 0);
        im2col(x.values().data() + b * in_plane, Cin, H, W, kh, kw, sh, sw, ph, pw, OH, OW, col_b);
        double* out_b = out.data() + b * out_plane;
        gemm_nn(Cout, static_cast<int>(npos), static_cast<int>(K), w.values().data(),
                static_cast<int>(K), col_b, static_cast<int>(npos), out_b,
                static_cast<int>(npos), false);
        if (bias.defined()) {
            for (int oc = 0; oc < Cout; ++oc) {
                const double bv = bias.values()[static_cast<size_t>(oc)];
                double* row = out_b + static_cast<int64_t>(oc) * npos;
                for (int64_t i = 0; i < npos; ++i) row[i] += bv;
            }
        }
    }
    auto d = alloc({B, Cout, OH, OW}, std::move(out));
    auto xp = x.ptr();
    auto wp = w.ptr();
    auto bp = bias.defined() ? bias.ptr() : nullptr;
    attach(d, "conv2d", {&x, &w, &bias},
           [xp, wp, bp, col = std::move(col), B, Cin, H, W, Cout, kh, kw, sh, sw, ph, pw, OH, OW,
            K, npos, in_plane, out_plane](TensorData& self) {
               const double* g = self.grad.data();
               if (xp->requires_grad) {
                   xp->ensure_grad();
                   std::vector<double> gcol(static_cast<size_t>(K * npos));
                   for (int b = 0; b < B; ++b) {
                       gemm_tn(static_cast<int>(K), static_cast<int>(npos), Cout,
                               wp->values.data(), static_cast<int>(K), g + b * out_plane,
                               static_cast<int>(npos), gcol.data(), static_cast<int>(npos),
                               false);
                       col2im_add(gcol.data(), Cin, H, W, kh, kw, sh, sw, ph, pw, OH, OW,
                                  xp->grad.data() + b * in_plane);
                   }
               }
               if (wp->requires_grad) {
                   wp->ensure_grad();
                   for (int b = 0; b < B; ++b)
                       gemm_nt(Cout, static_cast<int>(K), static_cast<int>(npos),
                               g + b * out_plane, static_cast<int>(npos),
                               col.data() + static_cast<int64_t>(b) * K * npos,
                               static_cast<int>(npos), wp->grad.data(), static_cast<int>(K),
                               true);
               }
               if (bp && bp->requires_grad) {
                   bp->ensure_grad();
                   for (int b = 0; b < B; ++b)
                       for (int oc = 0; oc < Cout; ++oc) {
                           const double* row = g + b * out_plane + static_cast<int64_t>(oc) * npos;
                           double s = 0.0;
                           for (int64_t i = 0; i < npos; ++i) s += row[i];
                           bp->grad[static_cast<size_t>(oc)] += s;
                       }
               }
           });
    return Tensor(std::move(d));
}

Tensor conv_transpose2d(const Tensor& x, const Tensor& w, const Tensor& bias,
                        std::pair<int, int> stride, std::pair<int, int> padding) {
    if (x.shape().size() != 4)
        throw DimensionError("conv_transpose2d: input must be [B,Cin,H,W], got " +
                             shape_str(x.shape()));
    if (w.shape().size() != 4)
        throw DimensionError("conv_transpose2d: weight must be [Cin,Cout,kh,kw], got " +
                             shape_str(w.shape()));
    const int B = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int Cout = w.dim(1), kh = w.dim(2), kw = w.dim(3);
    const auto [sh, sw] = stride;
    const auto [ph, pw] = padding;
    if (w.dim(0) != Cin)
        throw DimensionError("conv_transpose2d: channel mismatch, input Cin=" +
                             std::to_string(Cin) + " weight Cin=" + std::to_string(w.dim(0)));
    if (sh < 1 || sw < 1) throw ArgumentError("conv_transpose2d: stride must be >= 1");
    if (ph < 0 || pw < 0) throw ArgumentError("conv_transpose2d: negative padding");
    const int OH = (H - 1) * sh - 2 * ph + kh;
    const int OW = (W - 1) * sw - 2 * pw + kw;
    if (OH < 1 || OW < 1)
        throw DimensionError("conv_transpose2d: output collapses to " + std::to_string(OH) + "x" +
                             std::to_string(OW));
    if (bias.defined() && (bias.shape().size() != 1 || bias.dim(0) != Cout))
        throw DimensionError("conv_transpose2d: bias must be [Cout]");
    const int64_t K2 = static_cast<int64_t>(Cout) * kh * kw;
    const int64_t nin = static_cast<int64_t>(H) * W;
    const int64_t in_plane = static_cast<int64_t>(Cin) * nin;
    const int64_t out_plane = static_cast<int64_t>(Cout) * OH * OW;

    std::vector<double> colT(static_cast<size_t>(K2 * nin));
    std::vector<double> out(static_cast<size_t>(B) * out_plane, 0.0);
    for (int b = 0; b < B; ++b) {
        // col[(o*kh+r)*kw+s][pos] = sum_c w[c][o][r][s] * x[c][pos]
        gemm_tn(static_cast<int>(K2), static_cast<int>(nin), Cin, w.values().data(),
                static_cast<int>(K2), x.values().data() + b * in_plane, static_cast<int>(nin),
                colT.data(), static_cast<int>(nin), false);
        double* out_b = out.data() + b * out_plane;
        col2im_add(colT.data(), Cout, OH, OW, kh, kw, sh, sw, ph, pw, H, W, out_b);
        if (bias.defined()) {
            for (int oc = 0; oc < Cout; ++oc) {
                const double bv = bias.values()[static_cast<size_t>(oc)];
                double* row = out_b + static_cast<int64_t>(oc) * OH * OW;
                for (int64_t i = 0; i < static_cast<int64_t>(OH) * OW; ++i) row[i] += bv;
            }
        }
    }
    auto d = alloc({B, Cout, OH, OW}, std::move(out));
    auto xp = x.ptr();
    auto wp = w.ptr();
    auto bp = bias.defined() ? bias.ptr() : nullptr;
    attach(d, "conv_transpose2d", {&x, &w, &bias},
           [xp, wp, bp, B, Cin, H, W, Cout, kh, kw, sh, sw, ph, pw, OH, OW, K2, nin, in_plane,
            out_plane](TensorData& self) {
               const double* g = self.grad.data();
               // both input- and weight-grads read im2col of the output grad
               std::vector<double> gcol(static_cast<size_t>(K2 * nin));
               const bool need_x = xp->requires_grad;
               const bool need_w = wp->requires_grad;
               if (need_x) xp->ensure_grad();
               if (need_w) wp->ensure_grad();
               for (int b = 0; b < B; ++b) {
                   if (need_x || need_w)
                       im2col(g + b * out_plane, Cout, OH, OW, kh, kw, sh, sw, ph, pw, H, W,
                              gcol.data());
                   if (need_x)
                       gemm_nn(Cin, static_cast<int>(nin), static_cast<int>(K2),
                               wp->values.data(), static_cast<int>(K2), gcol.data(),
                               static_cast<int>(nin), xp->grad.data() + b * in_plane,
                               static_cast<int>(nin), true);
                   if (need_w)
                       gemm_nt(Cin, static_cast<int>(K2), static_cast<int>(nin),
                               xp->values.data() + b * in_plane, static_cast<int>(nin),
                               gcol.data(), static_cast<int>(nin), wp->grad.data(),
                               static_cast<int>(K2), true);
               }
               if (bp && bp->requires_grad) {
                   bp->ensure_grad();
                   for (int b = 0; b < B; ++b)
                       for (int oc = 0; oc < Cout; ++oc) {
                           const double* row =
                               g + b * out_plane + static_cast<int64_t>(oc) * OH * OW;
                           double s = 0.0;
                           for (int64_t i = 0; i < static_cast<int64_t>(OH) * OW; ++i) s += row[i];
                           bp->grad[static_cast<size_t>(oc)] += s;
                       }
               }
           });
    return Tensor(std::move(d));
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  std::vector<double>& running_mean, std::vector<double>& running_var,
                  bool training, double eps, double momentum) {
    if (x.shape().size() != 4) throw DimensionError("batch_norm: expects [B,C,H,W]");
    const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (gamma.numel() != C || beta.numel() != C)
        throw DimensionError("batch_norm: gamma/beta must have C=" + std::to_string(C) +
                             " elements");
    if (static_cast<int>(running_mean.size()) != C || static_cast<int>(running_var.size()) != C)
        throw DimensionError("batch_norm: running stats must have C elements");
    const int64_t plane = static_cast<int64_t>(H) * W;
    const int64_t M = static_cast<int64_t>(B) * plane;
    if (M < 1) throw DimensionError("batch_norm: empty batch");

    std::vector<double> mean(C), invstd(C);
    const auto& xv = x.values();
    if (training) {
        for (int c = 0; c < C; ++c) {
            double s = 0.0;
            for (int b = 0; b < B; ++b) {
                const double* p = xv.data() + (static_cast<int64_t>(b) * C + c) * plane;
                for (int64_t i = 0; i < plane; ++i) s += p[i];
            }
            const double mu = s / static_cast<double>(M);
            double v = 0.0;
            for (int b = 0; b < B; ++b) {
                const double* p = xv.data() + (static_cast<int64_t>(b) * C + c) * plane;
                for (int64_t i = 0; i < plane; ++i) {
                    const double dlt = p[i] - mu;
                    v += dlt * dlt;
                }
            }
            v /= static_cast<double>(M);
            mean[c] = mu;
            invstd[c] = 1.0 / std::sqrt(v + eps);
            const double var_unbiased = M > 1 ? v * static_cast<double>(M) / (M - 1) : v;
            running_mean[c] = (1.0 - momentum) * running_mean[c] + momentum * mu;
            running_var[c] = (1.0 - momentum) * running_var[c] + momentum * var_unbiased;
        }
    } else {
        for (int c = 0; c < C; ++c) {
            mean[c] = running_mean[c];
            invstd[c] = 1.0 / std::sqrt(running_var[c] + eps);
        }
    }

    std::vector<double> xhat(xv.size());
    std::vector<double> out(xv.size());
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c) {
            const double mu = mean[c], is = invstd[c];
            const double gm = gamma.values()[static_cast<size_t>(c)];
            const double bt = beta.values()[static_cast<size_t>(c)];
            const int64_t off = (static_cast<int64_t>(b) * C + c) * plane;
            for (int64_t i = 0; i < plane; ++i) {
                const double xh = (xv[off + i] - mu) * is;
                xhat[off + i] = xh;
                out[off + i] = gm * xh + bt;
            }
        }
    auto d = alloc(x.shape(), std::move(out));
    auto xp = x.ptr();
    auto gp = gamma.ptr();
    auto betap = beta.ptr();
    attach(d, "batch_norm", {&x, &gamma, &beta},
           [xp, gp, betap, xhat = std::move(xhat), invstd = std::move(invstd), training, B, C,
            plane, M](TensorData& self) {
               const double* g = self.grad.data();
               std::vector<double> sum_g(C, 0.0), sum_gx(C, 0.0);
               for (int b = 0; b < B; ++b)
                   for (int c = 0; c < C; ++c) {
                       const int64_t off = (static_cast<int64_t>(b) * C + c) * plane;
                       double sg = 0.0, sgx = 0.0;
                       for (int64_t i = 0; i < plane; ++i) {
                           sg += g[off + i];
                           sgx += g[off + i] * xhat[off + i];
                       }
                       sum_g[c] += sg;
                       sum_gx[c] += sgx;
                   }
               if (betap->requires_grad) {
                   betap->ensure_grad();
                   for (int c = 0; c < C; ++c) betap->grad[static_cast<size_t>(c)] += sum_g[c];
               }
               if (gp->requires_grad) {
                   gp->ensure_grad();
                   for (int c = 0; c < C; ++c) gp->grad[static_cast<size_t>(c)] += sum_gx[c];
               }
               if (xp->requires_grad) {
                   xp->ensure_grad();
                   for (int b = 0; b < B; ++b)
                       for (int c = 0; c < C; ++c) {
                           const double gm = gp->values[static_cast<size_t>(c)];
                           const double is = invstd[c];
                           const int64_t off = (static_cast<int64_t>(b) * C + c) * plane;
                           if (training) {
                               const double mg = sum_g[c] / static_cast<double>(M);
                               const double mgx = sum_gx[c] / static_cast<double>(M);
                               for (int64_t i = 0; i < plane; ++i)
                                   xp->grad[off + i] +=
                                       gm * is * (g[off + i] - mg - xhat[off + i] * mgx);
                           } else {
                               for (int64_t i = 0; i < plane; ++i)
                                   xp->grad[off + i] += gm * is * g[off + i];
                           }
                       }
               }
           });
    return Tensor(std::move(d));
}

// ---- fusion / loss ----------------------------------------------------------

Tensor matvec_bilinear(const Tensor& fe, const Tensor& a, const Tensor& v) {
    if (fe.shape().size() != 1 || v.shape().size() != 1 || a.shape().size() != 2)
        throw DimensionError("matvec_bilinear: expects fe[N], a[N,N], v[N]");
    const int N = fe.dim(0);
    if (a.dim(0) != N || a.dim(1) != N || v.dim(0) != N)
        throw DimensionError("matvec_bilinear: dimension mismatch, fe[" + std::to_string(N) +
                             "], a" + shape_str(a.shape()) + ", v" + shape_str(v.shape()));
    std::vector<double> t(static_cast<size_t>(N), 0.0);
    for (int m = 0; m < N; ++m) {
        const double* arow = a.values().data() + static_cast<int64_t>(m) * N;
        double s = 0.0;
        for (int n = 0; n < N; ++n) s += arow[n] * v.values()[static_cast<size_t>(n)];
        t[static_cast<size_t>(m)] = s;
    }
    double outv = 0.0;
    for (int m = 0; m < N; ++m) outv += fe.values()[static_cast<size_t>(m)] * t[static_cast<size_t>(m)];
    auto d = alloc({1}, {outv});
    auto fep = fe.ptr();
    auto ap = a.ptr();
    auto vp = v.ptr();
    attach(d, "matvec_bilinear", {&fe, &a, &v}, [fep, ap, vp, t = std::move(t), N](TensorData& self) {
        const double g = self.grad[0];
        if (fep->requires_grad) {
            fep->ensure_grad();
            for (int m = 0; m < N; ++m) fep->grad[static_cast<size_t>(m)] += g * t[static_cast<size_t>(m)];
        }
        if (ap->requires_grad) {
            ap->ensure_grad();
            for (int m = 0; m < N; ++m) {
                const double gfe = g * fep->values[static_cast<size_t>(m)];
                double* grow = ap->grad.data() + static_cast<int64_t>(m) * N;
                for (int n = 0; n < N; ++n) grow[n] += gfe * vp->values[static_cast<size_t>(n)];
            }
        }
        if (vp->requires_grad) {
            vp->ensure_grad();
            for (int m = 0; m < N; ++m) {
                const double gfe = g * fep->values[static_cast<size_t>(m)];
                const double* arow = ap->values.data() + static_cast<int64_t>(m) * N;
                for (int n = 0; n < N; ++n) vp->grad[static_cast<size_t>(n)] += gfe * arow[n];
            }
        }
    });
    return Tensor(std::move(d));
}

Tensor bilinear_fusion_map(const Tensor& fe, const Tensor& a, const Tensor& bias,
                           const Tensor& fmap) {
    if (fe.shape().size() != 2 || a.shape().size() != 3 || fmap.shape().size() != 4)
        throw DimensionError("bilinear_fusion_map: expects fe[B,N], a[K,N,N], fmap[B,N,h,w]");
    const int B = fe.dim(0), N = fe.dim(1);
    const int K = a.dim(0);
    if (a.dim(1) != N || a.dim(2) != N)
        throw DimensionError("bilinear_fusion_map: a slices must be " + std::to_string(N) + "x" +
                             std::to_string(N) + ", got " + shape_str(a.shape()));
    if (fmap.dim(0) != B || fmap.dim(1) != N)
        throw DimensionError("bilinear_fusion_map: fmap " + shape_str(fmap.shape()) +
                             " does not match fe [B=" + std::to_string(B) +
                             ",N=" + std::to_string(N) + "]");
    if (bias.numel() != K) throw DimensionError("bilinear_fusion_map: bias must be [K]");
    const int h = fmap.dim(2), w = fmap.dim(3);
    const int64_t hw = static_cast<int64_t>(h) * w;
    const int64_t NN = static_cast<int64_t>(N) * N;

    // u[b][j][n] = sum_m fe[b][m] * a[j][m][n]
    std::vector<double> u(static_cast<size_t>(B) * K * N, 0.0);
    for (int b = 0; b < B; ++b) {
        const double* feb = fe.values().data() + static_cast<int64_t>(b) * N;
        for (int j = 0; j < K; ++j) {
            double* uj = u.data() + (static_cast<int64_t>(b) * K + j) * N;
            const double* aj = a.values().data() + static_cast<int64_t>(j) * NN;
            for (int m = 0; m < N; ++m) {
                const double f = feb[m];
                const double* arow = aj + static_cast<int64_t>(m) * N;
                for (int n = 0; n < N; ++n) uj[n] += f * arow[n];
            }
        }
    }
    std::vector<double> out(static_cast<size_t>(B) * K * hw);
    for (int b = 0; b < B; ++b) {
        gemm_nn(K, static_cast<int>(hw), N, u.data() + static_cast<int64_t>(b) * K * N, N,
                fmap.values().data() + static_cast<int64_t>(b) * N * hw, static_cast<int>(hw),
                out.data() + static_cast<int64_t>(b) * K * hw, static_cast<int>(hw), false);
        for (int j = 0; j < K; ++j) {
            const double bj = bias.values()[static_cast<size_t>(j)];
            double* row = out.data() + (static_cast<int64_t>(b) * K + j) * hw;
            for (int64_t i = 0; i < hw; ++i) row[i] += bj;
        }
    }
    auto d = alloc({B, K, h, w}, std::move(out));
    auto fep = fe.ptr();
    auto ap = a.ptr();
    auto bp = bias.ptr();
    auto fp = fmap.ptr();
    attach(d, "bilinear_fusion", {&fe, &a, &bias, &fmap},
           [fep, ap, bp, fp, u = std::move(u), B, N, K, hw, NN](TensorData& self) {
               const double* g = self.grad.data();
               // S[j][n] = sum_pq g[b,j,pq] * fmap[b,n,pq], per sample
               std::vector<double> S(static_cast<size_t>(K) * N);
               for (int b = 0; b < B; ++b) {
                   const double* gb = g + static_cast<int64_t>(b) * K * hw;
                   const double* fb = fp->values.data() + static_cast<int64_t>(b) * N * hw;
                   const bool need_S = fep->requires_grad || ap->requires_grad;
                   if (need_S)
                       gemm_nt(K, N, static_cast<int>(hw), gb, static_cast<int>(hw), fb,
                               static_cast<int>(hw), S.data(), N, false);
                   if (fep->requires_grad) {
                       fep->ensure_grad();
                       double* gfe = fep->grad.data() + static_cast<int64_t>(b) * N;
                       for (int j = 0; j < K; ++j) {
                           const double* aj = ap->values.data() + static_cast<int64_t>(j) * NN;
                           const double* Sj = S.data() + static_cast<int64_t>(j) * N;
                           for (int m = 0; m < N; ++m) {
                               const double* arow = aj + static_cast<int64_t>(m) * N;
                               double s = 0.0;
                               for (int n = 0; n < N; ++n) s += arow[n] * Sj[n];
                               gfe[m] += s;
                           }
                       }
                   }
                   if (ap->requires_grad) {
                       ap->ensure_grad();
                       const double* feb = fep->values.data() + static_cast<int64_t>(b) * N;
                       for (int j = 0; j < K; ++j) {
                           double* gaj = ap->grad.data() + static_cast<int64_t>(j) * NN;
                           const double* Sj = S.data() + static_cast<int64_t>(j) * N;
                           for (int m = 0; m < N; ++m) {
                               const double f = feb[m];
                               double* grow = gaj + static_cast<int64_t>(m) * N;
                               for (int n = 0; n < N; ++n) grow[n] += f * Sj[n];
                           }
                       }
                   }
                   if (fp->requires_grad) {
                       fp->ensure_grad();
                       gemm_tn(N, static_cast<int>(hw), K,
                               u.data() + static_cast<int64_t>(b) * K * N, N, gb,
                               static_cast<int>(hw),
                               fp->grad.data() + static_cast<int64_t>(b) * N * hw,
                               static_cast<int>(hw), true);
                   }
                   if (bp->requires_grad) {
                       bp->ensure_grad();
                       for (int j = 0; j < K; ++j) {
                           const double* row = gb + static_cast<int64_t>(j) * hw;
                           double s = 0.0;
                           for (int64_t i = 0; i < hw; ++i) s += row[i];
                           bp->grad[static_cast<size_t>(j)] += s;
                       }
                   }
               }
           });
    return Tensor(std::move(d));
}

Tensor dot_fusion_map(const Tensor& fe, const Tensor& fmap) {
    if (fe.shape().size() != 2 || fmap.shape().size() != 4)
        throw DimensionError("dot_fusion_map: expects fe[B,N], fmap[B,N,h,w]");
    const int B = fe.dim(0), N = fe.dim(1);
    if (fmap.dim(0) != B || fmap.dim(1) != N)
        throw DimensionError("dot_fusion_map: fmap " + shape_str(fmap.shape()) +
                             " does not match fe");
    const int h = fmap.dim(2), w = fmap.dim(3);
    const int64_t hw = static_cast<int64_t>(h) * w;
    std::vector<double> out(static_cast<size_t>(B) * hw);
    for (int b = 0; b < B; ++b)
        gemm_nn(1, static_cast<int>(hw), N, fe.values().data() + static_cast<int64_t>(b) * N, N,
                fmap.values().data() + static_cast<int64_t>(b) * N * hw, static_cast<int>(hw),
                out.data() + static_cast<int64_t>(b) * hw, static_cast<int>(hw), false);
    auto d = alloc({B, 1, h, w}, std::move(out));
    auto fep = fe.ptr();
    auto fp = fmap.ptr();
    attach(d, "dot_fusion", {&fe, &fmap}, [fep, fp, B, N, hw](TensorData& self) {
        const double* g = self.grad.data();
        for (int b = 0; b < B; ++b) {
            const double* gb = g + static_cast<int64_t>(b) * hw;
            if (fep->requires_grad) {
                fep->ensure_grad();
                const double* fb = fp->values.data() + static_cast<int64_t>(b) * N * hw;
                double* gfe = fep->grad.data() + static_cast<int64_t>(b) * N;
                for (int n = 0; n < N; ++n) {
                    const double* row = fb + static_cast<int64_t>(n) * hw;
                    double s = 0.0;
                    for (int64_t i = 0; i < hw; ++i) s += row[i] * gb[i];
                    gfe[n] += s;
                }
            }
            if (fp->requires_grad) {
                fp->ensure_grad();
                const double* feb = fep->values.data() + static_cast<int64_t>(b) * N;
                double* gf = fp->grad.data() + static_cast<int64_t>(b) * N * hw;
                for (int n = 0; n < N; ++n) {
                    const double f = feb[n];
                    double* row = gf + static_cast<int64_t>(n) * hw;
                    for (int64_t i = 0; i < hw; ++i) row[i] += f * gb[i];
                }
            }
        }
    });
    return Tensor(std::move(d));
}

Tensor combine_depth(const Tensor& alpha, const Tensor& de, const Tensor& di) {
    check_same_shape(alpha, de, "combine_depth");
    check_same_shape(de, di, "combine_depth");
    const auto& av = alpha.values();
    const auto& ev = de.values();
    const auto& iv = di.values();
    std::vector<double> out(av.size());
    for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] * ev[i] + (1.0 - av[i]) * iv[i];
    auto d = alloc(alpha.shape(), std::move(out));
    auto apP = alpha.ptr();
    auto ep = de.ptr();
    auto ip = di.ptr();
    attach(d, "combine_depth", {&alpha, &de, &di}, [apP, ep, ip](TensorData& self) {
        const auto& g = self.grad;
        if (apP->requires_grad) {
            apP->ensure_grad();
            for (size_t i = 0; i < g.size(); ++i)
                apP->grad[i] += g[i] * (ep->values[i] - ip->values[i]);
        }
        if (ep->requires_grad) {
            ep->ensure_grad();
            for (size_t i = 0; i < g.size(); ++i) ep->grad[i] += g[i] * apP->values[i];
        }
        if (ip->requires_grad) {
            ip->ensure_grad();
            for (size_t i = 0; i < g.size(); ++i) ip->grad[i] += g[i] * (1.0 - apP->values[i]);
        }
    });
    return Tensor(std::move(d));
}

Tensor log_l1_loss(const Tensor& dhat, const Tensor& dgt, const std::vector<uint8_t>& mask) {
    check_same_shape(dhat, dgt, "log_l1_loss");
    if (mask.size() != dhat.values().size())
        throw DimensionError("log_l1_loss: mask size mismatch");
    int64_t n_valid = 0;
    double s = 0.0;
    const auto& hv = dhat.values();
    const auto& gv = dgt.values();
    for (size_t i = 0; i < mask.size(); ++i) {
        if (!mask[i]) continue;
        ++n_valid;
        s += std::log1p(std::abs(gv[i] - hv[i]));
    }
    if (n_valid == 0) throw NumericError("log_l1_loss: no valid pixels in mask");
    auto d = alloc({1}, {s / static_cast<double>(n_valid)});
    auto hp = dhat.ptr();
    auto gp = dgt.ptr();
    attach(d, "log_l1_loss", {&dhat, &dgt}, [hp, gp, mask, n_valid](TensorData& self) {
        if (!hp->requires_grad) return;
        hp->ensure_grad();
        const double g = self.grad[0] / static_cast<double>(n_valid);
        for (size_t i = 0; i < mask.size(); ++i) {
            if (!mask[i]) continue;
            const double diff = gp->values[i] - hp->values[i];
            const double sgn = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
            hp->grad[i] += g * (-sgn) / (1.0 + std::abs(diff));
        }
    });
    return Tensor(std::move(d));
}

} // namespace avdepth
