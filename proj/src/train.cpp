#include "avdepth/train.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "avdepth/rng.hpp"

namespace avdepth {

namespace {
constexpr double kClampFloor = 1e-3; // meters, for ratio/log metrics
}

// ---- Adam ---------------------------------------------------------------------

void Adam::step(ParamMap& params) {
    if (m_.empty()) {
        m_.resize(params.params.size());
        v_.resize(params.params.size());
        for (size_t i = 0; i < params.params.size(); ++i) {
            m_[i].assign(params.params[i].second.values().size(), 0.0);
            v_[i].assign(params.params[i].second.values().size(), 0.0);
        }
    }
    if (m_.size() != params.params.size())
        throw ArgumentError("adam: parameter registry changed size");
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (size_t i = 0; i < params.params.size(); ++i) {
        auto& [name, tensor] = params.params[i];
        auto& p = tensor.raw();
        const auto& g = tensor.grad();
        auto& m = m_[i];
        auto& v = v_[i];
        const bool has_grad = !g.empty();
        for (size_t k = 0; k < p.size(); ++k) {
            double gk = has_grad ? g[k] : 0.0;
            if (std::isnan(gk))
                throw NumericError("adam: NaN gradient in parameter '" + name + "'");
            if (cfg_.weight_decay != 0.0) {
                if (cfg_.decoupled)
                    p[k] -= cfg_.lr * cfg_.weight_decay * p[k];
                else
                    gk += cfg_.weight_decay * p[k];
            }
            m[k] = cfg_.beta1 * m[k] + (1.0 - cfg_.beta1) * gk;
            v[k] = cfg_.beta2 * v[k] + (1.0 - cfg_.beta2) * gk * gk;
            const double mhat = m[k] / bc1;
            const double vhat = v[k] / bc2;
            p[k] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
        tensor.zero_grad();
    }
}

// ---- metrics --------------------------------------------------------------------

void MetricsAccumulator::add(const double* dhat, const double* dgt, int64_t n) {
    const double t1 = 1.25, t2 = 1.25 * 1.25, t3 = 1.25 * 1.25 * 1.25;
    for (int64_t i = 0; i < n; ++i) {
        const double d = dgt[i];
        if (!(d > 0.0)) continue;
        ++n_;
        const double p = dhat[i];
        se_ += (p - d) * (p - d);
        rel_ += std::abs(p - d) / d;
        double pc = p;
        if (!(pc > kClampFloor)) {
            pc = kClampFloor;
            if (p <= 0.0) ++clamped_;
        }
        lg_ += std::abs(std::log10(pc) - std::log10(d));
        const double r = std::max(pc / d, d / pc);
        if (r < t1) ++c1_;
        if (r < t2) ++c2_;
        if (r < t3) ++c3_;
    }
}

void MetricsAccumulator::add_loss_pixels(double loss_sum, int64_t n) {
    loss_ += loss_sum;
    loss_n_ += n;
}

MetricsReport MetricsAccumulator::report() const {
    if (n_ == 0) throw NumericError("metrics: no valid pixels");
    MetricsReport r;
    const double n = static_cast<double>(n_);
    r.rmse = std::sqrt(se_ / n);
    r.rel = rel_ / n;
    r.log10 = lg_ / n;
    r.delta1 = static_cast<double>(c1_) / n;
    r.delta2 = static_cast<double>(c2_) / n;
    r.delta3 = static_cast<double>(c3_) / n;
    r.n_valid = n_;
    r.n_clamped = clamped_;
    return r;
}

double MetricsAccumulator::mean_loss() const {
    return loss_n_ > 0 ? loss_ / static_cast<double>(loss_n_) : 0.0;
}

// ---- batching --------------------------------------------------------------------

std::vector<float> resample_image(const std::vector<float>& img, int width, double scale) {
    const int m = static_cast<int>(std::llround(width * scale));
    if (m < 1) throw ArgumentError("resample_image: scale collapses the image below one pixel");
    if (m == width) return img;
    const int64_t plane = static_cast<int64_t>(width) * width;
    // nearest-neighbor down to m x m
    std::vector<float> down(static_cast<size_t>(3) * m * m);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < m; ++y)
            for (int x = 0; x < m; ++x) {
                const int sy = std::min(width - 1, static_cast<int>((y + 0.5) * width / m));
                const int sx = std::min(width - 1, static_cast<int>((x + 0.5) * width / m));
                down[static_cast<size_t>((c * m + y) * m + x)] =
                    img[static_cast<size_t>(c * plane + static_cast<int64_t>(sy) * width + sx)];
            }
    // back up to width x width
    std::vector<float> up(img.size());
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < width; ++y)
            for (int x = 0; x < width; ++x) {
                const int sy = std::min(m - 1, static_cast<int>((y + 0.5) * m / width));
                const int sx = std::min(m - 1, static_cast<int>((x + 0.5) * m / width));
                up[static_cast<size_t>(c * plane + static_cast<int64_t>(y) * width + x)] =
                    down[static_cast<size_t>((c * m + sy) * m + sx)];
            }
    return up;
}

Batch make_batch(const std::vector<Sample>& split, const std::vector<int64_t>& indices,
                 const DatasetConfig& cfg, double image_scale) {
    const int B = static_cast<int>(indices.size());
    const int W = cfg.image_size;
    const int P = cfg.spectro.freq_bins();
    const int Q = cfg.spectro.frames_for_length(cfg.spectro.duration_samples());
    Batch b;
    b.spec = Tensor::zeros({B, 2, P, Q});
    b.img = Tensor::zeros({B, 3, W, W});
    b.depth = Tensor::zeros({B, 1, W, W});
    b.mask.assign(static_cast<size_t>(B) * W * W, 0);
    const int64_t spec_n = static_cast<int64_t>(2) * P * Q;
    const int64_t img_n = static_cast<int64_t>(3) * W * W;
    const int64_t dep_n = static_cast<int64_t>(W) * W;
    for (int i = 0; i < B; ++i) {
        const Sample& s = split[static_cast<size_t>(indices[static_cast<size_t>(i)])];
        for (int64_t k = 0; k < spec_n; ++k)
            b.spec.raw()[static_cast<size_t>(i * spec_n + k)] = s.spectrogram[static_cast<size_t>(k)];
        const std::vector<float>* img = &s.image;
        std::vector<float> scaled;
        if (image_scale != 1.0) {
            scaled = resample_image(s.image, W, image_scale);
            img = &scaled;
        }
        for (int64_t k = 0; k < img_n; ++k)
            b.img.raw()[static_cast<size_t>(i * img_n + k)] = (*img)[static_cast<size_t>(k)];
        for (int64_t k = 0; k < dep_n; ++k) {
            const double d = s.depth[static_cast<size_t>(k)];
            b.depth.raw()[static_cast<size_t>(i * dep_n + k)] = d;
            b.mask[static_cast<size_t>(i * dep_n + k)] = d > 0.0 ? 1 : 0;
        }
    }
    return b;
}

// ---- evaluation --------------------------------------------------------------------

namespace {

// shared by evaluate() and the per-epoch val row (which also wants the loss)
std::pair<MetricsReport, double> eval_pass(DepthModel& model, const std::vector<Sample>& split,
                                           const DatasetConfig& cfg, int batch_size,
                                           double image_scale) {
    if (split.empty()) throw ArgumentError("evaluate: empty split");
    const bool was_training = model.training();
    model.set_training(false);
    MetricsAccumulator acc;
    NoGradGuard ng;
    for (size_t start = 0; start < split.size(); start += static_cast<size_t>(batch_size)) {
        std::vector<int64_t> idx;
        for (size_t i = start; i < std::min(split.size(), start + static_cast<size_t>(batch_size)); ++i)
            idx.push_back(static_cast<int64_t>(i));
        Batch b = make_batch(split, idx, cfg, image_scale);
        Tensor dhat = model.is_oracle() ? b.depth : model.predict(b.spec, b.img);
        acc.add(dhat.values().data(), b.depth.values().data(), dhat.numel());
        double loss_sum = 0.0;
        int64_t n = 0;
        for (size_t k = 0; k < b.mask.size(); ++k) {
            if (!b.mask[k]) continue;
            loss_sum += std::log1p(std::abs(b.depth.values()[k] - dhat.values()[k]));
            ++n;
        }
        acc.add_loss_pixels(loss_sum, n);
    }
    model.set_training(was_training);
    return {acc.report(), acc.mean_loss()};
}

} // namespace

MetricsReport evaluate(DepthModel& model, const std::vector<Sample>& split,
                       const DatasetConfig& cfg, int batch_size, double image_scale) {
    return eval_pass(model, split, cfg, batch_size, image_scale).first;
}

// ---- training --------------------------------------------------------------------

std::string metrics_csv_header() { return "epoch,split,loss,rmse,rel,log10,d1,d2,d3,n_valid\n"; }

std::string metrics_csv_row(int epoch, const std::string& split, double loss,
                            const MetricsReport& m) {
    char buf[320];
    std::snprintf(buf, sizeof(buf), "%d,%s,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%lld\n",
                  epoch, split.c_str(), loss, m.rmse, m.rel, m.log10, m.delta1, m.delta2,
                  m.delta3, static_cast<long long>(m.n_valid));
    return buf;
}

TrainResult train(DepthModel& model, const Dataset& data, const TrainConfig& cfg) {
    if (data.train.empty()) throw ArgumentError("train: empty training split");
    if (data.val.empty()) throw ArgumentError("train: empty validation split");
    if (cfg.epochs < 1 || cfg.batch_size < 1)
        throw ArgumentError("train: epochs and batch_size must be >= 1");

    ParamMap pm = model.params();
    Adam adam(cfg.opt);
    Rng shuffle_rng(cfg.seed);
    std::vector<int64_t> order(data.train.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int64_t>(i);

    std::ostringstream csv;
    csv << metrics_csv_header();
    TrainResult result;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        model.set_training(true);
        for (size_t i = order.size(); i > 1; --i) {
            const size_t j = static_cast<size_t>(shuffle_rng.below(i));
            std::swap(order[i - 1], order[j]);
        }
        MetricsAccumulator train_acc;
        double loss_sum = 0.0;
        int64_t n_batches = 0;
        for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
            std::vector<int64_t> idx(order.begin() + static_cast<int64_t>(start),
                                     order.begin() +
                                         static_cast<int64_t>(std::min(
                                             order.size(), start + static_cast<size_t>(cfg.batch_size))));
            Batch b = make_batch(data.train, idx, data.cfg);
            Tensor dhat = model.predict(b.spec, b.img);
            Tensor loss = log_l1_loss(dhat, b.depth, b.mask);
            const double lv = loss.values()[0];
            if (std::isnan(lv) || std::isinf(lv))
                throw NumericError("train: loss diverged at epoch " + std::to_string(epoch));
            backward(loss);
            adam.step(pm);
            loss_sum += lv;
            ++n_batches;
            train_acc.add(dhat.values().data(), b.depth.values().data(), dhat.numel());
        }
        EpochRow row;
        row.epoch = epoch;
        row.train_loss = loss_sum / static_cast<double>(n_batches);
        row.train = train_acc.report();
        auto [val_m, val_loss] = eval_pass(model, data.val, data.cfg, cfg.batch_size, 1.0);
        row.val = val_m;
        row.val_loss = val_loss;
        csv << metrics_csv_row(epoch, "train", row.train_loss, row.train);
        csv << metrics_csv_row(epoch, "val", row.val_loss, row.val);
        if (cfg.verbose)
            std::fprintf(stderr, "epoch %d/%d train_loss=%.5f val_rmse=%.4f\n", epoch, cfg.epochs,
                         row.train_loss, row.val.rmse);
        result.rows.push_back(std::move(row));
    }
    result.final_train_loss = result.rows.back().train_loss;

    if (!cfg.csv_path.empty()) {
        std::ofstream out(cfg.csv_path, std::ios::binary);
        if (!out) throw IoError("cannot write metrics log: " + cfg.csv_path);
        out << csv.str();
        if (!out) throw IoError("write failed: " + cfg.csv_path);
    }
    if (!cfg.checkpoint_path.empty()) save_checkpoint(cfg.checkpoint_path, model);
    return result;
}

// ---- experiment protocols -----------------------------------------------------------

const char* modality_mode_name(ModalityMode m) {
    switch (m) {
    case ModalityMode::Echo: return "echo";
    case ModalityMode::EchoImg: return "echo+img";
    case ModalityMode::EchoMat: return "echo+mat";
    case ModalityMode::All: return "all";
    }
    return "?";
}

Modalities modality_mode_set(ModalityMode m) {
    switch (m) {
    case ModalityMode::Echo: return {true, false, false};
    case ModalityMode::EchoImg: return {true, true, false};
    case ModalityMode::EchoMat: return {true, false, true};
    case ModalityMode::All: return {true, true, true};
    }
    return {};
}

MetricsReport ablate_modalities(const Dataset& data, ModalityMode mode, const NetConfig& net,
                                uint64_t model_seed, const TrainConfig& cfg,
                                const std::string& eval_split) {
    auto model = make_baseline_model(net, modality_mode_set(mode), model_seed);
    train(*model, data, cfg);
    return evaluate(*model, data.split(eval_split), data.cfg, cfg.batch_size);
}

MetricsReport ablate_fusion(const Dataset& data, FusionKind variant, const NetConfig& net,
                            uint64_t model_seed, const TrainConfig& cfg,
                            const std::string& eval_split) {
    FullModel model(net, variant, model_seed);
    train(model, data, cfg);
    return evaluate(model, data.split(eval_split), data.cfg, cfg.batch_size);
}

std::vector<SweepRow> resolution_sweep(DepthModel& model, const std::vector<Sample>& split,
                                       const DatasetConfig& cfg,
                                       const std::vector<double>& scales, int batch_size) {
    std::vector<SweepRow> rows;
    for (double s : scales) {
        SweepRow row;
        row.scale = s;
        if (std::llround(cfg.image_size * s) < 1) {
            row.skipped = true; // below one pixel
        } else {
            row.metrics = evaluate(model, split, cfg, batch_size, s);
        }
        rows.push_back(row);
    }
    return rows;
}

} // namespace avdepth
