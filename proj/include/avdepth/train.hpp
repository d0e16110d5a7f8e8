#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "avdepth/model.hpp"
#include "avdepth/scene_gen.hpp"

namespace avdepth {

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 5e-4;
    /// Decoupled decay shrinks p by lr*wd before the moment update; the
    /// switch reverts to classic L2-in-gradient decay.
    bool decoupled = true;
};

/// Adam with bias correction over a fixed parameter registry. Gradients are
/// consumed and cleared by step(); a NaN gradient aborts with the parameter
/// name.
class Adam {
public:
    explicit Adam(AdamConfig cfg) : cfg_(cfg) {}
    void step(ParamMap& params);
    int64_t steps_taken() const { return t_; }
    const AdamConfig& config() const { return cfg_; }

private:
    AdamConfig cfg_;
    int64_t t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

struct MetricsReport {
    double rmse = 0.0;
    double rel = 0.0;
    double log10 = 0.0;
    double delta1 = 0.0, delta2 = 0.0, delta3 = 0.0;
    int64_t n_valid = 0;
    int64_t n_clamped = 0; // predictions <= 0 clamped for ratio/log metrics
};

/// Accumulates (prediction, truth) pixels across batches; only dgt > 0 counts.
/// Non-positive predictions are clamped to 1e-3 m for the ratio and log10
/// metrics (and counted), exactly as evaluation does.
class MetricsAccumulator {
public:
    void add(const double* dhat, const double* dgt, int64_t n);
    void add_loss_pixels(double loss_sum, int64_t n); // masked log-l1 numerator
    MetricsReport report() const;
    double mean_loss() const;

private:
    double se_ = 0, rel_ = 0, lg_ = 0, loss_ = 0;
    int64_t c1_ = 0, c2_ = 0, c3_ = 0, n_ = 0, clamped_ = 0, loss_n_ = 0;
};

struct Batch {
    Tensor spec;  // [B,2,P,Q]
    Tensor img;   // [B,3,W,W]
    Tensor depth; // [B,1,W,W]
    std::vector<uint8_t> mask;
};

/// Assemble a batch from dataset samples (f32 storage -> f64 tensors).
/// A non-unit image_scale routes images through the nearest-neighbor
/// down/up resampling used by the resolution study.
Batch make_batch(const std::vector<Sample>& split, const std::vector<int64_t>& indices,
                 const DatasetConfig& cfg, double image_scale = 1.0);

/// Nearest-neighbor downsample to round(W*scale) then back up to W.
std::vector<float> resample_image(const std::vector<float>& img, int width, double scale);

MetricsReport evaluate(DepthModel& model, const std::vector<Sample>& split,
                       const DatasetConfig& cfg, int batch_size = 8, double image_scale = 1.0);

struct TrainConfig {
    int epochs = 60;
    int batch_size = 8;
    uint64_t seed = 1;
    AdamConfig opt;
    std::string csv_path;        // per-epoch metrics log, empty disables
    std::string checkpoint_path; // final checkpoint, empty disables
    bool verbose = false;
};

struct EpochRow {
    int epoch = 0;
    double train_loss = 0.0;
    MetricsReport train;
    double val_loss = 0.0;
    MetricsReport val;
};

struct TrainResult {
    std::vector<EpochRow> rows;
    double final_train_loss = 0.0;
};

/// Seeded-shuffle minibatch training of the joint objective; appends one
/// train and one val row per epoch to the CSV log. Aborts on NaN loss.
TrainResult train(DepthModel& model, const Dataset& data, const TrainConfig& cfg);

std::string metrics_csv_header();
std::string metrics_csv_row(int epoch, const std::string& split, double loss,
                            const MetricsReport& m);

// ---- experiment protocols ------------------------------------------------

enum class ModalityMode { Echo, EchoImg, EchoMat, All };
const char* modality_mode_name(ModalityMode m);
Modalities modality_mode_set(ModalityMode m);

/// Train the concatenation-fusion baseline over the selected modality subset
/// (pure echo is Echo Net alone) and evaluate on the requested split.
MetricsReport ablate_modalities(const Dataset& data, ModalityMode mode, const NetConfig& net,
                                uint64_t model_seed, const TrainConfig& cfg,
                                const std::string& eval_split = "test");

/// Train the full attention model with the given fusion variant and evaluate.
MetricsReport ablate_fusion(const Dataset& data, FusionKind variant, const NetConfig& net,
                            uint64_t model_seed, const TrainConfig& cfg,
                            const std::string& eval_split = "test");

struct SweepRow {
    double scale = 1.0;
    bool skipped = false;
    MetricsReport metrics;
};

/// Evaluate with the RGB input degraded to each scale (echo untouched).
/// Scales that collapse the image below one pixel are skipped with a note.
std::vector<SweepRow> resolution_sweep(DepthModel& model, const std::vector<Sample>& split,
                                       const DatasetConfig& cfg,
                                       const std::vector<double>& scales = {1.0, 0.5, 0.25, 0.125,
                                                                            0.0625, 0.03125},
                                       int batch_size = 8);

} // namespace avdepth
