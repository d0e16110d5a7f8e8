#pragma once

#include <memory>
#include <string>

#include "avdepth/fusion.hpp"

namespace avdepth {

/// Which feature streams a baseline model consumes.
struct Modalities {
    bool echo = true;
    bool img = true;
    bool mat = true;

    std::string to_string() const;
    static Modalities from_string(const std::string& s);
    int count() const { return (echo ? 1 : 0) + (img ? 1 : 0) + (mat ? 1 : 0); }
    bool operator==(const Modalities&) const = default;
};

/// Common surface of every trainable depth predictor.
class DepthModel {
public:
    virtual ~DepthModel() = default;

    /// [B,2,P,Q] spectrogram + [B,3,W,W] image -> [B,1,W,W] depth.
    virtual Tensor predict(const Tensor& spec, const Tensor& img) = 0;
    virtual ParamMap params() = 0;
    virtual const NetConfig& net_config() const = 0;
    virtual std::string kind_name() const = 0;
    virtual std::string config_text() const;

    void set_training(bool t) { training_ = t; }
    bool training() const { return training_; }
    /// Test fixture marker: evaluation substitutes ground truth as prediction.
    virtual bool is_oracle() const { return false; }

protected:
    bool training_ = true;
};

/// The full pipeline: Echo Net and Visual Net produce depth maps, Material
/// Net supplies material features, the fusion module and attention net blend
/// the two depth maps per pixel.
class FullModel : public DepthModel {
public:
    struct Output {
        Tensor fe, fi, fm;
        Tensor de, di;
        Tensor fstar;
        Tensor alpha;
        Tensor dhat;
    };

    FullModel(const NetConfig& cfg, FusionKind fusion, uint64_t seed);

    Output forward(const Tensor& spec, const Tensor& img);
    Tensor predict(const Tensor& spec, const Tensor& img) override;
    ParamMap params() override;
    const NetConfig& net_config() const override { return cfg_; }
    std::string kind_name() const override { return "fused"; }
    std::string config_text() const override;
    FusionKind fusion() const { return fusion_; }

    EchoNet echo;
    VisualNet visual;
    MaterialNet material;
    FusionParams fparams;           // bilinear only
    std::optional<Conv2d> adapter;  // dot/concat -> attention width
    AttentionNet attention;

private:
    NetConfig cfg_;
    FusionKind fusion_;
};

/// Echo Net alone (the echo-to-depth baseline).
class EchoOnlyModel : public DepthModel {
public:
    EchoOnlyModel(const NetConfig& cfg, uint64_t seed);
    Tensor predict(const Tensor& spec, const Tensor& img) override;
    ParamMap params() override;
    const NetConfig& net_config() const override { return cfg_; }
    std::string kind_name() const override { return "echo_only"; }

    EchoNet echo;

private:
    NetConfig cfg_;
};

/// Visual Net alone (the image-to-depth baseline).
class ImageOnlyModel : public DepthModel {
public:
    ImageOnlyModel(const NetConfig& cfg, uint64_t seed);
    Tensor predict(const Tensor& spec, const Tensor& img) override;
    ParamMap params() override;
    const NetConfig& net_config() const override { return cfg_; }
    std::string kind_name() const override { return "image_only"; }

    VisualNet visual;

private:
    NetConfig cfg_;
};

/// Feature subsets concatenated at the visual bottleneck resolution, a 1x1
/// adapter back to N channels, and a shared upsampling decoder. No attention.
class ConcatBaselineModel : public DepthModel {
public:
    ConcatBaselineModel(const NetConfig& cfg, Modalities mods, uint64_t seed);
    Tensor predict(const Tensor& spec, const Tensor& img) override;
    ParamMap params() override;
    const NetConfig& net_config() const override { return cfg_; }
    std::string kind_name() const override { return "concat_baseline"; }
    std::string config_text() const override;
    Modalities modalities() const { return mods_; }

private:
    NetConfig cfg_;
    Modalities mods_;
    std::optional<EchoEncoder> echo_enc_;
    std::vector<Conv2d> venc_;
    std::vector<BatchNorm2d> venc_bn_;
    std::optional<MaterialNet> material_;
    Conv2d adapter_;
    std::vector<ConvTranspose2d> dec_;
    std::vector<BatchNorm2d> dec_bn_;
};

/// Test fixture: evaluation copies ground truth in place of predictions.
class OracleModel : public DepthModel {
public:
    explicit OracleModel(const NetConfig& cfg) : cfg_(cfg) {}
    Tensor predict(const Tensor&, const Tensor& img) override {
        return Tensor::zeros({img.dim(0), 1, img.dim(2), img.dim(3)});
    }
    ParamMap params() override { return {}; }
    const NetConfig& net_config() const override { return cfg_; }
    std::string kind_name() const override { return "oracle"; }
    bool is_oracle() const override { return true; }

private:
    NetConfig cfg_;
};

/// Build a model of the named kind ("fused" honors fusion, baselines honor
/// the modality subset).
std::unique_ptr<DepthModel> make_model(const std::string& kind, const NetConfig& cfg,
                                       FusionKind fusion, Modalities mods, uint64_t seed);

/// Baseline per modality subset: pure echo and pure image map to the
/// dedicated single-net baselines, everything else to the concat model.
std::unique_ptr<DepthModel> make_baseline_model(const NetConfig& cfg, Modalities mods,
                                                uint64_t seed);

// Checkpoint container: magic "AVC1", named f64 arrays (params + running
// stats), then the model config echoed as text. Loads are strict: unknown,
// missing, or size-mismatched keys are format errors.
void save_checkpoint(const std::string& path, DepthModel& model);
std::unique_ptr<DepthModel> load_checkpoint(const std::string& path);

} // namespace avdepth
