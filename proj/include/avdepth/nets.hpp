#pragma once

#include <optional>
#include <string>
#include <vector>

#include "avdepth/audio.hpp"
#include "avdepth/nn.hpp"

namespace avdepth {

/// Architecture knobs shared by every subnetwork. width_div scales the
/// full-size channel widths down (4 gives the toy configuration trained in
/// minutes; 1 is the full-size network).
struct NetConfig {
    int image_size = 32;   // W = H, power of two, divisible by 32
    int feature_dim = 128; // N
    int width_div = 4;
    int fusion_channels = 16; // K
    int spec_bins = 257;      // P of the echo spectrogram
    int spec_frames = 166;    // Q

    static NetConfig toy(const SpectrogramConfig& sp, int image_size = 32);
    static NetConfig full_size(const SpectrogramConfig& sp);

    void validate() const;
    int bottleneck_wh() const { return image_size / 32; } // after 5 halvings
    int decoder_stages() const;                           // log2(image_size)

    std::vector<int> echo_encoder_widths() const;   // {32,64,8}/div
    std::vector<int> echo_decoder_widths() const;   // head of {512,...,16}/div, then 1
    std::vector<int> visual_encoder_widths() const; // {64,128,256,512,512}/div
    std::vector<int> visual_decoder_widths() const; // {512,256,128,64}/div, then 1
    std::vector<int> material_widths() const;       // {64,64,128,256,512}/div
    std::vector<int> attention_widths() const;      // {512,256,128,64}/div, then 1

    std::string to_text() const;
    static NetConfig from_text(const std::string& text);
};

/// Echo spectrogram -> feature vector f_e in R^N: three conv+BN+ReLU stages
/// (8x8/4, 4x4/2, 3x3/1), a 1x1 projection to N channels, global average
/// pooling. Spatial collapse is rejected at construction.
struct EchoEncoder {
    Conv2d c1, c2, c3, proj;
    BatchNorm2d b1, b2, b3;
    std::string shape_trace; // per-stage spatial dims, recorded for checkpoints

    EchoEncoder() = default;
    EchoEncoder(const NetConfig& cfg, Rng& rng);
    Tensor operator()(const Tensor& spec, bool training); // [B,2,P,Q] -> [B,N]
    void collect(ParamMap& pm, const std::string& prefix);
};

/// f_e -> depth map via fractionally strided 4/2/1 stages from N x 1 x 1,
/// BN+ReLU between stages, final ReLU.
struct EchoDecoder {
    std::vector<ConvTranspose2d> ups;
    std::vector<BatchNorm2d> bns;

    EchoDecoder() = default;
    EchoDecoder(const NetConfig& cfg, Rng& rng);
    Tensor operator()(const Tensor& fe, bool training); // [B,N] -> [B,1,W,W]
    void collect(ParamMap& pm, const std::string& prefix);
};

struct EchoNet {
    EchoEncoder encoder;
    EchoDecoder decoder;

    EchoNet() = default;
    EchoNet(const NetConfig& cfg, Rng& rng) : encoder(cfg, rng), decoder(cfg, rng) {}
    void collect(ParamMap& pm, const std::string& prefix);
};

/// U-Net style image-to-depth network; five 4/2/1 down stages
/// (BN + LeakyReLU 0.2) and five up stages with encoder skip concatenation.
/// feature() of the last encoder stage is the fusion input f_i.
struct VisualNet {
    std::vector<Conv2d> enc;
    std::vector<ConvTranspose2d> dec;
    std::vector<BatchNorm2d> enc_bn, dec_bn;
    bool use_skips = true; // ablation hook: false feeds zeros at skip joins

    struct Out {
        Tensor depth;   // [B,1,W,W]
        Tensor feature; // [B,N,w,h]
    };

    VisualNet() = default;
    VisualNet(const NetConfig& cfg, Rng& rng);
    Out operator()(const Tensor& img, bool training);
    void collect(ParamMap& pm, const std::string& prefix);
};

/// Two 3x3 convs with identity shortcut (1x1 projection on width/stride
/// change), ResNet style.
struct ResidualBlock {
    Conv2d conv1, conv2;
    BatchNorm2d bn1, bn2;
    std::optional<Conv2d> proj;
    std::optional<BatchNorm2d> proj_bn;

    ResidualBlock() = default;
    ResidualBlock(int in, int out, int stride, Rng& rng);
    Tensor operator()(const Tensor& x, bool training);
    void collect(ParamMap& pm, const std::string& prefix);
    void zero_weights(); // test hook: block becomes the shortcut
};

/// Image -> material feature map f_m: 7x7/2 stem plus four residual blocks,
/// adaptively pooled to the paired visual feature's spatial size.
struct MaterialNet {
    Conv2d stem;
    BatchNorm2d stem_bn;
    std::vector<ResidualBlock> blocks;
    std::optional<Conv2d> adapter; // 1x1 to N when the last width differs

    MaterialNet() = default;
    MaterialNet(const NetConfig& cfg, Rng& rng);
    Tensor operator()(const Tensor& img, int target_h, int target_w, bool training);
    void collect(ParamMap& pm, const std::string& prefix);
};

} // namespace avdepth
