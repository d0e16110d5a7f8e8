#pragma once

#include "avdepth/nets.hpp"

namespace avdepth {

enum class FusionKind { Bilinear, Dot, Concat };

const char* fusion_kind_name(FusionKind k);
FusionKind fusion_kind_from_name(const std::string& name);

/// Learnable weights of the two bilinear transforms: per output channel j an
/// N x N form applied between f_e and the spatial feature, plus a scalar bias.
struct FusionParams {
    Tensor a_img, b_img; // [K,N,N], [K]
    Tensor a_mat, b_mat;
    int channels = 0; // K
    int dim = 0;      // N

    FusionParams() = default;
    FusionParams(int k, int n, Rng& rng);
    void collect(ParamMap& pm, const std::string& prefix);
};

struct FusionMap {
    Tensor f_img;  // [B,K,w,h]
    Tensor f_mat;  // [B,K,w,h]
    Tensor f_star; // [B,2K,w,h] = concat(f_img, f_mat)
};

/// f_img[j](p,q) = fe^T A_img[j] fi(:,p,q) + b_img[j], same for the material
/// stream, concatenated along channels.
FusionMap bilinear_fusion(const Tensor& fe, const Tensor& fi, const Tensor& fm,
                          const FusionParams& params);

/// Per-pixel dot products dot(fe, fi(:,p,q)) and dot(fe, fm(:,p,q)), 2 channels.
Tensor dot_fusion(const Tensor& fe, const Tensor& fi, const Tensor& fm);

/// fe broadcast spatially and channel-concatenated with fi and fm (3N channels).
Tensor concat_fusion(const Tensor& fe, const Tensor& fi, const Tensor& fm);

/// Fused features -> per-pixel attention in (0,1): five fractionally strided
/// 4/2/1 stages with BN+ReLU between and a final sigmoid.
struct AttentionNet {
    std::vector<ConvTranspose2d> ups;
    std::vector<BatchNorm2d> bns;
    int in_channels = 0;

    AttentionNet() = default;
    AttentionNet(const NetConfig& cfg, int in_channels, Rng& rng);
    Tensor operator()(const Tensor& fstar, bool training); // [B,C,w,h] -> [B,1,W,H]
    void collect(ParamMap& pm, const std::string& prefix);
};

} // namespace avdepth
