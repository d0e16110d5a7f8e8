#include "avdepth/fusion.hpp"

namespace avdepth {

const char* fusion_kind_name(FusionKind k) {
    switch (k) {
    case FusionKind::Bilinear: return "bilinear";
    case FusionKind::Dot: return "dot";
    case FusionKind::Concat: return "concat";
    }
    return "?";
}

FusionKind fusion_kind_from_name(const std::string& name) {
    if (name == "bilinear") return FusionKind::Bilinear;
    if (name == "dot") return FusionKind::Dot;
    if (name == "concat") return FusionKind::Concat;
    throw ArgumentError("unknown fusion kind: " + name);
}

FusionParams::FusionParams(int k, int n, Rng& rng) : channels(k), dim(n) {
    a_img = init_uniform({k, n, n}, static_cast<int64_t>(n) * n, rng);
    b_img = Tensor::zeros({k}, true);
    a_mat = init_uniform({k, n, n}, static_cast<int64_t>(n) * n, rng);
    b_mat = Tensor::zeros({k}, true);
}

void FusionParams::collect(ParamMap& pm, const std::string& prefix) {
    pm.add(prefix + ".a_img", a_img);
    pm.add(prefix + ".b_img", b_img);
    pm.add(prefix + ".a_mat", a_mat);
    pm.add(prefix + ".b_mat", b_mat);
}

FusionMap bilinear_fusion(const Tensor& fe, const Tensor& fi, const Tensor& fm,
                          const FusionParams& params) {
    if (fe.dim(1) != params.dim)
        throw DimensionError("bilinear_fusion: feature dim " + std::to_string(fe.dim(1)) +
                             " does not match params N=" + std::to_string(params.dim));
    FusionMap out;
    out.f_img = bilinear_fusion_map(fe, params.a_img, params.b_img, fi);
    out.f_mat = bilinear_fusion_map(fe, params.a_mat, params.b_mat, fm);
    out.f_star = concat_channels({out.f_img, out.f_mat});
    return out;
}

Tensor dot_fusion(const Tensor& fe, const Tensor& fi, const Tensor& fm) {
    return concat_channels({dot_fusion_map(fe, fi), dot_fusion_map(fe, fm)});
}

Tensor concat_fusion(const Tensor& fe, const Tensor& fi, const Tensor& fm) {
    return concat_channels({broadcast_spatial(fe, fi.dim(2), fi.dim(3)), fi, fm});
}

AttentionNet::AttentionNet(const NetConfig& cfg, int in_ch, Rng& rng) : in_channels(in_ch) {
    const auto widths = cfg.attention_widths();
    int prev = in_ch;
    for (size_t i = 0; i < widths.size(); ++i) {
        ups.emplace_back(prev, widths[i], 4, 2, 1, rng);
        if (i + 1 < widths.size()) bns.emplace_back(widths[i]);
        prev = widths[i];
    }
}

Tensor AttentionNet::operator()(const Tensor& fstar, bool training) {
    if (fstar.dim(1) != in_channels)
        throw DimensionError("attention net: got " + std::to_string(fstar.dim(1)) +
                             " channels, built for " + std::to_string(in_channels));
    Tensor x = fstar;
    for (size_t i = 0; i < ups.size(); ++i) {
        x = ups[i](x);
        x = i + 1 < ups.size() ? relu(bns[i](x, training)) : sigmoid(x);
    }
    return x;
}

void AttentionNet::collect(ParamMap& pm, const std::string& prefix) {
    for (size_t i = 0; i < ups.size(); ++i) {
        ups[i].collect(pm, prefix + ".up" + std::to_string(i + 1));
        if (i < bns.size()) bns[i].collect(pm, prefix + ".up" + std::to_string(i + 1) + ".bn");
    }
}

} // namespace avdepth
