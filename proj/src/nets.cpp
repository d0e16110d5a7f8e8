#include "avdepth/nets.hpp"

#include <map>
#include <sstream>

namespace avdepth {

namespace {

int scaled(int paper_width, int div) {
    if (paper_width % div != 0)
        throw ArgumentError("width_div " + std::to_string(div) + " does not divide width " +
                            std::to_string(paper_width));
    return paper_width / div;
}

} // namespace

NetConfig NetConfig::toy(const SpectrogramConfig& sp, int image_size) {
    NetConfig cfg;
    cfg.image_size = image_size;
    cfg.feature_dim = 128;
    cfg.width_div = 4;
    cfg.fusion_channels = 16;
    cfg.spec_bins = sp.freq_bins();
    cfg.spec_frames = sp.frames_for_length(sp.duration_samples());
    cfg.validate();
    return cfg;
}

NetConfig NetConfig::full_size(const SpectrogramConfig& sp) {
    NetConfig cfg;
    cfg.image_size = 128;
    cfg.feature_dim = 512;
    cfg.width_div = 1;
    cfg.fusion_channels = 64;
    cfg.spec_bins = sp.freq_bins();
    cfg.spec_frames = sp.frames_for_length(sp.duration_samples());
    cfg.validate();
    return cfg;
}

void NetConfig::validate() const {
    if (image_size != 32 && image_size != 64 && image_size != 128)
        throw ArgumentError("net config: image_size must be 32, 64 or 128");
    if (feature_dim < 8) throw ArgumentError("net config: feature_dim must be >= 8");
    if (width_div < 1) throw ArgumentError("net config: width_div must be >= 1");
    if (fusion_channels < 1) throw ArgumentError("net config: fusion_channels must be >= 1");
    if (spec_bins < 8 || spec_frames < 8)
        throw ArgumentError("net config: spectrogram input too small");
    if (visual_encoder_widths().back() != feature_dim)
        throw ArgumentError("net config: feature_dim must equal the last visual encoder width (" +
                            std::to_string(visual_encoder_widths().back()) + ")");
}

int NetConfig::decoder_stages() const {
    int stages = 0;
    for (int w = 1; w < image_size; w *= 2) ++stages;
    return stages;
}

std::vector<int> NetConfig::echo_encoder_widths() const {
    return {scaled(32, width_div), scaled(64, width_div), scaled(8, width_div)};
}

std::vector<int> NetConfig::echo_decoder_widths() const {
    const std::vector<int> full{512, 256, 128, 64, 32, 16};
    const int stages = decoder_stages();
    std::vector<int> w;
    for (int i = 0; i < stages - 1; ++i) w.push_back(scaled(full[static_cast<size_t>(i)], width_div));
    w.push_back(1);
    return w;
}

std::vector<int> NetConfig::visual_encoder_widths() const {
    return {scaled(64, width_div), scaled(128, width_div), scaled(256, width_div),
            scaled(512, width_div), scaled(512, width_div)};
}

std::vector<int> NetConfig::visual_decoder_widths() const {
    return {scaled(512, width_div), scaled(256, width_div), scaled(128, width_div),
            scaled(64, width_div), 1};
}

std::vector<int> NetConfig::material_widths() const {
    return {scaled(64, width_div), scaled(64, width_div), scaled(128, width_div),
            scaled(256, width_div), scaled(512, width_div)};
}

std::vector<int> NetConfig::attention_widths() const {
    return {scaled(512, width_div), scaled(256, width_div), scaled(128, width_div),
            scaled(64, width_div), 1};
}

std::string NetConfig::to_text() const {
    std::ostringstream os;
    os << "net.image_size=" << image_size << "\n";
    os << "net.feature_dim=" << feature_dim << "\n";
    os << "net.width_div=" << width_div << "\n";
    os << "net.fusion_channels=" << fusion_channels << "\n";
    os << "net.spec_bins=" << spec_bins << "\n";
    os << "net.spec_frames=" << spec_frames << "\n";
    return os.str();
}

NetConfig NetConfig::from_text(const std::string& text) {
    NetConfig cfg;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = line.substr(0, eq);
        const std::string val = line.substr(eq + 1);
        if (key == "net.image_size")
            cfg.image_size = std::stoi(val);
        else if (key == "net.feature_dim")
            cfg.feature_dim = std::stoi(val);
        else if (key == "net.width_div")
            cfg.width_div = std::stoi(val);
        else if (key == "net.fusion_channels")
            cfg.fusion_channels = std::stoi(val);
        else if (key == "net.spec_bins")
            cfg.spec_bins = std::stoi(val);
        else if (key == "net.spec_frames")
            cfg.spec_frames = std::stoi(val);
    }
    cfg.validate();
    return cfg;
}

// ---- EchoEncoder -------------------------------------------------------------

EchoEncoder::EchoEncoder(const NetConfig& cfg, Rng& rng) {
    const auto w = cfg.echo_encoder_widths();
    c1 = Conv2d(2, w[0], {8, 8}, {4, 4}, {4, 4}, rng);
    b1 = BatchNorm2d(w[0]);
    c2 = Conv2d(w[0], w[1], {4, 4}, {2, 2}, {2, 2}, rng);
    b2 = BatchNorm2d(w[1]);
    c3 = Conv2d(w[1], w[2], {3, 3}, {1, 1}, {1, 1}, rng);
    b3 = BatchNorm2d(w[2]);
    proj = Conv2d(w[2], cfg.feature_dim, {1, 1}, {1, 1}, {0, 0}, rng);

    // walk the spatial dims now; collapsing below 1x1 is a config error
    std::ostringstream trace;
    int h = cfg.spec_bins, wd = cfg.spec_frames;
    trace << "in:" << h << "x" << wd;
    for (const Conv2d* c : {&c1, &c2, &c3}) {
        auto [oh, ow] = c->output_hw(h, wd);
        if (oh < 1 || ow < 1)
            throw DimensionError("echo encoder collapses below 1x1 (stage output " +
                                 std::to_string(oh) + "x" + std::to_string(ow) + ")");
        h = oh;
        wd = ow;
        trace << " -> " << h << "x" << wd;
    }
    shape_trace = trace.str();
}

Tensor EchoEncoder::operator()(const Tensor& spec, bool training) {
    Tensor x = relu(b1(c1(spec), training));
    x = relu(b2(c2(x), training));
    x = relu(b3(c3(x), training));
    return global_avg_pool(proj(x));
}

void EchoEncoder::collect(ParamMap& pm, const std::string& prefix) {
    c1.collect(pm, prefix + ".c1");
    b1.collect(pm, prefix + ".c1.bn");
    c2.collect(pm, prefix + ".c2");
    b2.collect(pm, prefix + ".c2.bn");
    c3.collect(pm, prefix + ".c3");
    b3.collect(pm, prefix + ".c3.bn");
    proj.collect(pm, prefix + ".proj");
}

// ---- EchoDecoder -------------------------------------------------------------

EchoDecoder::EchoDecoder(const NetConfig& cfg, Rng& rng) {
    const auto widths = cfg.echo_decoder_widths();
    int in_ch = cfg.feature_dim;
    for (size_t i = 0; i < widths.size(); ++i) {
        ups.emplace_back(in_ch, widths[i], 4, 2, 1, rng);
        if (i + 1 < widths.size()) bns.emplace_back(widths[i]);
        in_ch = widths[i];
    }
}

Tensor EchoDecoder::operator()(const Tensor& fe, bool training) {
    Tensor x = reshape(fe, {fe.dim(0), fe.dim(1), 1, 1});
    for (size_t i = 0; i < ups.size(); ++i) {
        x = ups[i](x);
        x = i + 1 < ups.size() ? relu(bns[i](x, training)) : relu(x);
    }
    return x;
}

void EchoDecoder::collect(ParamMap& pm, const std::string& prefix) {
    for (size_t i = 0; i < ups.size(); ++i) {
        ups[i].collect(pm, prefix + ".up" + std::to_string(i + 1));
        if (i < bns.size()) bns[i].collect(pm, prefix + ".up" + std::to_string(i + 1) + ".bn");
    }
}

void EchoNet::collect(ParamMap& pm, const std::string& prefix) {
    encoder.collect(pm, prefix + ".enc");
    decoder.collect(pm, prefix + ".dec");
}

// ---- VisualNet ----------------------------------------------------------------

VisualNet::VisualNet(const NetConfig& cfg, Rng& rng) {
    if (cfg.image_size % 32 != 0)
        throw ArgumentError("visual net: image size must be divisible by 32");
    const auto ew = cfg.visual_encoder_widths();
    int in_ch = 3;
    for (int w : ew) {
        enc.emplace_back(in_ch, w, 4, 2, 1, rng);
        enc_bn.emplace_back(w);
        in_ch = w;
    }
    const auto dw = cfg.visual_decoder_widths();
    for (size_t i = 0; i < dw.size(); ++i) {
        // stage 0 consumes the bottleneck; later stages consume the previous
        // output concatenated with the mirrored encoder feature
        const int dec_in = i == 0 ? ew.back()
                                  : dw[i - 1] + ew[ew.size() - 1 - i];
        dec.emplace_back(dec_in, dw[i], 4, 2, 1, rng);
        if (i + 1 < dw.size()) dec_bn.emplace_back(dw[i]);
    }
}

VisualNet::Out VisualNet::operator()(const Tensor& img, bool training) {
    std::vector<Tensor> skips;
    Tensor x = img;
    for (size_t i = 0; i < enc.size(); ++i) {
        x = leaky_relu(enc_bn[i](enc[i](x), training), 0.2);
        skips.push_back(x);
    }
    Out out;
    out.feature = x;
    for (size_t i = 0; i < dec.size(); ++i) {
        if (i > 0) {
            Tensor skip = skips[skips.size() - 1 - i];
            if (!use_skips) skip = Tensor::zeros(skip.shape()); // ablation hook
            x = concat_channels({x, skip});
        }
        x = dec[i](x);
        x = i + 1 < dec.size() ? relu(dec_bn[i](x, training)) : relu(x);
    }
    out.depth = x;
    return out;
}

void VisualNet::collect(ParamMap& pm, const std::string& prefix) {
    for (size_t i = 0; i < enc.size(); ++i) {
        enc[i].collect(pm, prefix + ".enc" + std::to_string(i + 1));
        enc_bn[i].collect(pm, prefix + ".enc" + std::to_string(i + 1) + ".bn");
    }
    for (size_t i = 0; i < dec.size(); ++i) {
        dec[i].collect(pm, prefix + ".dec" + std::to_string(i + 1));
        if (i < dec_bn.size()) dec_bn[i].collect(pm, prefix + ".dec" + std::to_string(i + 1) + ".bn");
    }
}

// ---- MaterialNet ---------------------------------------------------------------

ResidualBlock::ResidualBlock(int in, int out, int stride, Rng& rng) {
    conv1 = Conv2d(in, out, 3, stride, 1, rng);
    bn1 = BatchNorm2d(out);
    conv2 = Conv2d(out, out, 3, 1, 1, rng);
    bn2 = BatchNorm2d(out);
    if (stride != 1 || in != out) {
        proj = Conv2d(in, out, 1, stride, 0, rng);
        proj_bn = BatchNorm2d(out);
    }
}

Tensor ResidualBlock::operator()(const Tensor& x, bool training) {
    Tensor y = relu(bn1(conv1(x), training));
    y = bn2(conv2(y), training);
    Tensor shortcut = proj ? (*proj_bn)((*proj)(x), training) : x;
    return relu(add(y, shortcut));
}

void ResidualBlock::collect(ParamMap& pm, const std::string& prefix) {
    conv1.collect(pm, prefix + ".conv1");
    bn1.collect(pm, prefix + ".conv1.bn");
    conv2.collect(pm, prefix + ".conv2");
    bn2.collect(pm, prefix + ".conv2.bn");
    if (proj) {
        proj->collect(pm, prefix + ".proj");
        proj_bn->collect(pm, prefix + ".proj.bn");
    }
}

void ResidualBlock::zero_weights() {
    for (Tensor* t : {&conv1.weight, &conv1.bias, &conv2.weight, &conv2.bias})
        std::fill(t->raw().begin(), t->raw().end(), 0.0);
}

MaterialNet::MaterialNet(const NetConfig& cfg, Rng& rng) {
    const auto w = cfg.material_widths();
    stem = Conv2d(3, w[0], 7, 2, 3, rng);
    stem_bn = BatchNorm2d(w[0]);
    const int strides[4] = {1, 2, 2, 2};
    int in_ch = w[0];
    for (int i = 0; i < 4; ++i) {
        blocks.emplace_back(in_ch, w[static_cast<size_t>(i) + 1], strides[i], rng);
        in_ch = w[static_cast<size_t>(i) + 1];
    }
    if (in_ch != cfg.feature_dim)
        adapter = Conv2d(in_ch, cfg.feature_dim, 1, 1, 0, rng);
}

Tensor MaterialNet::operator()(const Tensor& img, int target_h, int target_w, bool training) {
    Tensor x = relu(stem_bn(stem(img), training));
    for (auto& b : blocks) x = b(x, training);
    x = adaptive_avg_pool(x, target_h, target_w);
    if (adapter) x = (*adapter)(x);
    return x;
}

void MaterialNet::collect(ParamMap& pm, const std::string& prefix) {
    stem.collect(pm, prefix + ".stem");
    stem_bn.collect(pm, prefix + ".stem.bn");
    for (size_t i = 0; i < blocks.size(); ++i)
        blocks[i].collect(pm, prefix + ".block" + std::to_string(i + 1));
    if (adapter) adapter->collect(pm, prefix + ".adapter");
}

} // namespace avdepth
