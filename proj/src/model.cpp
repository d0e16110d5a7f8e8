#include "avdepth/model.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace avdepth {

std::string Modalities::to_string() const {
    std::string s;
    if (echo) s += "echo,";
    if (img) s += "img,";
    if (mat) s += "mat,";
    if (!s.empty()) s.pop_back();
    return s;
}

Modalities Modalities::from_string(const std::string& s) {
    Modalities m{false, false, false};
    std::istringstream is(s);
    std::string tok;
    while (std::getline(is, tok, ',')) {
        if (tok == "echo")
            m.echo = true;
        else if (tok == "img")
            m.img = true;
        else if (tok == "mat")
            m.mat = true;
        else if (!tok.empty())
            throw ArgumentError("unknown modality: " + tok);
    }
    if (m.count() == 0) throw ArgumentError("empty modality set");
    return m;
}

std::string DepthModel::config_text() const {
    return "model.kind=" + kind_name() + "\n" + net_config().to_text();
}

// ---- FullModel -----------------------------------------------------------------

FullModel::FullModel(const NetConfig& cfg, FusionKind fusion, uint64_t seed)
    : cfg_(cfg), fusion_(fusion) {
    cfg_.validate();
    Rng rng(seed);
    echo = EchoNet(cfg_, rng);
    visual = VisualNet(cfg_, rng);
    material = MaterialNet(cfg_, rng);
    const int attn_in = 2 * cfg_.fusion_channels;
    if (fusion_ == FusionKind::Bilinear) {
        fparams = FusionParams(cfg_.fusion_channels, cfg_.feature_dim, rng);
    } else {
        const int raw = fusion_ == FusionKind::Dot ? 2 : 3 * cfg_.feature_dim;
        adapter = Conv2d(raw, attn_in, 1, 1, 0, rng);
    }
    attention = AttentionNet(cfg_, attn_in, rng);
}

FullModel::Output FullModel::forward(const Tensor& spec, const Tensor& img) {
    Output o;
    o.fe = echo.encoder(spec, training_);
    o.de = echo.decoder(o.fe, training_);
    auto v = visual(img, training_);
    o.di = v.depth;
    o.fi = v.feature;
    o.fm = material(img, o.fi.dim(2), o.fi.dim(3), training_);
    switch (fusion_) {
    case FusionKind::Bilinear:
        o.fstar = bilinear_fusion(o.fe, o.fi, o.fm, fparams).f_star;
        break;
    case FusionKind::Dot:
        o.fstar = (*adapter)(dot_fusion(o.fe, o.fi, o.fm));
        break;
    case FusionKind::Concat:
        o.fstar = (*adapter)(concat_fusion(o.fe, o.fi, o.fm));
        break;
    }
    o.alpha = attention(o.fstar, training_);
    o.dhat = combine_depth(o.alpha, o.de, o.di);
    return o;
}

Tensor FullModel::predict(const Tensor& spec, const Tensor& img) {
    return forward(spec, img).dhat;
}

ParamMap FullModel::params() {
    ParamMap pm;
    echo.collect(pm, "echo");
    visual.collect(pm, "visual");
    if (adapter) adapter->collect(pm, "attn.adapter");
    attention.collect(pm, "attn");
    if (fusion_ == FusionKind::Bilinear) fparams.collect(pm, "fusion");
    material.collect(pm, "material");
    return pm;
}

std::string FullModel::config_text() const {
    return DepthModel::config_text() + "model.fusion=" + fusion_kind_name(fusion_) + "\n" +
           "model.echo_trace=" + echo.encoder.shape_trace + "\n";
}

// ---- single-net baselines --------------------------------------------------------

EchoOnlyModel::EchoOnlyModel(const NetConfig& cfg, uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(seed);
    echo = EchoNet(cfg_, rng);
}

Tensor EchoOnlyModel::predict(const Tensor& spec, const Tensor&) {
    return echo.decoder(echo.encoder(spec, training_), training_);
}

ParamMap EchoOnlyModel::params() {
    ParamMap pm;
    echo.collect(pm, "echo");
    return pm;
}

ImageOnlyModel::ImageOnlyModel(const NetConfig& cfg, uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(seed);
    visual = VisualNet(cfg_, rng);
}

Tensor ImageOnlyModel::predict(const Tensor&, const Tensor& img) {
    return visual(img, training_).depth;
}

ParamMap ImageOnlyModel::params() {
    ParamMap pm;
    visual.collect(pm, "visual");
    return pm;
}

// ---- ConcatBaselineModel ----------------------------------------------------------

ConcatBaselineModel::ConcatBaselineModel(const NetConfig& cfg, Modalities mods, uint64_t seed)
    : cfg_(cfg), mods_(mods) {
    cfg_.validate();
    if (mods_.count() == 0) throw ArgumentError("concat baseline: empty modality set");
    Rng rng(seed);
    if (mods_.echo) echo_enc_.emplace(cfg_, rng);
    if (mods_.img) {
        int in_ch = 3;
        for (int w : cfg_.visual_encoder_widths()) {
            venc_.emplace_back(in_ch, w, 4, 2, 1, rng);
            venc_bn_.emplace_back(w);
            in_ch = w;
        }
    }
    if (mods_.mat) material_.emplace(cfg_, rng);
    const int concat_ch = mods_.count() * cfg_.feature_dim;
    adapter_ = Conv2d(concat_ch, cfg_.feature_dim, 1, 1, 0, rng);
    // shared decoder from the bottleneck resolution up to the image size
    const auto widths = cfg_.attention_widths();
    int prev = cfg_.feature_dim;
    for (size_t i = 0; i < widths.size(); ++i) {
        dec_.emplace_back(prev, widths[i], 4, 2, 1, rng);
        if (i + 1 < widths.size()) dec_bn_.emplace_back(widths[i]);
        prev = widths[i];
    }
}

Tensor ConcatBaselineModel::predict(const Tensor& spec, const Tensor& img) {
    const int wh = cfg_.bottleneck_wh();
    std::vector<Tensor> feats;
    if (echo_enc_) feats.push_back(broadcast_spatial((*echo_enc_)(spec, training_), wh, wh));
    if (!venc_.empty()) {
        Tensor x = img;
        for (size_t i = 0; i < venc_.size(); ++i)
            x = leaky_relu(venc_bn_[i](venc_[i](x), training_), 0.2);
        feats.push_back(x);
    }
    if (material_) feats.push_back((*material_)(img, wh, wh, training_));
    Tensor x = adapter_(feats.size() == 1 ? feats[0] : concat_channels(feats));
    for (size_t i = 0; i < dec_.size(); ++i) {
        x = dec_[i](x);
        x = i + 1 < dec_.size() ? relu(dec_bn_[i](x, training_)) : relu(x);
    }
    return x;
}

ParamMap ConcatBaselineModel::params() {
    ParamMap pm;
    if (echo_enc_) echo_enc_->collect(pm, "echo.enc");
    for (size_t i = 0; i < venc_.size(); ++i) {
        venc_[i].collect(pm, "visual.enc" + std::to_string(i + 1));
        venc_bn_[i].collect(pm, "visual.enc" + std::to_string(i + 1) + ".bn");
    }
    if (material_) material_->collect(pm, "material");
    adapter_.collect(pm, "head.adapter");
    for (size_t i = 0; i < dec_.size(); ++i) {
        dec_[i].collect(pm, "head.dec" + std::to_string(i + 1));
        if (i < dec_bn_.size()) dec_bn_[i].collect(pm, "head.dec" + std::to_string(i + 1) + ".bn");
    }
    return pm;
}

std::string ConcatBaselineModel::config_text() const {
    return DepthModel::config_text() + "model.modalities=" + mods_.to_string() + "\n";
}

// ---- factory / checkpoint -----------------------------------------------------------

std::unique_ptr<DepthModel> make_baseline_model(const NetConfig& cfg, Modalities mods,
                                                uint64_t seed) {
    if (mods.echo && !mods.img && !mods.mat) return std::make_unique<EchoOnlyModel>(cfg, seed);
    if (!mods.echo && mods.img && !mods.mat) return std::make_unique<ImageOnlyModel>(cfg, seed);
    return std::make_unique<ConcatBaselineModel>(cfg, mods, seed);
}

std::unique_ptr<DepthModel> make_model(const std::string& kind, const NetConfig& cfg,
                                       FusionKind fusion, Modalities mods, uint64_t seed) {
    if (kind == "fused") return std::make_unique<FullModel>(cfg, fusion, seed);
    if (kind == "echo_only") return std::make_unique<EchoOnlyModel>(cfg, seed);
    if (kind == "image_only") return std::make_unique<ImageOnlyModel>(cfg, seed);
    if (kind == "concat_baseline") return std::make_unique<ConcatBaselineModel>(cfg, mods, seed);
    if (kind == "oracle") return std::make_unique<OracleModel>(cfg);
    throw ArgumentError("unknown model kind: " + kind);
}

namespace {

void put_u64le(std::string& s, uint64_t v) {
    for (int i = 0; i < 8; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

uint64_t get_u64le(const unsigned char* p) {
    uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
    return v;
}

void append_entry(std::string& buf, const std::string& name, const std::vector<double>& data) {
    put_u64le(buf, name.size());
    buf += name;
    put_u64le(buf, data.size());
    buf.append(reinterpret_cast<const char*>(data.data()), data.size() * sizeof(double));
}

std::string config_value(const std::string& text, const std::string& key) {
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        if (line.rfind(key + "=", 0) == 0) return line.substr(key.size() + 1);
    }
    throw FormatError("checkpoint config missing key: " + key);
}

} // namespace

void save_checkpoint(const std::string& path, DepthModel& model) {
    ParamMap pm = model.params();
    std::string buf = "AVC1";
    put_u64le(buf, pm.params.size() + pm.buffers.size());
    for (const auto& [name, t] : pm.params) append_entry(buf, name, t.values());
    for (const auto& [name, v] : pm.buffers) append_entry(buf, name, *v);
    const std::string cfg = model.config_text();
    put_u64le(buf, cfg.size());
    buf += cfg;
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw IoError("cannot open for writing: " + tmp);
        out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
        if (!out) throw IoError("write failed: " + tmp);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("rename failed: " + path + " (" + ec.message() + ")");
}

std::unique_ptr<DepthModel> load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path);
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const auto* p = reinterpret_cast<const unsigned char*>(buf.data());
    if (buf.size() < 12 || std::memcmp(p, "AVC1", 4) != 0)
        throw FormatError("bad checkpoint magic: " + path);
    size_t off = 4;
    const uint64_t n_entries = get_u64le(p + off);
    off += 8;
    std::vector<std::pair<std::string, std::vector<double>>> entries;
    entries.reserve(static_cast<size_t>(n_entries));
    for (uint64_t i = 0; i < n_entries; ++i) {
        if (off + 8 > buf.size()) throw FormatError("truncated checkpoint: " + path);
        const uint64_t name_len = get_u64le(p + off);
        off += 8;
        if (off + name_len + 8 > buf.size()) throw FormatError("truncated checkpoint: " + path);
        std::string name(buf.data() + off, name_len);
        off += static_cast<size_t>(name_len);
        const uint64_t count = get_u64le(p + off);
        off += 8;
        if (off + count * 8 > buf.size()) throw FormatError("truncated checkpoint: " + path);
        std::vector<double> data(static_cast<size_t>(count));
        std::memcpy(data.data(), buf.data() + off, static_cast<size_t>(count) * 8);
        off += static_cast<size_t>(count) * 8;
        entries.emplace_back(std::move(name), std::move(data));
    }
    if (off + 8 > buf.size()) throw FormatError("truncated checkpoint: " + path);
    const uint64_t cfg_len = get_u64le(p + off);
    off += 8;
    if (off + cfg_len > buf.size()) throw FormatError("truncated checkpoint: " + path);
    const std::string cfg_text(buf.data() + off, cfg_len);

    const std::string kind = config_value(cfg_text, "model.kind");
    NetConfig cfg = NetConfig::from_text(cfg_text);
    FusionKind fusion = FusionKind::Bilinear;
    if (kind == "fused") fusion = fusion_kind_from_name(config_value(cfg_text, "model.fusion"));
    Modalities mods;
    if (kind == "concat_baseline")
        mods = Modalities::from_string(config_value(cfg_text, "model.modalities"));
    auto model = make_model(kind, cfg, fusion, mods, /*seed=*/0);

    // strict fill: the entry set must match the model's parameter set exactly
    ParamMap pm = model->params();
    size_t next = 0;
    auto take = [&](const std::string& name, size_t want_size) -> std::vector<double>& {
        if (next >= entries.size())
            throw FormatError("checkpoint missing entry '" + name + "': " + path);
        auto& [ename, data] = entries[next++];
        if (ename != name)
            throw FormatError("checkpoint entry mismatch: expected '" + name + "', found '" +
                              ename + "': " + path);
        if (data.size() != want_size)
            throw FormatError("checkpoint entry '" + name + "' has " +
                              std::to_string(data.size()) + " values, expected " +
                              std::to_string(want_size) + ": " + path);
        return data;
    };
    for (auto& [name, t] : pm.params) t.raw() = take(name, t.values().size());
    for (auto& [name, v] : pm.buffers) *v = take(name, v->size());
    if (next != entries.size())
        throw FormatError("checkpoint has " + std::to_string(entries.size() - next) +
                          " unknown trailing entries: " + path);
    return model;
}

} // namespace avdepth
