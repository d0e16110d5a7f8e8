#include "avdepth/scene_gen.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <thread>

#include "avdepth/rng.hpp"

namespace avdepth {

std::vector<Material> default_materials() {
    return {{"plaster", 0.85, {0.82, 0.79, 0.72}},
            {"fabric", 0.15, {0.48, 0.13, 0.20}},
            {"wood", 0.55, {0.55, 0.36, 0.18}},
            {"metal", 0.90, {0.58, 0.64, 0.72}}};
}

void DatasetConfig::validate() const {
    if (image_size != 32 && image_size != 64 && image_size != 128)
        throw ArgumentError("dataset: image_size must be 32, 64 or 128");
    if (n_train < 1 || n_val < 1 || n_test < 1)
        throw ArgumentError("dataset: split sizes must be >= 1");
    if (!(depth_min > 0.0) || !(depth_max > depth_min))
        throw ArgumentError("dataset: need 0 < depth_min < depth_max");
    if (material_table.empty()) throw ArgumentError("dataset: empty material table");
    for (const auto& m : material_table) m.validate();
    if (min_furniture < 0 || max_furniture < min_furniture)
        throw ArgumentError("dataset: bad furniture range");
    if (invalid_fraction < 0.0 || invalid_fraction > 0.5)
        throw ArgumentError("dataset: invalid_fraction outside [0, 0.5]");
    if (mic_baseline_m < 0.0) throw ArgumentError("dataset: negative mic baseline");
    spectro.validate();
}

Scene generate_scene(uint64_t seed, const DatasetConfig& cfg) {
    cfg.validate();
    Rng rng(seed);
    const int W = cfg.image_size, H = cfg.image_size;
    Scene s;
    s.width = W;
    s.height = H;
    s.material_table = cfg.material_table;
    const double wall_depth = rng.uniform(0.6 * cfg.depth_max, cfg.depth_max);
    s.depth.assign(static_cast<size_t>(W) * H, wall_depth);
    s.materials.assign(static_cast<size_t>(W) * H, 0); // wall material

    struct Rect {
        int x0, y0, w, h;
        double depth;
        uint16_t material;
    };
    const int n_rect =
        cfg.min_furniture +
        (cfg.max_furniture > cfg.min_furniture
             ? static_cast<int>(rng.below(static_cast<uint64_t>(cfg.max_furniture - cfg.min_furniture + 1)))
             : 0);
    std::vector<Rect> rects;
    rects.reserve(static_cast<size_t>(n_rect));
    for (int i = 0; i < n_rect; ++i) {
        Rect r;
        r.w = W / 8 + static_cast<int>(rng.below(static_cast<uint64_t>(W / 2 - W / 8 + 1)));
        r.h = H / 8 + static_cast<int>(rng.below(static_cast<uint64_t>(H / 2 - H / 8 + 1)));
        r.x0 = static_cast<int>(rng.below(static_cast<uint64_t>(W - r.w + 1)));
        r.y0 = static_cast<int>(rng.below(static_cast<uint64_t>(H - r.h + 1)));
        r.depth = rng.uniform(cfg.depth_min, wall_depth);
        r.material = static_cast<uint16_t>(rng.below(cfg.material_table.size()));
        rects.push_back(r);
    }
    // painter's order: farthest first, so nearer rectangles occlude
    std::stable_sort(rects.begin(), rects.end(),
                     [](const Rect& a, const Rect& b) { return a.depth > b.depth; });
    for (const Rect& r : rects)
        for (int y = r.y0; y < r.y0 + r.h; ++y)
            for (int x = r.x0; x < r.x0 + r.w; ++x) {
                s.depth[static_cast<size_t>(y) * W + x] = r.depth;
                s.materials[static_cast<size_t>(y) * W + x] = r.material;
            }
    // knock out a deterministic set of pixels to exercise the invalid mask
    const int64_t n_px = static_cast<int64_t>(W) * H;
    const int64_t n_invalid = std::llround(cfg.invalid_fraction * static_cast<double>(n_px));
    std::vector<int64_t> idx(static_cast<size_t>(n_px));
    for (int64_t i = 0; i < n_px; ++i) idx[static_cast<size_t>(i)] = i;
    for (int64_t i = 0; i < n_invalid; ++i) {
        const int64_t j = i + static_cast<int64_t>(rng.below(static_cast<uint64_t>(n_px - i)));
        std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(j)]);
        s.depth[static_cast<size_t>(idx[static_cast<size_t>(i)])] = 0.0;
    }
    s.validate();
    return s;
}

std::vector<float> render_image(const Scene& scene, uint64_t noise_seed, double noise_sigma) {
    scene.validate();
    Rng rng(noise_seed);
    const int W = scene.width, H = scene.height;
    const int64_t plane = static_cast<int64_t>(W) * H;
    std::vector<float> img(static_cast<size_t>(3) * plane, 0.0f);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            const int64_t p = static_cast<int64_t>(y) * W + x;
            const double d = scene.depth[static_cast<size_t>(p)];
            if (!(d > 0.0)) continue; // invalid pixels stay black
            const auto& alb = scene.material_table[scene.materials[static_cast<size_t>(p)]].albedo;
            const double shading = std::clamp(1.0 / (1.0 + 0.25 * d), 0.0, 1.0);
            for (int c = 0; c < 3; ++c) {
                double v = alb[static_cast<size_t>(c)] * shading;
                if (noise_sigma > 0.0) v += noise_sigma * rng.normal();
                img[static_cast<size_t>(c * plane + p)] =
                    static_cast<float>(std::clamp(v, 0.0, 1.0));
            }
        }
    return img;
}

const std::vector<Sample>& Dataset::split(const std::string& name) const {
    if (name == "train") return train;
    if (name == "val") return val;
    if (name == "test") return test;
    throw ArgumentError("unknown split: " + name);
}

Sample make_sample(uint64_t seed, const DatasetConfig& cfg) {
    Sample out;
    out.seed = seed;
    const Scene scene = generate_scene(seed, cfg);
    Rng derive(seed);
    out.image = render_image(scene, derive.fork(1).next_u64(), cfg.render_noise_sigma);
    out.depth.reserve(scene.depth.size());
    for (double d : scene.depth) out.depth.push_back(static_cast<float>(d));
    out.materials = scene.materials;

    const Chirp pulse = chirp(0.003, 20.0, 20000.0, cfg.spectro.sample_rate);
    const Waveform echo = simulate_echo(scene, pulse.wave, cfg.spectro, cfg.mic_baseline_m);
    out.echo.resize(static_cast<size_t>(2) * echo.length());
    for (int64_t i = 0; i < echo.length(); ++i) {
        out.echo[static_cast<size_t>(2 * i)] = static_cast<float>(echo.channels[0][static_cast<size_t>(i)]);
        out.echo[static_cast<size_t>(2 * i + 1)] =
            static_cast<float>(echo.channels[1][static_cast<size_t>(i)]);
    }
    const Spectrogram spec = stft_magnitude(echo, cfg.spectro);
    out.spectrogram.reserve(spec.values.size());
    for (double v : spec.values) out.spectrogram.push_back(static_cast<float>(v));
    return out;
}

// ---- AVD1 container ----------------------------------------------------------

namespace {

void put_section(std::string& buf, const char tag[4], const void* data, uint64_t bytes) {
    buf.append(tag, 4);
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((bytes >> (8 * i)) & 0xff));
    buf.append(static_cast<const char*>(data), static_cast<size_t>(bytes));
}

uint64_t get_u64le(const unsigned char* p) {
    uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
    return v;
}

} // namespace

void write_sample(const std::string& path, const Sample& s) {
    std::string buf;
    buf += "AVD1";
    put_section(buf, "IMG ", s.image.data(), s.image.size() * 4);
    put_section(buf, "DEP ", s.depth.data(), s.depth.size() * 4);
    put_section(buf, "MAT ", s.materials.data(), s.materials.size() * 2);
    put_section(buf, "WAV ", s.echo.data(), s.echo.size() * 4);
    put_section(buf, "SPC ", s.spectrogram.data(), s.spectrogram.size() * 4);
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

Sample read_sample(const std::string& path, uint64_t seed, const DatasetConfig& cfg) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path);
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (buf.size() < 4 || std::memcmp(buf.data(), "AVD1", 4) != 0)
        throw FormatError("bad magic in sample file: " + path);
    Sample s;
    s.seed = seed;
    size_t off = 4;
    const auto* p = reinterpret_cast<const unsigned char*>(buf.data());
    while (off < buf.size()) {
        if (off + 12 > buf.size()) throw FormatError("truncated section header: " + path);
        char tag[5] = {0};
        std::memcpy(tag, p + off, 4);
        const uint64_t len = get_u64le(p + off + 4);
        off += 12;
        if (off + len > buf.size()) throw FormatError("truncated section payload: " + path);
        const unsigned char* payload = p + off;
        auto read_f32 = [&](std::vector<float>& dst) {
            if (len % 4 != 0) throw FormatError("misaligned f32 section: " + path);
            dst.resize(static_cast<size_t>(len / 4));
            std::memcpy(dst.data(), payload, static_cast<size_t>(len));
        };
        if (std::strcmp(tag, "IMG ") == 0)
            read_f32(s.image);
        else if (std::strcmp(tag, "DEP ") == 0)
            read_f32(s.depth);
        else if (std::strcmp(tag, "MAT ") == 0) {
            if (len % 2 != 0) throw FormatError("misaligned u16 section: " + path);
            s.materials.resize(static_cast<size_t>(len / 2));
            std::memcpy(s.materials.data(), payload, static_cast<size_t>(len));
        } else if (std::strcmp(tag, "WAV ") == 0)
            read_f32(s.echo);
        else if (std::strcmp(tag, "SPC ") == 0)
            read_f32(s.spectrogram);
        else
            throw FormatError(std::string("unknown section '") + tag + "' in " + path);
        off += static_cast<size_t>(len);
    }
    const size_t plane = static_cast<size_t>(cfg.image_size) * cfg.image_size;
    const size_t spec_n = static_cast<size_t>(2) * cfg.spectro.freq_bins() *
                          cfg.spectro.frames_for_length(cfg.spectro.duration_samples());
    if (s.image.size() != 3 * plane || s.depth.size() != plane || s.materials.size() != plane ||
        s.echo.size() != static_cast<size_t>(2 * cfg.spectro.duration_samples()) ||
        s.spectrogram.size() != spec_n)
        throw FormatError("sample sections do not match dataset config: " + path);
    return s;
}

// ---- config text -------------------------------------------------------------

std::string dataset_config_to_text(const DatasetConfig& cfg) {
    std::ostringstream os;
    os.precision(17);
    os << "image_size=" << cfg.image_size << "\n";
    os << "n_train=" << cfg.n_train << "\n";
    os << "n_val=" << cfg.n_val << "\n";
    os << "n_test=" << cfg.n_test << "\n";
    os << "depth_min=" << cfg.depth_min << "\n";
    os << "depth_max=" << cfg.depth_max << "\n";
    os << "mic_baseline_m=" << cfg.mic_baseline_m << "\n";
    os << "seed=" << cfg.seed << "\n";
    os << "min_furniture=" << cfg.min_furniture << "\n";
    os << "max_furniture=" << cfg.max_furniture << "\n";
    os << "invalid_fraction=" << cfg.invalid_fraction << "\n";
    os << "render_noise_sigma=" << cfg.render_noise_sigma << "\n";
    os << "spectro.window_len=" << cfg.spectro.window_len << "\n";
    os << "spectro.hop_len=" << cfg.spectro.hop_len << "\n";
    os << "spectro.n_fft=" << cfg.spectro.n_fft << "\n";
    os << "spectro.sample_rate=" << cfg.spectro.sample_rate << "\n";
    os << "spectro.duration_ms=" << cfg.spectro.duration_ms << "\n";
    for (size_t i = 0; i < cfg.material_table.size(); ++i) {
        const auto& m = cfg.material_table[i];
        os << "material." << i << "=" << m.name << ":" << m.reflection << ":" << m.albedo[0]
           << "," << m.albedo[1] << "," << m.albedo[2] << "\n";
    }
    return os.str();
}

DatasetConfig dataset_config_from_text(const std::string& text) {
    DatasetConfig cfg;
    cfg.material_table.clear();
    std::map<int, Material> mats;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = line.substr(0, eq);
        const std::string val = line.substr(eq + 1);
        try {
            if (key == "image_size")
                cfg.image_size = std::stoi(val);
            else if (key == "n_train")
                cfg.n_train = std::stoi(val);
            else if (key == "n_val")
                cfg.n_val = std::stoi(val);
            else if (key == "n_test")
                cfg.n_test = std::stoi(val);
            else if (key == "depth_min")
                cfg.depth_min = std::stod(val);
            else if (key == "depth_max")
                cfg.depth_max = std::stod(val);
            else if (key == "mic_baseline_m")
                cfg.mic_baseline_m = std::stod(val);
            else if (key == "seed")
                cfg.seed = std::stoull(val);
            else if (key == "min_furniture")
                cfg.min_furniture = std::stoi(val);
            else if (key == "max_furniture")
                cfg.max_furniture = std::stoi(val);
            else if (key == "invalid_fraction")
                cfg.invalid_fraction = std::stod(val);
            else if (key == "render_noise_sigma")
                cfg.render_noise_sigma = std::stod(val);
            else if (key == "spectro.window_len")
                cfg.spectro.window_len = std::stoi(val);
            else if (key == "spectro.hop_len")
                cfg.spectro.hop_len = std::stoi(val);
            else if (key == "spectro.n_fft")
                cfg.spectro.n_fft = std::stoi(val);
            else if (key == "spectro.sample_rate")
                cfg.spectro.sample_rate = std::stoi(val);
            else if (key == "spectro.duration_ms")
                cfg.spectro.duration_ms = std::stod(val);
            else if (key.rfind("material.", 0) == 0) {
                const int idx = std::stoi(key.substr(9));
                const auto c1 = val.find(':');
                const auto c2 = val.find(':', c1 + 1);
                if (c1 == std::string::npos || c2 == std::string::npos)
                    throw FormatError("bad material entry: " + line);
                Material m;
                m.name = val.substr(0, c1);
                m.reflection = std::stod(val.substr(c1 + 1, c2 - c1 - 1));
                std::istringstream as(val.substr(c2 + 1));
                std::string tok;
                for (int c = 0; c < 3 && std::getline(as, tok, ','); ++c)
                    m.albedo[static_cast<size_t>(c)] = std::stod(tok);
                mats[idx] = m;
            } else
                throw FormatError("unknown dataset config key: " + key);
        } catch (const std::invalid_argument&) {
            throw FormatError("bad value in dataset config line: " + line);
        }
    }
    for (auto& [i, m] : mats) cfg.material_table.push_back(m);
    cfg.validate();
    return cfg;
}

// ---- on-disk dataset ---------------------------------------------------------

namespace {

std::string sample_filename(int64_t index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "sample_%06lld.avd", static_cast<long long>(index));
    return buf;
}

} // namespace

void build_dataset(const DatasetConfig& cfg, const std::string& out_dir) {
    cfg.validate();
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create dataset directory: " + out_dir);

    const int64_t total = cfg.n_train + cfg.n_val + cfg.n_test;
    std::vector<Sample> samples(static_cast<size_t>(total));
    std::atomic<int64_t> next{0};
    const unsigned n_workers = std::min(2u, std::max(1u, std::thread::hardware_concurrency()));
    auto worker = [&]() {
        for (;;) {
            const int64_t i = next.fetch_add(1);
            if (i >= total) break;
            samples[static_cast<size_t>(i)] = make_sample(cfg.seed + static_cast<uint64_t>(i), cfg);
        }
    };
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < n_workers; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();

    // single writer: samples then the index
    std::ostringstream index;
    index << dataset_config_to_text(cfg);
    for (int64_t i = 0; i < total; ++i) {
        const std::string fname = sample_filename(i);
        write_sample(out_dir + "/" + fname, samples[static_cast<size_t>(i)]);
        const char* split = i < cfg.n_train ? "train" : (i < cfg.n_train + cfg.n_val ? "val" : "test");
        index << split << " " << fname << " " << samples[static_cast<size_t>(i)].seed << "\n";
    }
    std::ofstream out(out_dir + "/index.txt", std::ios::binary);
    if (!out) throw IoError("cannot write index: " + out_dir + "/index.txt");
    out << index.str();
    if (!out) throw IoError("write failed: " + out_dir + "/index.txt");
}

Dataset load_dataset(const std::string& dir) {
    std::ifstream in(dir + "/index.txt");
    if (!in) throw IoError("cannot open index: " + dir + "/index.txt");
    std::string config_text;
    struct Entry {
        std::string split, file;
        uint64_t seed;
    };
    std::vector<Entry> entries;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line.find('=') != std::string::npos) {
            config_text += line;
            config_text += "\n";
            continue;
        }
        std::istringstream ls(line);
        Entry e;
        if (!(ls >> e.split >> e.file >> e.seed))
            throw FormatError("bad index line: " + line);
        entries.push_back(std::move(e));
    }
    Dataset ds;
    ds.cfg = dataset_config_from_text(config_text);
    for (const auto& e : entries) {
        Sample s = read_sample(dir + "/" + e.file, e.seed, ds.cfg);
        if (e.split == "train")
            ds.train.push_back(std::move(s));
        else if (e.split == "val")
            ds.val.push_back(std::move(s));
        else if (e.split == "test")
            ds.test.push_back(std::move(s));
        else
            throw FormatError("unknown split in index: " + e.split);
    }
    return ds;
}

} // namespace avdepth
