#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "avdepth/scene_gen.hpp"

using namespace avdepth;
namespace fs = std::filesystem;

namespace {

DatasetConfig tiny_config() {
    DatasetConfig cfg;
    cfg.image_size = 32;
    cfg.n_train = 8;
    cfg.n_val = 1;
    cfg.n_test = 1;
    cfg.seed = 7;
    return cfg;
}

std::string read_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("avdepth_" + tag + "_" + std::to_string(::getpid()));
        fs::remove_all(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

} // namespace

TEST_CASE("generate_scene: bitwise deterministic in the seed") {
    auto cfg = tiny_config();
    Scene a = generate_scene(123, cfg);
    Scene b = generate_scene(123, cfg);
    CHECK(a.depth == b.depth);
    CHECK(a.materials == b.materials);
    Scene c = generate_scene(124, cfg);
    CHECK(a.depth != c.depth);
}

TEST_CASE("generate_scene: zero furniture leaves a bare wall") {
    auto cfg = tiny_config();
    cfg.min_furniture = 0;
    cfg.max_furniture = 0;
    cfg.invalid_fraction = 0.0;
    Scene s = generate_scene(5, cfg);
    const double wall = s.depth[0];
    CHECK(wall >= 0.6 * cfg.depth_max);
    CHECK(wall <= cfg.depth_max);
    for (double d : s.depth) CHECK(d == wall);
    for (uint16_t m : s.materials) CHECK(m == 0);
}

TEST_CASE("generate_scene: depths stay inside the configured range") {
    auto cfg = tiny_config();
    double lo = 1e9, hi = 0.0;
    for (uint64_t seed = 0; seed < 1000; ++seed) {
        Scene s = generate_scene(seed, cfg);
        for (double d : s.depth) {
            if (d == 0.0) continue; // invalid pixels excluded
            lo = std::min(lo, d);
            hi = std::max(hi, d);
        }
    }
    CHECK(lo >= cfg.depth_min);
    CHECK(hi <= cfg.depth_max);
}

TEST_CASE("generate_scene: invalid pixels appear at the configured rate") {
    auto cfg = tiny_config();
    Scene s = generate_scene(11, cfg);
    int64_t zeros = 0;
    for (double d : s.depth)
        if (d == 0.0) ++zeros;
    CHECK(zeros == std::llround(0.01 * 32 * 32));
}

TEST_CASE("render_image: noise-free pixels equal albedo times shading") {
    auto cfg = tiny_config();
    cfg.invalid_fraction = 0.0;
    Scene s = generate_scene(3, cfg);
    auto img = render_image(s, 0, 0.0);
    const int64_t plane = 32 * 32;
    for (int64_t p = 0; p < plane; ++p) {
        const double d = s.depth[static_cast<size_t>(p)];
        const auto& alb = s.material_table[s.materials[static_cast<size_t>(p)]].albedo;
        const double shading = 1.0 / (1.0 + 0.25 * d);
        for (int c = 0; c < 3; ++c)
            CHECK(img[static_cast<size_t>(c * plane + p)] ==
                  doctest::Approx(alb[static_cast<size_t>(c)] * shading).epsilon(1e-6));
    }
}

TEST_CASE("render_image: shading is monotone in depth and vanishes far away") {
    Scene s;
    s.width = 2;
    s.height = 1;
    s.depth = {1.0, 3.0};
    s.materials = {2, 2};
    s.material_table = default_materials();
    auto img = render_image(s, 0, 0.0);
    for (int c = 0; c < 3; ++c) CHECK(img[static_cast<size_t>(c * 2)] > img[static_cast<size_t>(c * 2 + 1)]);

    Scene far = s;
    far.depth = {1000.0, 1000.0};
    auto dark = render_image(far, 0, 0.0);
    for (float v : dark) CHECK(v <= 0.005f);
}

TEST_CASE("render_image: invalid pixels render black") {
    Scene s;
    s.width = 2;
    s.height = 1;
    s.depth = {0.0, 2.0};
    s.materials = {0, 0};
    s.material_table = default_materials();
    auto img = render_image(s, 9, 0.02);
    for (int c = 0; c < 3; ++c) CHECK(img[static_cast<size_t>(c * 2)] == 0.0f);
}

TEST_CASE("build_dataset: files, index, bitwise round-trip, split-disjoint seeds") {
    TempDir tmp("dataset");
    auto cfg = tiny_config();
    build_dataset(cfg, tmp.path.string());

    CHECK(fs::exists(tmp.path / "index.txt"));
    int file_count = 0;
    for (auto& e : fs::directory_iterator(tmp.path))
        if (e.path().extension() == ".avd") ++file_count;
    CHECK(file_count == 10);

    Dataset ds = load_dataset(tmp.path.string());
    CHECK(ds.train.size() == 8);
    CHECK(ds.val.size() == 1);
    CHECK(ds.test.size() == 1);

    // replica profile: every stored spectrogram is 2 x 257 x 166
    for (const auto& s : ds.train) CHECK(s.spectrogram.size() == 2u * 257u * 166u);
    CHECK(ds.cfg.spectro.frames_for_length(ds.cfg.spectro.duration_samples()) == 166);

    // reload -> rewrite reproduces the file bytes exactly
    const std::string f0 = (tmp.path / "sample_000000.avd").string();
    const std::string orig = read_bytes(f0);
    const std::string rewritten = (tmp.path / "rewrite.avd").string();
    write_sample(rewritten, ds.train[0]);
    CHECK(read_bytes(rewritten) == orig);

    // seeds pairwise distinct across all splits
    std::vector<uint64_t> seeds;
    for (const auto* split : {&ds.train, &ds.val, &ds.test})
        for (const auto& s : *split) seeds.push_back(s.seed);
    std::sort(seeds.begin(), seeds.end());
    CHECK(std::adjacent_find(seeds.begin(), seeds.end()) == seeds.end());

    // echo truncation: stereo interleaved over exactly duration_samples()
    for (const auto& s : ds.train)
        CHECK(s.echo.size() == static_cast<size_t>(2 * ds.cfg.spectro.duration_samples()));
}

TEST_CASE("build_dataset: dataset bytes are a pure function of the config") {
    TempDir a("ds_a"), b("ds_b");
    auto cfg = tiny_config();
    cfg.n_train = 3;
    build_dataset(cfg, a.path.string());
    build_dataset(cfg, b.path.string());
    for (auto& e : fs::directory_iterator(a.path)) {
        const auto other = b.path / e.path().filename();
        REQUIRE(fs::exists(other));
        CHECK(read_bytes(e.path().string()) == read_bytes(other.string()));
    }
}

TEST_CASE("dataset config text survives a round trip") {
    auto cfg = tiny_config();
    cfg.spectro = SpectrogramConfig::matterport();
    auto text = dataset_config_to_text(cfg);
    auto back = dataset_config_from_text(text);
    CHECK(back.image_size == cfg.image_size);
    CHECK(back.spectro.sample_rate == 16000);
    CHECK(back.material_table.size() == cfg.material_table.size());
    CHECK(back.material_table[1].reflection == cfg.material_table[1].reflection);
    CHECK(dataset_config_to_text(back) == text);
}

TEST_CASE("dataset config text rejects unknown keys") {
    CHECK_THROWS_AS(dataset_config_from_text("image_size=32\nbogus_key=1\n"), FormatError);
}
