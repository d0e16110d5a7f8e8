#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "avdepth/audio.hpp"
#include "avdepth/echo_sim.hpp"

namespace avdepth {

/// The four-entry default table: acoustically hard wall/metal against soft
/// fabric, with distinct albedos so images carry material identity.
std::vector<Material> default_materials();

struct DatasetConfig {
    int image_size = 32; // W = H, one of {32, 64, 128}
    int n_train = 512;
    int n_val = 64;
    int n_test = 128;
    double depth_min = 0.5;
    double depth_max = 10.0;
    std::vector<Material> material_table = default_materials();
    SpectrogramConfig spectro = SpectrogramConfig::replica();
    double mic_baseline_m = 0.2;
    uint64_t seed = 42;
    // scene composition knobs (0/0 furniture is the bare-wall test hook)
    int min_furniture = 2;
    int max_furniture = 6;
    double invalid_fraction = 0.01;
    double render_noise_sigma = 0.02; // 0 disables pixel noise

    void validate() const;
};

/// Deterministic scene: back wall at uniform depth in [0.6*d_max, d_max],
/// 2..6 material rectangles in front (nearer occludes farther), and a sprinkle
/// of zero-depth pixels exercising the invalid mask.
Scene generate_scene(uint64_t seed, const DatasetConfig& cfg);

/// Pseudo-RGB render: albedo * clamp(1/(1 + 0.25 d), 0, 1) plus Gaussian
/// pixel noise, clamped to [0,1]; invalid pixels are black. Channel-first.
std::vector<float> render_image(const Scene& scene, uint64_t noise_seed, double noise_sigma);

/// One dataset record; numeric payloads are stored exactly as serialized (f32).
struct Sample {
    std::vector<float> image;       // 3*W*H
    std::vector<float> depth;       // W*H, 0 = invalid
    std::vector<uint16_t> materials; // W*H
    std::vector<float> echo;        // interleaved stereo, 2*L
    std::vector<float> spectrogram; // 2*P*Q
    uint64_t seed = 0;
};

struct Dataset {
    DatasetConfig cfg;
    std::vector<Sample> train, val, test;

    const std::vector<Sample>& split(const std::string& name) const;
};

/// Full pipeline for one record: scene -> render -> echo -> spectrogram.
Sample make_sample(uint64_t seed, const DatasetConfig& cfg);

/// Tagged little-endian container ("AVD1": IMG/DEP/MAT/WAV/SPC sections).
void write_sample(const std::string& path, const Sample& s);
Sample read_sample(const std::string& path, uint64_t seed, const DatasetConfig& cfg);

/// Generate and serialize the whole dataset; index.txt carries the config as
/// key=value lines followed by one "split filename seed" line per sample.
void build_dataset(const DatasetConfig& cfg, const std::string& out_dir);
Dataset load_dataset(const std::string& dir);

// config <-> key=value text (shared with the CLI manifest)
std::string dataset_config_to_text(const DatasetConfig& cfg);
DatasetConfig dataset_config_from_text(const std::string& text);

} // namespace avdepth
