#include "avdepth/echo_sim.hpp"

#include <algorithm>
#include <cmath>

namespace avdepth {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

void Material::validate() const {
    if (reflection < 0.0 || reflection > 1.0)
        throw ArgumentError("material '" + name + "': reflection coefficient outside [0,1]");
    for (double a : albedo)
        if (a < 0.0 || a > 1.0)
            throw ArgumentError("material '" + name + "': albedo outside [0,1]");
}

int64_t Scene::valid_pixel_count() const {
    int64_t n = 0;
    for (double d : depth)
        if (d > 0.0) ++n;
    return n;
}

void Scene::validate() const {
    if (width < 1 || height < 1) throw ArgumentError("scene: empty grid");
    const size_t n = static_cast<size_t>(width) * height;
    if (depth.size() != n || materials.size() != n)
        throw ArgumentError("scene: depth/material maps do not match grid size");
    if (material_table.empty()) throw ArgumentError("scene: empty material table");
    if (speed_of_sound <= 0.0) throw ArgumentError("scene: speed of sound must be positive");
    for (const auto& m : material_table) m.validate();
    for (double d : depth)
        if (d < 0.0 || !std::isfinite(d)) throw ArgumentError("scene: negative or non-finite depth");
    for (uint16_t m : materials)
        if (m >= material_table.size())
            throw ArgumentError("scene: material index " + std::to_string(m) + " out of range");
    if (valid_pixel_count() == 0) throw ArgumentError("scene: no valid pixels");
}

Waveform Rir::to_waveform() const {
    Waveform w;
    w.sample_rate = sample_rate;
    w.channels = {left, right};
    return w;
}

double pixel_azimuth(int col, int width) {
    return ((static_cast<double>(col) + 0.5) / width - 0.5) * (kPi / 2.0);
}

Rir synthesize_rir(const Scene& scene, int sample_rate, double mic_baseline_m,
                   const EchoSimOptions& opt) {
    scene.validate();
    if (sample_rate <= 0) throw ArgumentError("synthesize_rir: sample_rate must be positive");
    if (mic_baseline_m < 0.0) throw ArgumentError("synthesize_rir: negative mic baseline");
    const int64_t n_valid = scene.valid_pixel_count();
    if (n_valid == 0) throw ArgumentError("synthesize_rir: scene has no valid pixels");

    struct Tap {
        int64_t lag;
        double amp;
    };
    std::vector<Tap> taps_l, taps_r;
    taps_l.reserve(static_cast<size_t>(n_valid));
    taps_r.reserve(static_cast<size_t>(n_valid));
    int64_t max_lag = 0;
    for (int y = 0; y < scene.height; ++y) {
        for (int x = 0; x < scene.width; ++x) {
            const double d = scene.depth_at(x, y);
            if (!(d > 0.0)) continue;
            const Material& mat = scene.material_table[scene.material_at(x, y)];
            double amp = mat.reflection / static_cast<double>(n_valid);
            if (opt.distance_falloff) amp /= std::max(d, 0.1);
            const double t = 2.0 * d / scene.speed_of_sound;
            const double itd = (mic_baseline_m / 2.0) * std::sin(pixel_azimuth(x, scene.width)) /
                               scene.speed_of_sound;
            const int64_t lag_l = std::max<int64_t>(0, std::llround(sample_rate * (t + itd)));
            const int64_t lag_r = std::max<int64_t>(0, std::llround(sample_rate * (t - itd)));
            taps_l.push_back({lag_l, amp});
            taps_r.push_back({lag_r, amp});
            max_lag = std::max({max_lag, lag_l, lag_r});
        }
    }
    Rir rir;
    rir.sample_rate = sample_rate;
    rir.includes_direct = opt.include_direct;
    rir.left.assign(static_cast<size_t>(max_lag) + 1, 0.0);
    rir.right.assign(static_cast<size_t>(max_lag) + 1, 0.0);
    for (const Tap& t : taps_l) rir.left[static_cast<size_t>(t.lag)] += t.amp;
    for (const Tap& t : taps_r) rir.right[static_cast<size_t>(t.lag)] += t.amp;
    if (opt.include_direct) {
        rir.left[0] += 1.0;
        rir.right[0] += 1.0;
    }
    return rir;
}

Waveform simulate_echo(const Scene& scene, const Waveform& pulse, const SpectrogramConfig& cfg,
                       double mic_baseline_m, const EchoSimOptions& opt) {
    pulse.validate();
    cfg.validate();
    if (pulse.num_channels() != 1) throw ArgumentError("simulate_echo: pulse must be mono");
    if (pulse.sample_rate != cfg.sample_rate)
        throw ArgumentError("simulate_echo: pulse sample rate " +
                            std::to_string(pulse.sample_rate) + " != config rate " +
                            std::to_string(cfg.sample_rate));
    const Rir rir = synthesize_rir(scene, cfg.sample_rate, mic_baseline_m, opt);
    const Waveform echo = convolve(pulse, rir.to_waveform());
    return fit_length(echo, cfg.duration_samples());
}

} // namespace avdepth
