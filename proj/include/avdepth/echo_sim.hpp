#pragma once

#include <array>
#include <string>
#include <vector>

#include "avdepth/audio.hpp"
#include "avdepth/common.hpp"

namespace avdepth {

struct Material {
    std::string name;
    double reflection = 0.5;              // acoustic reflection coefficient in [0,1]
    std::array<double, 3> albedo{0.5, 0.5, 0.5}; // rendering only

    void validate() const;
};

/// Ground-truth world: per-pixel depth (0 marks invalid) and material labels.
struct Scene {
    int width = 0;
    int height = 0;
    std::vector<double> depth;       // [y][x] meters, row-major
    std::vector<uint16_t> materials; // indices into material_table
    std::vector<Material> material_table;
    double speed_of_sound = 343.0;

    double depth_at(int x, int y) const { return depth[static_cast<size_t>(y) * width + x]; }
    uint16_t material_at(int x, int y) const {
        return materials[static_cast<size_t>(y) * width + x];
    }
    int64_t valid_pixel_count() const;
    void validate() const;
};

/// Binaural impulse response as sampled tap trains.
struct Rir {
    std::vector<double> left;
    std::vector<double> right;
    int sample_rate = 0;
    bool includes_direct = true;

    Waveform to_waveform() const;
};

struct EchoSimOptions {
    bool include_direct = true;
    /// Experimental 1/max(d, 0.1) amplitude falloff; the echo model itself
    /// carries only the material coefficient, so this defaults off.
    bool distance_falloff = false;
};

/// Azimuth of a pixel column under a 90-degree horizontal field of view,
/// mapped linearly from column centers; 0 at image center, +/-45 deg at edges.
double pixel_azimuth(int col, int width);

/// First-order echo taps: each valid pixel contributes amplitude
/// reflection/valid_count at lag round(fs*(2d/v_s +/- itd)), where the
/// interaural term is (baseline/2)*sin(azimuth)/v_s (+ left, - right).
/// A unit tap at lag 0 on both ears models the direct sound.
Rir synthesize_rir(const Scene& scene, int sample_rate, double mic_baseline_m,
                   const EchoSimOptions& opt = {});

/// Convolve the pulse with the scene's RIR and fit to the configured
/// duration: y(t) = x(t) + sum_i a_i x(t - t_i).
Waveform simulate_echo(const Scene& scene, const Waveform& pulse, const SpectrogramConfig& cfg,
                       double mic_baseline_m, const EchoSimOptions& opt = {});

} // namespace avdepth
