#pragma once

#include <string>
#include <vector>

#include "avdepth/common.hpp"

namespace avdepth {

/// Time-domain audio, one or two channels of equal length.
struct Waveform {
    std::vector<std::vector<double>> channels;
    int sample_rate = 0;

    int num_channels() const { return static_cast<int>(channels.size()); }
    int64_t length() const { return channels.empty() ? 0 : static_cast<int64_t>(channels[0].size()); }
    void validate() const;
};

struct SpectrogramConfig {
    int window_len = 64;
    int hop_len = 16;
    int n_fft = 512;
    int sample_rate = 44100;
    double duration_ms = 60.0;

    /// 44.1 kHz / win 64 / hop 16 / 512-point profile (-> 2x257x166 at 60 ms).
    static SpectrogramConfig replica();
    /// 16 kHz / win 32 / hop 8 / 512-point profile (-> 2x257x121 at 60 ms).
    static SpectrogramConfig matterport();

    int freq_bins() const { return n_fft / 2 + 1; }
    int64_t duration_samples() const;
    int frames_for_length(int64_t length) const { return static_cast<int>(length / hop_len) + 1; }
    void validate() const;
};

/// Magnitude spectrogram, channels x freq_bins x frames, all values >= 0.
struct Spectrogram {
    std::vector<double> values; // [channel][bin][frame], row-major
    int channels = 0;
    int bins = 0;
    int frames = 0;
    SpectrogramConfig config;

    double at(int c, int p, int q) const {
        return values[(static_cast<int64_t>(c) * bins + p) * frames + q];
    }
};

/// Symmetric Hann window; w[k] = 0.5*(1 - cos(2*pi*k/(n-1))), w = {1} for n=1.
std::vector<double> hanning(int n);

struct Chirp {
    Waveform wave; // mono
    bool f1_clamped = false;
    double f1_used = 0.0;
};

/// Linear frequency sweep, unit amplitude, zero phase at t=0. An f1 above
/// Nyquist is clamped to Nyquist and flagged in the result.
Chirp chirp(double duration_s, double f0_hz, double f1_hz, int sample_rate);

/// Full linear convolution; output length len(signal)+len(kernel)-1. A mono
/// signal is broadcast across the kernel's channels.
Waveform convolve(const Waveform& signal, const Waveform& kernel);

/// Truncate or zero-pad all channels to exactly n samples.
Waveform fit_length(const Waveform& w, int64_t n);

/// STFT magnitude of a two-channel waveform: reflect-pad n_fft/2 on both
/// ends, slide the zero-padded (centered) Hann window by hop_len, real FFT.
/// Output is channels x (n_fft/2+1) x (floor(L/hop)+1).
Spectrogram stft_magnitude(const Waveform& wave, const SpectrogramConfig& cfg);

namespace dsp_detail {
/// |rFFT| of one frame (its length must be a power of two); returns the
/// n/2+1 one-sided magnitudes. Exposed so tests can window frames their way.
std::vector<double> rfft_magnitude(const std::vector<double>& frame);
} // namespace dsp_detail

// 32-bit float PCM WAV, little-endian, mono or stereo.
void wav_write(const std::string& path, const Waveform& w);
Waveform wav_read(const std::string& path);

} // namespace avdepth
