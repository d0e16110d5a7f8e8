#include "avdepth/audio.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

namespace avdepth {

namespace {

constexpr double kPi = 3.14159265358979323846;

bool is_pow2(int n) { return n > 0 && (n & (n - 1)) == 0; }

// Reflect index into [0, L) without repeating the edge sample.
int64_t mirror(int64_t idx, int64_t L) {
    if (L == 1) return 0;
    const int64_t period = 2 * (L - 1);
    idx = ((idx % period) + period) % period;
    return idx < L ? idx : period - idx;
}

// In-place iterative radix-2 complex FFT.
void fft_radix2(std::vector<double>& re, std::vector<double>& im) {
    const size_t n = re.size();
    for (size_t i = 1, j = 0; i < n; ++i) {
        size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) {
            std::swap(re[i], re[j]);
            std::swap(im[i], im[j]);
        }
    }
    for (size_t len = 2; len <= n; len <<= 1) {
        const double ang = -2.0 * kPi / static_cast<double>(len);
        const double wr = std::cos(ang), wi = std::sin(ang);
        for (size_t i = 0; i < n; i += len) {
            double cr = 1.0, ci = 0.0;
            for (size_t k = 0; k < len / 2; ++k) {
                const double ur = re[i + k], ui = im[i + k];
                const double vr = re[i + k + len / 2] * cr - im[i + k + len / 2] * ci;
                const double vi = re[i + k + len / 2] * ci + im[i + k + len / 2] * cr;
                re[i + k] = ur + vr;
                im[i + k] = ui + vi;
                re[i + k + len / 2] = ur - vr;
                im[i + k + len / 2] = ui - vi;
                const double ncr = cr * wr - ci * wi;
                ci = cr * wi + ci * wr;
                cr = ncr;
            }
        }
    }
}

} // namespace

void Waveform::validate() const {
    if (channels.empty() || channels.size() > 2)
        throw ArgumentError("waveform must have 1 or 2 channels, has " +
                            std::to_string(channels.size()));
    if (sample_rate <= 0) throw ArgumentError("waveform sample_rate must be positive");
    for (const auto& c : channels)
        if (c.size() != channels[0].size())
            throw ArgumentError("waveform channels differ in length");
}

SpectrogramConfig SpectrogramConfig::replica() {
    return SpectrogramConfig{64, 16, 512, 44100, 60.0};
}

SpectrogramConfig SpectrogramConfig::matterport() {
    return SpectrogramConfig{32, 8, 512, 16000, 60.0};
}

int64_t SpectrogramConfig::duration_samples() const {
    return static_cast<int64_t>(std::llround(duration_ms * sample_rate / 1000.0));
}

void SpectrogramConfig::validate() const {
    if (window_len < 1 || hop_len < 1) throw ArgumentError("window/hop length must be >= 1");
    if (window_len > n_fft) throw ArgumentError("window_len exceeds n_fft");
    if (!is_pow2(n_fft)) throw ArgumentError("n_fft must be a power of two");
    if (sample_rate <= 0 || duration_ms <= 0.0)
        throw ArgumentError("sample_rate and duration must be positive");
}

std::vector<double> hanning(int n) {
    if (n < 1) throw ArgumentError("hanning: n must be >= 1, got " + std::to_string(n));
    if (n == 1) return {1.0};
    std::vector<double> w(static_cast<size_t>(n));
    for (int k = 0; k < n; ++k)
        w[static_cast<size_t>(k)] = 0.5 * (1.0 - std::cos(2.0 * kPi * k / (n - 1)));
    return w;
}

Chirp chirp(double duration_s, double f0_hz, double f1_hz, int sample_rate) {
    if (duration_s <= 0.0) throw ArgumentError("chirp: duration must be positive");
    if (sample_rate <= 0) throw ArgumentError("chirp: sample_rate must be positive");
    if (f0_hz <= 0.0 || f1_hz < f0_hz) throw ArgumentError("chirp: need 0 < f0 <= f1");
    Chirp out;
    const double nyquist = sample_rate / 2.0;
    out.f1_used = f1_hz;
    if (f1_hz > nyquist) {
        out.f1_used = nyquist;
        out.f1_clamped = true;
    }
    const int64_t n = static_cast<int64_t>(std::llround(duration_s * sample_rate));
    std::vector<double> samples(static_cast<size_t>(n));
    const double rate = (out.f1_used - f0_hz) / (2.0 * duration_s);
    for (int64_t k = 0; k < n; ++k) {
        const double t = static_cast<double>(k) / sample_rate;
        samples[static_cast<size_t>(k)] = std::sin(2.0 * kPi * (f0_hz * t + rate * t * t));
    }
    out.wave.channels.push_back(std::move(samples));
    out.wave.sample_rate = sample_rate;
    return out;
}

Waveform convolve(const Waveform& signal, const Waveform& kernel) {
    signal.validate();
    if (kernel.channels.empty() || kernel.length() == 0)
        throw ArgumentError("convolve: empty kernel");
    if (signal.num_channels() != 1 && signal.num_channels() != kernel.num_channels())
        throw ArgumentError("convolve: signal must be mono or match kernel channels");
    Waveform out;
    out.sample_rate = signal.sample_rate;
    const int64_t ns = signal.length();
    for (int c = 0; c < kernel.num_channels(); ++c) {
        const auto& s = signal.channels[signal.num_channels() == 1 ? 0 : static_cast<size_t>(c)];
        const auto& k = kernel.channels[static_cast<size_t>(c)];
        std::vector<double> y(static_cast<size_t>(ns + static_cast<int64_t>(k.size()) - 1), 0.0);
        for (size_t i = 0; i < s.size(); ++i) {
            const double sv = s[i];
            if (sv == 0.0) continue;
            for (size_t j = 0; j < k.size(); ++j) y[i + j] += sv * k[j];
        }
        out.channels.push_back(std::move(y));
    }
    return out;
}

Waveform fit_length(const Waveform& w, int64_t n) {
    if (n < 0) throw ArgumentError("fit_length: negative length");
    Waveform out;
    out.sample_rate = w.sample_rate;
    for (const auto& c : w.channels) {
        std::vector<double> v(static_cast<size_t>(n), 0.0);
        const size_t m = std::min(c.size(), static_cast<size_t>(n));
        std::copy(c.begin(), c.begin() + static_cast<int64_t>(m), v.begin());
        out.channels.push_back(std::move(v));
    }
    return out;
}

namespace dsp_detail {

std::vector<double> rfft_magnitude(const std::vector<double>& frame) {
    const int n = static_cast<int>(frame.size());
    if (!is_pow2(n)) throw ArgumentError("rfft_magnitude: frame length must be a power of two");
    std::vector<double> re = frame, im(frame.size(), 0.0);
    fft_radix2(re, im);
    std::vector<double> mag(static_cast<size_t>(n / 2 + 1));
    for (int k = 0; k <= n / 2; ++k)
        mag[static_cast<size_t>(k)] =
            std::hypot(re[static_cast<size_t>(k)], im[static_cast<size_t>(k)]);
    return mag;
}

} // namespace dsp_detail

Spectrogram stft_magnitude(const Waveform& wave, const SpectrogramConfig& cfg) {
    wave.validate();
    cfg.validate();
    if (wave.num_channels() != 2)
        throw ArgumentError("stft_magnitude: expected 2 channels, got " +
                            std::to_string(wave.num_channels()));
    const int64_t L = wave.length();
    if (L != cfg.duration_samples())
        throw ArgumentError("stft_magnitude: waveform length " + std::to_string(L) +
                            " does not match configured duration (" +
                            std::to_string(cfg.duration_samples()) + " samples)");
    const int P = cfg.freq_bins();
    const int Q = cfg.frames_for_length(L);
    const int pad = cfg.n_fft / 2;

    // Hann window centered inside the n_fft frame.
    const auto win = hanning(cfg.window_len);
    std::vector<double> win_padded(static_cast<size_t>(cfg.n_fft), 0.0);
    const int left = (cfg.n_fft - cfg.window_len) / 2;
    std::copy(win.begin(), win.end(), win_padded.begin() + left);

    Spectrogram spec;
    spec.channels = 2;
    spec.bins = P;
    spec.frames = Q;
    spec.config = cfg;
    spec.values.assign(static_cast<size_t>(2) * P * Q, 0.0);

    std::vector<double> frame(static_cast<size_t>(cfg.n_fft));
    for (int c = 0; c < 2; ++c) {
        const auto& x = wave.channels[static_cast<size_t>(c)];
        for (int q = 0; q < Q; ++q) {
            const int64_t start = static_cast<int64_t>(q) * cfg.hop_len - pad;
            for (int i = 0; i < cfg.n_fft; ++i)
                frame[static_cast<size_t>(i)] =
                    x[static_cast<size_t>(mirror(start + i, L))] *
                    win_padded[static_cast<size_t>(i)];
            const auto mag = dsp_detail::rfft_magnitude(frame);
            for (int p = 0; p < P; ++p)
                spec.values[(static_cast<int64_t>(c) * P + p) * Q + q] =
                    mag[static_cast<size_t>(p)];
        }
    }
    return spec;
}

// ---- WAV -------------------------------------------------------------------

namespace {

void put_u32(std::string& s, uint32_t v) {
    s.push_back(static_cast<char>(v & 0xff));
    s.push_back(static_cast<char>((v >> 8) & 0xff));
    s.push_back(static_cast<char>((v >> 16) & 0xff));
    s.push_back(static_cast<char>((v >> 24) & 0xff));
}

void put_u16(std::string& s, uint16_t v) {
    s.push_back(static_cast<char>(v & 0xff));
    s.push_back(static_cast<char>((v >> 8) & 0xff));
}

uint32_t get_u32(const unsigned char* p) {
    return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
           (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

uint16_t get_u16(const unsigned char* p) { return static_cast<uint16_t>(p[0] | (p[1] << 8)); }

} // namespace

void wav_write(const std::string& path, const Waveform& w) {
    w.validate();
    const int ch = w.num_channels();
    const int64_t n = w.length();
    const uint32_t data_bytes = static_cast<uint32_t>(n * ch * 4);
    std::string buf;
    buf.reserve(58 + data_bytes);
    buf += "RIFF";
    put_u32(buf, 4 + 26 + 8 + data_bytes); // WAVE + fmt(8+18) + data header
    buf += "WAVE";
    buf += "fmt ";
    put_u32(buf, 18);
    put_u16(buf, 3); // IEEE float
    put_u16(buf, static_cast<uint16_t>(ch));
    put_u32(buf, static_cast<uint32_t>(w.sample_rate));
    put_u32(buf, static_cast<uint32_t>(w.sample_rate) * ch * 4);
    put_u16(buf, static_cast<uint16_t>(ch * 4));
    put_u16(buf, 32);
    put_u16(buf, 0); // cbSize
    buf += "data";
    put_u32(buf, data_bytes);
    for (int64_t i = 0; i < n; ++i)
        for (int c = 0; c < ch; ++c) {
            const float f =
                static_cast<float>(w.channels[static_cast<size_t>(c)][static_cast<size_t>(i)]);
            char b[4];
            std::memcpy(b, &f, 4);
            buf.append(b, 4);
        }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw IoError("write failed: " + path);
}

Waveform wav_read(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path);
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const auto* p = reinterpret_cast<const unsigned char*>(buf.data());
    if (buf.size() < 44 || std::memcmp(p, "RIFF", 4) != 0 || std::memcmp(p + 8, "WAVE", 4) != 0)
        throw FormatError("not a RIFF/WAVE file: " + path);
    size_t off = 12;
    int channels = 0, rate = 0, bits = 0, fmt = 0;
    const unsigned char* data = nullptr;
    uint32_t data_len = 0;
    while (off + 8 <= buf.size()) {
        const uint32_t len = get_u32(p + off + 4);
        if (off + 8 + len > buf.size()) throw FormatError("truncated chunk: " + path);
        if (std::memcmp(p + off, "fmt ", 4) == 0) {
            if (len < 16) throw FormatError("truncated fmt chunk: " + path);
            fmt = get_u16(p + off + 8);
            channels = get_u16(p + off + 10);
            rate = static_cast<int>(get_u32(p + off + 12));
            bits = get_u16(p + off + 22);
        } else if (std::memcmp(p + off, "data", 4) == 0) {
            data = p + off + 8;
            data_len = len;
        }
        off += 8 + len + (len & 1);
    }
    if (!data) throw FormatError("missing data chunk: " + path);
    if (fmt != 3 || bits != 32) throw FormatError("expected 32-bit float WAV: " + path);
    if (channels < 1 || channels > 2) throw FormatError("expected mono or stereo WAV: " + path);
    const uint32_t frames = data_len / (static_cast<uint32_t>(channels) * 4);
    Waveform w;
    w.sample_rate = rate;
    w.channels.assign(static_cast<size_t>(channels), std::vector<double>(frames));
    for (uint32_t i = 0; i < frames; ++i)
        for (int c = 0; c < channels; ++c) {
            float f;
            std::memcpy(&f, data + (static_cast<size_t>(i) * channels + c) * 4, 4);
            w.channels[static_cast<size_t>(c)][i] = static_cast<double>(f);
        }
    return w;
}

} // namespace avdepth
