#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "avdepth/audio.hpp"
#include "avdepth/rng.hpp"
#include "oracles.hpp"

using namespace avdepth;

TEST_CASE("hanning: endpoints, degenerate window, direct formula") {
    SUBCASE("n=3") {
        auto w = hanning(3);
        REQUIRE(w.size() == 3);
        CHECK(w[0] == doctest::Approx(0.0).epsilon(1e-15));
        CHECK(w[1] == doctest::Approx(1.0).epsilon(1e-15));
        CHECK(w[2] == doctest::Approx(0.0).epsilon(1e-15));
    }
    SUBCASE("n=1 degenerates to {1}") {
        auto w = hanning(1);
        REQUIRE(w.size() == 1);
        CHECK(w[0] == 1.0);
    }
    SUBCASE("n=64 against the closed form, peak at center") {
        auto w = hanning(64);
        const double expect = 0.5 * (1.0 - std::cos(2.0 * M_PI * 32.0 / 63.0));
        CHECK(w[32] == doctest::Approx(expect).epsilon(1e-15));
        double peak = 0.0;
        for (double v : w) peak = std::max(peak, v);
        CHECK(peak == std::max(w[31], w[32]));
    }
    SUBCASE("n<=0 is an argument error") {
        CHECK_THROWS_AS(hanning(0), ArgumentError);
        CHECK_THROWS_AS(hanning(-3), ArgumentError);
    }
}

TEST_CASE("chirp: length, degenerate sweep, initial phase, Nyquist clamp") {
    SUBCASE("3 ms at 44.1 kHz gives 132 samples") {
        auto c = chirp(0.003, 20.0, 20000.0, 44100);
        CHECK(c.wave.length() == 132);
        CHECK_FALSE(c.f1_clamped);
    }
    SUBCASE("f0 == f1 is a pure sinusoid") {
        auto c = chirp(0.01, 100.0, 100.0, 8000);
        for (int64_t k = 0; k < c.wave.length(); ++k) {
            const double t = static_cast<double>(k) / 8000.0;
            CHECK(c.wave.channels[0][static_cast<size_t>(k)] ==
                  doctest::Approx(std::sin(2.0 * M_PI * 100.0 * t)).epsilon(1e-12));
        }
    }
    SUBCASE("first sample is sin(0) = 0") {
        auto c = chirp(0.003, 20.0, 20000.0, 44100);
        CHECK(c.wave.channels[0][0] == 0.0);
    }
    SUBCASE("20 kHz target at 16 kHz rate clamps to Nyquist and flags it") {
        auto c = chirp(0.003, 20.0, 20000.0, 16000);
        CHECK(c.f1_clamped);
        CHECK(c.f1_used == doctest::Approx(8000.0));
        CHECK(c.wave.length() == 48);
    }
}

TEST_CASE("convolve: identity, pure delay, oracle, empty kernel") {
    Rng rng(31);
    Waveform sig;
    sig.sample_rate = 1000;
    sig.channels.push_back({});
    for (int i = 0; i < 50; ++i) sig.channels[0].push_back(rng.uniform(-1.0, 1.0));

    SUBCASE("unit delta at lag 0 is the identity") {
        Waveform k{{{1.0}}, 1000};
        auto y = convolve(sig, k);
        REQUIRE(y.length() == 50);
        for (size_t i = 0; i < 50; ++i) CHECK(y.channels[0][i] == sig.channels[0][i]);
    }
    SUBCASE("unit delta at lag 5 shifts by 5 samples") {
        Waveform k{{{0, 0, 0, 0, 0, 1.0}}, 1000};
        auto y = convolve(sig, k);
        REQUIRE(y.length() == 55);
        for (size_t i = 0; i < 50; ++i) CHECK(y.channels[0][i + 5] == sig.channels[0][i]);
        for (size_t i = 0; i < 5; ++i) CHECK(y.channels[0][i] == 0.0);
    }
    SUBCASE("random 50 x 7 against the O(n^2) oracle") {
        Waveform k{{{}}, 1000};
        for (int i = 0; i < 7; ++i) k.channels[0].push_back(rng.uniform(-1.0, 1.0));
        auto y = convolve(sig, k);
        auto ref = oracle::convolve_direct(sig.channels[0], k.channels[0]);
        REQUIRE(y.channels[0].size() == ref.size());
        for (size_t i = 0; i < ref.size(); ++i)
            CHECK(std::abs(y.channels[0][i] - ref[i]) <= 1e-12);
    }
    SUBCASE("mono signal broadcasts over a stereo kernel") {
        Waveform k{{{1.0, 0.5}, {0.25, 0.125}}, 1000};
        auto y = convolve(sig, k);
        CHECK(y.num_channels() == 2);
    }
    SUBCASE("empty kernel is an argument error") {
        Waveform k{{{}}, 1000};
        CHECK_THROWS_AS(convolve(sig, k), ArgumentError);
    }
}

namespace {

Waveform random_stereo(Rng& rng, const SpectrogramConfig& cfg) {
    Waveform w;
    w.sample_rate = cfg.sample_rate;
    w.channels.assign(2, std::vector<double>(static_cast<size_t>(cfg.duration_samples())));
    for (auto& c : w.channels)
        for (auto& v : c) v = rng.uniform(-1.0, 1.0);
    return w;
}

} // namespace

TEST_CASE("stft_magnitude: the paper-pinned shapes") {
    Rng rng(37);
    SUBCASE("replica profile: 2 x 257 x 166") {
        auto cfg = SpectrogramConfig::replica();
        CHECK(cfg.duration_samples() == 2646);
        auto spec = stft_magnitude(random_stereo(rng, cfg), cfg);
        CHECK(spec.channels == 2);
        CHECK(spec.bins == 257);
        CHECK(spec.frames == 166);
    }
    SUBCASE("matterport profile: 2 x 257 x 121") {
        auto cfg = SpectrogramConfig::matterport();
        CHECK(cfg.duration_samples() == 960);
        auto spec = stft_magnitude(random_stereo(rng, cfg), cfg);
        CHECK(spec.channels == 2);
        CHECK(spec.bins == 257);
        CHECK(spec.frames == 121);
    }
}

TEST_CASE("stft_magnitude: zero input, nonnegativity, channel contract") {
    auto cfg = SpectrogramConfig::matterport();
    Waveform w;
    w.sample_rate = cfg.sample_rate;
    w.channels.assign(2, std::vector<double>(static_cast<size_t>(cfg.duration_samples()), 0.0));
    auto spec = stft_magnitude(w, cfg);
    for (double v : spec.values) CHECK(v == 0.0);

    Rng rng(41);
    auto w2 = random_stereo(rng, cfg);
    auto spec2 = stft_magnitude(w2, cfg);
    for (double v : spec2.values) CHECK(v >= 0.0);

    Waveform mono{{std::vector<double>(static_cast<size_t>(cfg.duration_samples()), 0.0)},
                  cfg.sample_rate};
    CHECK_THROWS_AS(stft_magnitude(mono, cfg), ArgumentError);
}

TEST_CASE("single-frame Parseval sanity with a rectangular window") {
    // sinusoid at an exact-bin frequency so the DC and Nyquist bins vanish
    const int n = 512;
    std::vector<double> frame(n);
    double energy = 0.0;
    for (int k = 0; k < n; ++k) {
        frame[static_cast<size_t>(k)] = std::sin(2.0 * M_PI * 5.0 * k / n);
        energy += frame[static_cast<size_t>(k)] * frame[static_cast<size_t>(k)];
    }
    const auto mag = dsp_detail::rfft_magnitude(frame);
    double onesided = 0.0;
    for (double m : mag) onesided += m * m;
    CHECK(onesided == doctest::Approx(n * energy / 2.0).epsilon(1e-6));
}

TEST_CASE("frame count formula floor(L/hop)+1 pins the centering convention") {
    const auto r = SpectrogramConfig::replica();
    CHECK(r.frames_for_length(r.duration_samples()) == 166);
    const auto m = SpectrogramConfig::matterport();
    CHECK(m.frames_for_length(m.duration_samples()) == 121);
}

TEST_CASE("wav: float samples round-trip bit-exactly") {
    Rng rng(43);
    Waveform w;
    w.sample_rate = 44100;
    w.channels.assign(2, std::vector<double>(257));
    for (auto& c : w.channels)
        for (auto& v : c) v = static_cast<double>(static_cast<float>(rng.uniform(-1.0, 1.0)));
    const std::string path = "test_roundtrip.wav";
    wav_write(path, w);
    auto r = wav_read(path);
    std::remove(path.c_str());
    REQUIRE(r.num_channels() == 2);
    REQUIRE(r.length() == 257);
    CHECK(r.sample_rate == 44100);
    for (int c = 0; c < 2; ++c)
        for (size_t i = 0; i < 257; ++i) CHECK(r.channels[static_cast<size_t>(c)][i] == w.channels[static_cast<size_t>(c)][i]);
}
