#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "dpd/metrics.hpp"

using namespace dpd;

namespace {

IqSignal tone(std::size_t n, double fs, double f, cplx amp) {
    IqSignal x{std::vector<cplx>(n), fs};
    for (std::size_t i = 0; i < n; ++i) x.samples[i] = amp * std::polar(1.0, 2.0 * std::numbers::pi * f * double(i) / fs);
    return x;
}

OfdmConfig small_config() {
    OfdmConfig c;
    c.n_subcarriers = 48;
    c.oversampling_factor = 2;
    c.n_symbols = 4;
    c.seed = 3;
    return c;
}

std::vector<cplx> naive_dft(std::span<const cplx> x) {
    const std::size_t n = x.size();
    std::vector<cplx> out(n);
    for (std::size_t k = 0; k < n; ++k)
        for (std::size_t t = 0; t < n; ++t)
            out[k] += x[t] * std::polar(1.0, -2.0 * std::numbers::pi * double(k * t % n) / double(n));
    return out;
}

} // namespace

TEST(Hann, Periodic) {
    const auto w = hann(8);
    EXPECT_DOUBLE_EQ(w[0], 0.0);
    EXPECT_NEAR(w[4], 1.0, 1e-15);
    EXPECT_NEAR(w[2], 0.5, 1e-15);
    EXPECT_NEAR(w[6], 0.5, 1e-15);
}

TEST(Welch, GridAndErrors) {
    const auto x = tone(4096, 1.0e6, 0.0, 1.0);
    const auto p = psd_welch(x);
    ASSERT_EQ(p.size(), 1024u);
    EXPECT_DOUBLE_EQ(p.bin_width_hz, 1.0e6 / 1024);
    EXPECT_DOUBLE_EQ(p.freqs_hz.front(), -0.5e6);
    for (std::size_t k = 1; k < p.size(); ++k) EXPECT_GT(p.freqs_hz[k], p.freqs_hz[k - 1]);
    WelchConfig bad;
    bad.segment_len = 1000;
    EXPECT_THROW(psd_welch(x, bad), SizingError);
    bad.segment_len = 8192;
    EXPECT_THROW(psd_welch(x, bad), SizingError);
}

TEST(Welch, ParsevalForTone) {
    // Constant-envelope tone: every windowed segment carries exactly |A|^2 sum w^2.
    const cplx a{0.3, -0.4};
    const auto x = tone(10000, 61.44e6, 3.1e6, a);
    const auto p = psd_welch(x);
    EXPECT_NEAR(p.total_power() / mean_power(x.samples), 1.0, 1e-9);
    // Peak bin sits at the tone frequency.
    const auto it = std::max_element(p.density.begin(), p.density.end());
    EXPECT_NEAR(p.freqs_hz[std::size_t(it - p.density.begin())], 3.1e6, p.bin_width_hz);
}

TEST(Welch, ParsevalForOfdm) {
    // Exact Parseval holds for the transform itself...
    const auto f = generate_ofdm(OfdmConfig{});
    const auto spec = fft::forward(f.signal.samples);
    double et = 0.0, ef = 0.0;
    for (auto v : f.signal.samples) et += std::norm(v);
    for (auto v : spec) ef += std::norm(v);
    EXPECT_NEAR(ef / double(spec.size()) / et, 1.0, 1e-12);
    // ...while the windowed, averaged estimate is statistically consistent.
    EXPECT_NEAR(psd_welch(f.signal).total_power() / mean_power(f.signal.samples), 1.0, 0.02);
}

TEST(Welch, MatchesNaivePeriodogram) {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> g;
    IqSignal x{std::vector<cplx>(64), 8.0};
    for (auto& v : x.samples) v = {g(rng), g(rng)};
    WelchConfig cfg{16, 0.5, false};
    const auto p = psd_welch(x, cfg);
    const auto w = hann(16);
    double w2 = 0.0;
    for (double v : w) w2 += v * v;
    std::vector<double> acc(16, 0.0);
    int nseg = 0;
    for (std::size_t s = 0; s + 16 <= 64; s += 8, ++nseg) {
        std::vector<cplx> seg(16);
        for (std::size_t i = 0; i < 16; ++i) seg[i] = x.samples[s + i] * w[i];
        const auto X = naive_dft(seg);
        for (std::size_t k = 0; k < 16; ++k) acc[k] += std::norm(X[k]);
    }
    EXPECT_EQ(nseg, 7);
    for (std::size_t k = 0; k < 16; ++k) {
        const double expect = acc[(k + 8) % 16] / (nseg * 8.0 * w2);
        EXPECT_NEAR(p.density[k], expect, 1e-12 * expect);
    }
}

TEST(Aclr, IdealOfdmIsClean) {
    const auto f = generate_ofdm(OfdmConfig{});
    EXPECT_LT(aclr_db(f.signal), -50.0);
}

TEST(Aclr, ScaleInvariant) {
    const auto f = generate_ofdm(OfdmConfig{});
    IqSignal y = f.signal;
    for (auto& v : y.samples) v = v * v * std::abs(v); // some distortion first
    IqSignal z = y;
    for (auto& v : z.samples) v *= cplx{-2.3, 0.7};
    EXPECT_NEAR(aclr_db(y), aclr_db(z), 1e-9);
}

TEST(Aclr, Errors) {
    IqSignal zero{std::vector<cplx>(4096), 61.44e6};
    EXPECT_THROW(aclr_db(zero), MetricError);
    IqSignal slow{std::vector<cplx>(4096, 1.0), 5e6};
    EXPECT_THROW(aclr_db(slow), ConfigError);
}

TEST(Evm, BasicValues) {
    SymbolGrid s(2, 3);
    for (std::size_t i = 0; i < s.data.size(); ++i) s.data[i] = {double(i) - 2.5, 0.5 * double(i)};
    EXPECT_DOUBLE_EQ(evm_percent(s, s), 0.0);
    SymbolGrid g = s;
    for (auto& v : g.data) v *= 1.01;
    EXPECT_NEAR(evm_percent(s, g, false), 1.0, 1e-12);
    EXPECT_NEAR(evm_percent(s, g, true), 0.0, 1e-12);
    EXPECT_THROW(evm_percent(s, SymbolGrid(3, 2)), FramingError);
    EXPECT_THROW(evm_percent(SymbolGrid(2, 3), s), MetricError);
}

TEST(Evm, GainInvariance) {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> g;
    SymbolGrid s(4, 8), shat(4, 8);
    for (std::size_t i = 0; i < s.data.size(); ++i) {
        s.data[i] = {g(rng), g(rng)};
        shat.data[i] = s.data[i] + 0.05 * cplx{g(rng), g(rng)};
    }
    SymbolGrid rot = shat;
    const cplx a = std::polar(1.7, 0.9);
    for (auto& v : rot.data) v *= a;
    EXPECT_NEAR(evm_percent(s, shat), evm_percent(s, rot), 1e-10);
    EXPECT_GT(evm_percent(s, rot, false), 50.0);
}

TEST(Evm, CubicDistortionMatchesDftOracle) {
    const auto cfg = small_config();
    const auto f = generate_ofdm(cfg);
    IqSignal y = f.signal;
    const cplx a3{-0.2, -0.3};
    for (auto& v : y.samples) v = v + a3 * v * std::norm(v);
    const double got = evm_percent(f.grid, demodulate_ofdm(y, cfg, f.amplitude_scale));

    // Oracle: naive DFT of each symbol body, bins divided by the modulation scale,
    // least-squares gain removed by hand.
    const std::size_t n = cfg.dft_size();
    std::vector<cplx> shat, s;
    for (std::size_t sym = 0; sym < cfg.n_symbols; ++sym) {
        const auto off = sym * cfg.symbol_length() + cfg.taper();
        const auto X = naive_dft(std::span<const cplx>(y.samples).subspan(off, n));
        for (std::size_t k = 0; k < cfg.n_subcarriers; ++k) {
            shat.push_back(X[cfg.bin_of(k)]);
            s.push_back(f.grid.at(sym, k));
        }
    }
    cplx num{};
    double den = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        num += std::conj(s[i]) * shat[i];
        den += std::norm(s[i]);
    }
    const cplx gain = num / den;
    double err = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) err += std::norm(shat[i] / gain - s[i]);
    const double expect = 100.0 * std::sqrt(err / den);
    EXPECT_GT(expect, 0.5);
    EXPECT_NEAR(got, expect, 1e-9 * expect);
}

TEST(Psd, CsvFormat) {
    const auto p = psd_welch(tone(2048, 1e6, 1e5, 1.0));
    const auto csv = psd_csv(p);
    EXPECT_EQ(csv.rfind("freq_hz,power_db\n", 0), 0u);
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1025);
}
