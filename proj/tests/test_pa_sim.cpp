#include <cmath>
#include <filesystem>
#include <random>

#include <gtest/gtest.h>

#include "dpd/metrics.hpp"
#include "dpd/pa_sim.hpp"

using namespace dpd;

namespace {

std::filesystem::path source_dir() {
    const char* s = std::getenv("DPD_SOURCE_DIR");
    return s ? std::filesystem::path(s) : std::filesystem::path(".");
}

IqSignal random_signal(std::size_t n, double scale, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g;
    IqSignal x{std::vector<cplx>(n), 1.0};
    for (auto& v : x.samples) v = scale * cplx{g(rng), g(rng)};
    return x;
}

MemoryPolyModel sample_core() {
    MemoryPolyModel m(MemoryPolyShape{5, 2});
    m.main(1, 0) = {1.0, 0.1};
    m.main(1, 1) = {0.05, -0.02};
    m.main(3, 0) = {-0.1, -0.3};
    m.main(3, 1) = {0.01, 0.02};
    m.main(5, 0) = {0.0, -0.1};
    return m;
}

} // namespace

TEST(SoftClip, Shape) {
    const double l = 1.0;
    EXPECT_DOUBLE_EQ(detail::soft_clip_magnitude(0.5, l), 0.5);
    EXPECT_DOUBLE_EQ(detail::soft_clip_magnitude(0.9, l), 0.9);
    EXPECT_NEAR(detail::soft_clip_magnitude(1.05, l), 1.0, 1e-15);
    EXPECT_DOUBLE_EQ(detail::soft_clip_magnitude(3.0, l), 1.0);
    double prev = 0.0;
    for (double r = 0.0; r < 1.3; r += 1e-3) {
        const double v = detail::soft_clip_magnitude(r, l);
        EXPECT_GE(v, prev - 1e-15);
        EXPECT_LE(v, l + 1e-15);
        prev = v;
    }
    // Slope is continuous at the knee and at the limit.
    const double h = 1e-7;
    EXPECT_NEAR((detail::soft_clip_magnitude(0.9 + h, l) - detail::soft_clip_magnitude(0.9, l)) / h, 1.0, 1e-6);
    EXPECT_NEAR((detail::soft_clip_magnitude(1.05, l) - detail::soft_clip_magnitude(1.05 - h, l)) / h, 0.0, 1e-5);
}

TEST(PaApply, IdentityCoreNoiselessPassesThrough) {
    SimulatedPa pa;
    const auto x = random_signal(256, 0.2, 1);
    EXPECT_EQ(pa_apply(pa, x).samples, x.samples);
}

TEST(PaApply, MemoryCoreMatchesDirectSummation) {
    SimulatedPa pa;
    pa.core = sample_core();
    const auto x = random_signal(300, 0.3, 2);
    const auto y = pa_apply(pa, x);
    const auto m = sample_core();
    for (std::size_t n = 0; n < x.size(); ++n) {
        cplx acc{};
        for (int p = 1; p <= 5; p += 2)
            for (std::size_t t = 0; t < 2; ++t) {
                if (n < t) continue;
                const cplx v = x.samples[n - t];
                acc += m.main(p, t) * v * std::pow(std::abs(v), p - 1);
            }
        EXPECT_NEAR(std::abs(y.samples[n] - acc), 0.0, 1e-14);
    }
}

TEST(PaApply, RejectsOverdrive) {
    SimulatedPa pa;
    IqSignal x{{{0.1, 0}, {1.6, 0}}, 1.0};
    EXPECT_THROW(pa_apply(pa, x), InputRangeError);
    x.samples[1] = {1.5, 0};
    EXPECT_NO_THROW(pa_apply(pa, x));
}

TEST(PaApply, SaturationBoundsOutput) {
    SimulatedPa pa;
    pa.saturation_output_limit = 0.7;
    auto x = random_signal(1000, 0.5, 3);
    for (auto& v : x.samples)
        if (std::abs(v) > 1.4) v *= 1.4 / std::abs(v);
    EXPECT_LE(peak_magnitude(pa_apply(pa, x).samples), 0.7 + 1e-15);
}

TEST(PaApply, NoiseIsReproduciblePerCall) {
    SimulatedPa pa;
    pa.noise_stddev = 0.01;
    pa.seed = 9;
    IqSignal zero{std::vector<cplx>(20000), 1.0};
    const auto a = pa_apply(pa, zero, 3), b = pa_apply(pa, zero, 3), c = pa_apply(pa, zero, 4);
    EXPECT_EQ(a.samples, b.samples);
    EXPECT_NE(a.samples, c.samples);
    double s2 = 0.0;
    for (auto v : a.samples) s2 += v.real() * v.real() + v.imag() * v.imag();
    EXPECT_NEAR(std::sqrt(s2 / (2.0 * double(a.size()))), 0.01, 0.0005);
}

TEST(PaApply, InverseCoreInvertsPolynomial) {
    MemoryPolyModel d(MemoryPolyShape{5, 1});
    d.main(1, 0) = {1.0, 0.0};
    d.main(3, 0) = {0.15, 0.2};
    d.main(5, 0) = {0.05, -0.05};
    SimulatedPa pa;
    pa.core = InversePolyCore{d};
    const auto x = random_signal(500, 0.3, 4);
    const auto y = pa_apply(pa, x);
    const auto back = poly_predistort(d, y);
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(std::abs(back.samples[i] - x.samples[i]), 0.0, 1e-13);
}

TEST(PaApply, InverseCoreValidation) {
    MemoryPolyModel d(MemoryPolyShape{3, 2});
    d.main(1, 0) = 1.0;
    SimulatedPa pa;
    pa.core = InversePolyCore{d};
    EXPECT_THROW(pa.validate(), ConfigError);
}

TEST(EstimateGain, NormalEquationOracle) {
    const auto x = random_signal(400, 0.3, 5);
    IqSignal y = x;
    const cplx g{0.8, -0.35};
    for (auto& v : y.samples) v *= g;
    EXPECT_NEAR(std::abs(estimate_gain(x, y) - g), 0.0, 1e-14);

    // Distorted output: the residual is orthogonal to x.
    SimulatedPa pa;
    pa.core = sample_core();
    const auto z = pa_apply(pa, x);
    const cplx ge = estimate_gain(x, z);
    cplx inner{};
    for (std::size_t i = 0; i < x.size(); ++i) inner += std::conj(x.samples[i]) * (z.samples[i] - ge * x.samples[i]);
    EXPECT_LT(std::abs(inner), 1e-12);
    EXPECT_THROW(estimate_gain(IqSignal{std::vector<cplx>(3), 1.0}, IqSignal{std::vector<cplx>(3), 1.0}), EstimateError);
    EXPECT_THROW(estimate_gain(x, IqSignal{std::vector<cplx>(3), 1.0}), AlignmentError);
}

TEST(Profile, RoundTrip) {
    SimulatedPa pa;
    pa.core = sample_core();
    pa.saturation_output_limit = 0.95;
    pa.noise_stddev = 1e-3;
    pa.seed = 42;
    pa.nominal_gain = {2.0, 0.5};
    const auto back = parse_profile(text::split(profile_text(pa), '\n'));
    EXPECT_EQ(std::get<MemoryPolyModel>(back.core).alpha, sample_core().alpha);
    EXPECT_EQ(back.saturation_output_limit, 0.95);
    EXPECT_EQ(back.noise_stddev, 1e-3);
    EXPECT_EQ(back.seed, 42u);
    EXPECT_EQ(back.nominal_gain, cplx(2.0, 0.5));
    const auto x = random_signal(128, 0.3, 6);
    EXPECT_EQ(pa_apply(back, x, 1).samples, pa_apply(pa, x, 1).samples);
}

TEST(Profile, InfiniteLimitRoundTrip) {
    SimulatedPa pa;
    const auto back = parse_profile(text::split(profile_text(pa), '\n'));
    EXPECT_TRUE(std::isinf(back.saturation_output_limit));
}

TEST(Profile, Malformed) {
    EXPECT_THROW(parse_profile({"P: 3", "taps: 1", "5,0,1,0"}), ParseError);
    EXPECT_THROW(parse_profile({"P: 3", "taps: 1", "1,0,1"}), ParseError);
    EXPECT_THROW(parse_profile({"P: 3", "taps: 1", "core: tube", "1,0,1,0"}), ParseError);
}

TEST(DefaultProfile, DegradesSpectrum) {
    const auto pa = load_pa_profile(source_dir() / "config" / "default_pa.cfg");
    OfdmConfig cfg;
    cfg.seed = 1;
    const auto f = generate_ofdm(cfg);
    const auto y = pa_apply(pa, f.signal);
    const double in = aclr_db(f.signal), out = aclr_db(y);
    EXPECT_GE(out - in, 10.0);
    EXPECT_GE(out, -30.0);
    EXPECT_LE(out, -28.0);
}
