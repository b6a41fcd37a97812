#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "dpd/ila.hpp"
#include "dpd/metrics.hpp"

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

MemoryPolyModel random_model(const MemoryPolyShape& s, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g;
    MemoryPolyModel m(s);
    for (auto& a : m.alpha) a = {g(rng), g(rng)};
    for (auto& b : m.beta) b = {g(rng), g(rng)};
    if (s.include_dc) m.dc = {g(rng), g(rng)};
    return m;
}

// Direct evaluation of the double sum, with |x|^(p-1) via std::pow.
cplx direct_sum(const MemoryPolyModel& m, const IqSignal& x, std::size_t n) {
    const auto& s = m.shape;
    cplx y = s.include_dc ? m.dc : cplx{};
    auto at = [&](std::size_t d) { return n >= d ? x.samples[n - d] : cplx{}; };
    for (int p = 1; p <= s.p_max; p += 2)
        for (std::size_t t = 0; t < s.main_taps; ++t) y += m.main(p, t) * at(t) * std::pow(std::abs(at(t)), p - 1);
    if (s.has_conj())
        for (int q = 1; q <= s.q_max; q += 2)
            for (std::size_t l = 0; l < s.conj_taps; ++l)
                y += m.conj(q, l) * std::conj(at(l)) * std::pow(std::abs(at(l)), q - 1);
    return y;
}

} // namespace

TEST(Shape, CountsAndValidation) {
    MemoryPolyShape s{7, 2, 3, 1, true};
    EXPECT_EQ(s.n_main(), 8u);
    EXPECT_EQ(s.n_conj(), 2u);
    EXPECT_EQ(s.n_coefficients(), 11u);
    EXPECT_THROW((MemoryPolyShape{4, 1}.validate()), ConfigError);
    EXPECT_THROW((MemoryPolyShape{3, 0}.validate()), ConfigError);
    EXPECT_THROW((MemoryPolyShape{3, 1, 2, 1}.validate()), ConfigError);
    EXPECT_THROW((MemoryPolyShape{3, 1, 3, 0}.validate()), ConfigError);
}

TEST(Basis, MatchesBruteForce) {
    const MemoryPolyShape s{5, 3, 3, 2, true};
    const auto x = random_signal(40, 0.4, 1);
    const auto b = build_basis(x, s);
    ASSERT_EQ(b.cols(), Eigen::Index(s.n_coefficients()));
    ASSERT_EQ(b.rows(), 40);
    for (std::size_t n = 0; n < 40; ++n) {
        Eigen::Index col = 0;
        for (int p = 1; p <= 5; p += 2)
            for (std::size_t t = 0; t < 3; ++t, ++col) {
                const cplx v = n >= t ? x.samples[n - t] : cplx{};
                EXPECT_NEAR(std::abs(b.columns(Eigen::Index(n), col) - v * std::pow(std::abs(v), p - 1)), 0.0, 1e-15);
            }
        for (int q = 1; q <= 3; q += 2)
            for (std::size_t l = 0; l < 2; ++l, ++col) {
                const cplx v = n >= l ? x.samples[n - l] : cplx{};
                EXPECT_NEAR(std::abs(b.columns(Eigen::Index(n), col) - std::conj(v) * std::pow(std::abs(v), q - 1)), 0.0,
                            1e-15);
            }
        EXPECT_EQ(b.columns(Eigen::Index(n), col), cplx(1.0, 0.0));
    }
    EXPECT_THROW(build_basis(random_signal(3, 1, 1), s), SizingError);
}

TEST(Predistort, MatchesDirectSummation) {
    for (const MemoryPolyShape s : {MemoryPolyShape{1, 1}, MemoryPolyShape{7, 1}, MemoryPolyShape{11, 2},
                                    MemoryPolyShape{5, 4, 3, 2, true}}) {
        const auto m = random_model(s, 7);
        const auto x = random_signal(200, 0.3, 2);
        const auto y = poly_predistort(m, x);
        for (std::size_t n = 0; n < x.size(); ++n)
            EXPECT_NEAR(std::abs(y.samples[n] - direct_sum(m, x, n)), 0.0, 1e-12 * (1.0 + std::abs(y.samples[n])));
    }
}

TEST(Predistort, IdentityAndLinearity) {
    const MemoryPolyShape s{7, 2};
    const auto x = random_signal(100, 0.3, 3);
    EXPECT_EQ(poly_predistort(MemoryPolyModel::identity(s), x).samples, x.samples);
    // Homogeneous in the coefficients.
    const auto a = random_model(s, 1), b = random_model(s, 2);
    const cplx k{0.7, -1.1};
    const auto combo = MemoryPolyModel::from_coefficients(s, k * a.coefficients() + b.coefficients());
    const auto ya = poly_predistort(a, x), yb = poly_predistort(b, x), yc = poly_predistort(combo, x);
    for (std::size_t i = 0; i < x.size(); ++i)
        EXPECT_NEAR(std::abs(yc.samples[i] - (k * ya.samples[i] + yb.samples[i])), 0.0, 1e-12);
    // Short inputs are handled.
    const IqSignal tiny{{{0.1, 0.2}}, 1.0};
    EXPECT_EQ(poly_predistort(a, tiny).size(), 1u);
}

TEST(Model, TextRoundTrip) {
    const auto m = random_model(MemoryPolyShape{9, 3, 5, 2, true}, 4);
    const auto back = parse_model_text(text::split(model_text(m), '\n'));
    EXPECT_EQ(back.shape, m.shape);
    EXPECT_EQ(back.coefficients(), m.coefficients());
    EXPECT_THROW(parse_model_text({"shape,3,1,0,0,0", "main,5,0,1,0"}), ParseError);
}

TEST(LeastSquares, NormalEquationOracle) {
    const MemoryPolyShape s{7, 2};
    const auto x = random_signal(600, 0.3, 5);
    const auto b = build_basis(x, s).columns;
    const auto t = random_signal(600, 1.0, 6);
    const Eigen::Map<const Eigen::VectorXcd> tv(t.samples.data(), 600);
    const double rel = 1e-3;
    const auto sol = solve_regularized_ls(b, tv, rel);

    const double lambda = rel * b.colwise().squaredNorm().sum() / double(b.cols());
    const Eigen::MatrixXcd gram = b.adjoint() * b + lambda * Eigen::MatrixXcd::Identity(b.cols(), b.cols());
    const Eigen::VectorXcd c = gram.ldlt().solve(b.adjoint() * tv);
    EXPECT_LT((sol.coefficients - c).norm() / c.norm(), 1e-9);
    // Regularized orthogonality: B^H (t - B c) = lambda c
    const Eigen::VectorXcd ortho = b.adjoint() * (tv - b * sol.coefficients) - lambda * sol.coefficients;
    EXPECT_LT(ortho.norm() / (b.adjoint() * tv).norm(), 1e-10);
    EXPECT_NEAR(sol.relative_residual, (tv - b * sol.coefficients).norm() / tv.norm(), 1e-14);
    EXPECT_GT(sol.condition_estimate, 1.0);
}

TEST(LeastSquares, ExactRecoveryAndConditioning) {
    const MemoryPolyShape s{5, 1};
    const auto x = random_signal(300, 0.3, 7);
    const auto m = random_model(s, 8);
    const auto y = poly_predistort(m, x);
    const auto b = build_basis(x, s).columns;
    const Eigen::Map<const Eigen::VectorXcd> tv(y.samples.data(), 300);
    const auto sol = solve_regularized_ls(b, tv, 0.0);
    EXPECT_LT((sol.coefficients - m.coefficients()).norm(), 1e-10);
    EXPECT_LT(sol.relative_residual, 1e-12);

    Eigen::MatrixXcd dup(300, 2);
    dup.col(0) = b.col(0);
    dup.col(1) = b.col(0);
    EXPECT_THROW(solve_regularized_ls(dup, tv, 0.0), ConditioningError);
    EXPECT_NO_THROW(solve_regularized_ls(dup, tv, 1e-6));
    EXPECT_THROW(solve_regularized_ls(b.topRows(2), tv.head(2), 0.0), SizingError);
}

TEST(Ila, InClassPreinverseConvergesNoiseless) {
    MemoryPolyModel d(MemoryPolyShape{5, 1});
    d.main(1, 0) = {1.0, 0.0};
    d.main(3, 0) = {0.1, 0.25};
    d.main(5, 0) = {0.05, -0.05};
    SimulatedPa pa;
    pa.core = InversePolyCore{d};
    OfdmConfig cfg;
    cfg.n_symbols = 2;
    const auto x = generate_ofdm(cfg).signal;
    IlaConfig ic;
    ic.shape = {5, 1};
    ic.n_iterations = 2;
    const auto r = fit_ila(pa, ic, x);
    ASSERT_EQ(r.residuals.size(), 2u);
    for (double v : r.residuals) EXPECT_LT(v, 1e-6);
    // The predistorted chain is linear: pa(dpd(x)) = G x.
    const auto y = pa_apply(pa, poly_predistort(r.model, x));
    double err = 0.0, ref = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        err += std::norm(y.samples[i] - r.gain * x.samples[i]);
        ref += std::norm(x.samples[i]);
    }
    EXPECT_LT(std::sqrt(err / ref), 1e-6);
}

TEST(Ila, SizingAndConfig) {
    SimulatedPa pa;
    IlaConfig ic;
    ic.shape = {13, 4};
    EXPECT_THROW(fit_ila(pa, ic, random_signal(100, 0.3, 1)), SizingError);
    ic.n_iterations = 0;
    EXPECT_THROW(fit_ila(pa, ic, random_signal(2000, 0.3, 1)), ConfigError);
}

TEST(Ila, DefaultPaImprovesAclr) {
    const auto pa = load_pa_profile(source_dir() / "config" / "default_pa.cfg");
    OfdmConfig cfg;
    const auto train = generate_ofdm(cfg);
    cfg.seed = 1;
    const auto val = generate_ofdm(cfg);
    const auto r = fit_ila(pa, IlaConfig{}, train.signal);
    const double before = aclr_db(pa_apply(pa, val.signal, 99));
    const double after = aclr_db(pa_apply(pa, poly_predistort(r.model, val.signal), 99));
    EXPECT_LT(after, before - 5.0);
}
