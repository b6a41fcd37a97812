#include <algorithm>
#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "dpd/trainer.hpp"

using namespace dpd;

namespace {

OfdmConfig small_wave() {
    OfdmConfig c;
    c.n_subcarriers = 120;
    c.oversampling_factor = 4;
    return c;
}

SimulatedPa cubic_pa() {
    MemoryPolyModel m(MemoryPolyShape{3, 1});
    m.main(1, 0) = 1.0;
    m.main(3, 0) = {-0.05, -0.4};
    SimulatedPa pa;
    pa.core = m;
    return pa;
}

} // namespace

TEST(Adam, MatchesHandFormulas) {
    const AdamConfig cfg{0.1, 0.8, 0.95, 1e-6};
    Eigen::VectorXd p(2);
    p << 1.0, -2.0;
    const std::vector<std::array<double, 2>> grads{{0.5, -1.0}, {0.2, 0.3}, {-0.4, 0.0}};
    AdamState st;
    double m[2] = {0, 0}, v[2] = {0, 0}, ref[2] = {1.0, -2.0};
    for (std::size_t t = 1; t <= grads.size(); ++t) {
        Eigen::VectorXd g(2);
        g << grads[t - 1][0], grads[t - 1][1];
        adam_step(p, g, st, cfg);
        for (int i = 0; i < 2; ++i) {
            m[i] = 0.8 * m[i] + 0.2 * grads[t - 1][std::size_t(i)];
            v[i] = 0.95 * v[i] + 0.05 * grads[t - 1][std::size_t(i)] * grads[t - 1][std::size_t(i)];
            const double mh = m[i] / (1 - std::pow(0.8, double(t)));
            const double vh = v[i] / (1 - std::pow(0.95, double(t)));
            ref[i] -= 0.1 * mh / (std::sqrt(vh) + 1e-6);
        }
        EXPECT_NEAR(p(0), ref[0], 1e-15);
        EXPECT_NEAR(p(1), ref[1], 1e-15);
    }
    EXPECT_EQ(st.step, 3u);
    // First step moves each coordinate by about lr, regardless of gradient scale.
    Eigen::VectorXd q = Eigen::VectorXd::Zero(1), g1(1);
    g1 << 1e-3;
    AdamState s2;
    adam_step(q, g1, s2, cfg);
    EXPECT_NEAR(q(0), -0.1, 1e-3);
}

TEST(Adam, RejectsNonFinite) {
    Eigen::VectorXd p = Eigen::VectorXd::Zero(2), g(2);
    g << 1.0, std::nan("");
    AdamState st;
    EXPECT_THROW(adam_step(p, g, st, AdamConfig{}), DivergenceError);
    EXPECT_THROW(adam_step(p, Eigen::VectorXd::Zero(3), st, AdamConfig{}), ConfigError);
}

TEST(TrainConfig, Validation) {
    TrainConfig c;
    EXPECT_NO_THROW(c.validate());
    c.epochs_per_iteration = {20};
    EXPECT_THROW(c.validate(), ConfigError);
    c = TrainConfig{};
    c.learning_rate = 0.0;
    EXPECT_THROW(c.validate(), ConfigError);
    c = TrainConfig{};
    c.outer_iterations = 0;
    c.epochs_per_iteration = {};
    EXPECT_NO_THROW(c.validate());
}

TEST(Shuffle, IsSeededPermutation) {
    std::vector<Eigen::Index> a(100), b(100);
    std::iota(a.begin(), a.end(), 0);
    b = a;
    std::mt19937_64 r1(3), r2(3);
    detail::shuffle(a, r1);
    detail::shuffle(b, r2);
    EXPECT_EQ(a, b);
    auto sorted = a;
    std::sort(sorted.begin(), sorted.end());
    for (Eigen::Index i = 0; i < 100; ++i) EXPECT_EQ(sorted[std::size_t(i)], i);
    EXPECT_FALSE(std::is_sorted(a.begin(), a.end()));
}

TEST(TrainPa, ReducesMseOnMemorylessTarget) {
    const auto frame = generate_ofdm(small_wave());
    const auto y = pa_apply(cubic_pa(), frame.signal);
    auto net = glorot_net(1, 12, 5);
    std::mt19937_64 rng(1);
    TrainConfig cfg;
    cfg.batch_size = 256;
    const auto log = train_pa_nn(net, TrainPairs::from(frame.signal, y), std::nullopt, cfg, 10, rng);
    ASSERT_EQ(log.records.size(), 10u);
    ASSERT_EQ(log.initial.size(), 1u);
    EXPECT_LT(log.records.back().train_mse, log.initial[0].train_mse / 10.0);
    for (const auto& r : log.records) EXPECT_EQ(r.val_mse, r.train_mse);
}

TEST(FullTraining, ScheduleStructure) {
    TrainConfig cfg;
    cfg.epochs_per_iteration = {3, 2};
    cfg.train_symbols = 2;
    cfg.val_symbols = 2;
    const auto res = run_full_training(cubic_pa(), small_wave(), NnShapes{1, 6, 1, 8}, cfg);
    ASSERT_EQ(res.log.records.size(), 10u);
    EXPECT_EQ(res.log.count(Phase::pa_model), 5u);
    EXPECT_EQ(res.log.count(Phase::dpd), 5u);
    const int expect_epochs[] = {1, 2, 3, 1, 2, 3, 1, 2, 1, 2};
    for (std::size_t i = 0; i < 10; ++i) {
        const auto& r = res.log.records[i];
        EXPECT_EQ(r.epoch, expect_epochs[i]);
        EXPECT_EQ(r.iteration, i < 6 ? 1 : 2);
        EXPECT_EQ(r.phase, (i < 3 || (i >= 6 && i < 8)) ? Phase::pa_model : Phase::dpd);
    }
    EXPECT_EQ(res.log.initial.size(), 4u);
    EXPECT_EQ(res.dpd_per_iteration.size(), 2u);
    EXPECT_EQ(res.dpd_per_iteration.back(), res.dpd);
    const auto csv = train_log_csv(res.log);
    EXPECT_EQ(csv.rfind("iteration,phase,epoch,train_mse,val_mse\n1,pa_model,1,", 0), 0u);
}

TEST(FullTraining, ZeroIterationsIsIdentity) {
    TrainConfig cfg;
    cfg.outer_iterations = 0;
    cfg.epochs_per_iteration = {};
    const auto res = run_full_training(cubic_pa(), small_wave(), NnShapes{1, 6, 1, 8}, cfg);
    EXPECT_EQ(res.dpd, zero_net(1, 6));
    EXPECT_TRUE(res.log.records.empty());
}

TEST(FullTraining, DeterministicPerSeed) {
    TrainConfig cfg;
    cfg.epochs_per_iteration = {2, 1};
    cfg.train_symbols = 2;
    cfg.val_symbols = 2;
    cfg.seed = 17;
    auto pa = cubic_pa();
    pa.noise_stddev = 1e-3;
    const auto a = run_full_training(pa, small_wave(), NnShapes{1, 4, 1, 6}, cfg);
    const auto b = run_full_training(pa, small_wave(), NnShapes{1, 4, 1, 6}, cfg);
    EXPECT_EQ(a.dpd, b.dpd);
    EXPECT_EQ(a.pa_model, b.pa_model);
    EXPECT_EQ(a.log, b.log);
    cfg.seed = 18;
    const auto c = run_full_training(pa, small_wave(), NnShapes{1, 4, 1, 6}, cfg);
    EXPECT_FALSE(c.dpd == a.dpd);
}

TEST(FullTraining, LinearizesCubicPa) {
    TrainConfig cfg;
    cfg.train_symbols = 4;
    cfg.val_symbols = 2;
    const auto res = run_full_training(cubic_pa(), small_wave(), NnShapes{1, 10, 1, 12}, cfg);
    const auto& first = res.log.initial[1]; // dpd phase, iteration 1
    ASSERT_EQ(first.phase, Phase::dpd);
    double last = 0.0;
    for (const auto& r : res.log.records)
        if (r.iteration == 1 && r.phase == Phase::dpd) last = r.val_mse;
    EXPECT_LT(last, first.val_mse / 10.0);
}
