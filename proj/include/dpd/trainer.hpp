#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dpd/errors.hpp"
#include "dpd/ila.hpp"
#include "dpd/nn.hpp"
#include "dpd/pa_sim.hpp"
#include "dpd/signal.hpp"
#include "dpd/text.hpp"

namespace dpd {

struct AdamConfig {
    double learning_rate = 1e-2;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    Eigen::VectorXd m;
    Eigen::VectorXd v;
    std::uint64_t step = 0;
};

/// One bias-corrected Adam update, in place.
inline void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grads, AdamState& state, const AdamConfig& cfg) {
    if (grads.size() != params.size()) throw ConfigError("adam_step: gradient and parameter sizes differ");
    if (!grads.allFinite()) throw DivergenceError("adam_step: non-finite gradient");
    if (state.m.size() != params.size()) {
        state.m = Eigen::VectorXd::Zero(params.size());
        state.v = Eigen::VectorXd::Zero(params.size());
    }
    ++state.step;
    state.m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * grads;
    state.v = cfg.beta2 * state.v + (1.0 - cfg.beta2) * grads.cwiseAbs2();
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(cfg.beta1, t);
    const double c2 = 1.0 - std::pow(cfg.beta2, t);
    params.array() -= cfg.learning_rate * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + cfg.eps);
}

struct TrainConfig {
    int outer_iterations = 2;
    std::vector<int> epochs_per_iteration{20, 5};
    double learning_rate = 1e-2;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    std::size_t batch_size = 1024;
    std::size_t train_symbols = 10;
    std::size_t val_symbols = 10;
    std::uint64_t seed = 0;

    AdamConfig adam() const { return {learning_rate, adam_beta1, adam_beta2, adam_eps}; }

    void validate() const {
        if (outer_iterations < 0) throw ConfigError("TrainConfig: outer_iterations must be >= 0");
        if (epochs_per_iteration.size() != static_cast<std::size_t>(outer_iterations))
            throw ConfigError("TrainConfig: epochs_per_iteration must list one entry per outer iteration");
        for (int e : epochs_per_iteration)
            if (e < 1) throw ConfigError("TrainConfig: epoch counts must be positive");
        if (!(learning_rate > 0.0)) throw ConfigError("TrainConfig: learning_rate must be > 0");
        if (!(adam_beta1 > 0.0 && adam_beta1 < 1.0) || !(adam_beta2 > 0.0 && adam_beta2 < 1.0))
            throw ConfigError("TrainConfig: Adam betas must lie in (0,1)");
        if (!(adam_eps > 0.0)) throw ConfigError("TrainConfig: adam_eps must be > 0");
        if (batch_size < 1) throw ConfigError("TrainConfig: batch_size must be >= 1");
        if (train_symbols < 1 || val_symbols < 1) throw ConfigError("TrainConfig: symbol counts must be >= 1");
    }
};

enum class Phase { pa_model, dpd };

inline std::string to_string(Phase p) { return p == Phase::pa_model ? "pa_model" : "dpd"; }

struct EpochRecord {
    int iteration = 0; ///< 1-based outer iteration
    Phase phase = Phase::pa_model;
    int epoch = 0; ///< 1-based within the phase
    double train_mse = 0.0;
    double val_mse = 0.0;

    bool operator==(const EpochRecord&) const = default;
};

struct TrainLog {
    std::vector<EpochRecord> records;
    /// MSE before the first update of each phase, tagged epoch 0. Kept apart
    /// from `records` so the epoch structure matches the schedule.
    std::vector<EpochRecord> initial;

    std::size_t count(Phase p) const {
        return static_cast<std::size_t>(
            std::count_if(records.begin(), records.end(), [p](const EpochRecord& r) { return r.phase == p; }));
    }
    void append(const TrainLog& o) {
        records.insert(records.end(), o.records.begin(), o.records.end());
        initial.insert(initial.end(), o.initial.begin(), o.initial.end());
    }
    bool operator==(const TrainLog&) const = default;
};

inline std::string train_log_csv(const TrainLog& log) {
    std::ostringstream os;
    os << "iteration,phase,epoch,train_mse,val_mse\n";
    for (const auto& r : log.records)
        os << r.iteration << ',' << to_string(r.phase) << ',' << r.epoch << ',' << text::format_double(r.train_mse) << ','
           << text::format_double(r.val_mse) << '\n';
    return os.str();
}

inline void save_train_log(const std::filesystem::path& path, const TrainLog& log) {
    text::write_file_atomic(path, train_log_csv(log));
}

/// Input/target pairs as 2 x n real matrices.
struct TrainPairs {
    Eigen::MatrixXd input;
    Eigen::MatrixXd target;

    static TrainPairs from(const IqSignal& in, const IqSignal& tgt) {
        if (in.size() != tgt.size()) throw AlignmentError("training pairs: lengths differ");
        return {to_real_matrix(in.view()), to_real_matrix(tgt.view())};
    }
};

namespace detail {

/// Fisher-Yates with raw engine draws, so the permutation for a seed does not
/// depend on the standard library's distribution implementations.
inline void shuffle(std::vector<Eigen::Index>& idx, std::mt19937_64& rng) {
    for (std::size_t i = idx.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng() % i);
        std::swap(idx[i - 1], idx[j]);
    }
}

inline Eigen::MatrixXd gather(const Eigen::MatrixXd& m, const std::vector<Eigen::Index>& idx, std::size_t begin,
                              std::size_t end) {
    Eigen::MatrixXd out(m.rows(), static_cast<Eigen::Index>(end - begin));
    for (std::size_t k = begin; k < end; ++k) out.col(static_cast<Eigen::Index>(k - begin)) = m.col(idx[k]);
    return out;
}

/// Shared epoch loop. `grad_fn(net, x, target)` returns gradients for one
/// mini-batch; `eval_fn(net, pairs)` the full-set MSE.
template <typename GradFn, typename EvalFn>
TrainLog run_epochs(DenseNet& net, const TrainPairs& train, const std::optional<TrainPairs>& val, const TrainConfig& cfg,
                    int epochs, int iteration, Phase phase, std::mt19937_64& rng, GradFn grad_fn, EvalFn eval_fn) {
    const auto n = static_cast<std::size_t>(train.input.cols());
    if (n == 0) throw SizingError("training: empty data set");
    TrainLog log;
    AdamState state;
    const auto adam = cfg.adam();
    Eigen::VectorXd params = flatten(net);
    std::vector<Eigen::Index> idx(n);
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    auto record = [&](int epoch) {
        EpochRecord r;
        r.iteration = iteration;
        r.phase = phase;
        r.epoch = epoch;
        r.train_mse = eval_fn(net, train);
        r.val_mse = val ? eval_fn(net, *val) : r.train_mse;
        if (!std::isfinite(r.train_mse) || !std::isfinite(r.val_mse)) throw DivergenceError("training: non-finite MSE");
        return r;
    };
    log.initial.push_back(record(0));
    for (int e = 1; e <= epochs; ++e) {
        shuffle(idx, rng);
        for (std::size_t b = 0; b < n; b += cfg.batch_size) {
            const std::size_t end = std::min(n, b + cfg.batch_size);
            const NnGradients g = grad_fn(net, gather(train.input, idx, b, end), gather(train.target, idx, b, end));
            if (!std::isfinite(g.loss)) throw DivergenceError("training: non-finite loss");
            adam_step(params, flatten(g, net.train_bypass), state, adam);
            unflatten(net, params);
        }
        log.records.push_back(record(e));
    }
    return log;
}

} // namespace detail

/// Fit `net` so that net(input) matches target (PA output already divided by G).
inline TrainLog train_pa_nn(DenseNet& net, const TrainPairs& train, const std::optional<TrainPairs>& val,
                            const TrainConfig& cfg, int epochs, std::mt19937_64& rng, int iteration = 1) {
    net.validate();
    return detail::run_epochs(
        net, train, val, cfg, epochs, iteration, Phase::pa_model, rng,
        [](const DenseNet& n, const Eigen::MatrixXd& x, const Eigen::MatrixXd& t) { return nn_backward(n, x, t); },
        [](const DenseNet& n, const TrainPairs& p) { return mse(forward_matrix(n, p.input), p.target); });
}

/// Train `dpd` so that pa_model(dpd(x)) matches x. pa_model is read only.
inline TrainLog train_dpd_nn(DenseNet& dpd, const DenseNet& pa_model, const Eigen::MatrixXd& x,
                             const std::optional<Eigen::MatrixXd>& x_val, const TrainConfig& cfg, int epochs,
                             std::mt19937_64& rng, int iteration = 1) {
    dpd.validate();
    pa_model.validate();
    const TrainPairs train{x, x};
    std::optional<TrainPairs> val;
    if (x_val) val = TrainPairs{*x_val, *x_val};
    return detail::run_epochs(
        dpd, train, val, cfg, epochs, iteration, Phase::dpd, rng,
        [&pa_model](const DenseNet& n, const Eigen::MatrixXd& in, const Eigen::MatrixXd& t) {
            return nn_backward_through_frozen(n, pa_model, in, t);
        },
        [&pa_model](const DenseNet& n, const TrainPairs& p) {
            return mse(forward_matrix(pa_model, forward_matrix(n, p.input)), p.target);
        });
}

struct NnShapes {
    int dpd_k = 1;
    int dpd_n = 14;
    int pa_k = 1;
    int pa_n = 24;
};

struct TrainResult {
    DenseNet dpd;
    DenseNet pa_model;
    TrainLog log;
    cplx gain{1.0, 0.0};
    std::vector<DenseNet> dpd_per_iteration; ///< snapshot after each outer iteration
};

/// Iterative two-phase training against a transmitter callable. Iteration 1
/// sends the raw signal; later iterations send dpd(x), refit the PA model on
/// the refreshed pairs (warm start), and refine the DPD. G comes from the
/// first transmission and is then held fixed. Zero outer iterations returns
/// the identity network.
inline TrainResult run_full_training(const Transmitter& tx, const IqSignal& x_train, const IqSignal& x_val,
                                     const NnShapes& shapes, const TrainConfig& cfg) {
    cfg.validate();
    require_nonempty(x_train, "run_full_training");
    require_nonempty(x_val, "run_full_training");
    TrainResult res;
    res.dpd = zero_net(shapes.dpd_k, shapes.dpd_n);
    res.pa_model = zero_net(shapes.pa_k, shapes.pa_n);
    if (cfg.outer_iterations == 0) return res;

    std::mt19937_64 rng(cfg.seed);
    res.dpd = glorot_net(shapes.dpd_k, shapes.dpd_n, rng());
    res.pa_model = glorot_net(shapes.pa_k, shapes.pa_n, rng());
    const Eigen::MatrixXd xt = to_real_matrix(x_train.view());
    const Eigen::MatrixXd xv = to_real_matrix(x_val.view());

    std::uint64_t call = 0;
    std::optional<cplx> gain;
    for (int it = 1; it <= cfg.outer_iterations; ++it) {
        const IqSignal ut = it == 1 ? x_train : nn_forward(res.dpd, x_train);
        const IqSignal uv = it == 1 ? x_val : nn_forward(res.dpd, x_val);
        IqSignal yt = tx(ut, call++);
        IqSignal yv = tx(uv, call++);
        if (!gain) gain = estimate_gain(ut, yt);
        for (auto& v : yt.samples) v /= *gain;
        for (auto& v : yv.samples) v /= *gain;

        const int epochs = cfg.epochs_per_iteration[static_cast<std::size_t>(it - 1)];
        res.log.append(train_pa_nn(res.pa_model, TrainPairs::from(ut, yt), TrainPairs::from(uv, yv), cfg, epochs, rng, it));
        res.log.append(train_dpd_nn(res.dpd, res.pa_model, xt, xv, cfg, epochs, rng, it));
        res.dpd_per_iteration.push_back(res.dpd);
    }
    res.gain = *gain;
    return res;
}

/// Frame-level convenience: training frame from `wave.seed`, validation frame
/// from `wave.seed + 1`, symbol counts from cfg.
struct TrainingFrames {
    OfdmFrame train;
    OfdmFrame val;
    OfdmConfig train_cfg;
    OfdmConfig val_cfg;
};

inline TrainingFrames make_training_frames(const OfdmConfig& wave, const TrainConfig& cfg) {
    TrainingFrames f;
    f.train_cfg = wave;
    f.train_cfg.n_symbols = cfg.train_symbols;
    f.val_cfg = wave;
    f.val_cfg.n_symbols = cfg.val_symbols;
    f.val_cfg.seed = wave.seed + 1;
    f.train = generate_ofdm(f.train_cfg);
    f.val = generate_ofdm(f.val_cfg);
    return f;
}

inline TrainResult run_full_training(const SimulatedPa& pa, const OfdmConfig& wave, const NnShapes& shapes,
                                     const TrainConfig& cfg) {
    const auto frames = make_training_frames(wave, cfg);
    return run_full_training(transmitter_for(pa), frames.train.signal, frames.val.signal, shapes, cfg);
}

} // namespace dpd
