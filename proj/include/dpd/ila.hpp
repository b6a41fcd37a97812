#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "dpd/errors.hpp"
#include "dpd/memory_poly.hpp"
#include "dpd/pa_sim.hpp"
#include "dpd/signal.hpp"

namespace dpd {

/// Sends a signal through the device and returns what came out. The second
/// argument is a call counter so noisy devices stay reproducible.
using Transmitter = std::function<IqSignal(const IqSignal&, std::uint64_t)>;

inline Transmitter transmitter_for(const SimulatedPa& pa) {
    return [pa](const IqSignal& x, std::uint64_t call) { return pa_apply(pa, x, call); };
}

struct LsSolution {
    Eigen::VectorXcd coefficients;
    double relative_residual = 0.0; ///< ||t - B c|| / ||t||
    double condition_estimate = 0.0;
};

/// Tikhonov-regularized complex least squares, min ||B c - t||^2 + lambda ||c||^2,
/// solved by Householder QR of the stacked matrix [B; sqrt(lambda) I].
/// `relative_lambda` scales with the mean column energy of B.
inline LsSolution solve_regularized_ls(const Eigen::MatrixXcd& basis, const Eigen::VectorXcd& target,
                                       double relative_lambda, double max_condition = 1e12) {
    const Eigen::Index n = basis.rows(), k = basis.cols();
    if (n < k) throw SizingError("least squares: fewer rows than unknowns");
    const double mean_energy = basis.colwise().squaredNorm().sum() / static_cast<double>(std::max<Eigen::Index>(k, 1));
    const double lambda = relative_lambda * mean_energy;

    Eigen::MatrixXcd a(n + k, k);
    a.topRows(n) = basis;
    a.bottomRows(k) = Eigen::MatrixXcd::Identity(k, k) * std::sqrt(lambda);
    Eigen::VectorXcd rhs = Eigen::VectorXcd::Zero(n + k);
    rhs.head(n) = target;

    Eigen::HouseholderQR<Eigen::MatrixXcd> qr(a);
    const Eigen::MatrixXcd r = qr.matrixQR().topRows(k).template triangularView<Eigen::Upper>();
    const Eigen::JacobiSVD<Eigen::MatrixXcd> svd(r);
    const auto& sv = svd.singularValues();
    const double smin = sv.size() ? sv(sv.size() - 1) : 0.0;
    const double cond = smin > 0.0 ? sv(0) / smin : std::numeric_limits<double>::infinity();
    if (!(cond <= max_condition)) throw ConditioningError("least squares: system is too poorly conditioned", cond);

    LsSolution s;
    s.coefficients = qr.solve(rhs);
    const double tn = target.norm();
    s.relative_residual = tn > 0.0 ? (target - basis * s.coefficients).norm() / tn : 0.0;
    s.condition_estimate = cond;
    return s;
}

struct IlaConfig {
    MemoryPolyShape shape{7, 1};
    int n_iterations = 2;
    double regularization = 1e-8; ///< relative to mean basis column energy

    void validate() const {
        shape.validate();
        if (n_iterations < 1) throw ConfigError("IlaConfig: need at least one iteration");
        if (!(regularization >= 0.0)) throw ConfigError("IlaConfig: regularization must be >= 0");
    }
};

struct IlaResult {
    MemoryPolyModel model;
    std::vector<double> residuals; ///< relative LS residual per iteration
    std::vector<double> condition_estimates;
    cplx gain{1.0, 0.0};
};

/// Indirect learning. Iteration i transmits xhat_i, forms y_i / G, fits the
/// postinverse basis(y_i / G) -> xhat_i, copies it in front, and predistorts x
/// again. G is estimated once from the first (undistorted) transmission and
/// held for the remaining iterations so the linear gain target stays fixed.
inline IlaResult fit_ila(const Transmitter& tx, const IlaConfig& cfg, const IqSignal& x, std::uint64_t first_call = 0) {
    cfg.validate();
    require_nonempty(x, "fit_ila");
    const std::size_t n_real = 2 * cfg.shape.n_coefficients();
    if (x.size() < 10 * n_real)
        throw SizingError("fit_ila: training signal must hold at least 10x the real parameter count");

    IlaResult out;
    IqSignal xhat = x;
    std::optional<cplx> gain;
    for (int it = 0; it < cfg.n_iterations; ++it) {
        IqSignal y = tx(xhat, first_call + static_cast<std::uint64_t>(it));
        if (y.size() != xhat.size()) throw AlignmentError("fit_ila: transmitter changed the signal length");
        if (!gain) gain = estimate_gain(xhat, y);
        for (auto& v : y.samples) v /= *gain;
        const auto basis = build_basis(y, cfg.shape);
        const Eigen::Map<const Eigen::VectorXcd> t(xhat.samples.data(), static_cast<Eigen::Index>(xhat.size()));
        const auto sol = solve_regularized_ls(basis.columns, t, cfg.regularization);
        out.model = MemoryPolyModel::from_coefficients(cfg.shape, sol.coefficients);
        out.residuals.push_back(sol.relative_residual);
        out.condition_estimates.push_back(sol.condition_estimate);
        xhat = poly_predistort(out.model, x);
    }
    out.gain = *gain;
    return out;
}

inline IlaResult fit_ila(const SimulatedPa& pa, const IlaConfig& cfg, const IqSignal& x) {
    return fit_ila(transmitter_for(pa), cfg, x);
}

} // namespace dpd
