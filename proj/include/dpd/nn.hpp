#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dpd/errors.hpp"
#include "dpd/signal.hpp"
#include "dpd/text.hpp"

namespace dpd {

/// Dense ReLU network mapping [Re; Im] to [Re; Im] with a linear bypass:
///   h_0 = x, h_i = relu(W_i h_{i-1} + b_i) for i = 1..K,
///   z = W_{K+1} h_K + b_{K+1} + W_lin x.
/// Layer i is stored at index i-1.
struct DenseNet {
    int hidden_layers = 1; // K
    int width = 1;         // N
    std::vector<Eigen::MatrixXd> weights;
    std::vector<Eigen::VectorXd> biases;
    Eigen::Matrix2d bypass = Eigen::Matrix2d::Identity();
    bool train_bypass = false;

    DenseNet() : DenseNet(1, 1) {}
    DenseNet(int k, int n) : hidden_layers(k), width(n) {
        if (k < 1 || n < 1) throw ConfigError("DenseNet: K and N must be >= 1");
        for (int i = 0; i <= k; ++i) {
            const int rows = i == k ? 2 : n;
            const int cols = i == 0 ? 2 : n;
            weights.push_back(Eigen::MatrixXd::Zero(rows, cols));
            biases.push_back(Eigen::VectorXd::Zero(rows));
        }
    }

    int n_layers() const { return hidden_layers + 1; }

    void validate() const {
        if (static_cast<int>(weights.size()) != n_layers() || static_cast<int>(biases.size()) != n_layers())
            throw ConfigError("DenseNet: layer count does not match K");
        for (int i = 0; i < n_layers(); ++i) {
            const Eigen::Index rows = i == hidden_layers ? 2 : width;
            const Eigen::Index cols = i == 0 ? 2 : width;
            if (weights[i].rows() != rows || weights[i].cols() != cols || biases[i].size() != rows)
                throw ConfigError("DenseNet: layer " + std::to_string(i + 1) + " has inconsistent dimensions");
        }
    }

    /// Real trainable count. The bypass counts only when it is trainable.
    std::size_t n_trainable() const {
        std::size_t n = train_bypass ? 4 : 0;
        for (int i = 0; i < n_layers(); ++i) n += static_cast<std::size_t>(weights[i].size() + biases[i].size());
        return n;
    }

    bool operator==(const DenseNet& o) const {
        if (hidden_layers != o.hidden_layers || width != o.width || train_bypass != o.train_bypass) return false;
        if (bypass != o.bypass) return false;
        for (int i = 0; i < n_layers(); ++i)
            if (weights[i] != o.weights[i] || biases[i] != o.biases[i]) return false;
        return true;
    }
};

/// All trainables zero, bypass identity: the identity map.
inline DenseNet zero_net(int k, int n) { return DenseNet(k, n); }

/// Glorot-uniform weights, zero biases, identity bypass.
inline DenseNet glorot_net(int k, int n, std::uint64_t seed) {
    DenseNet net(k, n);
    std::mt19937_64 rng(seed);
    for (auto& w : net.weights) {
        const double limit = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
        std::uniform_real_distribution<double> u(-limit, limit);
        for (Eigen::Index r = 0; r < w.rows(); ++r)
            for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = u(rng);
    }
    return net;
}

inline std::size_t nn_count_mults(int k, int n) {
    if (k < 1 || n < 1) throw ConfigError("nn_count_mults: K and N must be >= 1");
    const auto kk = static_cast<std::size_t>(k), nn = static_cast<std::size_t>(n);
    return 4 * nn + (kk - 1) * nn * nn;
}

inline std::size_t nn_count_params(int k, int n) {
    if (k < 1 || n < 1) throw ConfigError("nn_count_params: K and N must be >= 1");
    const auto kk = static_cast<std::size_t>(k), nn = static_cast<std::size_t>(n);
    return 2 * nn + nn + (kk - 1) * (nn * nn + nn) + 2 * nn + 2;
}

// ---------------------------------------------------------------------------
// Matrix-level passes. Samples are columns of a 2 x B matrix.

inline Eigen::MatrixXd to_real_matrix(std::span<const cplx> x) {
    Eigen::MatrixXd m(2, static_cast<Eigen::Index>(x.size()));
    for (std::size_t i = 0; i < x.size(); ++i) {
        m(0, static_cast<Eigen::Index>(i)) = x[i].real();
        m(1, static_cast<Eigen::Index>(i)) = x[i].imag();
    }
    return m;
}

inline std::vector<cplx> to_complex(const Eigen::MatrixXd& m) {
    std::vector<cplx> out(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index i = 0; i < m.cols(); ++i) out[static_cast<std::size_t>(i)] = {m(0, i), m(1, i)};
    return out;
}

struct ForwardCache {
    Eigen::MatrixXd input;
    std::vector<Eigen::MatrixXd> pre;    ///< W_i h_{i-1} + b_i for hidden layers
    std::vector<Eigen::MatrixXd> hidden; ///< relu(pre)
    Eigen::MatrixXd output;
};

inline ForwardCache forward_pass(const DenseNet& net, const Eigen::MatrixXd& x) {
    ForwardCache c;
    c.input = x;
    const Eigen::MatrixXd* h = &c.input;
    for (int i = 0; i < net.hidden_layers; ++i) {
        c.pre.push_back((net.weights[i] * *h).colwise() + net.biases[i]);
        c.hidden.push_back(c.pre.back().cwiseMax(0.0));
        h = &c.hidden.back();
    }
    const int last = net.hidden_layers;
    c.output = (net.weights[last] * *h).colwise() + net.biases[last];
    c.output.noalias() += net.bypass * x;
    return c;
}

inline Eigen::MatrixXd forward_matrix(const DenseNet& net, const Eigen::MatrixXd& x) {
    Eigen::MatrixXd h = x;
    for (int i = 0; i < net.hidden_layers; ++i) h = ((net.weights[i] * h).colwise() + net.biases[i]).cwiseMax(0.0);
    Eigen::MatrixXd z = (net.weights[net.hidden_layers] * h).colwise() + net.biases[net.hidden_layers];
    z.noalias() += net.bypass * x;
    return z;
}

/// Gradients shaped like the trainables of a DenseNet.
struct NnGradients {
    std::vector<Eigen::MatrixXd> weights;
    std::vector<Eigen::VectorXd> biases;
    Eigen::Matrix2d bypass = Eigen::Matrix2d::Zero(); ///< zero unless the bypass is trainable
    double loss = 0.0;

    static NnGradients zeros_like(const DenseNet& net) {
        NnGradients g;
        for (int i = 0; i < net.n_layers(); ++i) {
            g.weights.push_back(Eigen::MatrixXd::Zero(net.weights[i].rows(), net.weights[i].cols()));
            g.biases.push_back(Eigen::VectorXd::Zero(net.biases[i].size()));
        }
        return g;
    }

    double max_abs() const {
        double m = bypass.cwiseAbs().maxCoeff();
        for (const auto& w : weights) m = std::max(m, w.cwiseAbs().maxCoeff());
        for (const auto& b : biases) m = std::max(m, b.cwiseAbs().maxCoeff());
        return m;
    }
};

/// Backpropagate dL/dz through a cached forward pass. Returns dL/dx.
/// The ReLU derivative is taken as 0 at exactly 0.
inline Eigen::MatrixXd backward_pass(const DenseNet& net, const ForwardCache& c, const Eigen::MatrixXd& dz,
                                     NnGradients* grads) {
    const int last = net.hidden_layers;
    const Eigen::MatrixXd& h_last = last > 0 ? c.hidden[last - 1] : c.input;
    Eigen::MatrixXd dx = net.bypass.transpose() * dz;
    if (grads) {
        grads->weights[last] = dz * h_last.transpose();
        grads->biases[last] = dz.rowwise().sum();
        if (net.train_bypass) grads->bypass = dz * c.input.transpose();
    }
    Eigen::MatrixXd delta = net.weights[last].transpose() * dz;
    for (int i = last - 1; i >= 0; --i) {
        delta = delta.cwiseProduct((c.pre[i].array() > 0.0).cast<double>().matrix());
        const Eigen::MatrixXd& h_prev = i > 0 ? c.hidden[i - 1] : c.input;
        if (grads) {
            grads->weights[i] = delta * h_prev.transpose();
            grads->biases[i] = delta.rowwise().sum();
        }
        if (i > 0) delta = net.weights[i].transpose() * delta;
        else dx.noalias() += net.weights[0].transpose() * delta;
    }
    return dx;
}

/// Mean squared error over samples and both real outputs, with its gradient.
inline double mse_and_grad(const Eigen::MatrixXd& z, const Eigen::MatrixXd& target, Eigen::MatrixXd* dz) {
    const Eigen::MatrixXd e = z - target;
    const double count = static_cast<double>(e.size());
    if (dz) *dz = e * (2.0 / count);
    return e.squaredNorm() / count;
}

inline double mse(const Eigen::MatrixXd& z, const Eigen::MatrixXd& target) { return mse_and_grad(z, target, nullptr); }

// ---------------------------------------------------------------------------
// Signal-level operations.

inline IqSignal nn_forward(const DenseNet& net, const IqSignal& x) {
    net.validate();
    return {to_complex(forward_matrix(net, to_real_matrix(x.view()))), x.sample_rate_hz};
}

/// Gradients of MSE(net(x), target).
inline NnGradients nn_backward(const DenseNet& net, const Eigen::MatrixXd& x, const Eigen::MatrixXd& target) {
    if (x.cols() != target.cols()) throw AlignmentError("nn_backward: input and target lengths differ");
    const auto cache = forward_pass(net, x);
    Eigen::MatrixXd dz;
    NnGradients g = NnGradients::zeros_like(net);
    g.loss = mse_and_grad(cache.output, target, &dz);
    backward_pass(net, cache, dz, &g);
    return g;
}

inline NnGradients nn_backward(const DenseNet& net, const IqSignal& x, const IqSignal& target) {
    if (x.size() != target.size()) throw AlignmentError("nn_backward: input and target lengths differ");
    net.validate();
    return nn_backward(net, to_real_matrix(x.view()), to_real_matrix(target.view()));
}

/// Gradients of MSE(pa_model(dpd(x)), target) with respect to dpd only.
inline NnGradients nn_backward_through_frozen(const DenseNet& dpd, const DenseNet& pa_model, const Eigen::MatrixXd& x,
                                              const Eigen::MatrixXd& target) {
    if (x.cols() != target.cols()) throw AlignmentError("nn_backward_through_frozen: input and target lengths differ");
    const auto dpd_cache = forward_pass(dpd, x);
    const auto pa_cache = forward_pass(pa_model, dpd_cache.output);
    Eigen::MatrixXd dz;
    NnGradients g = NnGradients::zeros_like(dpd);
    g.loss = mse_and_grad(pa_cache.output, target, &dz);
    const Eigen::MatrixXd du = backward_pass(pa_model, pa_cache, dz, nullptr);
    backward_pass(dpd, dpd_cache, du, &g);
    return g;
}

/// The linearization objective: the cascade should reproduce x.
inline NnGradients nn_backward_through_frozen(const DenseNet& dpd, const DenseNet& pa_model, const IqSignal& x) {
    dpd.validate();
    pa_model.validate();
    const auto xm = to_real_matrix(x.view());
    return nn_backward_through_frozen(dpd, pa_model, xm, xm);
}

// ---------------------------------------------------------------------------
// Flattened parameter view, in layer order: W_i (column-major), b_i, then the
// bypass if it is trainable.

inline Eigen::VectorXd flatten(const DenseNet& net) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(net.n_trainable()));
    Eigen::Index k = 0;
    for (int i = 0; i < net.n_layers(); ++i) {
        v.segment(k, net.weights[i].size()) = net.weights[i].reshaped();
        k += net.weights[i].size();
        v.segment(k, net.biases[i].size()) = net.biases[i];
        k += net.biases[i].size();
    }
    if (net.train_bypass) v.segment(k, 4) = net.bypass.reshaped();
    return v;
}

inline Eigen::VectorXd flatten(const NnGradients& g, bool with_bypass) {
    Eigen::Index total = with_bypass ? 4 : 0;
    for (std::size_t i = 0; i < g.weights.size(); ++i) total += g.weights[i].size() + g.biases[i].size();
    Eigen::VectorXd v(total);
    Eigen::Index k = 0;
    for (std::size_t i = 0; i < g.weights.size(); ++i) {
        v.segment(k, g.weights[i].size()) = g.weights[i].reshaped();
        k += g.weights[i].size();
        v.segment(k, g.biases[i].size()) = g.biases[i];
        k += g.biases[i].size();
    }
    if (with_bypass) v.segment(k, 4) = g.bypass.reshaped();
    return v;
}

inline void unflatten(DenseNet& net, const Eigen::VectorXd& v) {
    if (v.size() != static_cast<Eigen::Index>(net.n_trainable())) throw ConfigError("unflatten: length mismatch");
    Eigen::Index k = 0;
    for (int i = 0; i < net.n_layers(); ++i) {
        net.weights[i].reshaped() = v.segment(k, net.weights[i].size());
        k += net.weights[i].size();
        net.biases[i] = v.segment(k, net.biases[i].size());
        k += net.biases[i].size();
    }
    if (net.train_bypass) net.bypass.reshaped() = v.segment(k, 4);
}

// ---------------------------------------------------------------------------
// Net file: `K,N` header; `layer,row,col,value` weight rows and
// `layer,row,value` bias rows (layers 1..K+1); `bypass,row,col,value` rows and
// a `bypass_trainable,0|1` line.

inline std::string net_text(const DenseNet& net) {
    std::ostringstream os;
    os << net.hidden_layers << ',' << net.width << '\n';
    for (int i = 0; i < net.n_layers(); ++i) {
        const auto& w = net.weights[i];
        for (Eigen::Index r = 0; r < w.rows(); ++r)
            for (Eigen::Index c = 0; c < w.cols(); ++c)
                os << i + 1 << ',' << r << ',' << c << ',' << text::format_double(w(r, c)) << '\n';
        for (Eigen::Index r = 0; r < net.biases[i].size(); ++r)
            os << i + 1 << ',' << r << ',' << text::format_double(net.biases[i](r)) << '\n';
    }
    for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 2; ++c) os << "bypass," << r << ',' << c << ',' << text::format_double(net.bypass(r, c)) << '\n';
    os << "bypass_trainable," << (net.train_bypass ? 1 : 0) << '\n';
    return os.str();
}

inline DenseNet parse_net_text(const std::vector<std::string>& lines) {
    std::size_t i = 0;
    while (i < lines.size() && text::trim(lines[i]).empty()) ++i;
    if (i == lines.size()) throw ParseError("net file: empty");
    const auto head = text::split(lines[i++], ',');
    if (head.size() != 2) throw ParseError("net file: header must be K,N");
    DenseNet net(text::parse_int<int>(head[0]), text::parse_int<int>(head[1]));
    auto bad = [](const std::string& l) { return ParseError("net file: bad row '" + l + "'"); };
    for (; i < lines.size(); ++i) {
        if (text::trim(lines[i]).empty()) continue;
        const auto f = text::split(lines[i], ',');
        if (f[0] == "bypass") {
            if (f.size() != 4) throw bad(lines[i]);
            const auto r = text::parse_int<int>(f[1]), c = text::parse_int<int>(f[2]);
            if (r < 0 || r > 1 || c < 0 || c > 1) throw bad(lines[i]);
            net.bypass(r, c) = text::parse_double(f[3]);
        } else if (f[0] == "bypass_trainable") {
            if (f.size() != 2) throw bad(lines[i]);
            net.train_bypass = text::parse_int<int>(f[1]) != 0;
        } else {
            const int layer = text::parse_int<int>(f[0]) - 1;
            if (layer < 0 || layer >= net.n_layers()) throw bad(lines[i]);
            const auto r = text::parse_int<Eigen::Index>(f[1]);
            if (f.size() == 4) {
                const auto c = text::parse_int<Eigen::Index>(f[2]);
                auto& w = net.weights[layer];
                if (r < 0 || r >= w.rows() || c < 0 || c >= w.cols()) throw bad(lines[i]);
                w(r, c) = text::parse_double(f[3]);
            } else if (f.size() == 3) {
                auto& b = net.biases[layer];
                if (r < 0 || r >= b.size()) throw bad(lines[i]);
                b(r) = text::parse_double(f[2]);
            } else {
                throw bad(lines[i]);
            }
        }
    }
    return net;
}

inline void save_net(const std::filesystem::path& path, const DenseNet& net) { text::write_file_atomic(path, net_text(net)); }

inline DenseNet load_net(const std::filesystem::path& path) { return parse_net_text(text::read_lines(path)); }

} // namespace dpd
