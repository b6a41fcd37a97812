#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dpd/memory_poly.hpp"
#include "dpd/nn.hpp"

namespace dpd {

struct ComplexityReport {
    std::size_t n_params_real = 0;
    std::size_t n_mults = 0;
    std::string model_descriptor;

    bool operator==(const ComplexityReport&) const = default;
};

/// Real multiplies to form x|x|^(p-1) for odd p >= 3 with the |x|^2 recursion:
/// 2 for |x|^2, (p-1)/2 - 1 to raise it, 2 to scale the complex sample.
inline std::size_t branch_power_mults(int p) { return p < 3 ? 0 : static_cast<std::size_t>((p + 5) / 2); }

inline std::string poly_descriptor(const MemoryPolyShape& s) {
    std::string d = "poly:P=" + std::to_string(s.p_max) + ",taps=" + std::to_string(s.main_taps);
    if (s.has_conj()) d += ",Q=" + std::to_string(s.q_max) + ",L=" + std::to_string(s.conj_taps);
    if (s.include_dc) d += ",dc";
    return d;
}

inline std::string nn_descriptor(int k, int n) { return "nn:K=" + std::to_string(k) + ",N=" + std::to_string(n); }

/// Headline counts exclude the DC term: it costs no multiply and is left out
/// of the published parameter totals.
inline ComplexityReport poly_count(const MemoryPolyShape& s) {
    s.validate();
    const std::size_t n_coef = s.n_main() + s.n_conj();
    std::size_t mults = 3 * n_coef;
    for (int p = 3; p <= s.p_max; p += 2) mults += branch_power_mults(p);
    if (s.has_conj())
        for (int q = 3; q <= s.q_max; q += 2) mults += branch_power_mults(q);
    return {2 * n_coef, mults, poly_descriptor(s)};
}

inline ComplexityReport nn_count(int k, int n) { return {nn_count_params(k, n), nn_count_mults(k, n), nn_descriptor(k, n)}; }

// ---------------------------------------------------------------------------
// Datapaths written against a generic real type, so the same code runs on
// doubles or on an instrumented type that counts multiplications.

/// Real number that counts every multiplication performed on it.
struct CountingReal {
    double v = 0.0;

    static std::uint64_t& counter() {
        static thread_local std::uint64_t n = 0;
        return n;
    }

    CountingReal() = default;
    CountingReal(double x) : v(x) {} // NOLINT: implicit on purpose

    friend CountingReal operator*(CountingReal a, CountingReal b) {
        ++counter();
        return a.v * b.v;
    }
    friend CountingReal operator+(CountingReal a, CountingReal b) { return a.v + b.v; }
    friend CountingReal operator-(CountingReal a, CountingReal b) { return a.v - b.v; }
    CountingReal& operator+=(CountingReal b) { v += b.v; return *this; }
    friend bool operator>(CountingReal a, CountingReal b) { return a.v > b.v; }
};

template <typename T>
struct CplxOf {
    T re{};
    T im{};
};

/// Complex product with three real multiplies:
/// k1 = c(a+b), k2 = a(d-c), k3 = b(c+d), re = k1 - k3, im = k1 + k2.
template <typename T>
CplxOf<T> mul3(const CplxOf<T>& x, const CplxOf<T>& w) {
    const T k1 = w.re * (x.re + x.im);
    const T k2 = x.re * (w.im - w.re);
    const T k3 = x.im * (w.re + w.im);
    return {k1 - k3, k1 + k2};
}

/// x |x|^(p-1) with the squared-magnitude recursion.
template <typename T>
CplxOf<T> branch_power(const CplxOf<T>& x, int p) {
    if (p == 1) return x;
    const T mag2 = x.re * x.re + x.im * x.im;
    T scale = mag2;
    for (int k = 3; k < p; k += 2) scale = scale * mag2;
    return {x.re * scale, x.im * scale};
}

/// Memory-polynomial datapath: one power unit per branch, complex FIR taps on
/// each branch stream, zero-filled history.
template <typename T>
std::vector<CplxOf<T>> poly_datapath(const MemoryPolyModel& m, const std::vector<CplxOf<T>>& x) {
    const auto& s = m.shape;
    const std::size_t n = x.size();
    std::vector<CplxOf<T>> y(n);
    auto run_branch = [&](int p, bool conjugate) {
        std::vector<CplxOf<T>> stream(n);
        for (std::size_t i = 0; i < n; ++i) {
            CplxOf<T> v = x[i];
            if (conjugate) v.im = T(0.0) - v.im;
            stream[i] = branch_power(v, p);
        }
        const std::size_t taps = conjugate ? s.conj_taps : s.main_taps;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t t = 0; t < taps; ++t) {
                const cplx c = conjugate ? m.conj(p, t) : m.main(p, t);
                const CplxOf<T> in = i >= t ? stream[i - t] : CplxOf<T>{};
                const auto prod = mul3(in, CplxOf<T>{T(c.real()), T(c.imag())});
                y[i].re += prod.re;
                y[i].im += prod.im;
            }
    };
    for (int p = 1; p <= s.p_max; p += 2) run_branch(p, false);
    if (s.has_conj())
        for (int q = 1; q <= s.q_max; q += 2) run_branch(q, true);
    if (s.include_dc)
        for (auto& v : y) {
            v.re += T(m.dc.real());
            v.im += T(m.dc.imag());
        }
    return y;
}

/// Dense-network datapath. The bypass is an adder when it is the identity and
/// a 2x2 multiply otherwise.
template <typename T>
std::vector<CplxOf<T>> nn_datapath(const DenseNet& net, const std::vector<CplxOf<T>>& x) {
    std::vector<CplxOf<T>> y(x.size());
    const bool identity_bypass = net.bypass == Eigen::Matrix2d::Identity();
    for (std::size_t i = 0; i < x.size(); ++i) {
        std::vector<T> h{x[i].re, x[i].im};
        for (int l = 0; l < net.hidden_layers; ++l) {
            const auto& w = net.weights[l];
            std::vector<T> next(static_cast<std::size_t>(w.rows()));
            for (Eigen::Index r = 0; r < w.rows(); ++r) {
                T acc = T(net.biases[l](r));
                for (Eigen::Index c = 0; c < w.cols(); ++c) acc += T(w(r, c)) * h[static_cast<std::size_t>(c)];
                next[static_cast<std::size_t>(r)] = acc > T(0.0) ? acc : T(0.0);
            }
            h = std::move(next);
        }
        const auto& w = net.weights[net.hidden_layers];
        T out[2];
        for (Eigen::Index r = 0; r < 2; ++r) {
            T acc = T(net.biases[net.hidden_layers](r));
            for (Eigen::Index c = 0; c < w.cols(); ++c) acc += T(w(r, c)) * h[static_cast<std::size_t>(c)];
            if (identity_bypass) acc += r == 0 ? x[i].re : x[i].im;
            else acc += T(net.bypass(r, 0)) * x[i].re + T(net.bypass(r, 1)) * x[i].im;
            out[r] = acc;
        }
        y[i] = {out[0], out[1]};
    }
    return y;
}

/// Multiplies per output sample observed by running a datapath on `n` samples.
template <typename Run>
double measured_mults_per_sample(Run run, std::size_t n) {
    CountingReal::counter() = 0;
    run();
    return static_cast<double>(CountingReal::counter()) / static_cast<double>(n);
}

inline std::vector<CplxOf<CountingReal>> counting_signal(const IqSignal& x) {
    std::vector<CplxOf<CountingReal>> v;
    v.reserve(x.size());
    for (const auto& s : x.samples) v.push_back({s.real(), s.imag()});
    return v;
}

inline double instrumented_poly_mults(const MemoryPolyModel& m, const IqSignal& x) {
    const auto in = counting_signal(x);
    return measured_mults_per_sample([&] { (void)poly_datapath(m, in); }, x.size());
}

inline double instrumented_nn_mults(const DenseNet& net, const IqSignal& x) {
    const auto in = counting_signal(x);
    return measured_mults_per_sample([&] { (void)nn_datapath(net, in); }, x.size());
}

/// Points (mults, metric) reduced to the best metric seen at or below each
/// multiply count, sorted by mults. Lower metric is better.
inline std::vector<std::pair<double, double>> lower_envelope(std::vector<std::pair<double, double>> pts) {
    std::sort(pts.begin(), pts.end());
    std::vector<std::pair<double, double>> env;
    for (const auto& p : pts) {
        if (!env.empty() && p.second >= env.back().second) continue;
        env.push_back(p);
    }
    return env;
}

} // namespace dpd
