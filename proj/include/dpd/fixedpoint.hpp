#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dpd/errors.hpp"
#include "dpd/memory_poly.hpp"
#include "dpd/nn.hpp"
#include "dpd/signal.hpp"

namespace dpd {

enum class Rounding { round_half_even, truncate };
enum class Overflow { saturate, wrap };

struct FixedFormat {
    int total_bits = 16;
    int frac_bits = 15;
    Rounding rounding = Rounding::round_half_even;
    Overflow overflow = Overflow::saturate;

    void validate() const {
        if (!(frac_bits > 0 && frac_bits < total_bits)) throw ConfigError("FixedFormat: need 0 < frac_bits < total_bits");
        if (total_bits > 32) throw ConfigError("FixedFormat: at most 32 bits are supported");
    }
    std::int64_t max_code() const { return (std::int64_t{1} << (total_bits - 1)) - 1; }
    std::int64_t min_code() const { return -(std::int64_t{1} << (total_bits - 1)); }
    double lsb() const { return std::ldexp(1.0, -frac_bits); }
    double max_value() const { return static_cast<double>(max_code()) * lsb(); }
    double min_value() const { return static_cast<double>(min_code()) * lsb(); }

    bool operator==(const FixedFormat&) const = default;
};

/// Same word length with as many fractional bits as still cover max|v|.
inline FixedFormat format_for_range(const FixedFormat& base, double max_abs) {
    FixedFormat f = base;
    int int_bits = 0; // integer bits excluding sign
    while (int_bits < base.total_bits - 2 && std::ldexp(1.0, int_bits) - std::ldexp(1.0, -(base.total_bits - 1 - int_bits)) < max_abs)
        ++int_bits;
    f.frac_bits = base.total_bits - 1 - int_bits;
    return f;
}

/// Saturation events counted while quantizing.
struct FixedStats {
    std::size_t saturation_events = 0;
};

namespace detail {

/// Apply the format's overflow policy to an integer code.
inline std::int64_t constrain(std::int64_t code, const FixedFormat& f, FixedStats* stats) {
    if (code >= f.min_code() && code <= f.max_code()) return code;
    if (f.overflow == Overflow::saturate) {
        if (stats) ++stats->saturation_events;
        return code > f.max_code() ? f.max_code() : f.min_code();
    }
    const std::int64_t span = std::int64_t{1} << f.total_bits;
    std::int64_t w = (code - f.min_code()) % span;
    if (w < 0) w += span;
    return w + f.min_code();
}

/// Round a real already scaled to LSB units.
inline std::int64_t round_scaled(double v, Rounding r) {
    if (r == Rounding::truncate) return static_cast<std::int64_t>(std::floor(v));
    const double fl = std::floor(v);
    const double diff = v - fl;
    auto i = static_cast<std::int64_t>(fl);
    if (diff > 0.5 || (diff == 0.5 && (i & 1) != 0)) ++i;
    return i;
}

/// Shift an integer right by `shift` bits with the format's rounding.
inline std::int64_t rescale(std::int64_t v, int shift, Rounding r) {
    if (shift <= 0) return v << (-shift);
    const std::int64_t floor_part = v >> shift; // arithmetic shift floors
    if (r == Rounding::truncate) return floor_part;
    const std::int64_t rem = v - (floor_part << shift);
    const std::int64_t half = std::int64_t{1} << (shift - 1);
    if (rem > half || (rem == half && (floor_part & 1) != 0)) return floor_part + 1;
    return floor_part;
}

} // namespace detail

inline std::int64_t to_code(double x, const FixedFormat& f, FixedStats* stats = nullptr) {
    const double scaled = std::ldexp(x, f.frac_bits);
    const double lim = std::ldexp(1.0, 62);
    if (!(std::abs(scaled) < lim)) {
        // Far outside any representable range: saturate without overflowing the cast.
        const std::int64_t big = scaled > 0 ? f.max_code() + 1 : f.min_code() - 1;
        return detail::constrain(big, f, stats);
    }
    return detail::constrain(detail::round_scaled(scaled, f.rounding), f, stats);
}

inline double from_code(std::int64_t code, const FixedFormat& f) { return std::ldexp(static_cast<double>(code), -f.frac_bits); }

inline double quantize(double x, const FixedFormat& f, FixedStats* stats = nullptr) {
    return from_code(to_code(x, f, stats), f);
}

inline std::vector<double> quantize(const std::vector<double>& x, const FixedFormat& f, FixedStats* stats = nullptr) {
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = quantize(x[i], f, stats);
    return out;
}

inline IqSignal quantize(const IqSignal& x, const FixedFormat& f, FixedStats* stats = nullptr) {
    IqSignal out{std::vector<cplx>(x.size()), x.sample_rate_hz};
    for (std::size_t i = 0; i < x.size(); ++i)
        out.samples[i] = {quantize(x.samples[i].real(), f, stats), quantize(x.samples[i].imag(), f, stats)};
    return out;
}

struct FixedResult {
    IqSignal output;
    std::size_t saturation_events = 0;
    double mults_per_sample = 0.0;
    /// Polynomial only: per odd order p, fraction of branch outputs that quantized to exactly zero.
    std::map<int, double> underflow_fraction;

    /// Underflow over all nonlinear branches (p >= 3), in percent.
    double underflow_pct() const {
        if (underflow_fraction.empty()) return 0.0;
        double s = 0.0;
        std::size_t n = 0;
        for (const auto& [p, frac] : underflow_fraction)
            if (p >= 3) {
                s += frac;
                ++n;
            }
        return n ? 100.0 * s / static_cast<double>(n) : 0.0;
    }
};

/// Bit-accurate dense-network inference. Inputs, activations and outputs use
/// `fmt`; each weight/bias tensor gets the same word length with the largest
/// fraction that covers it. Products are kept at full width and each neuron is
/// rounded once, at its pre-activation register. ReLU is a sign select; the
/// identity bypass is an add in the output accumulator.
inline FixedResult nn_forward_fixed(const DenseNet& net, const IqSignal& x, const FixedFormat& fmt = {}) {
    fmt.validate();
    net.validate();
    FixedResult res;
    FixedStats stats;
    const int layers = net.n_layers();

    std::vector<FixedFormat> wfmt(static_cast<std::size_t>(layers));
    std::vector<Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>> wq(static_cast<std::size_t>(layers));
    std::vector<Eigen::Matrix<std::int64_t, Eigen::Dynamic, 1>> bq(static_cast<std::size_t>(layers));
    for (int l = 0; l < layers; ++l) {
        const auto& w = net.weights[l];
        const auto& b = net.biases[l];
        const double range = std::max(w.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff());
        wfmt[l] = format_for_range(fmt, range);
        wq[l].resize(w.rows(), w.cols());
        for (Eigen::Index r = 0; r < w.rows(); ++r)
            for (Eigen::Index c = 0; c < w.cols(); ++c) wq[l](r, c) = to_code(w(r, c), wfmt[l], &stats);
        bq[l].resize(b.size());
        for (Eigen::Index r = 0; r < b.size(); ++r) bq[l](r) = to_code(b(r), wfmt[l], &stats);
    }
    const bool identity_bypass = net.bypass == Eigen::Matrix2d::Identity();
    const FixedFormat bpfmt = format_for_range(fmt, net.bypass.cwiseAbs().maxCoeff());
    std::int64_t bp[2][2];
    for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 2; ++c) bp[r][c] = to_code(net.bypass(r, c), bpfmt, &stats);

    std::uint64_t mults = 0;
    res.output = {std::vector<cplx>(x.size()), x.sample_rate_hz};
    std::vector<std::int64_t> h, next;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const std::int64_t in[2] = {to_code(x.samples[i].real(), fmt, &stats), to_code(x.samples[i].imag(), fmt, &stats)};
        h.assign(in, in + 2);
        for (int l = 0; l < layers; ++l) {
            const auto& w = wq[l];
            const int shift = wfmt[l].frac_bits; // product frac = act frac + weight frac
            next.assign(static_cast<std::size_t>(w.rows()), 0);
            for (Eigen::Index r = 0; r < w.rows(); ++r) {
                std::int64_t acc = bq[l](r) << fmt.frac_bits;
                for (Eigen::Index c = 0; c < w.cols(); ++c) {
                    acc += w(r, c) * h[static_cast<std::size_t>(c)];
                    ++mults;
                }
                if (l == layers - 1) {
                    if (identity_bypass) {
                        acc += in[r] << shift;
                    } else {
                        const std::int64_t lin = bp[r][0] * in[0] + bp[r][1] * in[1];
                        acc += detail::rescale(lin, bpfmt.frac_bits - shift, fmt.rounding);
                        mults += 2;
                    }
                }
                std::int64_t v = detail::constrain(detail::rescale(acc, shift, fmt.rounding), fmt, &stats);
                if (l < layers - 1 && v < 0) v = 0;
                next[static_cast<std::size_t>(r)] = v;
            }
            h.swap(next);
        }
        res.output.samples[i] = {from_code(h[0], fmt), from_code(h[1], fmt)};
    }
    res.saturation_events = stats.saturation_events;
    res.mults_per_sample = x.empty() ? 0.0 : static_cast<double>(mults) / static_cast<double>(x.size());
    return res;
}

/// Bit-accurate memory-polynomial inference. Each branch forms |x|^2 and its
/// powers with a rounding after every multiply, scales x, and streams through
/// complex FIR taps (three real multiplies each) into a full-width accumulator
/// rounded once per branch; branch outputs are summed in `fmt`.
inline FixedResult poly_forward_fixed(const MemoryPolyModel& m, const IqSignal& x, const FixedFormat& fmt = {}) {
    fmt.validate();
    const auto& s = m.shape;
    FixedResult res;
    FixedStats stats;
    double cmax = std::max(std::abs(m.dc.real()), std::abs(m.dc.imag()));
    for (const auto& a : m.alpha) cmax = std::max({cmax, std::abs(a.real()), std::abs(a.imag())});
    for (const auto& b : m.beta) cmax = std::max({cmax, std::abs(b.real()), std::abs(b.imag())});
    // the 3-multiply form pre-adds coefficient parts, so leave room for c+d
    const FixedFormat cfmt = format_for_range(fmt, 2.0 * cmax);
    const int cshift = cfmt.frac_bits;

    const std::size_t n = x.size();
    std::vector<std::int64_t> xr(n), xi(n);
    for (std::size_t i = 0; i < n; ++i) {
        xr[i] = to_code(x.samples[i].real(), fmt, &stats);
        xi[i] = to_code(x.samples[i].imag(), fmt, &stats);
    }
    std::uint64_t mults = 0;
    auto mul = [&](std::int64_t a, std::int64_t b) {
        ++mults;
        return detail::constrain(detail::rescale(a * b, fmt.frac_bits, fmt.rounding), fmt, &stats);
    };

    std::vector<std::int64_t> yr(n, 0), yi(n, 0);
    std::vector<std::int64_t> br(n), bi(n);
    auto run_branch = [&](int p, bool conjugate) {
        std::size_t zeros = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const std::int64_t re = xr[i];
            const std::int64_t im = conjugate ? -xi[i] : xi[i];
            if (p == 1) {
                br[i] = re;
                bi[i] = im;
            } else {
                const std::int64_t mag2 = detail::constrain(mul(re, re) + mul(im, im), fmt, &stats);
                std::int64_t scale = mag2;
                for (int k = 3; k < p; k += 2) scale = mul(scale, mag2);
                br[i] = mul(re, scale);
                bi[i] = mul(im, scale);
            }
            if (br[i] == 0 && bi[i] == 0) ++zeros;
        }
        if (!conjugate) res.underflow_fraction[p] = n ? static_cast<double>(zeros) / static_cast<double>(n) : 0.0;
        const std::size_t taps = conjugate ? s.conj_taps : s.main_taps;
        std::vector<std::int64_t> cr(taps), ci(taps);
        for (std::size_t t = 0; t < taps; ++t) {
            const cplx c = conjugate ? m.conj(p, t) : m.main(p, t);
            cr[t] = to_code(c.real(), cfmt, &stats);
            ci[t] = to_code(c.imag(), cfmt, &stats);
        }
        for (std::size_t i = 0; i < n; ++i) {
            std::int64_t acc_re = 0, acc_im = 0;
            for (std::size_t t = 0; t < taps; ++t) {
                const std::int64_t a = i >= t ? br[i - t] : 0;
                const std::int64_t b = i >= t ? bi[i - t] : 0;
                const std::int64_t k1 = cr[t] * (a + b);
                const std::int64_t k2 = a * (ci[t] - cr[t]);
                const std::int64_t k3 = b * (cr[t] + ci[t]);
                mults += 3;
                acc_re += k1 - k3;
                acc_im += k1 + k2;
            }
            yr[i] = detail::constrain(yr[i] + detail::constrain(detail::rescale(acc_re, cshift, fmt.rounding), fmt, &stats), fmt, &stats);
            yi[i] = detail::constrain(yi[i] + detail::constrain(detail::rescale(acc_im, cshift, fmt.rounding), fmt, &stats), fmt, &stats);
        }
    };
    for (int p = 1; p <= s.p_max; p += 2) run_branch(p, false);
    if (s.has_conj())
        for (int q = 1; q <= s.q_max; q += 2) run_branch(q, true);
    if (s.include_dc) {
        const std::int64_t dr = to_code(m.dc.real(), fmt, &stats), di = to_code(m.dc.imag(), fmt, &stats);
        for (std::size_t i = 0; i < n; ++i) {
            yr[i] = detail::constrain(yr[i] + dr, fmt, &stats);
            yi[i] = detail::constrain(yi[i] + di, fmt, &stats);
        }
    }
    res.output = {std::vector<cplx>(n), x.sample_rate_hz};
    for (std::size_t i = 0; i < n; ++i) res.output.samples[i] = {from_code(yr[i], fmt), from_code(yi[i], fmt)};
    res.saturation_events = stats.saturation_events;
    res.mults_per_sample = n ? static_cast<double>(mults) / static_cast<double>(n) : 0.0;
    return res;
}

} // namespace dpd
