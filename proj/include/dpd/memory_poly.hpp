#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dpd/errors.hpp"
#include "dpd/signal.hpp"
#include "dpd/text.hpp"

namespace dpd {

/// Shape of a memory polynomial with an optional conjugate branch and DC term.
/// `main_taps` and `conj_taps` count taps (m = 0 .. main_taps-1).
struct MemoryPolyShape {
    int p_max = 1;
    std::size_t main_taps = 1;
    int q_max = 0; ///< 0 disables the conjugate branch
    std::size_t conj_taps = 0;
    bool include_dc = false;

    bool has_conj() const noexcept { return q_max > 0 && conj_taps > 0; }
    std::size_t main_orders() const noexcept { return static_cast<std::size_t>((p_max + 1) / 2); }
    std::size_t conj_orders() const noexcept { return has_conj() ? static_cast<std::size_t>((q_max + 1) / 2) : 0; }
    std::size_t n_main() const noexcept { return main_orders() * main_taps; }
    std::size_t n_conj() const noexcept { return conj_orders() * conj_taps; }
    /// Complex coefficient count including the DC term when enabled.
    std::size_t n_coefficients() const noexcept { return n_main() + n_conj() + (include_dc ? 1 : 0); }
    std::size_t max_taps() const noexcept { return std::max(main_taps, has_conj() ? conj_taps : std::size_t{0}); }

    void validate() const {
        if (p_max < 1 || p_max % 2 == 0) throw ConfigError("MemoryPolyShape: P must be an odd positive integer");
        if (main_taps < 1) throw ConfigError("MemoryPolyShape: at least one main-branch tap is required");
        if (q_max < 0 || (q_max > 0 && q_max % 2 == 0)) throw ConfigError("MemoryPolyShape: Q must be 0 or odd");
        if (q_max > 0 && conj_taps == 0) throw ConfigError("MemoryPolyShape: Q > 0 needs at least one conjugate tap");
    }

    bool operator==(const MemoryPolyShape&) const = default;
};

/// Coefficients of the memory polynomial
///   xhat(n) = sum_p sum_m alpha[p,m] x(n-m)|x(n-m)|^(p-1)
///           + sum_q sum_l beta[q,l] x*(n-l)|x(n-l)|^(q-1) + c
/// with p, q odd. alpha is stored order-major: alpha[(p-1)/2 * main_taps + m].
struct MemoryPolyModel {
    MemoryPolyShape shape;
    std::vector<cplx> alpha;
    std::vector<cplx> beta;
    cplx dc{};

    MemoryPolyModel() : MemoryPolyModel(MemoryPolyShape{}) {}
    explicit MemoryPolyModel(MemoryPolyShape s) : shape(s), alpha(s.n_main()), beta(s.n_conj()) { shape.validate(); }

    cplx& main(int p, std::size_t m) { return alpha[static_cast<std::size_t>((p - 1) / 2) * shape.main_taps + m]; }
    const cplx& main(int p, std::size_t m) const { return alpha[static_cast<std::size_t>((p - 1) / 2) * shape.main_taps + m]; }
    cplx& conj(int q, std::size_t l) { return beta[static_cast<std::size_t>((q - 1) / 2) * shape.conj_taps + l]; }
    const cplx& conj(int q, std::size_t l) const { return beta[static_cast<std::size_t>((q - 1) / 2) * shape.conj_taps + l]; }

    /// Stacked coefficients in canonical basis-column order.
    Eigen::VectorXcd coefficients() const {
        Eigen::VectorXcd c(static_cast<Eigen::Index>(shape.n_coefficients()));
        Eigen::Index i = 0;
        for (const auto& a : alpha) c[i++] = a;
        for (const auto& b : beta) c[i++] = b;
        if (shape.include_dc) c[i++] = dc;
        return c;
    }

    static MemoryPolyModel from_coefficients(const MemoryPolyShape& shape, const Eigen::VectorXcd& c) {
        if (static_cast<std::size_t>(c.size()) != shape.n_coefficients())
            throw ConfigError("MemoryPolyModel: coefficient vector length does not match shape");
        MemoryPolyModel m(shape);
        Eigen::Index i = 0;
        for (auto& a : m.alpha) a = c[i++];
        for (auto& b : m.beta) b = c[i++];
        if (shape.include_dc) m.dc = c[i++];
        return m;
    }

    /// alpha[1,0] = 1, everything else zero.
    static MemoryPolyModel identity(const MemoryPolyShape& shape) {
        MemoryPolyModel m(shape);
        m.main(1, 0) = 1.0;
        return m;
    }
};

/// Regressor matrix, one column per coefficient in canonical order:
/// main branch (p outer ascending, m inner ascending), then conjugate branch, then DC.
struct BasisMatrix {
    Eigen::MatrixXcd columns;

    Eigen::Index rows() const { return columns.rows(); }
    Eigen::Index cols() const { return columns.cols(); }
};

namespace detail {

/// x(n) |x(n)|^(p-1) for odd p, via repeated multiplication of |x|^2.
inline cplx branch_term(cplx x, int p) {
    const double mag2 = std::norm(x);
    double scale = 1.0;
    for (int k = 1; k < p; k += 2) scale *= mag2;
    return x * scale;
}

} // namespace detail

inline BasisMatrix build_basis(const IqSignal& x, const MemoryPolyShape& shape) {
    shape.validate();
    if (x.size() <= shape.max_taps())
        throw SizingError("build_basis: signal length must exceed the memory depth");
    const auto n = static_cast<Eigen::Index>(x.size());
    BasisMatrix b{Eigen::MatrixXcd::Zero(n, static_cast<Eigen::Index>(shape.n_coefficients()))};
    Eigen::Index col = 0;
    std::vector<cplx> term(x.size());
    for (int p = 1; p <= shape.p_max; p += 2) {
        for (std::size_t i = 0; i < x.size(); ++i) term[i] = detail::branch_term(x.samples[i], p);
        for (std::size_t m = 0; m < shape.main_taps; ++m, ++col)
            for (Eigen::Index i = static_cast<Eigen::Index>(m); i < n; ++i) b.columns(i, col) = term[static_cast<std::size_t>(i) - m];
    }
    if (shape.has_conj()) {
        for (int q = 1; q <= shape.q_max; q += 2) {
            for (std::size_t i = 0; i < x.size(); ++i) term[i] = std::conj(detail::branch_term(x.samples[i], q));
            for (std::size_t l = 0; l < shape.conj_taps; ++l, ++col)
                for (Eigen::Index i = static_cast<Eigen::Index>(l); i < n; ++i) b.columns(i, col) = term[static_cast<std::size_t>(i) - l];
        }
    }
    if (shape.include_dc) b.columns.col(col).setOnes();
    return b;
}

/// Apply the polynomial to x: basis(x) times the stacked coefficients.
inline IqSignal poly_predistort(const MemoryPolyModel& model, const IqSignal& x) {
    require_nonempty(x, "poly_predistort");
    // Short inputs (shorter than the memory) are padded so the basis is defined.
    IqSignal padded = x;
    if (padded.size() <= model.shape.max_taps()) padded.samples.resize(model.shape.max_taps() + 1);
    const auto basis = build_basis(padded, model.shape);
    const Eigen::VectorXcd y = basis.columns * model.coefficients();
    IqSignal out{std::vector<cplx>(y.data(), y.data() + x.size()), x.sample_rate_hz};
    return out;
}

// ---------------------------------------------------------------------------
// Model file: `shape,P,M,Q,L,dc` header, then `main,p,tap,re,im`,
// `conj,q,tap,re,im` and `dc,re,im` rows in canonical order.

inline std::string model_text(const MemoryPolyModel& m) {
    std::ostringstream os;
    const auto& s = m.shape;
    os << "shape," << s.p_max << ',' << s.main_taps << ',' << s.q_max << ',' << s.conj_taps << ','
       << (s.include_dc ? 1 : 0) << '\n';
    auto row = [&](const char* branch, int p, std::size_t tap, cplx v) {
        os << branch << ',' << p << ',' << tap << ',' << text::format_double(v.real()) << ','
           << text::format_double(v.imag()) << '\n';
    };
    for (int p = 1; p <= s.p_max; p += 2)
        for (std::size_t t = 0; t < s.main_taps; ++t) row("main", p, t, m.main(p, t));
    if (s.has_conj())
        for (int q = 1; q <= s.q_max; q += 2)
            for (std::size_t t = 0; t < s.conj_taps; ++t) row("conj", q, t, m.conj(q, t));
    os << "dc," << text::format_double(m.dc.real()) << ',' << text::format_double(m.dc.imag()) << '\n';
    return os.str();
}

inline MemoryPolyModel parse_model_text(const std::vector<std::string>& lines) {
    std::size_t i = 0;
    while (i < lines.size() && text::trim(lines[i]).empty()) ++i;
    if (i == lines.size()) throw ParseError("memory polynomial model: empty file");
    const auto head = text::split(lines[i++], ',');
    if (head.size() != 6 || head[0] != "shape") throw ParseError("memory polynomial model: bad shape header");
    MemoryPolyShape s;
    s.p_max = text::parse_int<int>(head[1]);
    s.main_taps = text::parse_int<std::size_t>(head[2]);
    s.q_max = text::parse_int<int>(head[3]);
    s.conj_taps = text::parse_int<std::size_t>(head[4]);
    s.include_dc = text::parse_int<int>(head[5]) != 0;
    MemoryPolyModel m(s);
    for (; i < lines.size(); ++i) {
        if (text::trim(lines[i]).empty()) continue;
        const auto c = text::split(lines[i], ',');
        if (c[0] == "dc" && c.size() == 3) {
            m.dc = {text::parse_double(c[1]), text::parse_double(c[2])};
            continue;
        }
        if (c.size() != 5) throw ParseError("memory polynomial model: bad row '" + lines[i] + "'");
        const int p = text::parse_int<int>(c[1]);
        const auto t = text::parse_int<std::size_t>(c[2]);
        const cplx v{text::parse_double(c[3]), text::parse_double(c[4])};
        if (c[0] == "main" && p >= 1 && p <= s.p_max && p % 2 == 1 && t < s.main_taps) m.main(p, t) = v;
        else if (c[0] == "conj" && s.has_conj() && p >= 1 && p <= s.q_max && p % 2 == 1 && t < s.conj_taps) m.conj(p, t) = v;
        else throw ParseError("memory polynomial model: row out of shape '" + lines[i] + "'");
    }
    return m;
}

inline void save_model(const std::filesystem::path& path, const MemoryPolyModel& m) {
    text::write_file_atomic(path, model_text(m));
}

inline MemoryPolyModel load_memory_poly(const std::filesystem::path& path) {
    return parse_model_text(text::read_lines(path));
}

} // namespace dpd
