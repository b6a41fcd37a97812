#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "dpd/errors.hpp"
#include "dpd/memory_poly.hpp"
#include "dpd/signal.hpp"
#include "dpd/text.hpp"

namespace dpd {

/// Memoryless core whose transfer is the exact functional inverse of a
/// polynomial D(z) = z * sum_k a_k |z|^(2k). Used to build PAs whose ideal
/// predistorter lies inside the memory-polynomial model class.
struct InversePolyCore {
    MemoryPolyModel forward; ///< single tap, no conjugate branch, no DC
};

using PaCore = std::variant<MemoryPolyModel, InversePolyCore>;

/// Simulated device under test: nonlinear core, output soft clip, output noise.
struct SimulatedPa {
    PaCore core = MemoryPolyModel::identity(MemoryPolyShape{});
    double saturation_output_limit = std::numeric_limits<double>::infinity();
    cplx nominal_gain{1.0, 0.0};
    double noise_stddev = 0.0; ///< per real component
    std::uint64_t seed = 0;

    /// Inputs beyond this magnitude are rejected.
    static constexpr double max_input_magnitude = 1.5;

    void validate() const {
        if (!(std::abs(nominal_gain) > 0.0)) throw ConfigError("SimulatedPa: |nominal_gain| must be > 0");
        if (!(noise_stddev >= 0.0)) throw ConfigError("SimulatedPa: noise_stddev must be >= 0");
        if (!(saturation_output_limit > 0.0)) throw ConfigError("SimulatedPa: saturation limit must be > 0");
        if (const auto* inv = std::get_if<InversePolyCore>(&core)) {
            const auto& s = inv->forward.shape;
            if (s.main_taps != 1 || s.has_conj() || s.include_dc)
                throw ConfigError("SimulatedPa: inverse-polynomial core must be memoryless and conjugate-free");
            if (std::abs(inv->forward.main(1, 0)) == 0.0)
                throw ConfigError("SimulatedPa: inverse-polynomial core needs a nonzero linear term");
        }
    }
};

namespace detail {

/// Magnitude soft clip: identity up to 0.9 L, then a cubic knee
/// r - (r-k)^3 / (3 t^2) with k = 0.9 L and t = 0.15 L that meets L with zero
/// slope at r = 1.05 L, constant L beyond.
inline double soft_clip_magnitude(double r, double limit) {
    if (!std::isfinite(limit)) return r;
    const double knee = 0.9 * limit;
    if (r <= knee) return r;
    const double span = 0.15 * limit;
    const double d = r - knee;
    if (d >= span) return limit;
    return r - d * d * d / (3.0 * span * span);
}

/// Solve D(z) = target for z with a 2-D Newton iteration.
inline cplx invert_memoryless(const MemoryPolyModel& d, cplx target) {
    const int p_max = d.shape.p_max;
    auto gain = [&](double s, double& dgain_re, double& dgain_im) {
        // g(s) = sum_k a_k s^k and g'(s), s = |z|^2
        cplx g{}, dg{};
        double sk = 1.0;
        for (int p = 1, k = 0; p <= p_max; p += 2, ++k) {
            const cplx a = d.main(p, 0);
            g += a * sk;
            if (k + 1 <= (p_max - 1) / 2) dg += static_cast<double>(k + 1) * d.main(p + 2, 0) * sk;
            sk *= s;
        }
        dgain_re = dg.real();
        dgain_im = dg.imag();
        return g;
    };
    cplx z = target / d.main(1, 0);
    for (int it = 0; it < 100; ++it) {
        const double s = std::norm(z);
        double dgr = 0.0, dgi = 0.0;
        const cplx g = gain(s, dgr, dgi);
        const cplx f = z * g - target;
        if (std::abs(f) <= 1e-15 * std::max(1.0, std::abs(target))) break;
        const cplx dg{dgr, dgi};
        // dD/du = g + z dg 2u, dD/dv = j g + z dg 2v
        const cplx du = g + z * dg * (2.0 * z.real());
        const cplx dv = cplx{0.0, 1.0} * g + z * dg * (2.0 * z.imag());
        const double a11 = du.real(), a12 = dv.real(), a21 = du.imag(), a22 = dv.imag();
        const double det = a11 * a22 - a12 * a21;
        if (det == 0.0) throw EstimateError("inverse-polynomial core: singular Jacobian");
        const double step_u = (a22 * f.real() - a12 * f.imag()) / det;
        const double step_v = (-a21 * f.real() + a11 * f.imag()) / det;
        z -= cplx{step_u, step_v};
    }
    return z;
}

inline std::mt19937_64 noise_engine(std::uint64_t seed, std::uint64_t call_index) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(call_index), static_cast<std::uint32_t>(call_index >> 32)};
    return std::mt19937_64(seq);
}

} // namespace detail

/// y = softclip(core(x)) + noise. The noise stream is a pure function of
/// (pa.seed, call_index), so repeated calls are reproducible in any order.
inline IqSignal pa_apply(const SimulatedPa& pa, const IqSignal& x, std::uint64_t call_index = 0) {
    pa.validate();
    require_nonempty(x, "pa_apply");
    const double peak = peak_magnitude(x.samples);
    if (peak > SimulatedPa::max_input_magnitude)
        throw InputRangeError("pa_apply: input peak " + std::to_string(peak) + " exceeds the accepted drive range " +
                              std::to_string(SimulatedPa::max_input_magnitude));

    IqSignal y;
    if (const auto* poly = std::get_if<MemoryPolyModel>(&pa.core)) {
        y = poly_predistort(*poly, x);
    } else {
        const auto& inv = std::get<InversePolyCore>(pa.core);
        y.sample_rate_hz = x.sample_rate_hz;
        y.samples.reserve(x.size());
        for (const auto& v : x.samples) y.samples.push_back(detail::invert_memoryless(inv.forward, v));
    }

    for (auto& v : y.samples) {
        const double r = std::abs(v);
        if (r > 0.0) v *= detail::soft_clip_magnitude(r, pa.saturation_output_limit) / r;
    }
    if (pa.noise_stddev > 0.0) {
        auto rng = detail::noise_engine(pa.seed, call_index);
        std::normal_distribution<double> normal(0.0, pa.noise_stddev);
        for (auto& v : y.samples) {
            const double re = normal(rng);
            const double im = normal(rng);
            v += cplx{re, im};
        }
    }
    return y;
}

/// Least-squares complex gain g minimizing sum |y - g x|^2.
inline cplx estimate_gain(const IqSignal& x, const IqSignal& y) {
    if (x.size() != y.size()) throw AlignmentError("estimate_gain: length mismatch");
    cplx num{};
    double den = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        num += std::conj(x.samples[i]) * y.samples[i];
        den += std::norm(x.samples[i]);
    }
    if (den == 0.0) throw EstimateError("estimate_gain: reference signal has zero energy");
    return num / den;
}

// ---------------------------------------------------------------------------
// Profile file: `key: value` lines plus `p,m,re,im` coefficient rows.
//   core: memory_poly | inverse_poly
//   P: 7
//   taps: 3
//   saturation_limit: 1.0        (or inf)
//   gain: re,im
//   noise_stddev: 1e-3
//   seed: 1
//   1,0,1.0,0.0

inline std::string profile_text(const SimulatedPa& pa) {
    std::ostringstream os;
    const bool inverse = std::holds_alternative<InversePolyCore>(pa.core);
    const MemoryPolyModel& m = inverse ? std::get<InversePolyCore>(pa.core).forward : std::get<MemoryPolyModel>(pa.core);
    os << "core: " << (inverse ? "inverse_poly" : "memory_poly") << '\n';
    os << "P: " << m.shape.p_max << '\n';
    os << "taps: " << m.shape.main_taps << '\n';
    os << "saturation_limit: "
       << (std::isfinite(pa.saturation_output_limit) ? text::format_double(pa.saturation_output_limit) : "inf") << '\n';
    os << "gain: " << text::format_double(pa.nominal_gain.real()) << ',' << text::format_double(pa.nominal_gain.imag())
       << '\n';
    os << "noise_stddev: " << text::format_double(pa.noise_stddev) << '\n';
    os << "seed: " << pa.seed << '\n';
    for (int p = 1; p <= m.shape.p_max; p += 2)
        for (std::size_t t = 0; t < m.shape.main_taps; ++t)
            os << p << ',' << t << ',' << text::format_double(m.main(p, t).real()) << ','
               << text::format_double(m.main(p, t).imag()) << '\n';
    return os.str();
}

inline SimulatedPa parse_profile(const std::vector<std::string>& lines) {
    std::vector<std::string> kv_lines;
    std::vector<std::vector<std::string>> rows;
    for (const auto& raw : lines) {
        std::string_view line = raw;
        if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = text::trim(line);
        if (line.empty()) continue;
        if (line.find(':') != std::string_view::npos) kv_lines.emplace_back(line);
        else rows.push_back(text::split(line, ','));
    }
    const auto kv = text::parse_key_values(kv_lines);
    MemoryPolyShape shape;
    shape.p_max = text::parse_int<int>(text::require(kv, "P"));
    shape.main_taps = text::parse_int<std::size_t>(text::require(kv, "taps"));
    MemoryPolyModel m(shape);
    for (const auto& r : rows) {
        if (r.size() != 4) throw ParseError("PA profile: coefficient rows must be p,m,re,im");
        const int p = text::parse_int<int>(r[0]);
        const auto t = text::parse_int<std::size_t>(r[1]);
        if (p < 1 || p > shape.p_max || p % 2 == 0 || t >= shape.main_taps)
            throw ParseError("PA profile: coefficient (" + r[0] + "," + r[1] + ") outside P/taps");
        m.main(p, t) = {text::parse_double(r[2]), text::parse_double(r[3])};
    }
    SimulatedPa pa;
    const auto core = kv.count("core") ? kv.at("core") : std::string("memory_poly");
    if (core == "memory_poly") pa.core = m;
    else if (core == "inverse_poly") pa.core = InversePolyCore{m};
    else throw ParseError("PA profile: unknown core '" + core + "'");
    if (auto it = kv.find("saturation_limit"); it != kv.end()) pa.saturation_output_limit = text::parse_double(it->second);
    if (auto it = kv.find("gain"); it != kv.end()) {
        const auto g = text::split(it->second, ',');
        if (g.size() != 2) throw ParseError("PA profile: gain must be re,im");
        pa.nominal_gain = {text::parse_double(g[0]), text::parse_double(g[1])};
    }
    if (auto it = kv.find("noise_stddev"); it != kv.end()) pa.noise_stddev = text::parse_double(it->second);
    if (auto it = kv.find("seed"); it != kv.end()) pa.seed = text::parse_int<std::uint64_t>(it->second);
    pa.validate();
    return pa;
}

inline SimulatedPa load_pa_profile(const std::filesystem::path& path) { return parse_profile(text::read_lines(path)); }

inline void save_pa_profile(const std::filesystem::path& path, const SimulatedPa& pa) {
    text::write_file_atomic(path, profile_text(pa));
}

} // namespace dpd
