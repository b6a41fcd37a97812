#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "dpd/errors.hpp"
#include "dpd/fft.hpp"
#include "dpd/signal.hpp"
#include "dpd/text.hpp"

namespace dpd {

struct PsdEstimate {
    std::vector<double> freqs_hz; ///< ascending, [-fs/2, fs/2)
    std::vector<double> density;  ///< linear power per Hz
    std::vector<double> power_db; ///< 10 log10(density), optionally relative to the peak bin
    double bin_width_hz = 0.0;

    std::size_t size() const noexcept { return freqs_hz.size(); }
    /// Integrated power, comparable to the time-domain mean power.
    double total_power() const {
        double s = 0.0;
        for (double d : density) s += d;
        return s * bin_width_hz;
    }
};

struct WelchConfig {
    std::size_t segment_len = 1024;
    double overlap = 0.5;
    bool normalize_to_peak = true;
};

/// Periodic Hann window.
inline std::vector<double> hann(std::size_t n) {
    std::vector<double> w(n);
    for (std::size_t i = 0; i < n; ++i)
        w[i] = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n)));
    return w;
}

/// Welch averaged periodogram (Hann window, no detrending), density-scaled
/// and shifted so DC sits in the middle.
inline PsdEstimate psd_welch(const IqSignal& x, const WelchConfig& cfg = {}) {
    require_nonempty(x, "psd_welch");
    const std::size_t l = cfg.segment_len;
    if (l < 2 || (l & (l - 1)) != 0) throw SizingError("psd_welch: segment length must be a power of two >= 2");
    if (l > x.size()) throw SizingError("psd_welch: segment longer than the signal");
    if (!(cfg.overlap >= 0.0 && cfg.overlap < 1.0)) throw ConfigError("psd_welch: overlap must lie in [0, 1)");
    const auto step = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(static_cast<double>(l) * (1.0 - cfg.overlap))));
    const auto w = hann(l);
    double w2 = 0.0;
    for (double v : w) w2 += v * v;
    const double fs = x.sample_rate_hz;

    std::vector<double> acc(l, 0.0);
    std::vector<cplx> seg(l);
    std::size_t n_seg = 0;
    for (std::size_t start = 0; start + l <= x.size(); start += step, ++n_seg) {
        for (std::size_t i = 0; i < l; ++i) seg[i] = x.samples[start + i] * w[i];
        const auto spec = fft::forward(seg);
        for (std::size_t k = 0; k < l; ++k) acc[k] += std::norm(spec[k]);
    }
    const double scale = 1.0 / (static_cast<double>(n_seg) * fs * w2);
    for (auto& v : acc) v *= scale;

    PsdEstimate p;
    p.bin_width_hz = fs / static_cast<double>(l);
    p.density = fft::shift<double>(acc);
    p.freqs_hz.resize(l);
    for (std::size_t k = 0; k < l; ++k)
        p.freqs_hz[k] = (static_cast<double>(k) - static_cast<double>(l / 2)) * p.bin_width_hz;
    const double peak = *std::max_element(p.density.begin(), p.density.end());
    const double ref = cfg.normalize_to_peak && peak > 0.0 ? peak : 1.0;
    p.power_db.resize(l);
    for (std::size_t k = 0; k < l; ++k) p.power_db[k] = 10.0 * std::log10(p.density[k] / ref);
    return p;
}

/// Adjacent-channel leakage: power outside [-bw/2, bw/2] over power inside,
/// integrated over the whole measured band.
inline double aclr_db(const PsdEstimate& p, double channel_bw_hz = 10e6) {
    double in = 0.0, out = 0.0;
    for (std::size_t k = 0; k < p.size(); ++k) {
        if (std::abs(p.freqs_hz[k]) <= channel_bw_hz / 2.0) in += p.density[k];
        else out += p.density[k];
    }
    if (!(in > 0.0)) throw MetricError("aclr_db: no power in the main channel");
    return 10.0 * std::log10(out / in);
}

inline double aclr_db(const IqSignal& x, double channel_bw_hz = 10e6, const WelchConfig& welch = {}) {
    if (!(x.sample_rate_hz > channel_bw_hz))
        throw ConfigError("aclr_db: sample rate must exceed the channel bandwidth");
    return aclr_db(psd_welch(x, welch), channel_bw_hz);
}

/// 100 ||shat - s|| / ||s||. With gain removal, shat is first divided by the
/// least-squares complex gain <s, shat> / <s, s>.
inline double evm_percent(const SymbolGrid& s, const SymbolGrid& shat, bool remove_gain = true) {
    if (!s.same_shape(shat)) throw FramingError("evm_percent: grids differ in shape");
    double ref = 0.0;
    cplx cross{};
    for (std::size_t i = 0; i < s.data.size(); ++i) {
        ref += std::norm(s.data[i]);
        cross += std::conj(s.data[i]) * shat.data[i];
    }
    if (!(ref > 0.0)) throw MetricError("evm_percent: reference symbols have zero energy");
    cplx a{1.0, 0.0};
    if (remove_gain) {
        a = cross / ref;
        if (std::abs(a) == 0.0) throw MetricError("evm_percent: received symbols are orthogonal to the reference");
    }
    double err = 0.0;
    for (std::size_t i = 0; i < s.data.size(); ++i) err += std::norm(shat.data[i] / a - s.data[i]);
    return 100.0 * std::sqrt(err / ref);
}

inline std::string psd_csv(const PsdEstimate& p) {
    std::ostringstream os;
    os << "freq_hz,power_db\n";
    for (std::size_t k = 0; k < p.size(); ++k)
        os << text::format_double(p.freqs_hz[k]) << ',' << text::format_double(p.power_db[k]) << '\n';
    return os.str();
}

inline void save_psd(const std::filesystem::path& path, const PsdEstimate& p) { text::write_file_atomic(path, psd_csv(p)); }

} // namespace dpd
