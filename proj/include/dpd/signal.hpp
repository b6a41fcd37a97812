#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "dpd/errors.hpp"
#include "dpd/fft.hpp"
#include "dpd/text.hpp"

namespace dpd {

using cplx = std::complex<double>;

/// Complex baseband sample stream.
struct IqSignal {
    std::vector<cplx> samples;
    double sample_rate_hz = 1.0;

    std::size_t size() const noexcept { return samples.size(); }
    bool empty() const noexcept { return samples.empty(); }
    std::span<const cplx> view() const noexcept { return samples; }

    bool operator==(const IqSignal&) const = default;
};

inline void require_nonempty(const IqSignal& x, const char* what) {
    if (x.empty()) throw SizingError(std::string(what) + ": empty signal");
    if (!(x.sample_rate_hz > 0.0)) throw ConfigError(std::string(what) + ": sample_rate_hz must be > 0");
}

inline double mean_power(std::span<const cplx> x) {
    if (x.empty()) return 0.0;
    double acc = 0.0;
    for (const auto& v : x) acc += std::norm(v);
    return acc / static_cast<double>(x.size());
}

inline double peak_magnitude(std::span<const cplx> x) {
    double peak = 0.0;
    for (const auto& v : x) peak = std::max(peak, std::abs(v));
    return peak;
}

/// Peak-to-average power ratio in dB.
inline double papr_db(const IqSignal& x) {
    require_nonempty(x, "papr_db");
    const double mean = mean_power(x.samples);
    if (mean == 0.0) throw MetricError("papr_db: all-zero signal");
    const double peak = peak_magnitude(x.samples);
    return 10.0 * std::log10(peak * peak / mean);
}

// ---------------------------------------------------------------------------
// OFDM waveform

enum class Constellation { qpsk, qam16, qam64 };

inline std::string to_string(Constellation c) {
    switch (c) {
    case Constellation::qpsk: return "qpsk";
    case Constellation::qam16: return "qam16";
    case Constellation::qam64: return "qam64";
    }
    return "?";
}

inline Constellation parse_constellation(std::string_view s) {
    if (s == "qpsk" || s == "QPSK") return Constellation::qpsk;
    if (s == "qam16" || s == "QAM16" || s == "16qam") return Constellation::qam16;
    if (s == "qam64" || s == "QAM64" || s == "64qam") return Constellation::qam64;
    throw ConfigError("unknown constellation '" + std::string(s) + "'");
}

/// Square QAM alphabet with unit average energy, row-major over (I, Q) levels.
inline std::vector<cplx> constellation_points(Constellation c) {
    const int levels = c == Constellation::qpsk ? 2 : c == Constellation::qam16 ? 4 : 8;
    double energy = 0.0;
    std::vector<double> amp(levels);
    for (int i = 0; i < levels; ++i) amp[i] = 2.0 * i - (levels - 1);
    for (double a : amp) energy += a * a;
    const double norm = std::sqrt(2.0 * energy / levels);
    std::vector<cplx> pts;
    pts.reserve(static_cast<std::size_t>(levels * levels));
    for (double re : amp)
        for (double im : amp) pts.emplace_back(re / norm, im / norm);
    return pts;
}

struct OfdmConfig {
    std::size_t n_subcarriers = 600;
    double subcarrier_spacing_hz = 15'000.0;
    std::size_t n_symbols = 10;
    Constellation constellation = Constellation::qam16;
    std::size_t oversampling_factor = 4;
    std::uint64_t seed = 0;
    /// Raised-cosine cyclic taper per symbol boundary, in samples. Unset: dft_size / 32.
    std::optional<std::size_t> taper_len;
    /// Frame peak magnitude after normalization; must lie in (0, 1].
    double peak_magnitude = 0.8;

    /// Smallest power of two with room for the occupied bins plus the empty DC bin.
    std::size_t base_dft_size() const {
        std::size_t n = 1;
        while (n < n_subcarriers + 1) n <<= 1;
        return n;
    }
    std::size_t dft_size() const { return base_dft_size() * oversampling_factor; }
    double sample_rate_hz() const { return static_cast<double>(dft_size()) * subcarrier_spacing_hz; }
    double occupied_bandwidth_hz() const { return static_cast<double>(n_subcarriers) * subcarrier_spacing_hz; }
    std::size_t taper() const { return taper_len.value_or(dft_size() / 32); }
    std::size_t symbol_length() const { return dft_size() + taper(); }
    std::size_t frame_length() const { return n_symbols * symbol_length(); }

    void validate() const {
        if (n_subcarriers == 0) throw ConfigError("OfdmConfig: n_subcarriers must be positive");
        if (!(subcarrier_spacing_hz > 0.0)) throw ConfigError("OfdmConfig: subcarrier_spacing_hz must be positive");
        if (n_symbols == 0) throw ConfigError("OfdmConfig: n_symbols must be positive");
        if (oversampling_factor < 2)
            throw ConfigError("OfdmConfig: oversampling_factor must be >= 2 so adjacent spectrum is observable");
        if (occupied_bandwidth_hz() > sample_rate_hz())
            throw ConfigError("OfdmConfig: occupied bandwidth exceeds the sample rate");
        if (taper() > dft_size()) throw ConfigError("OfdmConfig: taper_len must not exceed the DFT size");
        if (!(peak_magnitude > 0.0 && peak_magnitude <= 1.0))
            throw ConfigError("OfdmConfig: peak_magnitude must lie in (0, 1]");
    }

    /// DFT bin (0..dft_size-1) carrying occupied subcarrier k. Bins split
    /// floor(n/2) below DC and the rest above; DC itself stays empty.
    std::size_t bin_of(std::size_t k) const {
        const std::size_t below = n_subcarriers / 2;
        const std::size_t n = dft_size();
        if (k < below) return n - below + k;
        return k - below + 1;
    }
};

/// Frequency-domain symbols, shape n_symbols x n_subcarriers, row-major.
struct SymbolGrid {
    std::size_t n_symbols = 0;
    std::size_t n_subcarriers = 0;
    std::vector<cplx> data;

    SymbolGrid() = default;
    SymbolGrid(std::size_t symbols, std::size_t subcarriers)
        : n_symbols(symbols), n_subcarriers(subcarriers), data(symbols * subcarriers) {}

    cplx& at(std::size_t s, std::size_t k) { return data[s * n_subcarriers + k]; }
    const cplx& at(std::size_t s, std::size_t k) const { return data[s * n_subcarriers + k]; }
    bool same_shape(const SymbolGrid& o) const { return n_symbols == o.n_symbols && n_subcarriers == o.n_subcarriers; }
};

struct OfdmFrame {
    SymbolGrid grid;
    IqSignal signal;
    /// Factor applied to the unit-normalized inverse DFT output, i.e. peak normalization.
    double amplitude_scale = 1.0;
};

namespace detail {

inline std::vector<double> rising_taper(std::size_t g) {
    std::vector<double> w(g);
    for (std::size_t j = 0; j < g; ++j)
        w[j] = 0.5 * (1.0 - std::cos(std::numbers::pi * (static_cast<double>(j) + 0.5) / static_cast<double>(g)));
    return w;
}

inline SymbolGrid random_grid(const OfdmConfig& cfg) {
    const auto pts = constellation_points(cfg.constellation);
    std::mt19937_64 rng(cfg.seed);
    SymbolGrid grid(cfg.n_symbols, cfg.n_subcarriers);
    // Alphabet sizes are powers of two, so the modulo is unbiased and the
    // mapping does not depend on the standard library's distributions.
    for (auto& s : grid.data) s = pts[rng() % pts.size()];
    return grid;
}

} // namespace detail

/// Build the time-domain frame for a grid. Each symbol is an inverse DFT with a
/// raised-cosine cyclic taper of taper() samples overlapping the next symbol;
/// the frame wraps circularly so its length is n_symbols * symbol_length().
inline OfdmFrame modulate_ofdm(const SymbolGrid& grid, const OfdmConfig& cfg) {
    cfg.validate();
    if (grid.n_symbols != cfg.n_symbols || grid.n_subcarriers != cfg.n_subcarriers)
        throw FramingError("modulate_ofdm: grid shape does not match config");
    const std::size_t n = cfg.dft_size();
    const std::size_t g = cfg.taper();
    const std::size_t sym_len = cfg.symbol_length();
    const std::size_t total = cfg.frame_length();
    const auto ramp = detail::rising_taper(g);

    std::vector<cplx> frame(total);
    std::vector<cplx> bins(n);
    for (std::size_t s = 0; s < cfg.n_symbols; ++s) {
        std::fill(bins.begin(), bins.end(), cplx{});
        for (std::size_t k = 0; k < cfg.n_subcarriers; ++k) bins[cfg.bin_of(k)] = grid.at(s, k);
        const auto t = fft::inverse(bins);
        const std::size_t start = s * sym_len;
        // prefix ramp-up, core, suffix ramp-down
        for (std::size_t j = 0; j < g; ++j) frame[(start + j) % total] += ramp[j] * t[n - g + j];
        for (std::size_t j = 0; j < n; ++j) frame[(start + g + j) % total] += t[j];
        for (std::size_t j = 0; j < g; ++j) frame[(start + g + n + j) % total] += ramp[g - 1 - j] * t[j];
    }

    const double peak = peak_magnitude(frame);
    const double scale = peak > 0.0 ? cfg.peak_magnitude / peak : 1.0;
    for (auto& v : frame) v *= scale;
    return OfdmFrame{grid, IqSignal{std::move(frame), cfg.sample_rate_hz()}, scale};
}

/// Random symbols on the configured constellation, modulated to a frame.
inline OfdmFrame generate_ofdm(const OfdmConfig& cfg) {
    cfg.validate();
    return modulate_ofdm(detail::random_grid(cfg), cfg);
}

/// Per-symbol forward DFT over the untapered core samples, occupied-bin
/// extraction and removal of the generator's amplitude scale.
inline SymbolGrid demodulate_ofdm(const IqSignal& y, const OfdmConfig& cfg, double amplitude_scale) {
    cfg.validate();
    if (y.size() != cfg.frame_length())
        throw FramingError("demodulate_ofdm: signal has " + std::to_string(y.size()) + " samples, frame needs " +
                           std::to_string(cfg.frame_length()));
    if (!(amplitude_scale > 0.0)) throw ConfigError("demodulate_ofdm: amplitude_scale must be positive");
    const std::size_t n = cfg.dft_size();
    const std::size_t g = cfg.taper();
    SymbolGrid grid(cfg.n_symbols, cfg.n_subcarriers);
    for (std::size_t s = 0; s < cfg.n_symbols; ++s) {
        const std::size_t start = s * cfg.symbol_length() + g;
        const auto X = fft::forward(std::span<const cplx>(y.samples).subspan(start, n));
        for (std::size_t k = 0; k < cfg.n_subcarriers; ++k) grid.at(s, k) = X[cfg.bin_of(k)] / amplitude_scale;
    }
    return grid;
}

/// Same as above, recovering the amplitude scale by regenerating the frame from cfg.
inline SymbolGrid demodulate_ofdm(const IqSignal& y, const OfdmConfig& cfg) {
    return demodulate_ofdm(y, cfg, generate_ofdm(cfg).amplitude_scale);
}

// ---------------------------------------------------------------------------
// Serialization: `index,re,im` CSV plus a `<file>.meta` key: value sidecar.

inline text::KeyValues to_key_values(const OfdmConfig& cfg) {
    text::KeyValues kv;
    kv["n_subcarriers"] = std::to_string(cfg.n_subcarriers);
    kv["subcarrier_spacing_hz"] = text::format_double(cfg.subcarrier_spacing_hz);
    kv["n_symbols"] = std::to_string(cfg.n_symbols);
    kv["constellation"] = to_string(cfg.constellation);
    kv["oversampling_factor"] = std::to_string(cfg.oversampling_factor);
    kv["seed"] = std::to_string(cfg.seed);
    kv["taper_len"] = std::to_string(cfg.taper());
    kv["peak_magnitude"] = text::format_double(cfg.peak_magnitude);
    return kv;
}

inline OfdmConfig ofdm_config_from(const text::KeyValues& kv) {
    OfdmConfig cfg;
    if (auto it = kv.find("n_subcarriers"); it != kv.end()) cfg.n_subcarriers = text::parse_int<std::size_t>(it->second);
    if (auto it = kv.find("subcarrier_spacing_hz"); it != kv.end()) cfg.subcarrier_spacing_hz = text::parse_double(it->second);
    if (auto it = kv.find("n_symbols"); it != kv.end()) cfg.n_symbols = text::parse_int<std::size_t>(it->second);
    if (auto it = kv.find("constellation"); it != kv.end()) cfg.constellation = parse_constellation(it->second);
    if (auto it = kv.find("oversampling_factor"); it != kv.end()) cfg.oversampling_factor = text::parse_int<std::size_t>(it->second);
    if (auto it = kv.find("seed"); it != kv.end()) cfg.seed = text::parse_int<std::uint64_t>(it->second);
    if (auto it = kv.find("taper_len"); it != kv.end()) cfg.taper_len = text::parse_int<std::size_t>(it->second);
    if (auto it = kv.find("peak_magnitude"); it != kv.end()) cfg.peak_magnitude = text::parse_double(it->second);
    return cfg;
}

inline std::string signal_csv(const IqSignal& x) {
    std::ostringstream os;
    os << "index,re,im\n";
    for (std::size_t i = 0; i < x.size(); ++i)
        os << i << ',' << text::format_double(x.samples[i].real()) << ',' << text::format_double(x.samples[i].imag())
           << '\n';
    return os.str();
}

inline std::filesystem::path meta_path(const std::filesystem::path& csv) {
    auto p = csv;
    p += ".meta";
    return p;
}

/// Write the CSV and its sidecar. `cfg`, when given, is recorded so the frame can be demodulated later.
inline void write_signal(const std::filesystem::path& path, const IqSignal& x, const OfdmConfig* cfg = nullptr,
                         std::optional<double> amplitude_scale = std::nullopt) {
    text::write_file_atomic(path, signal_csv(x));
    text::KeyValues kv = cfg ? to_key_values(*cfg) : text::KeyValues{};
    kv["sample_rate_hz"] = text::format_double(x.sample_rate_hz);
    if (amplitude_scale) kv["amplitude_scale"] = text::format_double(*amplitude_scale);
    text::write_file_atomic(meta_path(path), text::format_key_values(kv));
}

struct LoadedSignal {
    IqSignal signal;
    text::KeyValues meta;
};

inline LoadedSignal read_signal(const std::filesystem::path& path) {
    const auto lines = text::read_lines(path);
    if (lines.empty() || text::trim(lines.front()) != "index,re,im")
        throw ParseError(path.string() + ": expected header 'index,re,im'");
    LoadedSignal out;
    out.meta = text::parse_key_values(text::read_lines(meta_path(path)));
    out.signal.sample_rate_hz = text::parse_double(text::require(out.meta, "sample_rate_hz"));
    out.signal.samples.reserve(lines.size() - 1);
    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (text::trim(lines[i]).empty()) continue;
        const auto cols = text::split(lines[i], ',');
        if (cols.size() != 3) throw ParseError(path.string() + ": bad row " + std::to_string(i));
        if (text::parse_int<std::size_t>(cols[0]) != out.signal.samples.size())
            throw ParseError(path.string() + ": non-contiguous index at row " + std::to_string(i));
        out.signal.samples.emplace_back(text::parse_double(cols[1]), text::parse_double(cols[2]));
    }
    return out;
}

} // namespace dpd
