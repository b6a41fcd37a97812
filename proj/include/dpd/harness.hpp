#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "dpd/complexity.hpp"
#include "dpd/errors.hpp"
#include "dpd/fixedpoint.hpp"
#include "dpd/ila.hpp"
#include "dpd/memory_poly.hpp"
#include "dpd/metrics.hpp"
#include "dpd/nn.hpp"
#include "dpd/pa_sim.hpp"
#include "dpd/signal.hpp"
#include "dpd/text.hpp"
#include "dpd/trainer.hpp"

namespace dpd {

struct NoDpd {
    bool operator==(const NoDpd&) const = default;
};
struct NnDescriptor {
    int k = 1;
    int n = 1;
    bool operator==(const NnDescriptor&) const = default;
};
struct PolyDescriptor {
    MemoryPolyShape shape;
    bool operator==(const PolyDescriptor&) const = default;
};
using DpdDescriptor = std::variant<NoDpd, NnDescriptor, PolyDescriptor>;

/// Descriptor text: "none", "nn:K=1,N=6", "poly:P=7,taps=1[,Q=3,L=1][,dc]".
inline DpdDescriptor parse_descriptor(std::string_view text_in) {
    const auto s = std::string(text::trim(text_in));
    if (s == "none") return NoDpd{};
    const auto colon = s.find(':');
    if (colon == std::string::npos) throw ConfigError("descriptor '" + s + "': expected family:fields");
    const auto family = s.substr(0, colon);
    text::KeyValues kv;
    bool dc = false;
    for (const auto& f : text::split(std::string_view(s).substr(colon + 1), ',')) {
        if (f == "dc") {
            dc = true;
            continue;
        }
        const auto eq = f.find('=');
        if (eq == std::string::npos) throw ConfigError("descriptor '" + s + "': bad field '" + f + "'");
        kv[std::string(text::trim(std::string_view(f).substr(0, eq)))] = std::string(text::trim(std::string_view(f).substr(eq + 1)));
    }
    auto get_int = [&](const char* key, std::optional<int> fallback = std::nullopt) {
        auto it = kv.find(key);
        if (it == kv.end()) {
            if (fallback) return *fallback;
            throw ConfigError("descriptor '" + s + "': missing " + key);
        }
        try {
            return text::parse_int<int>(it->second);
        } catch (const ParseError&) {
            throw ConfigError("descriptor '" + s + "': " + key + " is not an integer");
        }
    };
    if (family == "nn") {
        for (const auto& [k, v] : kv)
            if (k != "K" && k != "N") throw ConfigError("descriptor '" + s + "': unknown field " + k);
        NnDescriptor d{get_int("K"), get_int("N")};
        if (d.k < 1 || d.n < 1 || dc) throw ConfigError("descriptor '" + s + "': K and N must be >= 1");
        return d;
    }
    if (family == "poly") {
        for (const auto& [k, v] : kv)
            if (k != "P" && k != "taps" && k != "Q" && k != "L") throw ConfigError("descriptor '" + s + "': unknown field " + k);
        PolyDescriptor d;
        d.shape.p_max = get_int("P");
        const int taps = get_int("taps");
        if (taps < 1) throw ConfigError("descriptor '" + s + "': taps must be >= 1");
        d.shape.main_taps = static_cast<std::size_t>(taps);
        d.shape.q_max = get_int("Q", 0);
        const int l = get_int("L", d.shape.q_max > 0 ? 1 : 0);
        if (l < 0) throw ConfigError("descriptor '" + s + "': L must be >= 0");
        d.shape.conj_taps = static_cast<std::size_t>(l);
        d.shape.include_dc = dc;
        d.shape.validate();
        return d;
    }
    throw ConfigError("descriptor '" + s + "': unknown family '" + family + "'");
}

inline std::string descriptor_text(const DpdDescriptor& d) {
    if (std::holds_alternative<NoDpd>(d)) return "none";
    if (const auto* nn = std::get_if<NnDescriptor>(&d)) return nn_descriptor(nn->k, nn->n);
    return poly_descriptor(std::get<PolyDescriptor>(d).shape);
}

/// Directory-safe name: nn_K1_N6, poly_P7_M1, poly_P7_M4_Q7_L4_dc, none.
inline std::string descriptor_dirname(const DpdDescriptor& d) {
    if (std::holds_alternative<NoDpd>(d)) return "none";
    if (const auto* nn = std::get_if<NnDescriptor>(&d)) return "nn_K" + std::to_string(nn->k) + "_N" + std::to_string(nn->n);
    const auto& s = std::get<PolyDescriptor>(d).shape;
    std::string name = "poly_P" + std::to_string(s.p_max) + "_M" + std::to_string(s.main_taps);
    if (s.has_conj()) name += "_Q" + std::to_string(s.q_max) + "_L" + std::to_string(s.conj_taps);
    if (s.include_dc) name += "_dc";
    return name;
}

inline ComplexityReport complexity_of(const DpdDescriptor& d) {
    if (std::holds_alternative<NoDpd>(d)) return {0, 0, "none"};
    if (const auto* nn = std::get_if<NnDescriptor>(&d)) return nn_count(nn->k, nn->n);
    return poly_count(std::get<PolyDescriptor>(d).shape);
}

struct ExperimentSpec {
    std::filesystem::path pa_profile_path = "config/default_pa.cfg";
    OfdmConfig waveform;
    std::vector<DpdDescriptor> dpd_list;
    TrainConfig train;
    int pa_model_k = 1;
    int pa_model_n = 24;
    int ila_iterations = 2;
    double ila_regularization = 1e-8;
    std::optional<FixedFormat> fixed_point;
    std::filesystem::path output_dir = "out";
    std::uint64_t seed = 0;

    void validate() const {
        if (dpd_list.empty()) throw ConfigError("ExperimentSpec: dpd_list must not be empty");
        waveform.validate();
        train.validate();
        if (pa_model_k < 1 || pa_model_n < 1) throw ConfigError("ExperimentSpec: PA model K and N must be >= 1");
        if (ila_iterations < 1) throw ConfigError("ExperimentSpec: ila_iterations must be >= 1");
        if (fixed_point) fixed_point->validate();
    }
};

inline std::vector<int> parse_int_list(std::string_view s) {
    std::vector<int> out;
    if (text::trim(s).empty()) return out;
    for (const auto& f : text::split(s, ',')) out.push_back(text::parse_int<int>(f));
    return out;
}

/// Apply `key: value` settings on top of `spec`. Unknown keys are rejected.
inline void apply_settings(ExperimentSpec& spec, const text::KeyValues& kv) {
    static const std::vector<std::string> waveform_keys{"n_subcarriers", "subcarrier_spacing_hz", "constellation",
                                                        "oversampling_factor", "taper_len", "peak_magnitude"};
    text::KeyValues wave_kv = to_key_values(spec.waveform);
    if (!spec.waveform.taper_len) wave_kv.erase("taper_len"); // keep the size-dependent default
    for (const auto& [key, value] : kv) {
        if (std::find(waveform_keys.begin(), waveform_keys.end(), key) != waveform_keys.end()) {
            wave_kv[key] = value;
        } else if (key == "pa_profile") {
            spec.pa_profile_path = value;
        } else if (key == "output_dir") {
            spec.output_dir = value;
        } else if (key == "seed") {
            spec.seed = text::parse_int<std::uint64_t>(value);
        } else if (key == "dpd_list") {
            spec.dpd_list.clear();
            for (const auto& d : text::split(value, ';'))
                if (!d.empty()) spec.dpd_list.push_back(parse_descriptor(d));
        } else if (key == "outer_iterations") {
            spec.train.outer_iterations = text::parse_int<int>(value);
        } else if (key == "epochs_per_iteration") {
            spec.train.epochs_per_iteration = parse_int_list(value);
        } else if (key == "learning_rate") {
            spec.train.learning_rate = text::parse_double(value);
        } else if (key == "adam_beta1") {
            spec.train.adam_beta1 = text::parse_double(value);
        } else if (key == "adam_beta2") {
            spec.train.adam_beta2 = text::parse_double(value);
        } else if (key == "adam_eps") {
            spec.train.adam_eps = text::parse_double(value);
        } else if (key == "batch_size") {
            spec.train.batch_size = text::parse_int<std::size_t>(value);
        } else if (key == "train_symbols") {
            spec.train.train_symbols = text::parse_int<std::size_t>(value);
        } else if (key == "val_symbols") {
            spec.train.val_symbols = text::parse_int<std::size_t>(value);
        } else if (key == "pa_model") {
            const auto d = parse_descriptor("nn:" + value);
            spec.pa_model_k = std::get<NnDescriptor>(d).k;
            spec.pa_model_n = std::get<NnDescriptor>(d).n;
        } else if (key == "ila_iterations") {
            spec.ila_iterations = text::parse_int<int>(value);
        } else if (key == "ila_regularization") {
            spec.ila_regularization = text::parse_double(value);
        } else if (key == "fixed_point") {
            if (value == "off" || value == "none") {
                spec.fixed_point.reset();
            } else {
                // total_bits,frac_bits or "on" for Q1.15
                FixedFormat f;
                if (value != "on") {
                    const auto bits = parse_int_list(value);
                    if (bits.size() != 2) throw ConfigError("fixed_point: expected 'on', 'off' or total,frac");
                    f.total_bits = bits[0];
                    f.frac_bits = bits[1];
                }
                spec.fixed_point = f;
            }
        } else {
            throw ConfigError("unknown setting '" + key + "'");
        }
    }
    spec.waveform = ofdm_config_from(wave_kv);
}

inline ExperimentSpec parse_spec(const std::vector<std::string>& lines) {
    ExperimentSpec spec;
    apply_settings(spec, text::parse_key_values(lines));
    return spec;
}

inline ExperimentSpec load_spec(const std::filesystem::path& path) {
    auto spec = parse_spec(text::read_lines(path));
    // Relative profile paths resolve against the spec file's directory first.
    if (spec.pa_profile_path.is_relative() && !std::filesystem::exists(spec.pa_profile_path)) {
        const auto alt = path.parent_path() / spec.pa_profile_path;
        if (std::filesystem::exists(alt)) spec.pa_profile_path = alt;
    }
    return spec;
}

struct DpdReport {
    std::string descriptor;
    std::size_t n_params_real = 0;
    std::size_t n_mults = 0;
    double aclr_db = std::numeric_limits<double>::quiet_NaN();
    double evm_pct = std::numeric_limits<double>::quiet_NaN();
    bool fixed = false;
    std::size_t sat_events = 0;
    double underflow_pct = 0.0;
    std::filesystem::path train_log_path;
    std::string error; ///< empty on success

    bool ok() const { return error.empty(); }
};

struct SweepResult {
    std::vector<DpdReport> rows;
    DpdReport baseline; ///< no predistortion, same evaluation noise
    bool any_failed() const {
        for (const auto& r : rows)
            if (!r.ok()) return true;
        return false;
    }
};

/// Evaluation uses one dedicated PA call index for every row, so all rows and
/// the baseline see the same noise realization.
inline constexpr std::uint64_t evaluation_call = std::uint64_t{1} << 32;

struct Evaluation {
    double aclr_db = 0.0;
    double evm_pct = 0.0;
    IqSignal pa_output;
};

inline Evaluation evaluate_drive(const SimulatedPa& pa, const IqSignal& drive, const OfdmFrame& val,
                                 const OfdmConfig& val_cfg) {
    Evaluation e;
    e.pa_output = pa_apply(pa, drive, evaluation_call);
    e.aclr_db = aclr_db(e.pa_output);
    e.evm_pct = evm_percent(val.grid, demodulate_ofdm(e.pa_output, val_cfg, val.amplitude_scale));
    return e;
}

inline std::string report_csv(const std::vector<DpdReport>& rows, bool with_fixed_columns) {
    std::ostringstream os;
    os << "descriptor,n_params,n_mults,aclr_db,evm_pct";
    if (with_fixed_columns) os << ",sat_events,underflow_pct";
    os << '\n';
    auto num = [](double v) { return std::isfinite(v) ? text::format_double(v) : std::string("nan"); };
    for (const auto& r : rows) {
        // descriptors contain commas, so they are quoted
        os << '"' << r.descriptor << '"' << ',' << r.n_params_real << ',' << r.n_mults << ',' << num(r.aclr_db) << ','
           << num(r.evm_pct);
        if (with_fixed_columns) os << ',' << r.sat_events << ',' << num(r.underflow_pct);
        os << '\n';
    }
    return os.str();
}

/// PSDs of several equal-rate signals on one grid: `freq_hz,<name>_db,...`.
inline std::string psd_overlay_csv(const std::vector<std::pair<std::string, IqSignal>>& signals,
                                   const WelchConfig& welch = {}) {
    if (signals.empty()) throw ConfigError("psd overlay: no signals");
    const double fs = signals.front().second.sample_rate_hz;
    std::vector<PsdEstimate> psds;
    for (const auto& [name, sig] : signals) {
        if (sig.sample_rate_hz != fs) throw AlignmentError("psd overlay: '" + name + "' has a different sample rate");
        psds.push_back(psd_welch(sig, welch));
    }
    std::ostringstream os;
    os << "freq_hz";
    for (const auto& [name, sig] : signals) os << ',' << name << "_db";
    os << '\n';
    for (std::size_t k = 0; k < psds.front().size(); ++k) {
        os << text::format_double(psds.front().freqs_hz[k]);
        for (const auto& p : psds) os << ',' << text::format_double(p.power_db[k]);
        os << '\n';
    }
    return os.str();
}

inline void emit_psd_overlay(const std::vector<std::pair<std::string, IqSignal>>& signals,
                             const std::filesystem::path& path, const WelchConfig& welch = {}) {
    text::write_file_atomic(path, psd_overlay_csv(signals, welch));
}

namespace detail {

struct RowContext {
    const ExperimentSpec& spec;
    const SimulatedPa& pa;
    const TrainingFrames& frames;
};

inline std::string ila_log_csv(const IlaResult& r) {
    std::ostringstream os;
    os << "iteration,relative_residual,condition_estimate\n";
    for (std::size_t i = 0; i < r.residuals.size(); ++i)
        os << i + 1 << ',' << text::format_double(r.residuals[i]) << ',' << text::format_double(r.condition_estimates[i])
           << '\n';
    return os.str();
}

/// Train, evaluate and persist one descriptor. Returns the float row and,
/// when fixed point is enabled, the fixed row.
inline std::vector<DpdReport> run_row(const RowContext& ctx, const DpdDescriptor& d) {
    const auto dir = ctx.spec.output_dir / descriptor_dirname(d);
    std::filesystem::create_directories(dir);
    const auto& val = ctx.frames.val;
    const auto& val_cfg = ctx.frames.val_cfg;
    const auto cx = complexity_of(d);

    DpdReport row;
    row.descriptor = descriptor_text(d);
    row.n_params_real = cx.n_params_real;
    row.n_mults = cx.n_mults;

    IqSignal drive = val.signal;
    std::optional<FixedResult> fixed;
    if (const auto* nn = std::get_if<NnDescriptor>(&d)) {
        TrainConfig tc = ctx.spec.train;
        tc.seed = ctx.spec.seed;
        const auto res = run_full_training(transmitter_for(ctx.pa), ctx.frames.train.signal, val.signal,
                                           {nn->k, nn->n, ctx.spec.pa_model_k, ctx.spec.pa_model_n}, tc);
        save_net(dir / "model.txt", res.dpd);
        save_net(dir / "pa_model.txt", res.pa_model);
        row.train_log_path = dir / "trainlog.csv";
        save_train_log(row.train_log_path, res.log);
        drive = nn_forward(res.dpd, val.signal);
        if (ctx.spec.fixed_point) fixed = nn_forward_fixed(res.dpd, val.signal, *ctx.spec.fixed_point);
    } else if (const auto* poly = std::get_if<PolyDescriptor>(&d)) {
        IlaConfig ic;
        ic.shape = poly->shape;
        ic.n_iterations = ctx.spec.ila_iterations;
        ic.regularization = ctx.spec.ila_regularization;
        const auto res = fit_ila(transmitter_for(ctx.pa), ic, ctx.frames.train.signal);
        save_model(dir / "model.txt", res.model);
        row.train_log_path = dir / "trainlog.csv";
        text::write_file_atomic(row.train_log_path, ila_log_csv(res));
        drive = poly_predistort(res.model, val.signal);
        if (ctx.spec.fixed_point) fixed = poly_forward_fixed(res.model, val.signal, *ctx.spec.fixed_point);
    } else if (ctx.spec.fixed_point) {
        fixed = FixedResult{quantize(val.signal, *ctx.spec.fixed_point), 0, 0.0, {}};
    }

    const auto ev = evaluate_drive(ctx.pa, drive, val, val_cfg);
    row.aclr_db = ev.aclr_db;
    row.evm_pct = ev.evm_pct;
    save_psd(dir / "psd.csv", psd_welch(ev.pa_output));

    std::vector<DpdReport> out{row};
    if (fixed) {
        const auto evf = evaluate_drive(ctx.pa, fixed->output, val, val_cfg);
        DpdReport fr = row;
        fr.descriptor += "@fixed";
        fr.fixed = true;
        fr.aclr_db = evf.aclr_db;
        fr.evm_pct = evf.evm_pct;
        fr.sat_events = fixed->saturation_events;
        fr.underflow_pct = fixed->underflow_pct();
        save_psd(dir / "psd_fixed.csv", psd_welch(evf.pa_output));
        out.push_back(fr);
    }
    return out;
}

} // namespace detail

/// Run every descriptor of the spec. A failing row is recorded (error text in
/// the report and `<row>/error.txt`) and the sweep moves on.
inline SweepResult run_sweep(const ExperimentSpec& spec) {
    spec.validate();
    const SimulatedPa pa = load_pa_profile(spec.pa_profile_path);
    OfdmConfig wave = spec.waveform;
    wave.seed = spec.seed;
    const auto frames = make_training_frames(wave, spec.train);
    std::filesystem::create_directories(spec.output_dir);

    SweepResult result;
    {
        const auto ev = evaluate_drive(pa, frames.val.signal, frames.val, frames.val_cfg);
        result.baseline.descriptor = "none";
        result.baseline.aclr_db = ev.aclr_db;
        result.baseline.evm_pct = ev.evm_pct;
    }
    const detail::RowContext ctx{spec, pa, frames};
    for (const auto& d : spec.dpd_list) {
        try {
            for (auto& r : detail::run_row(ctx, d)) result.rows.push_back(std::move(r));
        } catch (const std::exception& e) {
            DpdReport r;
            r.descriptor = descriptor_text(d);
            const auto cx = complexity_of(d);
            r.n_params_real = cx.n_params_real;
            r.n_mults = cx.n_mults;
            r.error = e.what();
            const auto dir = spec.output_dir / descriptor_dirname(d);
            std::filesystem::create_directories(dir);
            text::write_file_atomic(dir / "error.txt", r.error + "\n");
            result.rows.push_back(std::move(r));
        }
    }
    text::write_file_atomic(spec.output_dir / "sweep.csv", report_csv(result.rows, spec.fixed_point.has_value()));
    return result;
}

} // namespace dpd
