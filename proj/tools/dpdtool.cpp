// dpdtool: waveform generation, single-model training, sweeps, PSD export and
// complexity reports.

#include <cstdio>
#include <exception>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dpd/dpd.hpp"

namespace {

constexpr int exit_ok = 0;
constexpr int exit_row_failed = 1;
constexpr int exit_bad_spec = 2;

struct SpecFlags {
    std::string spec_path;
    std::string pa_profile;
    std::string output_dir;
    std::string dpd;
    std::optional<std::uint64_t> seed;
    std::optional<double> learning_rate;
    std::string epochs;
    std::optional<int> outer_iterations;
    std::string fixed;

    void add_to(CLI::App* app, bool require_spec) {
        auto* opt = app->add_option("--spec", spec_path, "experiment spec file (key: value)");
        if (require_spec) opt->required()->check(CLI::ExistingFile);
        else opt->check(CLI::ExistingFile);
        app->add_option("--pa", pa_profile, "PA profile file");
        app->add_option("--out", output_dir, "output directory");
        app->add_option("--dpd", dpd, "descriptor list separated by ';' (nn:K=1,N=6; poly:P=7,taps=1; none)");
        app->add_option("--seed", seed, "run seed");
        app->add_option("--lr", learning_rate, "Adam learning rate");
        app->add_option("--epochs", epochs, "epochs per outer iteration, e.g. 20,5");
        app->add_option("--outer", outer_iterations, "outer training iterations");
        app->add_option("--fixed", fixed, "fixed-point evaluation: on, off or total,frac");
    }

    dpd::ExperimentSpec build() const {
        dpd::ExperimentSpec spec = spec_path.empty() ? dpd::ExperimentSpec{} : dpd::load_spec(spec_path);
        dpd::text::KeyValues kv;
        if (!pa_profile.empty()) kv["pa_profile"] = pa_profile;
        if (!output_dir.empty()) kv["output_dir"] = output_dir;
        if (!dpd.empty()) kv["dpd_list"] = dpd;
        if (seed) kv["seed"] = std::to_string(*seed);
        if (learning_rate) kv["learning_rate"] = dpd::text::format_double(*learning_rate);
        if (outer_iterations) kv["outer_iterations"] = std::to_string(*outer_iterations);
        if (!epochs.empty()) kv["epochs_per_iteration"] = epochs;
        if (!fixed.empty()) kv["fixed_point"] = fixed;
        dpd::apply_settings(spec, kv);
        return spec;
    }
};

void print_rows(const dpd::SweepResult& r) {
    std::printf("%-34s %8s %8s %9s %8s\n", "descriptor", "params", "mults", "aclr_db", "evm_pct");
    std::printf("%-34s %8s %8s %9.2f %8.3f\n", "(no dpd)", "-", "-", r.baseline.aclr_db, r.baseline.evm_pct);
    for (const auto& row : r.rows) {
        if (row.ok())
            std::printf("%-34s %8zu %8zu %9.2f %8.3f\n", row.descriptor.c_str(), row.n_params_real, row.n_mults,
                        row.aclr_db, row.evm_pct);
        else
            std::printf("%-34s %8zu %8zu  FAILED: %s\n", row.descriptor.c_str(), row.n_params_real, row.n_mults,
                        row.error.c_str());
    }
}

int run_spec(const SpecFlags& flags, bool single) {
    dpd::ExperimentSpec spec;
    try {
        spec = flags.build();
        if (single && spec.dpd_list.size() != 1) throw dpd::ConfigError("train expects exactly one --dpd descriptor");
        spec.validate();
        (void)dpd::load_pa_profile(spec.pa_profile_path);
    } catch (const std::exception& e) {
        std::cerr << "bad spec: " << e.what() << '\n';
        return exit_bad_spec;
    }
    const auto result = dpd::run_sweep(spec);
    print_rows(result);
    std::printf("wrote %s\n", (spec.output_dir / "sweep.csv").string().c_str());
    return result.any_failed() ? exit_row_failed : exit_ok;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Digital predistortion toolkit"};
    app.require_subcommand(1);

    // generate
    auto* gen = app.add_subcommand("generate", "write an OFDM test frame as index,re,im CSV plus .meta sidecar");
    dpd::OfdmConfig wave;
    std::string constellation = "qam16";
    std::string gen_out;
    std::optional<std::size_t> taper;
    gen->add_option("--out", gen_out, "output CSV")->required();
    gen->add_option("--subcarriers", wave.n_subcarriers, "occupied subcarriers")->capture_default_str();
    gen->add_option("--spacing", wave.subcarrier_spacing_hz, "subcarrier spacing in Hz")->capture_default_str();
    gen->add_option("--symbols", wave.n_symbols, "OFDM symbols")->capture_default_str();
    gen->add_option("--constellation", constellation, "qpsk, qam16 or qam64")->capture_default_str();
    gen->add_option("--oversampling", wave.oversampling_factor, "oversampling factor")->capture_default_str();
    gen->add_option("--seed", wave.seed, "symbol seed")->capture_default_str();
    gen->add_option("--peak", wave.peak_magnitude, "frame peak magnitude")->capture_default_str();
    gen->add_option("--taper", taper, "symbol-boundary taper length in samples");

    // train / sweep
    auto* train = app.add_subcommand("train", "train and evaluate one descriptor");
    SpecFlags train_flags;
    train_flags.add_to(train, false);
    auto* sweep = app.add_subcommand("sweep", "train and evaluate every descriptor of a spec");
    SpecFlags sweep_flags;
    sweep_flags.add_to(sweep, true);

    // psd
    auto* psd = app.add_subcommand("psd", "Welch PSD of one or more signal CSVs on a shared grid");
    std::vector<std::string> psd_in;
    std::vector<std::string> psd_names;
    std::string psd_out;
    dpd::WelchConfig welch;
    psd->add_option("--in", psd_in, "signal CSV (repeatable)")->required()->check(CLI::ExistingFile);
    psd->add_option("--name", psd_names, "column name per input (defaults to file stem)");
    psd->add_option("--out", psd_out, "output CSV")->required();
    psd->add_option("--segment", welch.segment_len, "segment length")->capture_default_str();
    psd->add_option("--overlap", welch.overlap, "segment overlap fraction")->capture_default_str();

    // report
    auto* report = app.add_subcommand("report", "parameter and multiplication counts for descriptors");
    std::string report_dpd = "nn:K=1,N=6;nn:K=1,N=14;poly:P=7,taps=1;poly:P=11,taps=2";
    std::string report_sweep;
    report->add_option("--dpd", report_dpd, "descriptor list separated by ';'")->capture_default_str();
    report->add_option("--sweep", report_sweep, "sweep.csv to summarize as an ACLR-vs-multiplications frontier")
        ->check(CLI::ExistingFile);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? exit_ok : exit_bad_spec;
    }

    try {
        if (*gen) {
            if (taper) wave.taper_len = *taper;
            try {
                wave.constellation = dpd::parse_constellation(constellation);
                wave.validate();
            } catch (const std::exception& e) {
                std::cerr << "bad waveform: " << e.what() << '\n';
                return exit_bad_spec;
            }
            const auto frame = dpd::generate_ofdm(wave);
            dpd::write_signal(gen_out, frame.signal, &wave, frame.amplitude_scale);
            std::printf("%zu samples at %.6g Hz, PAPR %.3f dB -> %s\n", frame.signal.size(), frame.signal.sample_rate_hz,
                        dpd::papr_db(frame.signal), gen_out.c_str());
            return exit_ok;
        }
        if (*train) return run_spec(train_flags, true);
        if (*sweep) return run_spec(sweep_flags, false);
        if (*psd) {
            if (!psd_names.empty() && psd_names.size() != psd_in.size()) {
                std::cerr << "--name must be given once per --in\n";
                return exit_bad_spec;
            }
            std::vector<std::pair<std::string, dpd::IqSignal>> signals;
            for (std::size_t i = 0; i < psd_in.size(); ++i) {
                const auto name = psd_names.empty() ? std::filesystem::path(psd_in[i]).stem().string() : psd_names[i];
                signals.emplace_back(name, dpd::read_signal(psd_in[i]).signal);
            }
            if (signals.size() == 1 && psd_names.empty()) dpd::save_psd(psd_out, dpd::psd_welch(signals[0].second, welch));
            else dpd::emit_psd_overlay(signals, psd_out, welch);
            std::printf("wrote %s\n", psd_out.c_str());
            return exit_ok;
        }
        if (*report) {
            std::printf("%-34s %8s %8s\n", "descriptor", "params", "mults");
            for (const auto& d : dpd::text::split(report_dpd, ';')) {
                if (d.empty()) continue;
                const auto c = dpd::complexity_of(dpd::parse_descriptor(d));
                std::printf("%-34s %8zu %8zu\n", c.model_descriptor.c_str(), c.n_params_real, c.n_mults);
            }
            if (!report_sweep.empty()) {
                std::vector<std::pair<double, double>> pts;
                const auto lines = dpd::text::read_lines(report_sweep);
                for (std::size_t i = 1; i < lines.size(); ++i) {
                    // "descriptor",params,mults,aclr,...
                    const auto close = lines[i].rfind('"');
                    if (close == std::string::npos || lines[i].find("@fixed") != std::string::npos) continue;
                    const auto f = dpd::text::split(std::string_view(lines[i]).substr(close + 2), ',');
                    if (f.size() < 3 || f[2] == "nan") continue;
                    pts.emplace_back(dpd::text::parse_double(f[1]), dpd::text::parse_double(f[2]));
                }
                std::printf("\nlower envelope (mults, aclr_db):\n");
                for (const auto& [m, a] : dpd::lower_envelope(pts)) std::printf("%8.0f %9.2f\n", m, a);
            }
            return exit_ok;
        }
    } catch (const dpd::ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_bad_spec;
    } catch (const dpd::ParseError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_bad_spec;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_row_failed;
    }
    return exit_ok;
}
