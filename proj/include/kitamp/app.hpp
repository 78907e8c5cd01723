#pragma once

// Batch command-line frontend: gain, trl, noise, readout, gen-fixtures.
//
// Exit codes: 0 success, 1 computational failure, 2 input/validation failure.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "kitamp/keyvalue.hpp"
#include "kitamp/noise.hpp"
#include "kitamp/readout.hpp"
#include "kitamp/touchstone.hpp"
#include "kitamp/trl.hpp"
#include "kitamp/twpa.hpp"

namespace kitamp::app {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

inline constexpr int exit_ok = 0;
inline constexpr int exit_compute = 1;
inline constexpr int exit_input = 2;
inline constexpr const char* out_dir_env = "KITAMP_OUT_DIR";

struct RunOptions {
    fs::path out_dir = ".";
    fs::path config_dir = ".";
    std::string format = "csv"; // csv: CSV tables + JSON summary; json: everything in the JSON document
    std::optional<std::uint64_t> seed;
    std::optional<std::string> loss_table;
};

namespace detail {

inline fs::path resolve(const RunOptions& o, const std::string& p) {
    fs::path path(p);
    return path.is_absolute() ? path : o.config_dir / path;
}

inline std::ofstream open_out(const fs::path& p) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw InputError("cannot write " + p.string());
    return out;
}

inline void write_json(const fs::path& p, const json& j) {
    auto out = open_out(p);
    out << j.dump(2) << '\n';
}

inline json complex_json(cplx v) { return json::array({v.real(), v.imag()}); }

} // namespace detail

// ---------------------------------------------------------------------------
// gain

inline const std::set<std::string>& gain_keys() {
    static const std::set<std::string> k{
        "line.lk0",        "line.cap0",         "line.i_star",          "line.i_dc",      "line.a_p",
        "line.length",     "line.loss_db_per_m", "loading.period",      "loading.loaded_fraction",
        "loading.z_unloaded", "loading.z_loaded", "pump.frequency",     "pump.delta_theta",
        "band.lo",         "band.hi",           "band.points",          "grid.lo",        "grid.hi",
        "grid.points",     "feedback.gamma1",   "feedback.gamma2",      "feedback.theta"};
    return k;
}

inline json summary_json(const twpa::GainSummary& s) {
    return json{{"peak_gain_db", s.peak_gain_db},
                {"peak_freq_hz", s.peak_freq_hz},
                {"bandwidth_3db_hz", s.bandwidth_3db_hz},
                {"band_3db_lo_hz", s.band_lo_hz},
                {"band_3db_hi_hz", s.band_hi_hz},
                {"invalid_points", s.invalid_points}};
}

inline int cmd_gain(const KeyValueConfig& cfg, const RunOptions& o, std::ostream& log) {
    cfg.check_keys(gain_keys());
    const twpa::LineSpec spec = twpa::line_spec_from_config(cfg);
    const double f_pump = cfg.require_double("pump.frequency");
    std::optional<double> dtheta;
    if (auto s = cfg.get_string("pump.delta_theta"); s && *s != "default") dtheta = cfg.require_double("pump.delta_theta");

    const auto grid_points = cfg.int_or("grid.points", 20000);
    const auto band_points = cfg.int_or("band.points", 1451);
    if (grid_points < 2 || band_points < 2) throw InputError("grid.points and band.points must be >= 2");
    const auto grid = linspace(cfg.double_or("grid.lo", 1e6), cfg.double_or("grid.hi", 20e9),
                               static_cast<std::size_t>(grid_points));
    const twpa::DispersionCurve curve = twpa::dispersion(spec, grid);
    const double dtheta_used = twpa::resolve_delta_theta(spec, curve, f_pump, dtheta);
    twpa::GainProfile profile =
        twpa::gain_profile(spec, curve, f_pump, {cfg.double_or("band.lo", 1e9), cfg.double_or("band.hi", 15.5e9)},
                           static_cast<std::size_t>(band_points), dtheta_used);
    const double g1 = cfg.double_or("feedback.gamma1", 0.0), g2 = cfg.double_or("feedback.gamma2", 0.0);
    if (g1 != 0.0 || g2 != 0.0) profile = twpa::apply_reflection_feedback(profile, g1, g2, cfg.double_or("feedback.theta", 0.0));
    const twpa::GainSummary summary = twpa::summarize(profile);

    json j{{"command", "gain"}, {"pump_frequency_hz", f_pump}, {"delta_theta_rad_per_m", dtheta_used}};
    j["summary"] = summary_json(summary);

    if (o.format == "json") {
        json disp = json::array(), prof = json::array();
        for (std::size_t i = 0; i < curve.freqs.size(); ++i)
            disp.push_back({curve.freqs[i], curve.k[i], static_cast<bool>(curve.in_gap[i])});
        for (std::size_t i = 0; i < profile.freqs.size(); ++i) {
            if (profile.valid(i)) prof.push_back({profile.freqs[i], profile.gain_db[i], profile.mismatch[i]});
            else prof.push_back({profile.freqs[i], nullptr, nullptr});
        }
        j["dispersion"] = {{"columns", {"freq_hz", "k_rad_per_m", "in_gap"}}, {"rows", disp}};
        j["profile"] = {{"columns", {"freq_hz", "gain_db", "mismatch_rad_per_m"}}, {"rows", prof}};
    } else {
        {
            auto out = detail::open_out(o.out_dir / "dispersion.csv");
            csv::write_header(out, {"freq_hz", "k_rad_per_m", "in_gap"});
            for (std::size_t i = 0; i < curve.freqs.size(); ++i)
                out << fmt_double(curve.freqs[i]) << ',' << fmt_double(curve.k[i]) << ',' << (curve.in_gap[i] ? 1 : 0)
                    << '\n';
        }
        auto out = detail::open_out(o.out_dir / "gain_profile.csv");
        csv::write_header(out, {"freq_hz", "gain_db", "mismatch_rad_per_m"});
        for (std::size_t i = 0; i < profile.freqs.size(); ++i) {
            out << fmt_double(profile.freqs[i]) << ',';
            if (profile.valid(i)) out << fmt_double(profile.gain_db[i]) << ',' << fmt_double(profile.mismatch[i]);
            else out << ',';
            out << '\n';
        }
    }
    detail::write_json(o.out_dir / "gain_summary.json", j);
    log << "gain: peak " << summary.peak_gain_db << " dB at " << summary.peak_freq_hz / 1e9 << " GHz, 3 dB bandwidth "
        << summary.bandwidth_3db_hz / 1e9 << " GHz\n";
    return exit_ok;
}

// ---------------------------------------------------------------------------
// trl

inline int cmd_trl(const KeyValueConfig& cfg, const RunOptions& o, std::ostream& log) {
    using namespace network;
    cfg.check_keys({"thru", "reflect", "line", "dut", "line_delay_estimate", "reflect_sign_estimate", "refine",
                    "term_bound", "warn_phase_deg"});
    struct Named {
        std::string path;
        TwoPortNetwork net;
    };
    auto load = [&](const char* key) {
        const fs::path p = detail::resolve(o, cfg.require_string(key));
        return Named{p.string(), read_touchstone_file(p.string())};
    };
    const Named thru = load("thru"), reflect = load("reflect"), line = load("line"), dut = load("dut");
    for (const Named* n : {&reflect, &line, &dut})
        if (n->net.freqs != thru.net.freqs)
            throw GridError("frequency grids differ between " + thru.path + " and " + n->path);

    CalStandards st;
    st.thru = thru.net;
    st.line = line.net;
    for (const Mat2& s : reflect.net.s) {
        st.reflect_port1.push_back(s.m11);
        st.reflect_port2.push_back(s.m22);
    }
    st.line_delay_estimate = cfg.require_double("line_delay_estimate");
    st.reflect_sign_estimate = static_cast<int>(cfg.int_or("reflect_sign_estimate", 1));
    TrlOptions topt;
    topt.refine = cfg.bool_or("refine", true);
    topt.term_bound = cfg.double_or("term_bound", topt.term_bound);
    topt.warn_phase_deg = cfg.double_or("warn_phase_deg", topt.warn_phase_deg);

    const TrlResult res = trl_solve(st, topt);
    const TwoPortNetwork corrected = deembed(res.model, dut.net);

    write_touchstone_file(corrected, (o.out_dir / "dut_deembedded.s2p").string());
    {
        auto out = detail::open_out(o.out_dir / "error_model.csv");
        write_error_model(res.model, out);
    }

    double max_closed = 0.0, max_res = 0.0, rms = 0.0;
    json warnings = json::array();
    json per_freq = json::array();
    for (const auto& r : res.report) {
        max_closed = std::max(max_closed, r.closed_form_residual);
        max_res = std::max(max_res, r.residual);
        rms += r.residual * r.residual;
        for (const auto& w : r.warnings) warnings.push_back({{"freq_hz", r.freq_hz}, {"message", w}});
        per_freq.push_back({{"freq_hz", r.freq_hz},
                            {"line_phase_deg", r.line_phase_deg},
                            {"reflect", detail::complex_json(r.reflect)},
                            {"closed_form_residual", r.closed_form_residual},
                            {"residual", r.residual},
                            {"refined", r.refined}});
    }
    rms = std::sqrt(rms / static_cast<double>(res.report.size()));
    json j{{"command", "trl"},
           {"n_frequencies", res.report.size()},
           {"refined", topt.refine},
           {"all_converged", res.all_converged},
           {"max_closed_form_residual", max_closed},
           {"max_residual", max_res},
           {"rms_residual", rms},
           {"warnings", warnings}};
    if (o.format == "json") j["frequencies"] = per_freq;
    detail::write_json(o.out_dir / "trl_summary.json", j);
    log << "trl: " << res.report.size() << " frequencies, max residual " << max_res << ", " << warnings.size()
        << " warnings\n";
    return exit_ok;
}

// ---------------------------------------------------------------------------
// noise

inline int cmd_noise(const KeyValueConfig& cfg, const RunOptions& o, std::ostream& log) {
    cfg.check_keys({"sweep", "psd_unit", "loss_table"});
    const std::string unit_s = cfg.string_or("psd_unit", "w_per_hz");
    noise::PsdUnit unit;
    if (unit_s == "w_per_hz") unit = noise::PsdUnit::WattPerHz;
    else if (unit_s == "dbm_per_hz") unit = noise::PsdUnit::DbmPerHz;
    else throw InputError("psd_unit must be w_per_hz or dbm_per_hz");

    const fs::path sweep_path = detail::resolve(o, cfg.require_string("sweep"));
    std::ifstream in(sweep_path);
    if (!in) throw InputError("cannot open " + sweep_path.string());
    noise::NoiseSweep sweep = noise::read_sweep(in, sweep_path.string(), unit);

    std::optional<std::string> loss = o.loss_table;
    if (!loss) loss = cfg.get_string("loss_table");
    if (loss) {
        const fs::path lp = o.loss_table ? fs::path(*loss) : detail::resolve(o, *loss);
        const csv::Table t = csv::read_file(lp.string());
        const std::size_t cf = t.column("freq_hz", lp.string()), cl = t.column("loss_db", lp.string());
        std::vector<double> f, l;
        for (const auto& row : t.rows) {
            f.push_back(row[cf]);
            l.push_back(row[cl]);
        }
        if (f.empty()) throw InputError(lp.string() + ": empty loss table");
        validate_grid(f);
        noise::apply_loss_table(sweep, f, l);
    }

    const noise::NoiseFitResult fit = noise::fit_noise(sweep);
    json results = json::object(), flagged = json::array();
    for (std::size_t i = 0; i < fit.freqs.size(); ++i) {
        results[fmt_double(fit.freqs[i])] = {{"gain_db", db10(fit.gain[i])},
                                            {"t_sys_k", fit.t_sys[i]},
                                            {"t_sys_stderr_k", fit.t_sys_stderr[i]},
                                            {"photons", fit.photons[i]},
                                            {"flagged", static_cast<bool>(fit.flagged[i])}};
        if (fit.flagged[i]) flagged.push_back(fit.freqs[i]);
    }
    json j{{"command", "noise"}, {"n_frequencies", fit.freqs.size()}, {"n_temperatures", sweep.temps.size()},
           {"flagged", flagged}, {"results", results}};
    if (o.format != "json") {
        auto out = detail::open_out(o.out_dir / "noise_fit.csv");
        noise::write_fit_csv(fit, out);
    }
    detail::write_json(o.out_dir / "noise_fit.json", j);
    log << "noise: fitted " << fit.freqs.size() << " frequencies, " << flagged.size() << " flagged\n";
    return exit_ok;
}

// ---------------------------------------------------------------------------
// readout

inline json report_json(const readout::FidelityReport& r, const std::string& qubit) {
    return json{{"qubit_id", qubit},
                {"fidelity", r.fidelity},
                {"p10", r.p10},
                {"p01", r.p01},
                {"threshold", r.threshold},
                {"n_shots0", r.n_shots0},
                {"n_shots1", r.n_shots1},
                {"histogram",
                 {{"edges", r.histogram.edges}, {"counts0", r.histogram.counts0}, {"counts1", r.histogram.counts1}}}};
}

inline int cmd_readout(const KeyValueConfig& cfg, const RunOptions& o, std::ostream& log) {
    const auto qubits = ::kitamp::detail::split(cfg.require_string("qubits"), ',');
    std::set<std::string> allowed{"qubits", "n_bins"};
    for (const auto& q : qubits) {
        if (q.empty()) throw InputError("empty qubit name in 'qubits'");
        allowed.insert(q + ".set0");
        allowed.insert(q + ".set1");
    }
    cfg.check_keys(allowed);
    const auto n_bins = cfg.int_or("n_bins", 200);
    if (n_bins < 2) throw InputError("n_bins must be >= 2");

    int worst = exit_ok;
    json summary = json::array();
    for (const auto& q : qubits) {
        try {
            const auto s0 = readout::read_shot_set(detail::resolve(o, cfg.require_string(q + ".set0")).string());
            const auto s1 = readout::read_shot_set(detail::resolve(o, cfg.require_string(q + ".set1")).string());
            const auto filter = readout::build_matched_filter(s0, s1);
            const auto rep = readout::fidelity_from_outcomes(readout::project(filter, s0), readout::project(filter, s1),
                                                             static_cast<std::size_t>(n_bins));
            json j = report_json(rep, q);
            j["filter"] = {{"rotation", filter.rotation}, {"offset", filter.offset}};
            detail::write_json(o.out_dir / (q + "_fidelity.json"), j);
            if (o.format != "json") {
                auto out = detail::open_out(o.out_dir / (q + "_histogram.csv"));
                csv::write_header(out, {"bin_left", "bin_right", "count0", "count1"});
                const auto& h = rep.histogram;
                for (std::size_t b = 0; b < h.counts0.size(); ++b)
                    out << fmt_double(h.edges[b]) << ',' << fmt_double(h.edges[b + 1]) << ',' << h.counts0[b] << ','
                        << h.counts1[b] << '\n';
            }
            summary.push_back({{"qubit_id", q}, {"status", "ok"}, {"fidelity", rep.fidelity}});
            log << "readout: " << q << " F = " << rep.fidelity << " (p10 " << rep.p10 << ", p01 " << rep.p01 << ")\n";
        } catch (const InputError& e) {
            worst = std::max(worst, exit_input);
            summary.push_back({{"qubit_id", q}, {"status", "error"}, {"message", e.what()}});
            log << "readout: " << q << " failed: " << e.what() << "\n";
        } catch (const Error& e) {
            worst = std::max(worst, exit_compute);
            summary.push_back({{"qubit_id", q}, {"status", "error"}, {"message", e.what()}});
            log << "readout: " << q << " failed: " << e.what() << "\n";
        }
    }
    detail::write_json(o.out_dir / "readout_summary.json", json{{"command", "readout"}, {"qubits", summary}});
    return worst;
}

// ---------------------------------------------------------------------------
// gen-fixtures

/// Parameters of the synthetic readout fixtures. Separation and decay probability
/// were calibrated so that matched-filter scoring reproduces the error
/// probabilities (7.01 %, 13.6 %) for Q2 and (14.5 %, 17.8 %) for Q3.
struct ReadoutFixture {
    const char* qubit;
    double separation; // per sample, in units of the per-quadrature noise
    double decay_prob;
    double iq_angle;
    cplx iq_center;
};

inline constexpr std::size_t fixture_shots = 30000;
inline constexpr std::size_t fixture_samples = 10;
inline constexpr double fixture_sample_period = 100e-9;

inline const std::vector<ReadoutFixture>& readout_fixtures() {
    static const std::vector<ReadoutFixture> f{{"Q2", 1.0025, 0.2385, 0.6, {0.3, -0.2}},
                                               {"Q3", 0.7040, 0.1733, -1.1, {-0.1, 0.4}}};
    return f;
}

inline readout::ShotGeneratorConfig fixture_generator(const ReadoutFixture& fx, std::uint64_t seed) {
    readout::ShotGeneratorConfig c;
    c.seed = seed;
    c.n_shots = fixture_shots;
    c.noise_sigma = 1.0;
    c.t1_decay_prob = fx.decay_prob;
    c.sample_period = fixture_sample_period;
    c.qubit_id = fx.qubit;
    const cplx axis = std::polar(0.5 * fx.separation, fx.iq_angle);
    c.means0.assign(fixture_samples, fx.iq_center - axis);
    c.means1.assign(fixture_samples, fx.iq_center + axis);
    return c;
}

inline constexpr double fixture_line_delay = 31.25e-12;

/// Smooth, passive error boxes and an amplifier-like DUT on 4-12 GHz.
struct TrlFixture {
    network::TwoPortNetwork input_box, output_box, dut;
    std::vector<double> freqs;
};

inline TrlFixture trl_fixture() {
    TrlFixture fx;
    fx.freqs = linspace(4e9, 12e9, 201);
    auto box = [&](double s11, double t11, double s21, double t21, double s22, double t22) {
        network::TwoPortNetwork n{fx.freqs, {}, 50.0};
        for (double f : fx.freqs) {
            const double w = two_pi * f;
            const cplx a = std::polar(s11, -w * t11), b = std::polar(s21 * (1.0 - 0.01 * f / 1e9), -w * t21),
                       c = std::polar(s22, -w * t22);
            n.s.push_back({a, b, b, c});
        }
        return n;
    };
    fx.input_box = box(0.06, 0.21e-9, 0.82, 0.77e-9, 0.09, 0.13e-9);
    fx.output_box = box(0.08, 0.17e-9, 0.74, 0.81e-9, 0.05, 0.29e-9);
    fx.dut = network::TwoPortNetwork{fx.freqs, {}, 50.0};
    for (double f : fx.freqs) {
        const double w = two_pi * f;
        const double x = (f - 8e9) / 4e9;
        const cplx s21 = std::polar(3.8 * (1.0 - 0.3 * x * x), -w * 2.1e-9);
        const cplx s12 = std::polar(0.7, -w * 2.1e-9);
        fx.dut.s.push_back({std::polar(0.3, -w * 0.4e-9), s12, s21, std::polar(0.25, -w * 0.3e-9)});
    }
    return fx;
}

/// Ideal standards (flush thru, quarter-wave-ish line, short) seen through the boxes.
inline void write_trl_fixtures(const fs::path& dir) {
    using namespace network;
    fs::create_directories(dir);
    const TrlFixture fx = trl_fixture();
    const ErrorModel truth = error_model_from_boxes(fx.input_box, fx.output_box);
    const TwoPortNetwork thru = embed(truth, identity_network(fx.freqs));
    const TwoPortNetwork line = embed(truth, ideal_line(fx.freqs, fixture_line_delay));
    TwoPortNetwork reflect{fx.freqs, {}, 50.0};
    for (std::size_t i = 0; i < fx.freqs.size(); ++i) {
        const cplx g = -1.0;
        reflect.s.push_back({detail_trl::reflect_port1(truth.a[i], g), 0.0, 0.0,
                             detail_trl::reflect_port2(truth.b[i], g)});
    }
    write_touchstone_file(thru, (dir / "thru.s2p").string());
    write_touchstone_file(line, (dir / "line.s2p").string());
    write_touchstone_file(reflect, (dir / "reflect.s2p").string());
    write_touchstone_file(embed(truth, fx.dut), (dir / "dut_raw.s2p").string());
    write_touchstone_file(fx.dut, (dir / "dut_truth.s2p").string());
    auto cfg = detail::open_out(dir / "trl.cfg");
    cfg << "# synthetic TRL fixture (regenerate with: kitamp gen-fixtures)\n"
        << "thru = thru.s2p\nreflect = reflect.s2p\nline = line.s2p\ndut = dut_raw.s2p\n"
        << "line_delay_estimate = " << fmt_double(fixture_line_delay) << "\n"
        << "reflect_sign_estimate = -1\nrefine = true\n";
}

inline void write_noise_fixtures(const fs::path& dir) {
    fs::create_directories(dir);
    std::vector<double> temps;
    for (int i = 1; i <= 30; ++i) temps.push_back(0.1 * i);
    const noise::NoiseSweep s = noise::synthesize_sweep(
        linspace(4e9, 12e9, 33), temps, [](double) { return 1e6; }, [](double) { return 1.5; });
    {
        auto out = detail::open_out(dir / "sweep.csv");
        noise::write_sweep(s, out);
    }
    auto cfg = detail::open_out(dir / "noise.cfg");
    cfg << "# synthetic sweep: G = 60 dB, T_sys = 1.5 K, loads 0.1-3 K\nsweep = sweep.csv\npsd_unit = w_per_hz\n";
}

inline void write_readout_fixtures(const fs::path& dir, std::uint64_t seed) {
    fs::create_directories(dir);
    std::string names;
    std::ostringstream keys;
    std::uint64_t k = 0;
    for (const auto& fx : readout_fixtures()) {
        auto [s0, s1] = readout::generate_shots(fixture_generator(fx, seed + k++));
        const std::string q = fx.qubit;
        readout::write_shot_set(s0, (dir / (q + "_set0.csv")).string());
        readout::write_shot_set(s1, (dir / (q + "_set1.csv")).string());
        names += (names.empty() ? "" : ",") + q;
        keys << q << ".set0 = " << q << "_set0.csv\n" << q << ".set1 = " << q << "_set1.csv\n";
    }
    auto cfg = detail::open_out(dir / "readout.cfg");
    cfg << "# synthetic two-qubit readout fixture\nqubits = " << names << "\n" << keys.str() << "n_bins = 200\n";
}

inline constexpr std::uint64_t default_fixture_seed = 20180601;

inline int cmd_gen_fixtures(const KeyValueConfig& cfg, const RunOptions& o, std::ostream& log) {
    cfg.check_keys({"seed", "only"});
    const std::uint64_t seed =
        o.seed.value_or(static_cast<std::uint64_t>(cfg.int_or("seed", static_cast<long long>(default_fixture_seed))));
    const std::string only = cfg.string_or("only", "all");
    if (only != "all" && only != "trl" && only != "noise" && only != "readout")
        throw InputError("only must be one of all, trl, noise, readout");
    if (only == "all" || only == "trl") write_trl_fixtures(o.out_dir / "trl");
    if (only == "all" || only == "noise") write_noise_fixtures(o.out_dir / "noise");
    if (only == "all" || only == "readout") write_readout_fixtures(o.out_dir / "readout", seed);
    log << "gen-fixtures: wrote " << only << " fixtures to " << o.out_dir.string() << "\n";
    return exit_ok;
}

// ---------------------------------------------------------------------------

/// Parses argv and runs one subcommand. Never throws.
inline int run(int argc, const char* const* argv, std::ostream& log = std::cout, std::ostream& err = std::cerr) {
    CLI::App cli{"KIT amplifier analysis toolkit"};
    cli.require_subcommand(1);
    struct Common {
        std::string config, out, loss_table, format = "csv";
        std::vector<std::string> sets;
        std::optional<std::uint64_t> seed;
    } c;
    std::string active;
    auto add = [&](const char* name, const char* help) {
        CLI::App* s = cli.add_subcommand(name, help);
        s->add_option("--config", c.config, "key=value config file");
        s->add_option("--out", c.out, std::string("output directory (default $") + out_dir_env + " or .)");
        s->add_option("--seed", c.seed, "random seed");
        s->add_option("--loss-table", c.loss_table, "CSV freq_hz,loss_db applied before fitting");
        s->add_option("--format", c.format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
        s->add_option("--set", c.sets, "config override key=value (repeatable, wins over the file)");
        s->callback([&active, name] { active = name; });
        return s;
    };
    add("gain", "simulate dispersion and gain profile");
    add("trl", "solve TRL calibration and de-embed a DUT");
    add("noise", "fit system noise temperature from a load sweep");
    add("readout", "score single-shot readout fidelity");
    add("gen-fixtures", "write synthetic oracle datasets");

    try {
        cli.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return cli.exit(e, log, err);
    } catch (const CLI::ParseError& e) {
        cli.exit(e, log, err);
        return exit_input;
    }

    try {
        KeyValueConfig cfg;
        RunOptions o;
        if (!c.config.empty()) {
            cfg = KeyValueConfig::load(c.config);
            o.config_dir = fs::path(c.config).parent_path();
            if (o.config_dir.empty()) o.config_dir = ".";
        }
        for (const auto& s : c.sets) cfg.set_assignment(s);
        if (!c.out.empty()) o.out_dir = c.out;
        else if (const char* env = std::getenv(out_dir_env); env && *env) o.out_dir = env;
        o.format = c.format;
        o.seed = c.seed;
        if (!c.loss_table.empty()) o.loss_table = c.loss_table;
        if (o.loss_table && active != "noise") throw InputError("--loss-table only applies to the noise command");
        if (o.seed && active != "gen-fixtures") throw InputError("--seed only applies to gen-fixtures");
        fs::create_directories(o.out_dir);

        if (active == "gain") return cmd_gain(cfg, o, log);
        if (active == "trl") return cmd_trl(cfg, o, log);
        if (active == "noise") return cmd_noise(cfg, o, log);
        if (active == "readout") return cmd_readout(cfg, o, log);
        return cmd_gen_fixtures(cfg, o, log);
    } catch (const InputError& e) {
        err << "error: " << e.what() << "\n";
        return exit_input;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return exit_compute;
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
        return exit_input;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return exit_compute;
    }
}

} // namespace kitamp::app
