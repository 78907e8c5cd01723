#pragma once

// System noise temperature from variable-temperature-load sweeps.
//
// Model per frequency: S(f, T) = G k_B [ T_planck(f, T) + T_sys(f) ], where
// T_planck = (h f / k_B) / (exp(h f / k_B T) - 1) carries no vacuum half-photon.
// Photon numbers use the Rayleigh-Jeans ratio k_B T / (h f).

#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <vector>

#include "kitamp/csv.hpp"

namespace kitamp::noise {

/// Bose-Einstein source term of the load in kelvin.
inline double planck_psd(double f, double t) {
    if (!(f > 0.0)) throw DomainError("planck_psd: frequency must be > 0");
    if (!(t > 0.0)) throw DomainError("planck_psd: temperature must be > 0");
    const double tq = planck_h * f / boltzmann_k;
    return tq / std::expm1(tq / t);
}

inline double photons_from_tsys(double t_sys, double f) {
    if (!(t_sys > 0.0)) throw DomainError("photons_from_tsys: temperature must be > 0");
    if (!(f > 0.0)) throw DomainError("photons_from_tsys: frequency must be > 0");
    return boltzmann_k * t_sys / (hbar * two_pi * f);
}

/// Thermal occupation 1 / (exp(h f / k_B T) - 1); zero at T = 0.
inline double thermal_occupancy(double f, double t) {
    if (t <= 0.0) return 0.0;
    return 1.0 / std::expm1(planck_h * f / (boltzmann_k * t));
}

/// Output noise PSD samples on a (frequency x temperature) grid; psd[i][j] is at
/// freqs[i], temps[j], in W/Hz.
struct NoiseSweep {
    std::vector<double> freqs;
    std::vector<double> temps;
    std::vector<std::vector<double>> psd;
};

inline void validate(const NoiseSweep& s) {
    validate_grid(s.freqs, true);
    if (s.temps.size() < 3) throw DomainError("noise sweep needs at least 3 load temperatures");
    bool all_equal = true;
    for (double t : s.temps) {
        if (!(t > 0.0) || !std::isfinite(t)) throw DomainError("load temperatures must be > 0");
        if (t != s.temps.front()) all_equal = false;
    }
    if (all_equal) throw DomainError("load temperatures must not all be equal");
    if (s.psd.size() != s.freqs.size()) throw GridError("psd rows do not match frequency grid");
    for (const auto& row : s.psd) {
        if (row.size() != s.temps.size()) throw GridError("psd columns do not match temperature grid");
        for (double v : row)
            if (!(v > 0.0) || !std::isfinite(v)) throw DomainError("psd values must be finite and > 0");
    }
}

struct NoiseFitResult {
    std::vector<double> freqs;
    std::vector<double> gain; // linear power gain
    std::vector<double> t_sys;
    std::vector<double> t_sys_stderr;
    std::vector<double> photons;
    std::vector<bool> flagged; // non-positive T_sys; never clipped
};

struct LinearFit {
    double slope, intercept;
    double var_slope, var_intercept, cov;
};

/// Ordinary least squares y = slope * x + intercept with the residual covariance.
inline LinearFit fit_line(std::span<const double> x, std::span<const double> y) {
    const std::size_t n = x.size();
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0, sx2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
        sx2 += x[i] * x[i];
    }
    if (!(sxx > 1e-24 * std::max(sx2, std::numeric_limits<double>::min())))
        throw NumericalError("rank-deficient noise fit: load terms are numerically degenerate");
    LinearFit f{};
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    double ssr = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double r = y[i] - (f.slope * x[i] + f.intercept);
        ssr += r * r;
    }
    const double s2 = n > 2 ? ssr / static_cast<double>(n - 2) : 0.0;
    f.var_slope = s2 / sxx;
    f.var_intercept = s2 * (1.0 / n + mx * mx / sxx);
    f.cov = -s2 * mx / sxx;
    return f;
}

/// Per-frequency linear regression of psd on planck_psd: slope = G k_B, intercept = G k_B T_sys.
inline NoiseFitResult fit_noise(const NoiseSweep& sweep) {
    validate(sweep);
    NoiseFitResult r;
    r.freqs = sweep.freqs;
    std::vector<double> x(sweep.temps.size());
    for (std::size_t i = 0; i < sweep.freqs.size(); ++i) {
        const double f = sweep.freqs[i];
        for (std::size_t j = 0; j < sweep.temps.size(); ++j) x[j] = planck_psd(f, sweep.temps[j]);
        LinearFit lf;
        try {
            lf = fit_line(x, sweep.psd[i]);
        } catch (const NumericalError& e) {
            throw NumericalError(std::string(e.what()) + " at " + fmt_double(f) + " Hz");
        }
        if (!(lf.slope > 0.0)) throw NumericalError("non-positive fitted gain at " + fmt_double(f) + " Hz");
        const double t_sys = lf.intercept / lf.slope;
        // Delta method for the ratio intercept / slope.
        const double inv = 1.0 / lf.slope;
        const double var = inv * inv * lf.var_intercept + t_sys * t_sys * inv * inv * lf.var_slope -
                           2.0 * t_sys * inv * inv * lf.cov;
        r.gain.push_back(lf.slope / boltzmann_k);
        r.t_sys.push_back(t_sys);
        r.t_sys_stderr.push_back(std::sqrt(std::max(0.0, var)));
        r.photons.push_back(boltzmann_k * t_sys / (hbar * two_pi * f));
        r.flagged.push_back(!(t_sys > 0.0));
    }
    return r;
}

/// Synthetic sweep from the forward model with per-frequency gain and T_sys.
inline NoiseSweep synthesize_sweep(std::vector<double> freqs, std::vector<double> temps,
                                   const std::function<double(double)>& gain,
                                   const std::function<double(double)>& t_sys) {
    NoiseSweep s{std::move(freqs), std::move(temps), {}};
    for (double f : s.freqs) {
        std::vector<double> row;
        for (double t : s.temps) row.push_back(gain(f) * boltzmann_k * (planck_psd(f, t) + t_sys(f)));
        s.psd.push_back(std::move(row));
    }
    return s;
}

struct DistributedAmpSpec {
    int n_segments = 1;
    double gain_per_segment_db = 0.0;
    double loss_per_segment_db = 0.0;
    double segment_temp_k = 0.010;
};

inline void validate(const DistributedAmpSpec& s) {
    require(s.n_segments >= 1, "n_segments must be >= 1");
    require(std::isfinite(s.gain_per_segment_db) && std::isfinite(s.loss_per_segment_db),
            "segment gain and loss must be finite");
    require(s.gain_per_segment_db >= 0.0, "segment gain must be >= 0 dB");
    require(s.loss_per_segment_db >= 0.0, "segment loss must be >= 0 dB");
    require(s.segment_temp_k >= 0.0, "segment temperature must be >= 0");
    require(std::isfinite(s.n_segments * (s.gain_per_segment_db - s.loss_per_segment_db)),
            "total gain must be finite");
}

/// Input-referred added noise photons of a chain of (gain, loss) segments.
///
/// Occupations are symmetrised (vacuum = 1/2). A segment is half its loss, its
/// gain, then the other half of its loss. Each phase-insensitive gain stage maps
/// n -> g n + (g - 1)/2 (vacuum idler); each loss l maps n -> l n + (1 - l)(n_th + 1/2)
/// with n_th at the segment temperature. The output is divided by the net chain
/// gain and the input vacuum 1/2 is removed.
inline double distributed_added_noise(const DistributedAmpSpec& spec, double f) {
    validate(spec);
    if (!(f > 0.0)) throw DomainError("frequency must be > 0");
    const double g = from_db10(spec.gain_per_segment_db);
    const double lh = from_db10(-0.5 * spec.loss_per_segment_db);
    const double bath = thermal_occupancy(f, spec.segment_temp_k) + 0.5;
    double n = 0.5;
    double net = 1.0;
    for (int i = 0; i < spec.n_segments; ++i) {
        n = lh * n + (1.0 - lh) * bath;
        n = g * n + 0.5 * (g - 1.0);
        n = lh * n + (1.0 - lh) * bath;
        net *= g * lh * lh;
    }
    return n / net - 0.5;
}

// NoiseSweep CSV (long format): freq_hz,temp_k,psd_w_per_hz.

enum class PsdUnit { WattPerHz, DbmPerHz };

inline double psd_to_w_per_hz(double v, PsdUnit unit) {
    return unit == PsdUnit::WattPerHz ? v : std::pow(10.0, (v - 30.0) / 10.0);
}

inline NoiseSweep read_sweep(std::istream& in, const std::string& source, PsdUnit unit = PsdUnit::WattPerHz) {
    const csv::Table t = csv::read(in, source);
    const std::size_t cf = t.column("freq_hz", source);
    const std::size_t ct = t.column("temp_k", source);
    const std::size_t cp = t.column(unit == PsdUnit::WattPerHz ? "psd_w_per_hz" : "psd_dbm_per_hz", source);
    if (t.rows.empty()) throw InputError(source + ": noise sweep has no data rows");
    std::map<double, std::map<double, double>> grid;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto& row = t.rows[r];
        auto& slot = grid[row[cf]];
        if (slot.count(row[ct])) throw ParseError(source, t.line_numbers[r], "duplicate (freq, temp) sample");
        slot[row[ct]] = psd_to_w_per_hz(row[cp], unit);
    }
    NoiseSweep s;
    for (const auto& [t_k, v] : grid.begin()->second) s.temps.push_back(t_k);
    for (const auto& [f, row] : grid) {
        if (row.size() != s.temps.size()) throw InputError(source + ": sweep is not a complete freq x temp grid");
        std::vector<double> vals;
        auto tt = s.temps.begin();
        for (const auto& [t_k, v] : row) {
            if (t_k != *tt++) throw InputError(source + ": temperatures differ between frequencies");
            vals.push_back(v);
        }
        s.freqs.push_back(f);
        s.psd.push_back(std::move(vals));
    }
    validate(s);
    return s;
}

inline void write_sweep(const NoiseSweep& s, std::ostream& out) {
    csv::write_header(out, {"freq_hz", "temp_k", "psd_w_per_hz"});
    for (std::size_t i = 0; i < s.freqs.size(); ++i)
        for (std::size_t j = 0; j < s.temps.size(); ++j) csv::write_row(out, {s.freqs[i], s.temps[j], s.psd[i][j]});
}

inline void write_fit_csv(const NoiseFitResult& r, std::ostream& out) {
    csv::write_header(out, {"freq_hz", "gain_db", "t_sys_k", "t_sys_stderr_k", "photons"});
    for (std::size_t i = 0; i < r.freqs.size(); ++i)
        csv::write_row(out, {r.freqs[i], db10(r.gain[i]), r.t_sys[i], r.t_sys_stderr[i], r.photons[i]});
}

/// Loss table CSV `freq_hz,loss_db`: the fitted gain is referenced by dividing the
/// psd by the linear transmission, interpolated in dB.
inline void apply_loss_table(NoiseSweep& s, std::span<const double> table_freqs, std::span<const double> loss_db) {
    for (std::size_t i = 0; i < s.freqs.size(); ++i) {
        const double transmission = from_db10(-interp_clamped(table_freqs, loss_db, s.freqs[i]));
        for (double& v : s.psd[i]) v /= transmission;
    }
}

} // namespace kitamp::noise
