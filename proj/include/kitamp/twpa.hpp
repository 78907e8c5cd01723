#pragma once

// Three-wave-mixing gain model of a dispersion-engineered kinetic-inductance
// transmission line.

#include <array>
#include <optional>
#include <utility>
#include <vector>

#include "kitamp/common.hpp"
#include "kitamp/keyvalue.hpp"

namespace kitamp::twpa {

/// Signal-band attenuation table in dB/m, linear in dB between points and
/// clamped to the end values outside the table. Empty means lossless.
class LossTable {
public:
    LossTable() = default;
    explicit LossTable(double flat_db_per_m) : freqs_{0.0}, db_per_m_{flat_db_per_m} {}
    LossTable(std::vector<double> freqs, std::vector<double> db_per_m)
        : freqs_(std::move(freqs)), db_per_m_(std::move(db_per_m)) {
        if (freqs_.size() != db_per_m_.size()) throw DomainError("loss table size mismatch");
        if (!freqs_.empty()) validate_grid(freqs_);
        for (double v : db_per_m_) require(std::isfinite(v) && v >= 0.0, "loss must be finite and >= 0 dB/m");
    }

    /// Parses either a scalar ("1.5") or a list of "freq_hz:db_per_m" pairs separated by commas.
    static LossTable parse(const std::string& text) {
        if (auto flat = detail::parse_double(text)) return LossTable(*flat);
        std::vector<double> f, l;
        for (const auto& item : detail::split(text, ',')) {
            auto parts = detail::split(item, ':');
            std::optional<double> a, b;
            if (parts.size() == 2) {
                a = detail::parse_double(parts[0]);
                b = detail::parse_double(parts[1]);
            }
            if (!a || !b) throw InputError("malformed loss table entry: '" + item + "'");
            f.push_back(*a);
            l.push_back(*b);
        }
        return LossTable(std::move(f), std::move(l));
    }

    double db_per_m(double f) const {
        if (freqs_.empty()) return 0.0;
        return interp_clamped(freqs_, db_per_m_, f);
    }

    /// Power attenuation coefficient in 1/m.
    double alpha(double f) const { return db_per_m(f) * std::log(10.0) / 10.0; }

    bool empty() const { return freqs_.empty(); }
    const std::vector<double>& freqs() const { return freqs_; }
    const std::vector<double>& values() const { return db_per_m_; }

private:
    std::vector<double> freqs_;
    std::vector<double> db_per_m_;
};

struct LoadingCell {
    double period{};          // m
    double loaded_fraction{}; // fraction of the period occupied by the widened section
    double z_unloaded{};      // ohm
    double z_loaded{};        // ohm
};

inline void validate(const LoadingCell& c) {
    require(c.period > 0.0 && std::isfinite(c.period), "loading period must be > 0");
    require(c.loaded_fraction > 0.0 && c.loaded_fraction < 1.0, "loaded_fraction must lie in (0, 1)");
    require(c.z_unloaded > 0.0 && c.z_loaded > 0.0, "loading impedances must be > 0");
}

struct LineSpec {
    double lk0{};    // H/m
    double cap0{};   // F/m
    double i_star{}; // A
    double i_dc{};   // A
    double a_p{};    // A
    double length{}; // m
    std::optional<LoadingCell> loading;
    LossTable loss;

    double phase_velocity() const { return 1.0 / std::sqrt(lk0 * cap0); }
};

inline void validate(const LineSpec& s) {
    require(s.i_star > 0.0, "i_star must be > 0");
    require(s.length > 0.0, "length must be > 0");
    require(s.lk0 > 0.0, "lk0 must be > 0");
    require(s.cap0 > 0.0, "cap0 must be > 0");
    require(std::isfinite(s.i_dc) && std::isfinite(s.a_p), "currents must be finite");
    require(std::abs(s.i_dc) + std::abs(s.a_p) < s.i_star,
            "|i_dc| + |a_p| must stay below i_star (weak-nonlinearity regime)");
    if (s.loading) validate(*s.loading);
}

/// L_k(I) = L_k(0) [1 + (I/I*)^2].
inline double kinetic_inductance(const LineSpec& spec, double current) {
    require(spec.i_star > 0.0, "i_star must be > 0");
    if (!(std::abs(current) < spec.i_star))
        throw DomainError("kinetic inductance model requires |i| < i_star");
    const double r = current / spec.i_star;
    return spec.lk0 * (1.0 + r * r);
}

/// Three-wave-mixing coupling g = sqrt(k_s k_i) I_dc a_p / (2 I*^2), in 1/m.
inline double small_signal_gain_coefficient(const LineSpec& spec, double k_s, double k_i) {
    if (!(k_s > 0.0) || !(k_i > 0.0)) throw DomainError("wavenumbers must be positive");
    require(spec.i_star > 0.0, "i_star must be > 0");
    return std::sqrt(k_s * k_i) * spec.i_dc * spec.a_p / (2.0 * spec.i_star * spec.i_star);
}

struct DispersionCurve {
    std::vector<double> freqs;
    std::vector<double> k;
    std::vector<bool> in_gap;

    /// Linear interpolation of k; throws if f lies outside the grid or touches a stopband sample.
    double wavenumber(double f, const char* tone = "tone") const {
        if (freqs.size() < 2) throw GridError("dispersion curve needs at least two points");
        if (f < freqs.front() || f > freqs.back())
            throw GridError(std::string(tone) + " frequency " + fmt_double(f) + " Hz outside dispersion grid");
        const std::size_t i = bracket(freqs, f);
        if (in_gap[i] || in_gap[i + 1])
            throw DomainError(std::string(tone) + " frequency " + fmt_double(f) + " Hz lies in a stopband");
        const double t = (f - freqs[i]) / (freqs[i + 1] - freqs[i]);
        return k[i] + t * (k[i + 1] - k[i]);
    }
};

inline DispersionCurve linear_dispersion(const LineSpec& spec, std::span<const double> freqs) {
    validate_grid(freqs);
    require(spec.lk0 > 0.0 && spec.cap0 > 0.0, "lk0 and cap0 must be > 0");
    const double slowness = std::sqrt(spec.lk0 * spec.cap0);
    DispersionCurve c;
    c.freqs.assign(freqs.begin(), freqs.end());
    c.k.reserve(freqs.size());
    for (double f : freqs) c.k.push_back(two_pi * f * slowness);
    c.in_gap.assign(freqs.size(), false);
    return c;
}

/// Per-unit-length inductance and capacitance of the two sections of the loading
/// cell. Both sections share the unloaded phase velocity; the widened section scales
/// L' down and C' up by the impedance ratio.
struct CellSections {
    std::array<double, 2> length;
    std::array<double, 2> inductance;
    std::array<double, 2> capacitance;
};

inline CellSections cell_sections(const LineSpec& spec) {
    const LoadingCell& c = *spec.loading;
    const double ratio = c.z_loaded / c.z_unloaded;
    return CellSections{{(1.0 - c.loaded_fraction) * c.period, c.loaded_fraction * c.period},
                        {spec.lk0, spec.lk0 * ratio},
                        {spec.cap0, spec.cap0 / ratio}};
}

struct BlochPoint {
    double k;
    bool in_gap;
};

namespace detail {

// Half trace of the two-section ABCD product, written as
//   (A+D)/2 = cos(b1+b2) - (r-1)^2/(2r) sin b1 sin b2,   r = Z1/Z2,
// and evaluated through sin^2(kd/2) and cos^2(kd/2) so that k stays accurate
// near the band centre and near the zone edges.
inline BlochPoint bloch_point(const CellSections& s, double period, double f) {
    const double w = two_pi * f;
    double b[2], z[2];
    for (int i = 0; i < 2; ++i) {
        b[i] = w * s.length[i] * std::sqrt(s.inductance[i] * s.capacitance[i]);
        z[i] = std::sqrt(s.inductance[i] / s.capacitance[i]);
    }
    const double phi = b[0] + b[1];
    const double r = z[0] / z[1];
    const double delta = (r - 1.0) * (r - 1.0) / (2.0 * r) * std::sin(b[0]) * std::sin(b[1]);
    const double sh = std::sin(0.5 * phi);
    const double ch = std::cos(0.5 * phi);
    const double sin2 = sh * sh + 0.5 * delta; // sin^2(kd/2)
    const double cos2 = ch * ch - 0.5 * delta; // cos^2(kd/2)

    if (sin2 < 0.0 || cos2 < 0.0) {
        // Stopband: Re(k d) is an even multiple of pi when cos(kd) > 1, odd when < -1.
        const bool odd = cos2 < 0.0;
        double n = std::round(phi / pi);
        if ((static_cast<long long>(n) % 2 != 0) != odd) n += (phi > n * pi) ? 1.0 : -1.0;
        return {n * pi / period, true};
    }
    const double theta = 2.0 * std::atan2(std::sqrt(sin2), std::sqrt(cos2)); // principal value in [0, pi]
    // Unwrap: the candidate 2 pi j +/- theta closest to the homogeneous phase phi.
    const double j0 = std::floor(phi / two_pi);
    double best = theta;
    double best_err = std::abs(theta - phi);
    for (double j = j0 - 1.0; j <= j0 + 1.0; j += 1.0) {
        for (double cand : {two_pi * j + theta, two_pi * j - theta}) {
            const double err = std::abs(cand - phi);
            // Strict comparison keeps the lower branch on exact ties at a zone edge.
            if (err < best_err) {
                best = cand;
                best_err = err;
            }
        }
    }
    return {best / period, false};
}

} // namespace detail

inline DispersionCurve bloch_dispersion(const LineSpec& spec, std::span<const double> freqs) {
    if (!spec.loading) throw DomainError("bloch_dispersion requires a loading cell (use linear_dispersion)");
    validate(*spec.loading);
    require(spec.lk0 > 0.0 && spec.cap0 > 0.0, "lk0 and cap0 must be > 0");
    validate_grid(freqs, true);
    const CellSections sections = cell_sections(spec);
    DispersionCurve c;
    c.freqs.assign(freqs.begin(), freqs.end());
    c.k.reserve(freqs.size());
    c.in_gap.reserve(freqs.size());
    for (double f : freqs) {
        const BlochPoint p = detail::bloch_point(sections, spec.loading->period, f);
        c.k.push_back(p.k);
        c.in_gap.push_back(p.in_gap);
    }
    return c;
}

/// Picks Bloch dispersion when a loading cell is present, linear dispersion otherwise.
inline DispersionCurve dispersion(const LineSpec& spec, std::span<const double> freqs) {
    return spec.loading ? bloch_dispersion(spec, freqs) : linear_dispersion(spec, freqs);
}

/// Default pump self/cross-phase shift, k_p (a_p / 2 I*)^2 / 2, in rad/m.
inline double default_delta_theta(const LineSpec& spec, double k_pump) {
    const double r = spec.a_p / (2.0 * spec.i_star);
    return 0.5 * k_pump * r * r;
}

struct MismatchTerms {
    double k_pump;
    double k_signal;
    double k_idler;
    double delta_k;
};

inline MismatchTerms mismatch_terms(const DispersionCurve& curve, double f_pump, double f_signal,
                                    double delta_theta) {
    if (!(f_signal > 0.0) || !(f_signal < f_pump))
        throw DomainError("signal frequency must lie in (0, f_pump)");
    MismatchTerms t{};
    t.k_pump = curve.wavenumber(f_pump, "pump");
    t.k_signal = curve.wavenumber(f_signal, "signal");
    t.k_idler = curve.wavenumber(f_pump - f_signal, "idler");
    t.delta_k = t.k_pump - t.k_signal - t.k_idler - delta_theta;
    return t;
}

/// Delta k = k_p - k_s - k_i - delta_theta with k interpolated on the curve.
inline double phase_mismatch(const DispersionCurve& curve, double f_pump, double f_signal, double delta_theta) {
    return mismatch_terms(curve, f_pump, f_signal, delta_theta).delta_k;
}

/// Closed-form parametric power gain 1 + (g/gh)^2 sinh^2(gh L) with gh^2 = g^2 - (dk/2)^2,
/// continued to the oscillating sin form when gh is imaginary.
inline double parametric_gain(double g, double delta_k, double length) {
    const double h = 0.5 * delta_k;
    const double gh2 = g * g - h * h;
    if (g == 0.0) return 1.0;
    if (gh2 > 0.0) {
        const double gh = std::sqrt(gh2);
        const double s = std::sinh(gh * length);
        return 1.0 + (g * g / gh2) * s * s;
    }
    if (gh2 < 0.0) {
        const double mu = std::sqrt(-gh2);
        const double s = std::sin(mu * length);
        return 1.0 + (g * g / (-gh2)) * s * s;
    }
    return 1.0 + g * g * length * length;
}

inline double resolve_delta_theta(const LineSpec& spec, const DispersionCurve& curve, double f_pump,
                                  std::optional<double> delta_theta) {
    if (delta_theta) return *delta_theta;
    return default_delta_theta(spec, curve.wavenumber(f_pump, "pump"));
}

inline double analytic_gain(const LineSpec& spec, const DispersionCurve& curve, double f_pump, double f_signal,
                            std::optional<double> delta_theta = std::nullopt) {
    validate(spec);
    const double dtheta = resolve_delta_theta(spec, curve, f_pump, delta_theta);
    const MismatchTerms t = mismatch_terms(curve, f_pump, f_signal, dtheta);
    const double g = small_signal_gain_coefficient(spec, t.k_signal, t.k_idler);
    return parametric_gain(g, t.delta_k, spec.length);
}

struct CmeOptions {
    int steps = 2000;
    bool undepleted_pump = true;
    // Only used with undepleted_pump = false: input signal photon flux relative to the pump.
    double signal_to_pump = 1e-6;
    bool apply_loss = false;
};

struct ModeAmplitudes {
    cplx signal;
    cplx idler;
    cplx pump;
};

/// Fixed-step RK4 integration of the three-wave coupled-mode equations
///   da_s/dx = i g a_p a_i* e^{i dk x} - (alpha_s/2) a_s
///   da_i/dx = i g a_p a_s* e^{i dk x} - (alpha_i/2) a_i
///   da_p/dx = i g a_s a_i e^{-i dk x}          (only when the pump is depleted)
/// from a_s(0) = 1 (or sqrt(signal_to_pump) when depleted), a_i(0) = 0, a_p(0) = 1.
inline ModeAmplitudes integrate_coupled_modes(double g, double delta_k, double length, const CmeOptions& opt,
                                              double alpha_signal = 0.0, double alpha_idler = 0.0) {
    if (opt.steps <= 0) throw DomainError("coupled-mode integration needs a positive step count");
    require(length > 0.0, "length must be > 0");
    const cplx I(0.0, 1.0);
    using State = std::array<cplx, 3>;
    const bool deplete = !opt.undepleted_pump;
    if (deplete) require(opt.signal_to_pump > 0.0, "signal_to_pump must be > 0");

    auto rhs = [&](double x, const State& y) {
        const cplx ph = std::exp(I * (delta_k * x));
        const cplx ap = deplete ? y[2] : cplx(1.0);
        State d;
        d[0] = I * g * ap * std::conj(y[1]) * ph - 0.5 * alpha_signal * y[0];
        d[1] = I * g * ap * std::conj(y[0]) * ph - 0.5 * alpha_idler * y[1];
        d[2] = deplete ? I * g * y[0] * y[1] * std::conj(ph) : cplx(0.0);
        return d;
    };
    auto axpy = [](const State& y, double h, const State& k) {
        State r;
        for (int i = 0; i < 3; ++i) r[i] = y[i] + h * k[i];
        return r;
    };

    State y{cplx(deplete ? std::sqrt(opt.signal_to_pump) : 1.0), cplx(0.0), cplx(1.0)};
    const double h = length / opt.steps;
    for (int n = 0; n < opt.steps; ++n) {
        const double x = n * h;
        const State k1 = rhs(x, y);
        const State k2 = rhs(x + 0.5 * h, axpy(y, 0.5 * h, k1));
        const State k3 = rhs(x + 0.5 * h, axpy(y, 0.5 * h, k2));
        const State k4 = rhs(x + h, axpy(y, h, k3));
        for (int i = 0; i < 3; ++i) y[i] += (h / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    return {y[0], y[1], y[2]};
}

/// Numerical counterpart of analytic_gain: |a_s(L)|^2 / |a_s(0)|^2.
inline double coupled_mode_gain(const LineSpec& spec, const DispersionCurve& curve, double f_pump,
                                double f_signal, std::optional<double> delta_theta = std::nullopt,
                                const CmeOptions& opt = {}) {
    validate(spec);
    if (opt.steps <= 0) throw DomainError("coupled-mode integration needs a positive step count");
    const double dtheta = resolve_delta_theta(spec, curve, f_pump, delta_theta);
    const MismatchTerms t = mismatch_terms(curve, f_pump, f_signal, dtheta);
    const double g = small_signal_gain_coefficient(spec, t.k_signal, t.k_idler);
    const double as = opt.apply_loss ? spec.loss.alpha(f_signal) : 0.0;
    const double ai = opt.apply_loss ? spec.loss.alpha(f_pump - f_signal) : 0.0;
    const ModeAmplitudes a = integrate_coupled_modes(g, t.delta_k, spec.length, opt, as, ai);
    const double in = opt.undepleted_pump ? 1.0 : opt.signal_to_pump;
    return std::norm(a.signal) / in;
}

struct GainProfile {
    std::vector<double> freqs;
    std::vector<double> gain_db;  // NaN where the point could not be evaluated
    std::vector<double> mismatch; // rad/m, NaN where invalid
    std::vector<std::string> errors; // empty string for valid points

    bool valid(std::size_t i) const { return errors[i].empty(); }
};

/// Analytic gain over [f_lo, f_hi] minus the line insertion loss. Points that fail
/// (stopband, outside the grid) are recorded as gaps rather than aborting.
inline GainProfile gain_profile(const LineSpec& spec, const DispersionCurve& curve, double f_pump,
                                std::pair<double, double> band, std::size_t n_points,
                                std::optional<double> delta_theta = std::nullopt) {
    validate(spec);
    require(n_points >= 2, "gain profile needs at least two points");
    require(band.first > 0.0 && band.second > band.first, "band must satisfy 0 < f_lo < f_hi");
    const double dtheta = resolve_delta_theta(spec, curve, f_pump, delta_theta);
    GainProfile p;
    p.freqs = linspace(band.first, band.second, n_points);
    p.gain_db.assign(n_points, std::nan(""));
    p.mismatch.assign(n_points, std::nan(""));
    p.errors.assign(n_points, std::string());
    for (std::size_t i = 0; i < n_points; ++i) {
        const double f = p.freqs[i];
        try {
            const MismatchTerms t = mismatch_terms(curve, f_pump, f, dtheta);
            const double g = small_signal_gain_coefficient(spec, t.k_signal, t.k_idler);
            p.gain_db[i] = db10(parametric_gain(g, t.delta_k, spec.length)) - spec.loss.db_per_m(f) * spec.length;
            p.mismatch[i] = t.delta_k;
        } catch (const InputError& e) {
            p.errors[i] = e.what();
        }
    }
    return p;
}

/// Multiplies the profile by |1 / (1 - G1 G2 G e^{i theta})|^2, a lumped model of the
/// round trip between the two line ends. The product must stay below unity.
inline GainProfile apply_reflection_feedback(GainProfile p, cplx gamma1, cplx gamma2, double theta) {
    for (std::size_t i = 0; i < p.freqs.size(); ++i) {
        if (!p.valid(i)) continue;
        const double g = from_db10(p.gain_db[i]);
        const cplx loop = gamma1 * gamma2 * g * std::exp(cplx(0.0, theta));
        if (std::abs(loop) >= 1.0) {
            p.errors[i] = "reflection feedback loop gain >= 1 (unstable)";
            p.gain_db[i] = std::nan("");
            continue;
        }
        p.gain_db[i] += db10(1.0 / std::norm(1.0 - loop));
    }
    return p;
}

struct GainSummary {
    double peak_gain_db{};
    double peak_freq_hz{};
    double bandwidth_3db_hz{};
    double band_lo_hz{};
    double band_hi_hz{};
    std::size_t invalid_points{};
};

/// Peak (leftmost on ties) and the contiguous region around it within 3 dB.
inline GainSummary summarize(const GainProfile& p) {
    GainSummary s;
    std::size_t best = p.freqs.size();
    for (std::size_t i = 0; i < p.freqs.size(); ++i) {
        if (!p.valid(i)) {
            ++s.invalid_points;
            continue;
        }
        if (best == p.freqs.size() || p.gain_db[i] > p.gain_db[best]) best = i;
    }
    if (best == p.freqs.size()) throw NumericalError("gain profile has no valid points");
    s.peak_gain_db = p.gain_db[best];
    s.peak_freq_hz = p.freqs[best];
    std::size_t lo = best, hi = best;
    while (lo > 0 && p.valid(lo - 1) && p.gain_db[lo - 1] >= s.peak_gain_db - 3.0) --lo;
    while (hi + 1 < p.freqs.size() && p.valid(hi + 1) && p.gain_db[hi + 1] >= s.peak_gain_db - 3.0) ++hi;
    s.band_lo_hz = p.freqs[lo];
    s.band_hi_hz = p.freqs[hi];
    s.bandwidth_3db_hz = p.freqs[hi] - p.freqs[lo];
    return s;
}

/// Builds a LineSpec from `line.*`, `loading.*` and `loss_db_per_m` keys.
inline LineSpec line_spec_from_config(const KeyValueConfig& cfg) {
    LineSpec s;
    s.lk0 = cfg.require_double("line.lk0");
    s.cap0 = cfg.require_double("line.cap0");
    s.i_star = cfg.require_double("line.i_star");
    s.i_dc = cfg.double_or("line.i_dc", 0.0);
    s.a_p = cfg.double_or("line.a_p", 0.0);
    s.length = cfg.require_double("line.length");
    if (auto l = cfg.get_string("line.loss_db_per_m")) s.loss = LossTable::parse(*l);
    const bool any_loading = cfg.has("loading.period") || cfg.has("loading.loaded_fraction") ||
                             cfg.has("loading.z_unloaded") || cfg.has("loading.z_loaded");
    if (any_loading) {
        LoadingCell c;
        c.period = cfg.require_double("loading.period");
        c.loaded_fraction = cfg.require_double("loading.loaded_fraction");
        c.z_unloaded = cfg.require_double("loading.z_unloaded");
        c.z_loaded = cfg.require_double("loading.z_loaded");
        s.loading = c;
    }
    validate(s);
    return s;
}

} // namespace kitamp::twpa
